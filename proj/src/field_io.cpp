#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "heatopt/error.hpp"
#include "heatopt/field.hpp"

namespace heatopt {

double interpolate(const Field& u, const Vec2& p) {
  const Grid& g = u.grid;
  const double fx = (p.x() - g.origin.x()) / g.h;
  if (g.dim() == 1) {
    const int i = static_cast<int>(std::floor(fx));
    if (i < 0 || i + 1 >= g.nx) return 0.0;
    const double t = fx - i;
    return (1.0 - t) * u(i, 0) + t * u(i + 1, 0);
  }
  const double fy = (p.y() - g.origin.y()) / g.h;
  const int i = static_cast<int>(std::floor(fx));
  const int j = static_cast<int>(std::floor(fy));
  if (i < 0 || j < 0 || i + 1 >= g.nx || j + 1 >= g.ny) return 0.0;
  const double s = fx - i;
  const double t = fy - j;
  return (1.0 - s) * (1.0 - t) * u(i, j) + s * (1.0 - t) * u(i + 1, j) +
         (1.0 - s) * t * u(i, j + 1) + s * t * u(i + 1, j + 1);
}

void write_csv(std::ostream& os, const Field& u) {
  const Grid& g = u.grid;
  os << "x,y,u\n" << std::setprecision(17);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      os << g.x(i) << ',' << g.y(j) << ',' << u(i, j) << '\n';
    }
  }
}

void write_csv(const std::string& path, const Field& u) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_csv(os, u);
}

Field read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != "x,y,u") throw Error(path + ": expected header x,y,u");
  std::vector<std::array<double, 3>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::array<double, 3> r{};
    char c1 = 0, c2 = 0;
    std::istringstream ls(line);
    if (!(ls >> r[0] >> c1 >> r[1] >> c2 >> r[2]) || c1 != ',' || c2 != ',')
      throw Error(path + ": malformed row");
    rows.push_back(r);
  }
  if (rows.empty()) throw Error(path + ": no data");
  // x varies fastest: nx is the run length of the first y value.
  std::size_t nx = 1;
  while (nx < rows.size() && rows[nx][1] == rows[0][1]) ++nx;
  if (rows.size() % nx != 0) throw Error(path + ": ragged grid");
  Grid g;
  g.nx = static_cast<int>(nx);
  g.ny = static_cast<int>(rows.size() / nx);
  g.h = nx > 1 ? rows[1][0] - rows[0][0] : rows[nx][1] - rows[0][1];
  g.origin = Vec2(rows[0][0], rows[0][1]);
  Field u(g);
  for (std::size_t k = 0; k < rows.size(); ++k) u[static_cast<Index>(k)] = rows[k][2];
  return u;
}

namespace {

template <typename T>
void put_le(std::ostream& os, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw Error("truncated field dump");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

constexpr char kMagic[4] = {'O', 'F', 'G', 'D'};

}  // namespace

void write_binary(std::ostream& os, const Field& u) {
  const Grid& g = u.grid;
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.nx));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.ny));
  put_le<double>(os, g.h);
  put_le<double>(os, g.origin.x());
  put_le<double>(os, g.origin.y());
  for (Index k = 0; k < u.size(); ++k) put_le<double>(os, u[k]);
}

void write_binary(const std::string& path, const Field& u) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_binary(os, u);
}

Field read_binary(std::istream& is) {
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw Error("bad field dump magic");
  Grid g;
  g.nx = static_cast<int>(get_le<std::uint32_t>(is));
  g.ny = static_cast<int>(get_le<std::uint32_t>(is));
  g.h = get_le<double>(is);
  const double ox = get_le<double>(is);
  const double oy = get_le<double>(is);
  g.origin = Vec2(ox, oy);
  Field u(g);
  for (Index k = 0; k < u.size(); ++k) u[k] = get_le<double>(is);
  return u;
}

Field read_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_binary(is);
}

}  // namespace heatopt
