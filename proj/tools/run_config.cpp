#include "run_config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

namespace heatopt::cli {

using nlohmann::json;

const char* task_name(Task t) {
  switch (t) {
    case Task::kSolve: return "solve";
    case Task::kSweep: return "sweep";
    case Task::kVerify: return "verify";
    case Task::kOracleCompare: return "oracle-compare";
  }
  return "?";
}

namespace {

std::string key_path(const std::string& parent, const std::string& key) {
  return parent + "." + key;
}

std::string index_path(const std::string& parent, std::size_t i) {
  return parent + "[" + std::to_string(i) + "]";
}

// A JSON object together with its path, so every error can name its key.
class Section {
 public:
  Section(const json& j, std::string path, std::initializer_list<const char*> allowed)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j_.items())
      if (!ok.count(key)) throw ConfigError(key_path(path_, key), "unknown key");
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) const { return j_.at(key); }
  std::string path(const char* key) const { return key_path(path_, key); }
  const std::string& path() const { return path_; }

  void require(const char* key) const {
    if (!has(key)) throw ConfigError(path(key), "is required");
  }

  double number(const char* key, double fallback) const {
    return has(key) ? as_number(at(key), path(key)) : fallback;
  }
  double number(const char* key) const {
    require(key);
    return as_number(at(key), path(key));
  }
  double positive(const char* key, double fallback) const {
    return check_positive(number(key, fallback), key);
  }
  double positive(const char* key) const { return check_positive(number(key), key); }
  double nonnegative(const char* key, double fallback) const {
    const double v = number(key, fallback);
    if (!(v >= 0.0)) throw ConfigError(path(key), "must be non-negative");
    return v;
  }

  long long integer(const char* key, long long fallback) const {
    if (!has(key)) return fallback;
    return as_integer(at(key), path(key));
  }

  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!at(key).is_boolean()) throw ConfigError(path(key), "must be a boolean");
    return at(key).get<bool>();
  }

  std::string string(const char* key) const {
    require(key);
    if (!at(key).is_string()) throw ConfigError(path(key), "must be a string");
    return at(key).get<std::string>();
  }

  Vec2 vec2(const char* key, Vec2 fallback) const {
    return has(key) ? as_vec2(at(key), path(key)) : fallback;
  }
  Vec2 vec2(const char* key) const {
    require(key);
    return as_vec2(at(key), path(key));
  }

  const json& array(const char* key) const {
    require(key);
    if (!at(key).is_array() || at(key).empty())
      throw ConfigError(path(key), "must be a non-empty array");
    return at(key);
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
    return x;
  }

  static long long as_integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path, "must be an integer");
    return v.get<long long>();
  }

  static Vec2 as_vec2(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2) throw ConfigError(path, "must be a pair [x, y]");
    return Vec2(as_number(v[0], index_path(path, 0)), as_number(v[1], index_path(path, 1)));
  }

 private:
  double check_positive(double v, const char* key) const {
    if (!(v > 0.0)) throw ConfigError(path(key), "must be positive");
    return v;
  }

  const json& j_;
  std::string path_;
};

// Runs a library validator and rethrows its message under `path`.
template <typename F>
void validated(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

void parse_domain(const Section& s, RunConfig& cfg) {
  const std::string shape = s.string("shape");
  s.require("params");
  const double R = s.positive("R");
  const double mu = s.positive("mu");
  DomainSpec& d = cfg.domain;
  if (shape == "disk") {
    Section q(s.at("params"), s.path("params"), {"radius", "center"});
    d = DomainSpec::disk(q.positive("radius"), R, mu, q.vec2("center", Vec2::Zero()));
  } else if (shape == "rect") {
    Section q(s.at("params"), s.path("params"), {"lo", "hi", "corner_radius"});
    const Vec2 lo = q.vec2("lo"), hi = q.vec2("hi");
    if (!(hi.x() > lo.x() && hi.y() > lo.y()))
      throw ConfigError(q.path("hi"), "must exceed lo in both coordinates");
    const double rc = q.nonnegative("corner_radius", 0.0);
    if (2.0 * rc > std::min(hi.x() - lo.x(), hi.y() - lo.y()))
      throw ConfigError(q.path("corner_radius"), "must be at most half the shorter side");
    d = DomainSpec::rect(lo, hi, R, mu, rc);
  } else if (shape == "polygon") {
    Section q(s.at("params"), s.path("params"), {"vertices"});
    const json& vs = q.array("vertices");
    if (vs.size() < 3) throw ConfigError(q.path("vertices"), "needs at least three vertices");
    std::vector<Vec2> verts;
    for (std::size_t i = 0; i < vs.size(); ++i)
      verts.push_back(Section::as_vec2(vs[i], index_path(q.path("vertices"), i)));
    d = DomainSpec::polygon(std::move(verts), R, mu);
  } else {
    throw ConfigError(s.path("shape"), "must be one of disk, rect, polygon");
  }
  validated(s.path(), [&] { d.validate(2); });

  s.require("obstacles");
  Section o(s.at("obstacles"), s.path("obstacles"), {"kind", "params"});
  const std::string kind = o.string("kind");
  o.require("params");
  ObstacleDescriptor& ob = cfg.obstacles;
  if (kind == "constant") {
    Section q(o.at("params"), o.path("params"), {"lower", "upper"});
    const double lower = q.positive("lower"), upper = q.number("upper");
    if (!(upper > lower)) throw ConfigError(q.path("upper"), "must exceed lower");
    ob = ObstacleDescriptor::constant(lower, upper);
  } else if (kind == "paraboloid") {
    Section q(o.at("params"), o.path("params"),
              {"lower", "upper", "curvature", "radius", "center"});
    const double lower = q.number("lower"), upper = q.number("upper");
    if (!(upper > lower)) throw ConfigError(q.path("upper"), "must exceed lower");
    ob = ObstacleDescriptor::paraboloid(lower, upper, q.number("curvature"), q.positive("radius"),
                                        q.vec2("center", Vec2::Zero()));
  } else if (kind == "touching") {
    Section q(o.at("params"), o.path("params"),
              {"value", "gap", "contact_radius", "outer_radius", "center"});
    const double rc = q.positive("contact_radius"), ro = q.positive("outer_radius");
    if (!(ro > rc)) throw ConfigError(q.path("outer_radius"), "must exceed contact_radius");
    ob = ObstacleDescriptor::touching(q.positive("value"), q.positive("gap"), rc, ro,
                                      q.vec2("center", Vec2::Zero()));
  } else if (kind == "tent") {
    Section q(o.at("params"), o.path("params"), {"lower", "upper", "slope", "radius", "center"});
    const double lower = q.number("lower"), upper = q.number("upper");
    if (!(upper > lower)) throw ConfigError(q.path("upper"), "must exceed lower");
    ob = ObstacleDescriptor::tent(lower, upper, q.number("slope"), q.positive("radius"),
                                  q.vec2("center", Vec2::Zero()));
  } else {
    throw ConfigError(o.path("kind"), "must be one of constant, paraboloid, touching, tent");
  }
}

void parse_grid(const Section& s, RunConfig& cfg) {
  if (s.has("resolution") == s.has("h"))
    throw ConfigError(s.path(), "needs exactly one of resolution, h");
  if (s.has("resolution")) {
    const long long n = s.integer("resolution", 0);
    if (n < 9 || n > 8193) throw ConfigError(s.path("resolution"), "must lie in [9, 8193]");
    cfg.resolution = static_cast<int>(n);
  } else {
    cfg.spacing = s.positive("h");
    if (cfg.domain.R / *cfg.spacing > 4096.0)
      throw ConfigError(s.path("h"), "gives more than 8193 nodes per axis");
  }
}

void parse_penalty(const Section& s, RunConfig& cfg) {
  PenaltyParams& p = cfg.penalty;
  p.eps = s.number("eps", p.eps);
  if (!(p.eps > 0.0 && p.eps < 1.0)) throw ConfigError(s.path("eps"), "must lie in (0, 1)");
  p.tau = s.positive("tau", p.tau);
  if (s.has("pos_threshold")) cfg.pos_threshold = s.nonnegative("pos_threshold", 0.0);
}

std::vector<double> decreasing_list(const Section& s, const char* key, bool unit_interval) {
  const json& a = s.array(key);
  std::vector<double> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::string at = index_path(s.path(key), i);
    const double v = Section::as_number(a[i], at);
    if (unit_interval ? !(v > 0.0 && v < 1.0) : !(v > 0.0))
      throw ConfigError(at, unit_interval ? "must lie in (0, 1)" : "must be positive");
    if (!out.empty() && !(v < out.back())) throw ConfigError(at, "list must be strictly decreasing");
    out.push_back(v);
  }
  return out;
}

void parse_solver(const Section& s, RunConfig& cfg) {
  SolveParams& sp = cfg.solver;
  if (s.has("step_rule")) {
    const std::string rule = s.string("step_rule");
    if (rule == "coordinate") {
      sp.step_rule = StepRule::kCoordinate;
    } else if (rule == "fixed") {
      sp.step_rule = StepRule::kFixed;
    } else if (rule == "backtracking") {
      sp.step_rule = StepRule::kBacktracking;
    } else {
      throw ConfigError(s.path("step_rule"), "must be one of coordinate, fixed, backtracking");
    }
  }
  const long long iters = s.integer("max_iters", sp.max_iters);
  if (iters < 1 || iters > 100000000) throw ConfigError(s.path("max_iters"), "must lie in [1, 1e8]");
  sp.max_iters = static_cast<int>(iters);
  sp.tol = s.nonnegative("tol", sp.tol);
  sp.update_tol = s.nonnegative("update_tol", sp.update_tol);
  sp.stage_tol = s.nonnegative("stage_tol", sp.stage_tol);
  sp.stage_update_tol = s.nonnegative("stage_update_tol", sp.stage_update_tol);
  if (s.has("tau_schedule")) sp.tau_schedule = decreasing_list(s, "tau_schedule", false);
  sp.exact_stage = s.boolean("exact_stage", sp.exact_stage);
  sp.kink_smoothing = s.nonnegative("kink_smoothing", sp.kink_smoothing);
  sp.omega = s.nonnegative("omega", sp.omega);
  if (sp.omega >= 2.0) throw ConfigError(s.path("omega"), "must be below 2");
  sp.step = s.nonnegative("step", sp.step);
  sp.armijo = s.number("armijo", sp.armijo);
  if (!(sp.armijo > 0.0 && sp.armijo < 1.0)) throw ConfigError(s.path("armijo"), "must lie in (0, 1)");
  const long long refine = s.integer("refine_max_nodes", sp.refine_max_nodes);
  if (refine < 0 || refine > 100000) throw ConfigError(s.path("refine_max_nodes"), "must lie in [0, 1e5]");
  sp.refine_max_nodes = static_cast<int>(refine);
  sp.init_noise = s.nonnegative("init_noise", sp.init_noise);
  sp.record_history = s.boolean("record_history", sp.record_history);
  validated(s.path(), [&] { sp.validate(); });
}

void parse_sweep(const Section& s, RunConfig& cfg) {
  cfg.eps_list = decreasing_list(s, "eps_list", true);
  cfg.volume_tol = s.positive("volume_tol", cfg.volume_tol);
  cfg.warm_start = s.boolean("warm_start", cfg.warm_start);
}

void parse_verify(const Section& s, RunConfig& cfg) {
  if (s.has("lipschitz_resolutions")) {
    const json& a = s.array("lipschitz_resolutions");
    const std::string at = s.path("lipschitz_resolutions");
    if (a.size() < 3) throw ConfigError(at, "needs at least three resolutions");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const long long n = Section::as_integer(a[i], index_path(at, i));
      if (n < 9 || n > 8193) throw ConfigError(index_path(at, i), "must lie in [9, 8193]");
      if (i > 0 && (n <= cfg.lipschitz_resolutions.back() ||
                    (n - 1) % (cfg.lipschitz_resolutions.back() - 1) != 0))
        throw ConfigError(index_path(at, i), "n - 1 must be a multiple of the previous n - 1");
      cfg.lipschitz_resolutions.push_back(static_cast<int>(n));
    }
  }
  cfg.lipschitz_ratio_tol = s.positive("lipschitz_ratio_tol", cfg.lipschitz_ratio_tol);
  if (s.has("flat_face")) {
    Section f(s.at("flat_face"), s.path("flat_face"),
              {"x0", "normal", "half_length", "window", "floor"});
    FlatFaceConfig ff;
    ff.face.x0 = f.vec2("x0");
    const Vec2 n = f.vec2("normal");
    if (!(n.norm() > 0.0)) throw ConfigError(f.path("normal"), "must be non-zero");
    ff.face.normal = n.normalized();
    ff.face.half_length = f.positive("half_length");
    ff.window = f.positive("window", ff.window);
    ff.floor = f.positive("floor", ff.floor);
    cfg.flat_face = ff;
  }
}

void parse_oracle(const Section& s, RunConfig& cfg) {
  OracleTolerances& t = cfg.oracle;
  t.energy = s.positive("energy_tol", t.energy);
  t.volume = s.positive("volume_tol", t.volume);
  t.lambda = s.positive("lambda_tol", t.lambda);
  t.lambda_cv = s.positive("lambda_cv_max", t.lambda_cv);
}

}  // namespace

RunConfig parse_config(const json& doc) {
  const Section top(doc, "$",
                    {"task", "description", "domain", "grid", "penalty", "solver", "sweep",
                     "verify", "oracle", "seed", "output"});
  RunConfig cfg;
  cfg.source = doc;
  const std::string task = top.string("task");
  if (task == "solve") {
    cfg.task = Task::kSolve;
  } else if (task == "sweep") {
    cfg.task = Task::kSweep;
  } else if (task == "verify") {
    cfg.task = Task::kVerify;
  } else if (task == "oracle-compare") {
    cfg.task = Task::kOracleCompare;
  } else {
    throw ConfigError(top.path("task"), "must be one of solve, sweep, verify, oracle-compare");
  }
  if (top.has("description") && !top.at("description").is_string())
    throw ConfigError(top.path("description"), "must be a string");

  top.require("domain");
  parse_domain(Section(top.at("domain"), top.path("domain"), {"shape", "params", "R", "mu", "obstacles"}),
               cfg);
  cfg.penalty.mu = cfg.domain.mu;
  if (top.has("grid")) parse_grid(Section(top.at("grid"), top.path("grid"), {"resolution", "h"}), cfg);
  if (top.has("penalty"))
    parse_penalty(Section(top.at("penalty"), top.path("penalty"), {"eps", "tau", "pos_threshold"}),
                  cfg);
  if (top.has("solver"))
    parse_solver(Section(top.at("solver"), top.path("solver"),
                         {"step_rule", "max_iters", "tol", "update_tol", "stage_tol",
                          "stage_update_tol", "tau_schedule", "exact_stage", "kink_smoothing",
                          "omega", "step", "armijo", "refine_max_nodes", "init_noise",
                          "record_history"}),
                 cfg);
  if (top.has("sweep"))
    parse_sweep(Section(top.at("sweep"), top.path("sweep"), {"eps_list", "volume_tol", "warm_start"}),
                cfg);
  if (top.has("verify"))
    parse_verify(Section(top.at("verify"), top.path("verify"),
                         {"lipschitz_resolutions", "lipschitz_ratio_tol", "flat_face"}),
                 cfg);
  if (top.has("oracle"))
    parse_oracle(Section(top.at("oracle"), top.path("oracle"),
                         {"energy_tol", "volume_tol", "lambda_tol", "lambda_cv_max"}),
                 cfg);
  if (top.has("seed")) {
    const long long seed = Section::as_integer(top.at("seed"), top.path("seed"));
    if (seed < 0) throw ConfigError(top.path("seed"), "must be non-negative");
    cfg.seed = static_cast<std::uint64_t>(seed);
  }
  if (top.has("output")) {
    cfg.output = top.string("output");
    if (cfg.output.empty()) throw ConfigError(top.path("output"), "must be non-empty");
  }

  if (cfg.task == Task::kSweep && cfg.eps_list.empty())
    throw ConfigError("$.sweep", "is required for task sweep");
  if (cfg.task == Task::kOracleCompare) {
    if (cfg.domain.shape != Shape::kDisk)
      throw ConfigError("$.domain.shape", "oracle-compare needs a disk");
    if (cfg.obstacles.kind != ObstacleDescriptor::Kind::kConstant)
      throw ConfigError("$.domain.obstacles.kind", "oracle-compare needs constant obstacles");
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("$", "cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

}  // namespace heatopt::cli
