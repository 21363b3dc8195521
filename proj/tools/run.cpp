#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "heatopt/freeboundary.hpp"
#include "heatopt/oracle.hpp"
#include "run_config.hpp"

namespace heatopt::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Workers pull indices from a shared counter; each writes only its own slot.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct Problem {
  DomainMasks masks;
  ObstaclePair obstacles;
  PenaltyParams penalty;
};

Problem prepare(const RunConfig& cfg, std::optional<int> resolution = {}) {
  const Grid g = resolution            ? build_grid(cfg.domain, *resolution)
                 : cfg.spacing         ? build_grid_with_spacing(cfg.domain, *cfg.spacing)
                                       : build_grid(cfg.domain, cfg.resolution);
  Problem pb{rasterize(cfg.domain, g), {}, cfg.penalty};
  try {
    pb.obstacles = make_obstacles(cfg.obstacles, pb.masks);
  } catch (const Error& e) {
    throw ConfigError("$.domain.obstacles", e.what());
  }
  pb.penalty.pos_threshold = cfg.pos_threshold.value_or(1e-8 * pb.obstacles.sup_phi);
  return pb;
}

class Log {
 public:
  explicit Log(bool quiet) : quiet_(quiet) {}
  template <typename... T>
  void operator()(const T&... parts) const {
    if (quiet_) return;
    std::cerr << "heatopt: ";
    (std::cerr << ... << parts);
    std::cerr << '\n';
  }

  bool quiet() const { return quiet_; }

 private:
  bool quiet_;
};

json geojson(const FreeBoundary& fb) {
  json features = json::array();
  for (std::size_t c = 0; c < fb.chains.size(); ++c) {
    const auto& chain = fb.chains[c];
    json coords = json::array();
    for (const auto& p : chain.points) coords.push_back({p.x(), p.y()});
    if (chain.closed && !chain.points.empty())
      coords.push_back({chain.points.front().x(), chain.points.front().y()});
    features.push_back({{"type", "Feature"},
                        {"properties", {{"chain_id", c}, {"closed", chain.closed}}},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

void write_contours(const fs::path& path, const FreeBoundary& fb) {
  std::ofstream os(path);
  os << "chain_id,x,y\n" << std::setprecision(17);
  for (std::size_t c = 0; c < fb.chains.size(); ++c) {
    const auto& pts = fb.chains[c].points;
    for (const auto& p : pts) os << c << ',' << p.x() << ',' << p.y() << '\n';
    if (fb.chains[c].closed && !pts.empty())
      os << c << ',' << pts.front().x() << ',' << pts.front().y() << '\n';
  }
  if (!os) throw Error("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  os << j.dump(2) << '\n';
  if (!os) throw Error("cannot write " + path.string());
}

json grid_json(const Grid& g) {
  return {{"nx", g.nx}, {"ny", g.ny}, {"h", g.h}, {"origin", {g.origin.x(), g.origin.y()}}};
}

struct SolveArtifacts {
  json summary;
  FreeBoundary fb;
  std::optional<LambdaEstimate> lambda;
};

SolveArtifacts describe(const Problem& pb, const SolveResult& r) {
  SolveArtifacts a;
  a.fb = extract_free_boundary(r.u, pb.masks, pb.penalty);
  if (a.fb.sample_count() > 0) a.lambda = estimate_lambda(r.u, a.fb, pb.penalty);
  json lam = nullptr;
  if (a.lambda)
    lam = {{"mean", num(a.lambda->mean)},
           {"cv", num(a.lambda->cv)},
           {"samples", a.lambda->values.size()},
           {"skipped", a.lambda->skipped}};
  a.summary = {
      {"grid", grid_json(r.u.grid)},
      {"eps", pb.penalty.eps},
      {"mu", pb.penalty.mu},
      {"energy", num(r.energy)},
      {"penalized_energy", num(r.penalized_energy)},
      {"exterior_volume", num(r.exterior_volume)},
      {"iterations", r.iterations},
      {"stages", r.stages},
      {"converged", r.converged},
      {"m_probe", num(r.m_probe)},
      {"support_moves", r.support_moves},
      {"max_bound_violation", num(r.max_bound_violation)},
      {"max_objective_increase", num(r.max_objective_increase)},
      {"support_radius", num(support_radius(r.u, pb.penalty))},
      {"free_boundary",
       {{"status", status_name(a.fb.status)},
        {"length", num(a.fb.length)},
        {"chains", a.fb.chains.size()},
        {"lambda", lam}}},
      {"contours", geojson(a.fb)},
  };
  return a;
}

void write_fields(const fs::path& dir, const Field& u, const FreeBoundary& fb) {
  write_csv((dir / "u.csv").string(), u);
  write_binary((dir / "u.bin").string(), u);
  write_contours(dir / "contours.csv", fb);
}

json report_json(const PropertyReport& rep) {
  json checks = json::array();
  for (const auto& c : rep.checks) {
    json values = json::object();
    for (const auto& [k, v] : c.extra) values[k] = num(v);
    checks.push_back({{"name", c.name},
                      {"property", c.anchor},
                      {"value", num(c.value)},
                      {"threshold", num(c.threshold)},
                      {"pass", c.pass},
                      {"detail", c.detail},
                      {"values", values}});
  }
  return {{"pass", rep.pass()}, {"checks", checks}};
}

json sweep_row_json(const SweepRow& row) {
  return {{"eps", row.eps},
          {"volume", num(row.volume)},
          {"energy", num(row.energy)},
          {"penalized_energy", num(row.penalized_energy)},
          {"lambda_mean", num(row.lambda_mean)},
          {"lambda_cv", num(row.lambda_cv)},
          {"support_radius", num(row.support_radius)},
          {"iterations", row.iterations},
          {"converged", row.converged}};
}

void write_sweep_csv(const fs::path& path, const SweepResult& sw) {
  std::ofstream os(path);
  os << "eps,volume,energy,penalized_energy,lambda_mean,lambda_cv,support_radius,iterations,"
        "converged\n"
     << std::setprecision(17);
  for (const auto& r : sw.rows)
    os << r.eps << ',' << r.volume << ',' << r.energy << ',' << r.penalized_energy << ','
       << r.lambda_mean << ',' << r.lambda_cv << ',' << r.support_radius << ',' << r.iterations
       << ',' << (r.converged ? 1 : 0) << '\n';
  if (!os) throw Error("cannot write " + path.string());
}

CheckRecord relative_check(const char* name, const char* property, double got, double want,
                           double tol) {
  CheckRecord c;
  c.name = name;
  c.anchor = property;
  c.value = std::abs(got - want) / std::abs(want);
  c.threshold = tol;
  c.pass = c.value <= tol;
  c.extra = {{"computed", got}, {"reference", want}};
  return c;
}

int run_solve(const RunConfig& cfg, const fs::path& dir, const Log& log, json& summary) {
  const Problem pb = prepare(cfg);
  log("solving on ", pb.masks.grid.nx, "x", pb.masks.grid.ny, " nodes");
  const SolveResult r = solve_penalized(pb.masks, pb.obstacles, pb.penalty, cfg.solver);
  SolveArtifacts a = describe(pb, r);
  summary["solve"] = a.summary;
  write_fields(dir, r.u, a.fb);
  const PropertyReport rep = verify_solution(pb.masks, pb.obstacles, pb.penalty, r);
  write_json(dir / "report.json", report_json(rep));
  log("energy ", r.energy, ", volume ", r.exterior_volume, ", converged ", r.converged);
  return 0;
}

int run_sweep(const RunConfig& cfg, const fs::path& dir, const Log& log, int jobs,
              json& summary) {
  const Problem pb = prepare(cfg);
  SweepResult sw;
  sw.volume_tol = cfg.volume_tol;
  Field last;
  auto abort_at = [&](double eps) {
    sw.aborted = true;
    std::ostringstream os;
    os << "solve at eps = " << eps << " did not converge";
    sw.message = os.str();
  };
  if (cfg.warm_start) {
    std::optional<Field> warm;
    for (double eps : cfg.eps_list) {
      PenaltyParams q = pb.penalty;
      q.eps = eps;
      log("sweep eps = ", eps);
      Field u;
      sw.rows.push_back(sweep_point(pb.masks, pb.obstacles, q, cfg.solver, warm, &u));
      last = u;
      if (!sw.rows.back().converged) {
        abort_at(eps);
        break;
      }
      warm = std::move(u);
    }
  } else {
    const std::size_t n = cfg.eps_list.size();
    std::vector<SweepRow> rows(n);
    std::vector<Field> fields(n);
    log("sweep of ", n, " cold solves on ", jobs, " worker(s)");
    parallel_for(n, jobs, [&](std::size_t i) {
      PenaltyParams q = pb.penalty;
      q.eps = cfg.eps_list[i];
      rows[i] = sweep_point(pb.masks, pb.obstacles, q, cfg.solver, {}, &fields[i]);
    });
    for (std::size_t i = 0; i < n; ++i) {
      sw.rows.push_back(rows[i]);
      last = std::move(fields[i]);
      if (!rows[i].converged) {
        abort_at(rows[i].eps);
        break;
      }
    }
  }
  summarize_sweep(sw, pb.penalty.mu);

  json rows = json::array();
  for (const auto& row : sw.rows) rows.push_back(sweep_row_json(row));
  summary["sweep"] = {{"rows", rows},
                      {"eps0", sw.eps0 ? json(*sw.eps0) : json(nullptr)},
                      {"holds_below_eps0", sw.holds_below_eps0},
                      {"lambda_ratio", num(sw.lambda_ratio)},
                      {"lambda_bounded", sw.lambda_bounded},
                      {"volume_tol", sw.volume_tol},
                      {"warm_start", cfg.warm_start},
                      {"aborted", sw.aborted},
                      {"message", sw.message},
                      {"grid", grid_json(pb.masks.grid)}};
  write_sweep_csv(dir / "sweep.csv", sw);
  PenaltyParams q = pb.penalty;
  q.eps = sw.rows.back().eps;
  const FreeBoundary fb = extract_free_boundary(last, pb.masks, q);
  summary["sweep"]["contours"] = geojson(fb);
  write_fields(dir, last, fb);
  if (sw.eps0)
    log("eps0 = ", *sw.eps0, sw.holds_below_eps0 ? " (holds below)" : " (not below)");
  else
    log("no eps reached the volume tolerance");
  return 0;
}

int run_verify(const RunConfig& cfg, const fs::path& dir, const Log& log, int jobs,
               json& summary) {
  const Problem pb = prepare(cfg);
  log("solving on ", pb.masks.grid.nx, "x", pb.masks.grid.ny, " nodes");
  const SolveResult r = solve_penalized(pb.masks, pb.obstacles, pb.penalty, cfg.solver);
  SolveArtifacts a = describe(pb, r);
  summary["solve"] = a.summary;
  write_fields(dir, r.u, a.fb);
  bool converged = r.converged;

  PropertyReport rep = verify_solution(pb.masks, pb.obstacles, pb.penalty, r);
  if (cfg.flat_face) {
    const auto fe = check_flat_boundary_exponent(r.u, cfg.flat_face->face, cfg.flat_face->window,
                                                 pb.penalty, cfg.flat_face->floor);
    rep.checks.push_back(fe.record);
  }
  if (!cfg.lipschitz_resolutions.empty()) {
    const auto& res = cfg.lipschitz_resolutions;
    std::vector<double> grads(res.size());
    std::vector<char> ok(res.size());
    log("refinement solves on ", jobs, " worker(s)");
    parallel_for(res.size(), jobs, [&](std::size_t i) {
      const Problem q = prepare(cfg, res[i]);
      const SolveResult s = solve_penalized(q.masks, q.obstacles, q.penalty, cfg.solver);
      grads[i] = max_gradient(s.u);
      ok[i] = s.converged;
    });
    for (char c : ok) converged = converged && c;
    rep.checks.push_back(check_lipschitz_refinement(res, grads, cfg.lipschitz_ratio_tol));
    json rows = json::array();
    for (std::size_t i = 0; i < res.size(); ++i)
      rows.push_back({{"resolution", res[i]}, {"max_gradient", grads[i]}, {"converged", ok[i] != 0}});
    summary["lipschitz"] = rows;
  }
  json rj = report_json(rep);
  rj["converged"] = converged;
  write_json(dir / "report.json", rj);
  summary["report_pass"] = rep.pass();
  summary["converged"] = converged;
  if (!log.quiet()) std::cout << rep.table();
  return rep.pass() && converged ? 0 : 1;
}

int run_oracle(const RunConfig& cfg, const fs::path& dir, const Log& log, json& summary) {
  const Problem pb = prepare(cfg);
  const RadialSolution ref =
      radial_solution(cfg.domain.radius, cfg.obstacles.lower, cfg.domain.mu);
  log("solving on ", pb.masks.grid.nx, "x", pb.masks.grid.ny, " nodes");
  const SolveResult r = solve_penalized(pb.masks, pb.obstacles, pb.penalty, cfg.solver);
  SolveArtifacts a = describe(pb, r);
  summary["solve"] = a.summary;
  summary["oracle"] = {{"inner_radius", ref.a},
                       {"outer_radius", ref.b},
                       {"energy", ref.energy()},
                       {"volume", ref.volume()},
                       {"lambda", ref.lambda()}};
  write_fields(dir, r.u, a.fb);

  const OracleTolerances& t = cfg.oracle;
  PropertyReport rep;
  rep.checks.push_back(relative_check("energy", "Dirichlet energy against the radial solution",
                                      r.energy, ref.energy(), t.energy));
  rep.checks.push_back(relative_check("volume", "exterior volume against the radial solution",
                                      r.exterior_volume, ref.volume(), t.volume));
  if (a.lambda) {
    rep.checks.push_back(relative_check("lambda", "mean |grad u| on the free boundary",
                                        a.lambda->mean, ref.lambda(), t.lambda));
    CheckRecord cv;
    cv.name = "lambda_cv";
    cv.anchor = "|grad u| constant along the free boundary";
    cv.value = a.lambda->cv;
    cv.threshold = t.lambda_cv;
    cv.pass = cv.value <= cv.threshold;
    rep.checks.push_back(cv);
  } else {
    CheckRecord c;
    c.name = "lambda";
    c.anchor = "mean |grad u| on the free boundary";
    c.value = std::numeric_limits<double>::infinity();
    c.threshold = t.lambda;
    c.detail = std::string("free boundary ") + status_name(a.fb.status);
    rep.checks.push_back(c);
  }
  json rj = report_json(rep);
  rj["converged"] = r.converged;
  write_json(dir / "report.json", rj);
  summary["report_pass"] = rep.pass();
  if (!log.quiet()) std::cout << rep.table();
  return rep.pass() ? 0 : 1;
}

}  // namespace

int run(RunConfig cfg, const RunOptions& options) {
  if (options.seed) cfg.seed = *options.seed;
  cfg.solver.seed = cfg.seed;
  if (options.jobs < 1) throw ConfigError("--jobs", "must be at least 1");
  const fs::path dir = options.out_dir ? fs::path(*options.out_dir) : fs::path(cfg.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw Error("cannot create output directory " + dir.string());
  {
    std::ofstream probe(dir / "summary.json");
    if (!probe) throw Error("output directory " + dir.string() + " is not writable");
  }
  const Log log(options.quiet);

  json summary = {{"task", task_name(cfg.task)}, {"seed", cfg.seed}, {"config", cfg.source}};
  int status = 0;
  switch (cfg.task) {
    case Task::kSolve: status = run_solve(cfg, dir, log, summary); break;
    case Task::kSweep: status = run_sweep(cfg, dir, log, options.jobs, summary); break;
    case Task::kVerify: status = run_verify(cfg, dir, log, options.jobs, summary); break;
    case Task::kOracleCompare: status = run_oracle(cfg, dir, log, summary); break;
  }
  summary["exit_status"] = status;
  write_json(dir / "summary.json", summary);
  return status;
}

}  // namespace heatopt::cli
