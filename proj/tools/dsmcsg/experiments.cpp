#include "experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "dsmcsg/fokker_planck.hpp"

namespace dsmcsg::app {

namespace fs = std::filesystem;

bool ExperimentResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

fs::path output_directory(const ExperimentConfig& cfg) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("DSMCSG_OUTPUT_DIR"); env && *env) return fs::path(env) / to_string(cfg.experiment);
  return fs::path("dsmcsg-out") / to_string(cfg.experiment);
}

std::string format_real(double x) { return fmt::format("{:.17g}", x); }

CsvWriter::CsvWriter(const fs::path& path, const std::string& config_hash, const std::vector<std::string>& columns)
    : path_(path), columns_(columns.size()) {
  fs::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error("cannot write '" + path.string() + "'");
  out_ << "# config_hash=" << config_hash << '\n';
  for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << '\n';
}

CsvWriter& CsvWriter::cell(double x) {
  line_ += (in_row_++ ? "," : "") + format_real(x);
  return *this;
}

CsvWriter& CsvWriter::cell(std::size_t x) {
  line_ += (in_row_++ ? "," : "") + std::to_string(x);
  return *this;
}

CsvWriter& CsvWriter::cell(int x) {
  line_ += (in_row_++ ? "," : "") + std::to_string(x);
  return *this;
}

void CsvWriter::end_row() {
  if (in_row_ != columns_)
    throw Error(fmt::format("{}: row has {} cells, header has {}", path_.string(), in_row_, columns_));
  out_ << line_ << '\n';
  line_.clear();
  in_row_ = 0;
  if (!out_) throw Error("write failed for '" + path_.string() + "'");
}

void write_observables(const fs::path& path, const std::string& hash, const Trajectory& traj) {
  CsvWriter w(path, hash, {"t", "z_index", "V", "E"});
  for (std::size_t k = 0; k < traj.times.size(); ++k)
    for (std::size_t q = 0; q < traj.mean[k].size(); ++q)
      w.cell(traj.times[k]).cell(q).cell(traj.mean[k][q]).cell(traj.second[k][q]).end_row();
}

namespace {

std::string tag(double x) { return fmt::format("{}", x); }

struct Ctx {
  const ExperimentConfig& cfg;
  fs::path out;
  std::ostream& log;
  std::string hash;
  ExperimentResult result;

  void check(std::string name, bool ok, std::string detail) {
    fmt::print(log, "[{}] {}: {}\n", ok ? "PASS" : "FAIL", name, detail);
    result.checks.push_back({std::move(name), ok, std::move(detail)});
  }
  fs::path file(const fs::path& rel) {
    result.files.push_back(out / rel);
    return out / rel;
  }
};

void write_density(Ctx& c, const fs::path& rel, double t, const VGrid& grid, const ZStats& s) {
  CsvWriter w(c.file(rel), c.hash, {"t", "v", "Ez_f", "Varz_f"});
  for (std::size_t i = 0; i < grid.size(); ++i) w.cell(t).cell(grid.center(i)).cell(s.mean[i]).cell(s.variance[i]).end_row();
}

void write_fp_observables(Ctx& c, const fs::path& rel, const FpTrajectory& tr) {
  Trajectory t{tr.times, tr.mean, tr.second};
  write_observables(c.file(rel), c.hash, t);
}

VGrid recon_grid(const ExperimentConfig& cfg) { return VGrid::with_spacing(cfg.v_min, cfg.v_max, cfg.dv); }
VGrid fp_grid(const ExperimentConfig& cfg) { return VGrid::with_spacing(cfg.fp_v_min, cfg.fp_v_max, cfg.fp_dv); }
double fp_step(const ExperimentConfig& cfg) { return cfg.fp_dt > 0.0 ? cfg.fp_dt : cfg.fp_dv / 2.0; }

std::unique_ptr<FpSolver> make_fp(const ExperimentConfig& cfg, const ModelSpec& model, const GpcBasis& basis) {
  const auto g = fp_grid(cfg);
  return std::make_unique<FpSolver>(model, basis, g, uniform_cells(g, cfg.init_lo, cfg.init_hi), fp_step(cfg));
}

/// Largest relative deviation of DSMC moments from a fresh FP solve.
double fp_tracking_error(const ExperimentConfig& cfg, const ModelSpec& model, const GpcBasis& basis,
                         const Trajectory& traj) {
  auto fp = make_fp(cfg, model, basis);
  const std::size_t nq = basis.num_nodes();
  std::vector<double> v(nq), e(nq);
  double worst = 0.0;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    fp->moments_at(traj.times[k], v, e);
    for (std::size_t q = 0; q < nq; ++q) {
      worst = std::max(worst, std::abs(traj.mean[k][q] - v[q]) / std::max(std::abs(v[q]), 1e-300));
      worst = std::max(worst, std::abs(traj.second[k][q] - e[q]) / std::max(std::abs(e[q]), 1e-300));
    }
  }
  return worst;
}

void maybe_write_log(Ctx& c, const RunResult& res, const fs::path& rel) {
  if (c.cfg.write_log) res.log.write_file(c.file(rel).string());
}

void report_rescales(Ctx& c, const RunResult& res, const std::string& label) {
  double resid = 0.0;
  std::size_t skipped = 0;
  for (const auto& r : res.rescales) {
    resid = std::max(resid, r.max_residual);
    if (!r.applied) ++skipped;
  }
  if (skipped) fmt::print(c.log, "warning: {} rescale(s) skipped on degenerate node variance\n", skipped);
  c.check(label + "moments match FP after rescale", resid <= 1e-10,
          fmt::format("max |moment - target| = {:.3e} over {} rescales", resid, res.rescales.size()));
}

// Gambling, Gamma equilibrium.
void test1(Ctx& c) {
  const auto& cfg = c.cfg;
  const auto basis = cfg.basis();
  const auto model = gambling_model(cfg.gambling_params(), basis);
  const auto cc = cfg.collision_config(1.0);
  auto res = run(model, basis, cc, cfg.initial_density(), cfg.n);
  write_observables(c.file("observables.csv"), c.hash, res.trajectory);
  maybe_write_log(c, res, "events.log");

  const auto grid = recon_grid(cfg);
  const auto dens = reconstruct(res.final_state, basis, grid, cfg.out_of_range_limit);
  const auto s = stats_over_z(dens.f, basis);
  std::vector<std::vector<double>> eq;
  for (const auto& np : model.nodes) eq.push_back(equilibrium_cells_gambling(grid, np.exponent));
  const auto se = stats_over_z(eq, basis);
  write_density(c, "density.csv", res.final_state.t, grid, s);
  write_density(c, "equilibrium.csv", res.final_state.t, grid, se);

  const double l1m = l1_distance(s.mean, se.mean, grid, cfg.l1_lo, cfg.l1_hi);
  const double l1v = l1_distance(s.variance, se.variance, grid, cfg.l1_lo, cfg.l1_hi);
  c.check("E_z[f] matches the Gamma equilibrium", l1m <= cfg.l1_tolerance,
          fmt::format("L1 on [{},{}] = {:.4f} (tol {})", cfg.l1_lo, cfg.l1_hi, l1m, cfg.l1_tolerance));
  c.check("Var_z[f] matches the Gamma equilibrium", l1v <= cfg.variance_tolerance,
          fmt::format("L1 on [{},{}] = {:.4f} (tol {})", cfg.l1_lo, cfg.l1_hi, l1v, cfg.variance_tolerance));

  const auto& tr = res.trajectory;
  const double m0 = cfg.initial_density().mean();
  const double sd0 = (cfg.init_hi - cfg.init_lo) / std::sqrt(12.0 * static_cast<double>(cfg.n));
  double drift = 0.0, step_drift = 0.0;
  for (std::size_t q = 0; q < basis.num_nodes(); ++q) {
    drift = std::max(drift, std::abs(tr.mean.back()[q] - m0));
    for (std::size_t k = 0; k < tr.times.size(); ++k)
      step_drift = std::max(step_drift, std::abs(tr.mean[k][q] - tr.mean[0][q]));
  }
  const double steps = static_cast<double>(cc.outer_steps());
  c.check("mean wealth within 5 standard errors of its initial value", drift <= 5.0 * sd0,
          fmt::format("max drift {:.3e}, standard error {:.3e}", drift, sd0));
  if (cfg.mode == AcceptanceMode::indicator)
    c.check("mean wealth conserved per step", step_drift <= 1e-12 * steps * std::max(1.0, m0),
            fmt::format("max |V(t) - V(0)| = {:.3e} over {} steps", step_drift, cc.outer_steps()));

  double worst = 0.0;
  std::size_t worst_q = 0;
  for (std::size_t q = 0; q < basis.num_nodes(); ++q) {
    const double var = tr.second.back()[q] - tr.mean.back()[q] * tr.mean.back()[q];
    const double law = 1.0 / (1.0 - model.nodes[q].exponent);
    const double rel = std::abs(var - law) / law;
    if (rel > worst) {
      worst = rel;
      worst_q = q;
    }
  }
  c.check("per-node variance follows 1/(1-delta)", worst <= cfg.variance_law_tolerance,
          fmt::format("worst relative error {:.3f} at node {} (delta={:.3f}, tol {})", worst, worst_q,
                      model.nodes[worst_q].exponent, cfg.variance_law_tolerance));
}

// Wealth, epsilon-consistency against the FP equilibrium.
void test2(Ctx& c) {
  const auto& cfg = c.cfg;
  const auto basis = cfg.basis();
  const auto grid = recon_grid(cfg);

  if (cfg.fp_enabled) {
    const auto model = wealth_model(cfg.wealth_params(cfg.epsilons.front()), basis);
    const auto g = fp_grid(cfg);
    const auto tr = fp_solve(model, g, basis, uniform_cells(g, cfg.init_lo, cfg.init_hi), cfg.fp_t_final,
                             fp_step(cfg), cfg.fp_output_every);
    write_fp_observables(c, "fp/observables.csv", tr);
    write_density(c, "fp/density.csv", tr.final_state.t, g, stats_over_z(tr.final_state.f, basis));
    double worst = 0.0;
    for (std::size_t q = 0; q < basis.num_nodes(); ++q) {
      auto eq = equilibrium_cells_wealth(g, cfg.wealth_params(cfg.epsilons.front()), model.nodes[q].exponent);
      const double mass = fp_mass(eq, g);
      for (auto& x : eq) x /= mass;
      const double num = l1_distance(tr.final_state.f[q], eq, g, cfg.l1_lo, cfg.l1_hi);
      const double den = l1_distance(eq, std::vector<double>(eq.size(), 0.0), g, cfg.l1_lo, cfg.l1_hi);
      worst = std::max(worst, num / den);
    }
    c.check("FP solution reaches the inverse-gamma equilibrium", worst <= 1e-2,
            fmt::format("worst per-node relative L1 {:.3e} at t={} (tol 1e-2)", worst, tr.final_state.t));
    if (tr.diffusion_clamped) fmt::print(c.log, "warning: {} FP diffusion faces clamped to 0\n", tr.diffusion_clamped);
  }

  std::vector<std::pair<double, double>> l1s;
  CsvWriter table(c.file("test2_l1.csv"), c.hash, {"epsilon", "l1_mean", "l1_var", "out_of_range"});
  for (double eps : cfg.epsilons) {
    const auto wp = cfg.wealth_params(eps);
    const auto model = wealth_model(wp, basis);
    const auto cc = cfg.collision_config(eps);
    std::unique_ptr<FpSolver> targets;
    if (cfg.rescale) targets = make_fp(cfg, model, basis);
    auto res = run(model, basis, cc, cfg.initial_density(), cfg.n, targets.get());
    const fs::path dir = "eps_" + tag(eps);
    write_observables(c.file(dir / "observables.csv"), c.hash, res.trajectory);
    maybe_write_log(c, res, dir / "events.log");

    const auto dens = reconstruct(res.final_state, basis, grid, cfg.out_of_range_limit);
    const auto s = stats_over_z(dens.f, basis);
    std::vector<std::vector<double>> eq;
    for (const auto& np : model.nodes) eq.push_back(equilibrium_cells_wealth(grid, wp, np.exponent));
    const auto se = stats_over_z(eq, basis);
    write_density(c, dir / "density.csv", res.final_state.t, grid, s);
    write_density(c, dir / "equilibrium.csv", res.final_state.t, grid, se);
    const double l1m = l1_distance(s.mean, se.mean, grid, cfg.l1_lo, cfg.l1_hi);
    const double l1v = l1_distance(s.variance, se.variance, grid, cfg.l1_lo, cfg.l1_hi);
    table.cell(eps).cell(l1m).cell(l1v).cell(dens.out_of_range).end_row();
    fmt::print(c.log, "eps={}: L1(E_z f) = {:.4f}, L1(Var_z f) = {:.4f}\n", eps, l1m, l1v);
    l1s.emplace_back(eps, l1m);

    if (cfg.rescale) {
      report_rescales(c, res, fmt::format("eps={}: ", eps));
      const double dev = fp_tracking_error(cfg, model, basis, res.trajectory);
      c.check(fmt::format("eps={}: rescaled moments track FP", eps), dev <= 0.02,
              fmt::format("sup relative deviation {:.4f} (tol 0.02)", dev));
    }
  }
  std::sort(l1s.begin(), l1s.end());
  bool monotone = true;
  for (std::size_t i = 1; i < l1s.size(); ++i) monotone = monotone && l1s[i - 1].second < l1s[i].second;
  if (l1s.size() > 1) c.check("L1 distance decreases with epsilon", monotone, "see test2_l1.csv");
  c.check(fmt::format("L1 distance at eps={}", l1s.front().first), l1s.front().second <= cfg.l1_tolerance,
          fmt::format("{:.4f} (tol {})", l1s.front().second, cfg.l1_tolerance));
}

// Traffic with two uncertain parameters.
void test3(Ctx& c) {
  const auto& cfg = c.cfg;
  const auto basis = cfg.basis();
  const auto grid = recon_grid(cfg);
  CsvWriter table(c.file("test3_summary.csv"), c.hash, {"rho", "epsilon", "l1_mean_vs_fp", "out_of_range"});
  for (double rho : cfg.rhos) {
    const fs::path rdir = "rho_" + tag(rho);
    std::optional<FpTrajectory> fp;
    if (cfg.fp_enabled) {
      const auto model = traffic_model(cfg.traffic_params(rho, cfg.epsilons.front()), basis);
      const auto g = fp_grid(cfg);
      fp = fp_solve(model, g, basis, uniform_cells(g, cfg.init_lo, cfg.init_hi), cfg.fp_t_final, fp_step(cfg),
                    cfg.fp_output_every);
      write_fp_observables(c, rdir / "fp" / "observables.csv", *fp);
      write_density(c, rdir / "fp" / "density.csv", fp->final_state.t, g, stats_over_z(fp->final_state.f, basis));
    }
    for (double eps : cfg.epsilons) {
      const auto model = traffic_model(cfg.traffic_params(rho, eps), basis);
      const auto cc = cfg.collision_config(eps);
      auto res = run(model, basis, cc, cfg.initial_density(), cfg.n);
      const fs::path dir = rdir / ("eps_" + tag(eps));
      write_observables(c.file(dir / "observables.csv"), c.hash, res.trajectory);
      maybe_write_log(c, res, dir / "events.log");
      const auto dens = reconstruct(res.final_state, basis, grid, cfg.out_of_range_limit);
      const auto s = stats_over_z(dens.f, basis);
      write_density(c, dir / "density.csv", res.final_state.t, grid, s);

      const auto vals = node_values(res.final_state, basis);
      const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
      c.check(fmt::format("rho={} eps={}: speeds stay in [0,1]", rho, eps), *lo >= 0.0 && *hi <= 1.0,
              fmt::format("range [{:.6f}, {:.6f}]", *lo, *hi));
      double l1 = std::numeric_limits<double>::quiet_NaN();
      if (fp && std::abs(grid.dv() - cfg.fp_dv) < 1e-12 && grid.size() == fp->final_state.f[0].size()) {
        const auto sf = stats_over_z(fp->final_state.f, basis);
        l1 = l1_distance(s.mean, sf.mean, grid, cfg.l1_lo, cfg.l1_hi);
      }
      table.cell(rho).cell(eps).cell(l1).cell(dens.out_of_range).end_row();
    }
  }
}

TargetsFactory fp_targets(const ExperimentConfig& cfg) {
  if (!cfg.rescale) return {};
  return [&cfg](const ModelSpec& m, const GpcBasis& b) -> std::unique_ptr<MomentTargets> { return make_fp(cfg, m, b); };
}

void spectral(Ctx& c) {
  const auto& cfg = c.cfg;
  const double eps = cfg.epsilons.front();
  const double rho = cfg.rhos.front();
  const auto ref_basis = cfg.basis_with_order(cfg.reference_order);
  const auto model = cfg.build_model(ref_basis, eps, rho);
  auto cc = cfg.collision_config(eps);
  cc.record_log = true;
  std::unique_ptr<MomentTargets> targets;
  if (cfg.rescale) targets = make_fp(cfg, model, ref_basis);
  auto res = run(model, ref_basis, cc, cfg.initial_density(), cfg.n, targets.get());
  fmt::print(c.log, "reference run: order {}, {} logged events\n", cfg.reference_order, res.log.total_events());
  write_observables(c.file("observables.csv"), c.hash, res.trajectory);
  maybe_write_log(c, res, "events.log");

  const auto study = spectral_study(
      res.log, [&](const GpcBasis& b) { return cfg.build_model(b, eps, rho); }, cfg.study_orders,
      cfg.reference_order, fp_targets(cfg), cfg.record_every, &res.trajectory);
  CsvWriter w(c.file("spectral.csv"), c.hash, {"M", "error_second", "error_mean"});
  for (const auto& r : study.rows) w.cell(r.order).cell(r.error_second).cell(r.error_mean).end_row();
  if (study.rows.size() < 2) return;

  const double first = study.rows.front().error_second;
  const double last = study.rows.back().error_second;
  const double drop = std::log10(first) - std::log10(last);
  const std::string range = fmt::format("M={}..{}", study.rows.front().order, study.rows.back().order);
  if (cfg.mode == AcceptanceMode::sigmoid) {
    // Monotone up to a factor of two between neighbouring orders.
    bool monotone = true;
    for (std::size_t i = 1; i < study.rows.size(); ++i)
      monotone = monotone && study.rows[i].error_second <= 2.0 * study.rows[i - 1].error_second;
    c.check("spectral decay of the L2 error", drop >= cfg.min_decades,
            fmt::format("{} drops {:.2f} decades (need >= {})", range, drop, cfg.min_decades));
    c.check("L2 error monotone in M", monotone, "see spectral.csv");
  } else {
    c.check("indicator acceptance plateaus", drop < cfg.max_plateau_decades,
            fmt::format("{} drops {:.2f} decades (need < {})", range, drop, cfg.max_plateau_decades));
  }
}

void mc_rate(Ctx& c) {
  const auto& cfg = c.cfg;
  const auto basis = cfg.basis();
  const auto model = gambling_model(cfg.gambling_params(), basis);
  auto cc = cfg.collision_config(1.0);
  cc.record_log = false;
  const double reference = cfg.initial_density().mean();
  auto observable = [&](std::size_t n, std::uint64_t seed) {
    auto run_cfg = cc;
    run_cfg.seed = seed;
    auto res = run(model, basis, run_cfg, cfg.initial_density(), n);
    return quad_expectation(res.trajectory.mean.back(), basis);
  };
  const auto study = mc_error_study(observable, reference, cfg.sizes, cfg.repetitions, cfg.seed);
  CsvWriter w(c.file("mc_rate.csv"), c.hash, {"N", "rms"});
  for (const auto& r : study.rows) w.cell(r.n).cell(r.rms).end_row();
  c.check("Monte Carlo error rate", std::abs(study.slope - cfg.slope_target) <= cfg.slope_tolerance,
          fmt::format("fitted slope {:.3f} +- {:.3f} (target {} +- {})", study.slope, study.slope_stderr,
                      cfg.slope_target, cfg.slope_tolerance));
}

void bounds(Ctx& c) {
  const auto& cfg = c.cfg;
  const auto basis = cfg.basis();
  CsvWriter summary(c.file("bounds_summary.csv"), c.hash, {"rho", "alpha", "samples", "violations", "fraction"});
  for (double rho : cfg.rhos) {
    for (int ac : cfg.alpha_cases) {
      const double eps = cfg.epsilons.front();
      auto tp = cfg.traffic_params(rho, eps);
      tp.alpha = AffineParam::constant(ac);
      const auto model = traffic_model(tp, basis);
      auto cc = cfg.collision_config(eps);
      const double v0 = 1.0 - rho;
      const double hw = std::min(v0, 1.0 - v0);
      auto res = run(model, basis, cc, InitialDensity::uniform(v0 - hw, v0 + hw), cfg.n);
      std::vector<double> ts;
      for (double t : res.trajectory.times) ts.push_back(t / eps);
      const auto b = traffic_bounds(model, ac, v0, ts);
      const auto rep = bound_check(res.trajectory.mean, b, cfg.n);

      CsvWriter w(c.file(fmt::format("bounds_rho_{}_alpha_{}.csv", tag(rho), ac)), c.hash,
                  {"t", "z_index", "V", "Vminus", "Vplus"});
      for (std::size_t k = 0; k < ts.size(); ++k)
        for (std::size_t q = 0; q < basis.num_nodes(); ++q)
          w.cell(res.trajectory.times[k]).cell(q).cell(res.trajectory.mean[k][q]).cell(b.lower[k][q])
              .cell(b.upper[k][q]).end_row();
      summary.cell(rho).cell(ac).cell(rep.samples).cell(rep.violations).cell(rep.fraction()).end_row();
      c.check(fmt::format("rho={} alpha={}: mean speed inside the envelopes", rho, ac),
              rep.fraction() <= cfg.bound_fraction,
              fmt::format("{} of {} samples outside (tol 5/sqrt(N) = {:.4f})", rep.violations, rep.samples,
                          rep.tolerance));
    }
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  fs::create_directories(out);
  Ctx c{cfg, out, log, cfg.hash(), {}};
  {
    std::ofstream ini(c.file("resolved.ini"), std::ios::binary | std::ios::trunc);
    ini << "; config_hash=" << c.hash << '\n' << cfg.to_ini();
  }
  switch (cfg.experiment) {
    case Experiment::test1: test1(c); break;
    case Experiment::test2: test2(c); break;
    case Experiment::test3: test3(c); break;
    case Experiment::spectral: spectral(c); break;
    case Experiment::mc_rate: mc_rate(c); break;
    case Experiment::bounds: bounds(c); break;
  }
  return std::move(c.result);
}

ExperimentResult replay_experiment(const ExperimentConfig& cfg, const std::string& log_path, int order,
                                   const fs::path& out, std::ostream& log) {
  if (order < 0) throw ConfigError("--order must be >= 0");
  const auto ev = EventLog::read_file(log_path);
  if (ev.header.model != cfg.model)
    throw ConfigError("model.kind: the log was recorded with the " + to_string(ev.header.model) +
                      " model, the config selects " + to_string(cfg.model));
  const RandomParamSpec spec(ev.header.dims);
  const auto basis = build_basis(spec, std::vector<int>(spec.dims(), order));
  ExperimentConfig local = cfg;
  local.orders.assign(spec.dims(), order);
  const auto model = local.build_model(basis, ev.header.epsilon, cfg.rhos.front());
  std::unique_ptr<FpSolver> targets;
  if (ev.header.rescale) targets = make_fp(local, model, basis);
  const auto res = replay(ev, basis, model, targets.get(), {}, std::max<std::size_t>(cfg.record_every, 1));

  fs::create_directories(out);
  Ctx c{local, out, log, cfg.hash(), {}};
  write_observables(c.file("observables.csv"), c.hash, res.trajectory);
  fmt::print(log, "replayed {} records at order {} ({} nodes)\n", ev.records.size(), order, basis.num_nodes());
  return std::move(c.result);
}

}  // namespace dsmcsg::app
