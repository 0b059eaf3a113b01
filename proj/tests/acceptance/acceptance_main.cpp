// Acceptance suite: one PASS/FAIL line per criterion.
//
//   dsmcsg_acceptance [--criterion N]... [--full] [--out DIR]
//
// Without --criterion every criterion runs. The default sizes keep the
// whole suite within a few minutes on one core; --full switches to the
// full-scale runs (N = 1e5, M_ref = 50).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "config.hpp"
#include "dsmcsg/analysis.hpp"
#include "dsmcsg/dsmc.hpp"
#include "dsmcsg/event_log.hpp"
#include "dsmcsg/fokker_planck.hpp"
#include "dsmcsg/gpc.hpp"
#include "experiments.hpp"

using namespace dsmcsg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> lines;

  void add(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back(fmt::format("  [{}] {}", ok ? "pass" : "FAIL", what));
  }
};

struct Options {
  bool full = false;
  fs::path out;
};

app::ExperimentConfig experiment(const std::string& id, std::vector<std::string> overrides) {
  auto cfg = app::parse_config_text("[experiment]\nid = " + id + "\n", overrides);
  app::validate_config(cfg);
  return cfg;
}

// Runs an experiment and copies the checks whose names contain one of
// `wanted` into the outcome.
void run_checks(Outcome& o, const app::ExperimentConfig& cfg, const fs::path& dir,
                const std::vector<std::string>& wanted, const std::string& label = "") {
  std::ostringstream log;
  const auto res = app::run_experiment(cfg, dir, log);
  std::size_t matched = 0;
  for (const auto& c : res.checks) {
    const bool take = std::any_of(wanted.begin(), wanted.end(),
                                  [&](const std::string& w) { return c.name.find(w) != std::string::npos; });
    if (!take) continue;
    ++matched;
    o.add(c.passed, label + c.name + ": " + c.detail);
  }
  if (matched == 0) o.add(false, label + "no matching checks were produced");
}

// 1. Test 1 equilibrium and mean conservation.
Outcome criterion1(const Options&, const fs::path& dir) {
  Outcome o;
  const auto cfg = experiment("test1", {"run.n=100000"});
  run_checks(o, cfg, dir, {"E_z[f]", "Var_z[f]", "standard errors", "conserved per step"});
  return o;
}

// 2. Per-node variance 1/(1-delta).
Outcome criterion2(const Options&, const fs::path& dir) {
  Outcome o;
  run_checks(o, experiment("test1", {"run.n=100000"}), dir, {"1/(1-delta)"});
  return o;
}

// 3. Test 2 epsilon-consistency.
Outcome criterion3(const Options& opt, const fs::path& dir) {
  Outcome o;
  const std::string n = opt.full ? "100000" : "20000";
  run_checks(o, experiment("test2", {"run.n=" + n, "fp.enabled=false"}), dir,
             {"decreases with epsilon", "L1 distance at eps"});
  return o;
}

// 4. Wealth FP steady state.
Outcome criterion4(const Options&, const fs::path& dir) {
  Outcome o;
  // The DSMC part is cut to a token run; only the FP check is read.
  run_checks(o, experiment("test2", {"fp.enabled=true", "model.epsilon=0.1", "run.n=100", "run.t_final=0.1"}),
             dir, {"inverse-gamma"});
  return o;
}

// 5. Spectral decay (sigmoid) and plateau (indicator).
Outcome criterion5(const Options& opt, const fs::path& dir) {
  Outcome o;
  const std::string mref = opt.full ? "50" : "20";
  const std::string n = opt.full ? "100000" : "10000";
  const std::vector<std::string> wanted{"spectral decay", "monotone in M", "plateaus"};
  run_checks(o, experiment("spectral", {"study.reference_order=" + mref, "run.n=" + n, "run.mode=sigmoid"}),
             dir / "wealth_sigmoid", wanted, "wealth sigmoid: ");
  run_checks(o, experiment("spectral", {"study.reference_order=" + mref, "run.n=" + n, "run.mode=indicator"}),
             dir / "wealth_indicator", wanted, "wealth indicator: ");
  const std::vector<std::string> traffic{"model.kind=traffic", "run.orders=" + mref + "," + mref,
                                         "study.reference_order=" + mref, "run.n=" + n, "run.t_final=2"};
  auto ts = traffic;
  ts.push_back("run.mode=sigmoid");
  run_checks(o, experiment("spectral", ts), dir / "traffic_sigmoid", wanted, "traffic sigmoid: ");
  auto ti = traffic;
  ti.push_back("run.mode=indicator");
  run_checks(o, experiment("spectral", ti), dir / "traffic_indicator", wanted, "traffic indicator: ");
  return o;
}

// 6. Monte Carlo rate.
Outcome criterion6(const Options&, const fs::path& dir) {
  Outcome o;
  run_checks(o, experiment("mc-rate", {"study.sizes=1000,10000,100000", "study.repetitions=20"}), dir,
             {"error rate"});
  return o;
}

// 7. Traffic envelopes for alpha = 1 and 2.
Outcome criterion7(const Options& opt, const fs::path& dir) {
  Outcome o;
  const std::string n = opt.full ? "100000" : "10000";
  run_checks(o, experiment("bounds", {"run.n=" + n, "study.alpha_cases=1,2", "model.rho=0.4,0.6"}), dir,
             {"inside the envelopes"});
  return o;
}

struct Tracking {
  double worst = 0.0;
  double residual = 0.0;
  std::size_t rescales = 0;
};

Tracking wealth_tracking(bool rescale, std::size_t n, double t_final) {
  const auto basis = build_basis(RandomParamSpec::unit_cube(1), {5});
  WealthParams wp;
  wp.epsilon = 0.1;
  const auto model = wealth_model(wp, basis);
  const auto grid = VGrid::with_spacing(0.0, 10.0, 0.05);
  FpSolver targets(model, basis, grid, uniform_cells(grid, 0.0, 2.0), 0.025);
  CollisionConfig cc;
  cc.dt = 0.01;
  cc.t_final = t_final;
  cc.mode = AcceptanceMode::sigmoid;
  cc.beta = 1.0;
  cc.rescale = rescale;
  cc.record_log = false;
  cc.record_every = 10;
  const auto res = run(model, basis, cc, InitialDensity::uniform(0.0, 2.0), n, rescale ? &targets : nullptr);

  Tracking tr;
  for (const auto& r : res.rescales) tr.residual = std::max(tr.residual, r.max_residual);
  tr.rescales = res.rescales.size();
  FpSolver fresh(model, basis, grid, uniform_cells(grid, 0.0, 2.0), 0.025);
  std::vector<double> v(basis.num_nodes()), e(basis.num_nodes());
  const auto& t = res.trajectory;
  for (std::size_t k = 0; k < t.times.size(); ++k) {
    fresh.moments_at(t.times[k], v, e);
    for (std::size_t q = 0; q < v.size(); ++q) {
      tr.worst = std::max(tr.worst, std::abs(t.mean[k][q] - v[q]) / std::abs(v[q]));
      tr.worst = std::max(tr.worst, std::abs(t.second[k][q] - e[q]) / std::abs(e[q]));
    }
  }
  return tr;
}

// 8. Rescaling fidelity.
Outcome criterion8(const Options& opt, const fs::path&) {
  Outcome o;
  const std::size_t n = opt.full ? 100000 : 20000;
  const double t_final = opt.full ? 10.0 : 2.0;
  const auto on = wealth_tracking(true, n, t_final);
  const auto off = wealth_tracking(false, n, t_final);
  o.add(on.residual <= 1e-10, fmt::format("moments after each rescale: max residual {:.2e} over {} rescales (tol 1e-10)",
                                          on.residual, on.rescales));
  o.add(on.worst <= 0.02, fmt::format("rescaled run tracks FP: sup relative deviation {:.4f} (tol 0.02)", on.worst));
  o.add(off.worst >= 2.0 * on.worst,
        fmt::format("unrescaled sigmoid run deviates: {:.4f} (need >= 2 x {:.4f})", off.worst, on.worst));
  return o;
}

// 9. Property sweep.
Outcome criterion9(const Options&, const fs::path&) {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  double ortho = 0.0;
  for (int dims = 1; dims <= 2; ++dims)
    for (int m = 0; m <= (dims == 1 ? 12 : 6); ++m) {
      const auto b = build_basis(RandomParamSpec::unit_cube(dims), std::vector<int>(dims, m));
      std::vector<double> phi(b.size());
      std::vector<double> gram(b.size() * b.size(), 0.0);
      for (std::size_t q = 0; q < b.num_nodes(); ++q) {
        b.eval_into(b.node(q), phi);
        for (std::size_t i = 0; i < b.size(); ++i)
          for (std::size_t j = 0; j < b.size(); ++j) gram[i * b.size() + j] += b.weight(q) * phi[i] * phi[j];
      }
      for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
          ortho = std::max(ortho, std::abs(gram[i * b.size() + j] - (i == j ? 1.0 : 0.0)));
    }
  o.add(ortho <= 1e-12, fmt::format("gpc orthonormality: max Gram error {:.2e} (tol 1e-12)", ortho));

  double mass_err = 0.0, min_f = 0.0;
  {
    const auto b = build_basis(RandomParamSpec::unit_cube(1), {3});
    const auto grid = VGrid::with_spacing(0.0, 10.0, 0.05);
    for (int trial = 0; trial < 10; ++trial) {
      WealthParams wp;
      wp.lambda = 0.2 + 0.6 * u(rng);
      wp.sigma2 = 0.9 * (2.0 * wp.lambda - wp.lambda * wp.lambda) * u(rng);
      const auto model = wealth_model(wp, b);
      FpState st{std::vector<std::vector<double>>(b.num_nodes(), uniform_cells(grid, 0.0, 2.0)), 0.0};
      for (int s = 0; s < 20; ++s) {
        std::vector<double> before;
        for (const auto& f : st.f) before.push_back(fp_mass(f, grid));
        fp_step(st, model, grid, 0.025);
        for (std::size_t q = 0; q < st.f.size(); ++q) {
          mass_err = std::max(mass_err, std::abs(fp_mass(st.f[q], grid) - before[q]));
          min_f = std::min(min_f, *std::min_element(st.f[q].begin(), st.f[q].end()));
        }
      }
    }
  }
  o.add(min_f >= 0.0 && mass_err <= 1e-12,
        fmt::format("FP positivity and mass: min f {:.2e}, max per-step mass change {:.2e}", min_f, mass_err));

  double lo = 1.0, hi = 0.0;
  bool replay_equal = true;
  {
    const auto b = build_basis(RandomParamSpec::unit_cube(2), {3, 3});
    for (double rho : {0.2, 0.5, 0.8}) {
      const auto model = traffic_model(TrafficParams{.rho = rho}, b);
      CollisionConfig cc;
      cc.dt = 0.05;
      cc.t_final = 2.0;
      cc.seed = static_cast<std::uint64_t>(rho * 100);
      const auto res = run(model, b, cc, InitialDensity::uniform(0.0, 1.0), 4000);
      const auto vals = node_values(res.final_state, b);
      lo = std::min(lo, *std::min_element(vals.begin(), vals.end()));
      hi = std::max(hi, *std::max_element(vals.begin(), vals.end()));
      const auto again = replay(res.log, b, model);
      replay_equal = replay_equal && again.final_state.coeffs == res.final_state.coeffs;
    }
  }
  o.add(lo >= 0.0 && hi <= 1.0, fmt::format("traffic speeds in [0,1]: range [{:.6f}, {:.6f}]", lo, hi));
  o.add(replay_equal, "replay reproduces the run bit for bit");

  double affine = 0.0;
  {
    const auto b = build_basis(RandomParamSpec::unit_cube(1), {4});
    ModelSpec free;
    free.kind = ModelKind::gambling;
    free.v_lo = -std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> st(500);
      for (auto& x : st) x = 3.0 * u(rng);
      auto e = ensemble_from_states(st, b);
      std::vector<double> v(b.num_nodes()), e2(b.num_nodes());
      for (std::size_t q = 0; q < v.size(); ++q) {
        v[q] = 4.0 * u(rng) - 2.0;
        e2[q] = v[q] * v[q] + 0.1 + u(rng);
      }
      const auto r = rescale_moments(e, v, e2, b, RescaleForm::variance_matching, free);
      affine = std::max(affine, r.max_residual);
    }
  }
  o.add(affine <= 1e-10, fmt::format("affine rescale exact in span: max residual {:.2e}", affine));
  return o;
}

const std::vector<std::pair<std::string, std::function<Outcome(const Options&, const fs::path&)>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome(const Options&, const fs::path&)>>> c = {
      {"Test 1 equilibrium", criterion1},
      {"gambling variance law", criterion2},
      {"Test 2 epsilon-consistency", criterion3},
      {"wealth FP steady state", criterion4},
      {"spectral convergence", criterion5},
      {"Monte Carlo rate", criterion6},
      {"traffic bounds", criterion7},
      {"rescaling fidelity", criterion8},
      {"property suites", criterion9},
  };
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"dsmcsg acceptance suite"};
  std::vector<int> which;
  Options opt;
  std::string out;
  cli.add_option("--criterion", which, "Criterion number (repeatable); all when omitted")
      ->check(CLI::Range(1, static_cast<int>(criteria().size())));
  cli.add_flag("--full", opt.full, "Full-scale sizes");
  cli.add_option("--out", out, "Directory for experiment artifacts");
  CLI11_PARSE(cli, argc, argv);
  opt.out = out.empty() ? fs::temp_directory_path() / "dsmcsg-acceptance" : fs::path(out);
  if (which.empty())
    for (int i = 1; i <= static_cast<int>(criteria().size()); ++i) which.push_back(i);

  int failed = 0;
  for (int k : which) {
    const auto& [name, fn] = criteria()[static_cast<std::size_t>(k - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn(opt, opt.out / fmt::format("criterion_{}", k));
    } catch (const std::exception& e) {
      o.add(false, std::string("error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << fmt::format("criterion {} ({}): {} [{:.1f}s]\n", k, name, o.pass ? "PASS" : "FAIL", secs);
    for (const auto& l : o.lines) std::cout << l << '\n';
    std::cout.flush();
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
