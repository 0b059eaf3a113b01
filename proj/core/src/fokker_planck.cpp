#include "dsmcsg/fokker_planck.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

#include "dsmcsg/error.hpp"

namespace dsmcsg {

VGrid::VGrid(double v_min, double v_max, std::size_t cells) : lo_(v_min), hi_(v_max), n_(cells) {
  if (!(v_min < v_max)) throw ConfigError("velocity grid needs v_min < v_max");
  if (cells < 8) throw ConfigError("velocity grid needs at least 8 cells");
  dv_ = (v_max - v_min) / static_cast<double>(cells);
}

VGrid VGrid::with_spacing(double v_min, double v_max, double dv) {
  if (!(dv > 0.0)) throw ConfigError("velocity grid spacing must be > 0");
  const double r = (v_max - v_min) / dv;
  const double n = std::round(r);
  if (std::abs(r - n) > 1e-9 * std::max(1.0, r))
    throw ConfigError("grid spacing must divide the velocity interval");
  return VGrid(v_min, v_max, static_cast<std::size_t>(n));
}

double bernoulli_fn(double x) {
  if (std::abs(x) < 1e-10) return 1.0 - 0.5 * x;
  return x / std::expm1(x);
}

double chang_cooper_weight(double lambda) {
  // Series near the removable singularity; the next term is l^5/30240.
  if (std::abs(lambda) < 1e-3) return 0.5 - lambda / 12.0 + lambda * lambda * lambda / 720.0;
  return 1.0 / lambda - 1.0 / std::expm1(lambda);
}

FpOperator::FpOperator(const ModelSpec& model, std::size_t node, const VGrid& grid)
    : model_(&model), node_(node), grid_(grid) {
  if (node >= model.nodes.size()) throw ShapeError("FP operator: node index out of range");
  const std::size_t n = grid.size();
  const auto& np = model.nodes[node];
  dc_.resize(n);
  df_.resize(n - 1);
  for (std::size_t i = 0; i < n; ++i) dc_[i] = model.fp_diffusion_weight(grid.center(i));
  for (std::size_t i = 0; i + 1 < n; ++i) df_[i] = model.fp_diffusion_weight(grid.face(i + 1));

  if (model.kind == ModelKind::wealth) {
    m_delta_ = background_moment(model.w_a, model.w_b, np.exponent);
    m_one_delta_ = background_moment(model.w_a, model.w_b, 1.0 + np.exponent);
    return;
  }
  kc_.resize(n * n);
  kf_.resize((n - 1) * n);
  af_.resize((n - 1) * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) kc_[i * n + j] = model.kernel(grid.center(i), grid.center(j), np);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double v = grid.face(i + 1);
    for (std::size_t j = 0; j < n; ++j) {
      kf_[i * n + j] = model.kernel(v, grid.center(j), np);
      af_[i * n + j] = model.fp_drift_integrand(v, grid.center(j), np);
    }
  }
}

FpCoefficients FpOperator::coefficients(std::span<const double> f) const {
  const std::size_t n = grid_.size();
  if (f.size() != n) throw ShapeError("FP coefficients: density length must match the grid");
  const double dv = grid_.dv();
  const double half_s2 = 0.5 * model_->sigma2;
  FpCoefficients c;
  c.drift.resize(n - 1);
  c.diffusion.resize(n - 1);

  std::vector<double> kcell(n);
  if (model_->kind == ModelKind::wealth) {
    const double delta = model_->nodes[node_].exponent;
    const double kap = model_->kappa;
    auto k_of = [&](double v) { return kap * std::pow(v, delta) * m_delta_; };
    for (std::size_t i = 0; i < n; ++i) kcell[i] = k_of(grid_.center(i));
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double v = grid_.face(i + 1);
      const double drift = kap * model_->lambda * std::pow(v, delta) * (v * m_delta_ - m_one_delta_);
      const double dk = (dc_[i + 1] * kcell[i + 1] - dc_[i] * kcell[i]) / dv;
      c.drift[i] = drift + half_s2 * dk;
      c.diffusion[i] = half_s2 * df_[i] * k_of(v);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      const double* row = kc_.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) s += row[j] * f[j];
      kcell[i] = dv * s;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
      double kf = 0.0, af = 0.0;
      const double* kr = kf_.data() + i * n;
      const double* ar = af_.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        kf += kr[j] * f[j];
        af += ar[j] * f[j];
      }
      const double dk = (dc_[i + 1] * kcell[i + 1] - dc_[i] * kcell[i]) / dv;
      c.drift[i] = dv * af + half_s2 * dk;
      c.diffusion[i] = half_s2 * df_[i] * dv * kf;
    }
  }
  for (auto& d : c.diffusion) {
    if (d < 0.0) {
      d = 0.0;
      ++c.diffusion_clamped;
    }
  }
  return c;
}

FpCoefficients fp_coefficients(std::span<const double> f, const ModelSpec& model, std::size_t node,
                               const VGrid& grid) {
  return FpOperator(model, node, grid).coefficients(f);
}

void fp_step_node(std::vector<double>& f, const FpCoefficients& c, double dv, double dt) {
  const std::size_t n = f.size();
  if (c.drift.size() + 1 != n || c.diffusion.size() + 1 != n) throw ShapeError("FP step: coefficient size mismatch");
  // Face flux F = a f_{i+1} - b f_i.
  std::vector<double> a(n - 1), b(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double bt = c.drift[i];
    const double d = c.diffusion[i];
    if (d <= 1e-300 || std::abs(dv * bt / d) > 700.0) {
      a[i] = std::max(bt, 0.0);
      b[i] = std::max(-bt, 0.0);
    } else {
      const double lam = dv * bt / d;
      a[i] = d / dv * bernoulli_fn(-lam);
      b[i] = d / dv * bernoulli_fn(lam);
    }
  }
  const double r = dt / dv;
  std::vector<double> lo(n, 0.0), di(n, 1.0), up(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 < n) {
      di[i] += r * b[i];
      up[i] = -r * a[i];
    }
    if (i > 0) {
      di[i] += r * a[i - 1];
      lo[i] = -r * b[i - 1];
    }
  }
  // Thomas algorithm; the matrix is an M-matrix with unit column sums.
  std::vector<double> cp(n), dp(n);
  cp[0] = up[0] / di[0];
  dp[0] = f[0] / di[0];
  for (std::size_t i = 1; i < n; ++i) {
    const double m = di[i] - lo[i] * cp[i - 1];
    if (!(std::abs(m) > 0.0)) throw NumericalError("FP step: singular tridiagonal pivot at cell " + std::to_string(i));
    cp[i] = up[i] / m;
    dp[i] = (f[i] - lo[i] * dp[i - 1]) / m;
  }
  f[n - 1] = dp[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) f[i] = dp[i] - cp[i] * f[i + 1];
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(f[i])) throw NumericalError("FP step: non-finite density at cell " + std::to_string(i));
    if (f[i] < 0.0) {
      if (f[i] < -1e-13) throw NumericalError("FP step: negative density " + std::to_string(f[i]) + " at cell " + std::to_string(i));
      f[i] = 0.0;
    }
  }
}

void fp_step(FpState& state, const ModelSpec& model, const VGrid& grid, double dt) {
  if (!(dt > 0.0) || dt > 0.5 * grid.dv() * (1.0 + 1e-12))
    throw StepSizeError("FP step needs 0 < dt <= dv/2 (dt=" + std::to_string(dt) + ", dv=" + std::to_string(grid.dv()) + ")");
  if (state.f.size() != model.nodes.size()) throw ShapeError("FP state: one density per node required");
  for (std::size_t q = 0; q < state.f.size(); ++q) {
    const auto c = fp_coefficients(state.f[q], model, q, grid);
    fp_step_node(state.f[q], c, grid.dv(), dt);
  }
  state.t += dt;
}

std::vector<double> cell_averages(const VGrid& grid, const std::function<double(double)>& cdf) {
  const std::size_t n = grid.size();
  std::vector<double> f(n);
  double mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = std::max(0.0, cdf(grid.face(i + 1)) - cdf(grid.face(i))) / grid.dv();
    mass += f[i] * grid.dv();
  }
  if (!(mass > 0.0)) throw ConfigError("initial density has no mass on the grid");
  for (auto& x : f) x /= mass;
  return f;
}

std::vector<double> uniform_cells(const VGrid& grid, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("uniform density needs lo < hi");
  return cell_averages(grid, [lo, hi](double v) { return std::clamp((v - lo) / (hi - lo), 0.0, 1.0); });
}

double fp_mass(std::span<const double> f, const VGrid& grid) { return fp_moment(f, grid, 0); }

double fp_moment(std::span<const double> f, const VGrid& grid, int order) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += std::pow(grid.center(i), order) * f[i];
  return s * grid.dv();
}

FpSolver::FpSolver(const ModelSpec& model, const GpcBasis& basis, VGrid grid, std::vector<double> f0, double dt)
    : model_(model), grid_(grid), dt_(dt) {
  if (model.nodes.size() != basis.num_nodes()) throw ConfigError("FP solver: model built on another basis");
  if (f0.size() != grid.size()) throw ShapeError("FP solver: initial density must match the grid");
  if (!(dt > 0.0) || dt > 0.5 * grid.dv() * (1.0 + 1e-12))
    throw StepSizeError("FP solver needs 0 < dt <= dv/2");
  ops_.reserve(basis.num_nodes());
  for (std::size_t q = 0; q < basis.num_nodes(); ++q) ops_.emplace_back(model, q, grid_);
  state_.f.assign(basis.num_nodes(), f0);
}

void FpSolver::advance_to(double t) {
  if (t < state_.t - 1e-12) throw StateError("FP solver cannot move backwards in time");
  const std::size_t nodes = state_.f.size();
  while (state_.t < t - 1e-12) {
    const double h = std::min(dt_, t - state_.t);
    std::size_t clamped = 0;
    std::exception_ptr err;
#pragma omp parallel for schedule(static) reduction(+ : clamped)
    for (std::int64_t q = 0; q < static_cast<std::int64_t>(nodes); ++q) {
      try {
        const auto c = ops_[q].coefficients(state_.f[q]);
        clamped += c.diffusion_clamped;
        fp_step_node(state_.f[q], c, grid_.dv(), h);
      } catch (...) {
#pragma omp critical(dsmcsg_fp_error)
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
    clamped_ += clamped;
    state_.t += h;
  }
  state_.t = std::max(state_.t, t);
}

void FpSolver::moments(std::span<double> v, std::span<double> e) const {
  if (v.size() != state_.f.size() || e.size() != state_.f.size()) throw ShapeError("FP moments: one slot per node");
  for (std::size_t q = 0; q < state_.f.size(); ++q) {
    v[q] = fp_moment(state_.f[q], grid_, 1);
    e[q] = fp_moment(state_.f[q], grid_, 2);
  }
}

void FpSolver::moments_at(double t, std::span<double> v, std::span<double> e) {
  advance_to(t);
  moments(v, e);
}

FpTrajectory fp_solve(const ModelSpec& model, const VGrid& grid, const GpcBasis& basis,
                      const std::vector<double>& f0, double t_final, double dt, double output_every) {
  FpSolver solver(model, basis, grid, f0, dt);
  FpTrajectory tr;
  const std::size_t nq = basis.num_nodes();
  auto record = [&] {
    std::vector<double> v(nq), e(nq);
    solver.moments(v, e);
    tr.times.push_back(solver.state().t);
    tr.mean.push_back(std::move(v));
    tr.second.push_back(std::move(e));
    tr.norms.push_back(weighted_norms(solver.state(), grid, basis));
  };
  record();
  if (output_every <= 0.0) output_every = t_final;
  const auto outputs = static_cast<std::size_t>(std::ceil(t_final / output_every - 1e-9));
  for (std::size_t k = 1; k <= outputs; ++k) {
    solver.advance_to(std::min(t_final, static_cast<double>(k) * output_every));
    record();
  }
  tr.final_state = solver.state();
  tr.diffusion_clamped = solver.diffusion_clamped();
  return tr;
}

WeightedNorms weighted_norms(const FpState& state, const VGrid& grid, const GpcBasis& basis) {
  if (state.f.size() != basis.num_nodes()) throw ShapeError("weighted norms: one density per node required");
  WeightedNorms n;
  const double dv = grid.dv();
  for (std::size_t q = 0; q < state.f.size(); ++q) {
    const auto& f = state.f[q];
    double s = 0.0, d = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * f[i];
    for (std::size_t i = 0; i + 1 < f.size(); ++i) {
      const double g = (f[i + 1] - f[i]) / dv;
      d += g * g;
    }
    n.f += basis.weight(q) * s * dv;
    n.df += basis.weight(q) * d * dv;
  }
  n.f = std::sqrt(n.f);
  n.df = std::sqrt(n.df);
  return n;
}

double FpTrajectory::norm_growth_rate() const {
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0, k = 0.0;
  for (std::size_t i = 0; i < times.size() && i < norms.size(); ++i) {
    if (!(norms[i].df > 0.0)) continue;
    const double y = std::log(norms[i].df);
    st += times[i];
    sy += y;
    stt += times[i] * times[i];
    sty += times[i] * y;
    k += 1.0;
  }
  const double den = k * stt - st * st;
  return k >= 2.0 && den > 0.0 ? (k * sty - st * sy) / den : 0.0;
}

double equilibrium_gambling(double v, double delta) {
  if (!(delta >= 0.0 && delta < 1.0)) throw DomainError("gambling equilibrium needs 0 <= delta < 1");
  if (v < 0.0) return 0.0;
  const double s = 1.0 - delta;
  if (v == 0.0) return delta > 0.0 ? std::numeric_limits<double>::infinity() : s;
  return std::exp(s * std::log(s) - std::lgamma(s) - delta * std::log(v) - s * v);
}

double equilibrium_gambling_cell(double a, double b, double delta) {
  const double s = 1.0 - delta;
  auto cdf = [s](double v) { return v <= 0.0 ? 0.0 : boost::math::gamma_p(s, s * v); };
  return (cdf(b) - cdf(a)) / (b - a);
}

WealthEquilibrium wealth_equilibrium_params(const WealthParams& p, double delta) {
  const double mu = 2.0 * p.lambda / p.sigma2;
  const double m = background_moment(p, 1.0 + delta) / background_moment(p, delta);
  return {1.0 + mu + delta, mu * m};
}

double equilibrium_wealth(double v, const WealthParams& p, double delta) {
  if (v <= 0.0) return 0.0;
  const auto eq = wealth_equilibrium_params(p, delta);
  return std::exp(eq.shape * std::log(eq.scale) - std::lgamma(eq.shape) - eq.scale / v -
                  (eq.shape + 1.0) * std::log(v));
}

double equilibrium_wealth_cell(double a, double b, const WealthParams& p, double delta) {
  const auto eq = wealth_equilibrium_params(p, delta);
  auto cdf = [&](double v) { return v <= 0.0 ? 0.0 : boost::math::gamma_q(eq.shape, eq.scale / v); };
  return (cdf(b) - cdf(a)) / (b - a);
}

std::vector<double> equilibrium_cells_gambling(const VGrid& grid, double delta) {
  std::vector<double> f(grid.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = equilibrium_gambling_cell(grid.face(i), grid.face(i + 1), delta);
  return f;
}

std::vector<double> equilibrium_cells_wealth(const VGrid& grid, const WealthParams& p, double delta) {
  std::vector<double> f(grid.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = equilibrium_wealth_cell(grid.face(i), grid.face(i + 1), p, delta);
  return f;
}

}  // namespace dsmcsg
