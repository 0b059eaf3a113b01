#include "dsmcsg/dsmc.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <exception>
#include <limits>
#include <string>

#include "dsmcsg/error.hpp"
#include "dsmcsg/rng.hpp"

namespace dsmcsg {

namespace {

constexpr double kClampTol = 1e-12;

// Runs body(i) for i in [0, n) across OpenMP threads and rethrows the
// first exception on the calling thread.
template <class Init, class Body>
void parallel_for(std::size_t n, Init&& init, Body&& body) {
  std::exception_ptr err;
  std::atomic<bool> failed{false};
#pragma omp parallel
  {
    auto local = init();
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
      if (failed.load(std::memory_order_relaxed)) continue;
      try {
        body(local, static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical(dsmcsg_parallel_error)
        if (!err) err = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
      }
    }
    local.finish();
  }
  if (err) std::rethrow_exception(err);
}

struct EventWork {
  TransformScratch scratch;
  std::vector<double> vi, wj, gv, gw, dc;
};

// Accepted-weighted increments at every node. Returns false when the
// acceptance factor vanishes at all nodes.
bool node_increments(const ModelSpec& model, std::span<const double> vi, std::span<const double> wj,
                     bool background, const PairDraws& d, double sigma, AcceptanceMode mode,
                     double beta, std::vector<double>& gv, std::vector<double>& gw) {
  const std::size_t nq = vi.size();
  gv.assign(nq, 0.0);
  gw.assign(nq, 0.0);
  bool any = false;
  const double threshold = sigma * d.xi;
  if (mode == AcceptanceMode::indicator && model.kind != ModelKind::traffic) {
    // kappa (v w)^delta <= kappa max(1, max_q v_q w_q)^delta_max: one pow
    // rejects the pair at every node when the threshold exceeds it.
    double prod = 1.0, dmax = 0.0;
    for (std::size_t q = 0; q < nq; ++q) {
      prod = std::max(prod, vi[q] * (background ? d.extra : wj[q]));
      dmax = std::max(dmax, model.nodes[q].exponent);
    }
    if (threshold >= model.kappa * std::pow(prod, dmax) * (1.0 + 1e-12)) return false;
  }
  for (std::size_t q = 0; q < nq; ++q) {
    const auto& np = model.nodes[q];
    const double v = vi[q];
    const double w = background ? d.extra : wj[q];
    const double b = model.kernel(v, w, np);
    double a;
    if (mode == AcceptanceMode::indicator) {
      a = threshold < b ? 1.0 : 0.0;
    } else {
      a = 0.5 * (1.0 + std::tanh(-beta * (threshold - b)));
    }
    if (a == 0.0) continue;
    any = true;
    double dv, dw;
    model.increment(v, w, d, np, dv, dw);
    gv[q] = a * dv;
    gw[q] = a * dw;
    if (!std::isfinite(gv[q]) || !std::isfinite(gw[q]))
      throw NumericalError("collision produced a non-finite increment at node " + std::to_string(q) +
                           " (v=" + std::to_string(v) + ", w=" + std::to_string(w) + ")");
  }
  return any;
}

}  // namespace

void CollisionConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be > 0");
  if (!(t_final >= 0.0) || !std::isfinite(t_final)) throw ConfigError("T must be >= 0");
  if (mode == AcceptanceMode::sigmoid && !(beta > 0.0)) throw ConfigError("beta must be > 0 in sigmoid mode");
  (void)outer_steps();
}

std::size_t CollisionConfig::outer_steps() const {
  const double r = t_final / dt;
  const double n = std::round(r);
  if (std::abs(r - n) > 1e-9 * std::max(1.0, r))
    throw ConfigError("T must be an integer multiple of dt (T=" + std::to_string(t_final) +
                      ", dt=" + std::to_string(dt) + ")");
  return static_cast<std::size_t>(n);
}

InitialDensity InitialDensity::uniform(double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("initial uniform density needs lo < hi");
  return {Kind::uniform, lo, hi};
}

InitialDensity InitialDensity::point_mass(double v0) { return {Kind::point_mass, v0, v0}; }

double InitialDensity::sample(double u) const {
  if (kind == Kind::point_mass) return lo;
  return lo + (hi - lo) * u;
}

double InitialDensity::mean() const { return 0.5 * (lo + hi); }

Ensemble ensemble_from_states(std::span<const double> states, const GpcBasis& basis) {
  if (states.empty()) throw ConfigError("ensemble needs N > 0 particles");
  Ensemble e;
  e.n = states.size();
  e.k = basis.size();
  e.coeffs.assign(e.n * e.k, 0.0);
  for (std::size_t i = 0; i < e.n; ++i) e.coeffs[i * e.k] = states[i];
  return e;
}

Ensemble init_ensemble(const InitialDensity& f0, std::size_t n, const GpcBasis& basis, std::uint64_t seed) {
  if (n == 0) throw ConfigError("ensemble needs N > 0 particles");
  if (n >= kBackgroundPartner) throw ConfigError("N too large for 32-bit particle indices");
  std::vector<double> states(n);
  for (std::size_t i = 0; i < n; ++i) states[i] = f0.sample(CounterRng(seed, kStepInit, 0, i).uniform01());
  return ensemble_from_states(states, basis);
}

std::uint64_t sround(double x, double u) {
  if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("sround needs a finite x >= 0");
  const double fl = std::floor(x);
  return static_cast<std::uint64_t>(fl) + (u < x - fl ? 1u : 0u);
}

double acceptance_factor(AcceptanceMode mode, double sigma, double xi, double b, double beta) {
  if (mode == AcceptanceMode::indicator) return sigma * xi < b ? 1.0 : 0.0;
  return 0.5 * (1.0 + std::tanh(-beta * (sigma * xi - b)));
}

CollisionMatrices collision_matrices(std::span<const double> v_hat, std::span<const double> w_hat,
                                     const PairDraws& draws, double sigma, const GpcBasis& basis,
                                     const ModelSpec& model, AcceptanceMode mode, double beta) {
  const bool background = !model.pairwise();
  if (v_hat.size() != basis.size() || (!background && w_hat.size() != basis.size()))
    throw ShapeError("collision matrices: coefficient length must equal K");
  if (model.nodes.size() != basis.num_nodes()) throw ShapeError("collision matrices: model built on another basis");
  TransformScratch scratch;
  std::vector<double> vi(basis.num_nodes()), wj(basis.num_nodes()), gv, gw;
  basis.to_nodes(v_hat, vi, scratch);
  if (!background) basis.to_nodes(w_hat, wj, scratch);
  CollisionMatrices m{std::vector<double>(basis.size(), 0.0), std::vector<double>(basis.size(), 0.0)};
  if (!node_increments(model, vi, wj, background, draws, sigma, mode, beta, gv, gw)) return m;
  basis.from_nodes(gv, m.v, scratch);
  basis.from_nodes(gw, m.w, scratch);
  return m;
}

std::vector<double> node_values(const Ensemble& e, const GpcBasis& basis) {
  if (e.k != basis.size()) throw ShapeError("ensemble and basis disagree on K");
  const std::size_t nq = basis.num_nodes();
  std::vector<double> out(e.n * nq);
  struct Local {
    TransformScratch s;
    void finish() {}
  };
  parallel_for(
      e.n, [] { return Local{}; },
      [&](Local& l, std::size_t i) { basis.to_nodes(e.row(i), {out.data() + i * nq, nq}, l.s); });
  return out;
}

void node_moments_from_values(std::span<const double> values, std::size_t n, std::size_t nodes,
                              std::vector<double>& mean, std::vector<double>& second) {
  if (values.size() != n * nodes) throw ShapeError("node moments: value count mismatch");
  mean.assign(nodes, 0.0);
  second.assign(nodes, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* v = values.data() + i * nodes;
    for (std::size_t q = 0; q < nodes; ++q) {
      mean[q] += v[q];
      second[q] += v[q] * v[q];
    }
  }
  for (std::size_t q = 0; q < nodes; ++q) {
    mean[q] /= static_cast<double>(n);
    second[q] /= static_cast<double>(n);
  }
}

void node_moments(const Ensemble& e, const GpcBasis& basis, std::vector<double>& mean,
                  std::vector<double>& second) {
  const auto vals = node_values(e, basis);
  node_moments_from_values(vals, e.n, basis.num_nodes(), mean, second);
}

RescaleReport rescale_moments(Ensemble& e, std::span<const double> v_fp, std::span<const double> e_fp,
                              const GpcBasis& basis, RescaleForm form, const ModelSpec& model) {
  const std::size_t nq = basis.num_nodes();
  if (v_fp.size() != nq || e_fp.size() != nq) throw ShapeError("rescale: one target per node required");
  RescaleReport rep;
  auto vals = node_values(e, basis);
  std::vector<double> vk, ek;
  node_moments_from_values(vals, e.n, nq, vk, ek);

  std::vector<double> scale(nq);
  auto compute_scale = [&] {
    std::size_t degenerate = 0;
    for (std::size_t q = 0; q < nq; ++q) {
      const double var_k = ek[q] - vk[q] * vk[q];
      if (!(var_k > 1e-14 * std::max(1.0, ek[q]))) {
        ++degenerate;
        continue;
      }
      if (form == RescaleForm::variance_matching) {
        scale[q] = std::sqrt(std::max(0.0, e_fp[q] - v_fp[q] * v_fp[q]) / var_k);
      } else {
        scale[q] = std::sqrt(std::max(0.0, e_fp[q]) / ek[q]);
      }
    }
    return degenerate;
  };
  rep.degenerate_nodes = compute_scale();
  if (rep.degenerate_nodes > 0) return rep;

  // The affine map can leave the state space (a stretched left tail of
  // the wealth distribution goes negative). Clamp and match the moments
  // again; the excursions shrink geometrically, so a few passes leave
  // only roundoff-sized violations.
  const double lo = model.v_lo;
  const double hi = model.bounded() ? model.v_hi : std::numeric_limits<double>::infinity();
  constexpr int kMaxPasses = 60;
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    std::size_t outside = 0;
    for (std::size_t i = 0; i < e.n; ++i) {
      double* v = vals.data() + i * nq;
      for (std::size_t q = 0; q < nq; ++q) {
        double x = (v[q] - vk[q]) * scale[q] + v_fp[q];
        if (x < lo || x > hi) {
          if (x < lo - kClampTol || x > hi + kClampTol) ++outside;
          x = std::clamp(x, lo, hi);
        }
        v[q] = x;
      }
    }
    rep.clamped_values += outside;
    if (outside == 0) break;
    node_moments_from_values(vals, e.n, nq, vk, ek);
    if (compute_scale() > 0) throw NumericalError("rescale: ensemble collapsed while restoring admissibility");
    if (pass + 1 == kMaxPasses) throw NumericalError("rescale: moment targets incompatible with the state space");
  }
  struct Local {
    TransformScratch s;
    void finish() {}
  };
  parallel_for(
      e.n, [] { return Local{}; },
      [&](Local& l, std::size_t i) { basis.from_nodes({vals.data() + i * nq, nq}, e.row(i), l.s); });
  rep.applied = true;
  node_moments(e, basis, vk, ek);
  for (std::size_t q = 0; q < nq; ++q)
    rep.max_residual = std::max({rep.max_residual, std::abs(vk[q] - v_fp[q]), std::abs(ek[q] - e_fp[q])});
  return rep;
}

DsmcSolver::DsmcSolver(const ModelSpec& model, const GpcBasis& basis, CollisionConfig config)
    : model_(model), basis_(basis), cfg_(config) {
  cfg_.validate();
  if (model_.nodes.size() != basis_.num_nodes())
    throw ConfigError("model was built on a basis with a different node set");
  node_max_.assign(basis_.num_nodes(), 0.0);
}

void DsmcSolver::refresh_bounds(std::span<const double> values, std::size_t n) {
  const std::size_t nq = basis_.num_nodes();
  if (n == 0) throw StateError("kernel bound: empty ensemble");
  std::fill(node_max_.begin(), node_max_.end(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t q = 0; q < nq; ++q) node_max_[q] = std::max(node_max_[q], values[i * nq + q]);
  bounds_valid_ = true;
}

double DsmcSolver::current_sigma(const Ensemble& e) {
  if (e.n == 0) throw StateError("kernel bound: empty ensemble");
  if (model_.kind == ModelKind::traffic) return 1.0;
  if (!bounds_valid_) refresh_bounds(node_values(e, basis_), e.n);
  const auto per = kernel_upper_bound_per_node(model_, node_max_);
  const double s = *std::max_element(per.begin(), per.end());
  // A zero bound would stall the step; any positive bound is valid then.
  return s > 0.0 ? s : 1.0;
}

void DsmcSolver::check_row(std::span<double> row, std::span<double> vals, std::vector<double>& local_max,
                           TransformScratch& scratch, std::size_t& clamped) const {
  basis_.to_nodes(row, vals, scratch);
  const bool bounded = model_.bounded();
  bool fix = false;
  for (std::size_t q = 0; q < vals.size(); ++q) {
    double& v = vals[q];
    if (!std::isfinite(v)) throw NumericalError("non-finite particle state at node " + std::to_string(q));
    if (v < 0.0) {
      if (v < -kClampTol)
        throw NumericalError("state " + std::to_string(v) + " below the admissible domain at node " +
                             std::to_string(q));
      v = 0.0;
      fix = true;
    } else if (bounded && v > model_.v_hi) {
      if (v > model_.v_hi + kClampTol)
        throw NumericalError("speed " + std::to_string(v) + " above 1 at node " + std::to_string(q));
      v = model_.v_hi;
      fix = true;
    }
    local_max[q] = std::max(local_max[q], v);
  }
  if (fix) {
    basis_.from_nodes(vals, row, scratch);
    ++clamped;
  }
}

void DsmcSolver::apply_events(Ensemble& e, std::span<const CollisionEvent> events, double sigma) {
  const std::size_t nq = basis_.num_nodes();
  const std::size_t k = basis_.size();
  const bool background = !model_.pairwise();
  const bool moves_partner = model_.kind == ModelKind::gambling;
  std::vector<double>& shared_max = node_max_;
  std::size_t clamped_total = 0;

  struct Local {
    EventWork w;
    std::vector<double> max;
    std::size_t clamped = 0;
    std::vector<double>* shared;
    std::size_t* clamped_total;
    void finish() {
#pragma omp critical(dsmcsg_bounds)
      {
        for (std::size_t q = 0; q < max.size(); ++q) (*shared)[q] = std::max((*shared)[q], max[q]);
        *clamped_total += clamped;
      }
    }
  };

  parallel_for(
      events.size(),
      [&] {
        Local l;
        l.w.vi.resize(nq);
        l.w.wj.resize(nq);
        l.w.dc.resize(k);
        l.max.assign(nq, -std::numeric_limits<double>::infinity());
        l.shared = &shared_max;
        l.clamped_total = &clamped_total;
        return l;
      },
      [&](Local& l, std::size_t s) {
        const auto& ev = events[s];
        auto& w = l.w;
        auto ri = e.row(ev.i);
        basis_.to_nodes(ri, w.vi, w.scratch);
        if (!background) basis_.to_nodes(e.row(ev.j), w.wj, w.scratch);
        const PairDraws d{ev.xi, ev.eta, ev.extra};
        if (!node_increments(model_, w.vi, w.wj, background, d, sigma, cfg_.mode, cfg_.beta, w.gv, w.gw))
          return;
        basis_.from_nodes(w.gv, w.dc, w.scratch);
        for (std::size_t h = 0; h < k; ++h) ri[h] += w.dc[h];
        check_row(ri, w.vi, l.max, w.scratch, l.clamped);
        if (moves_partner) {
          auto rj = e.row(ev.j);
          basis_.from_nodes(w.gw, w.dc, w.scratch);
          for (std::size_t h = 0; h < k; ++h) rj[h] += w.dc[h];
          check_row(rj, w.wj, l.max, w.scratch, l.clamped);
        }
      });
  stats_.clamped += clamped_total;
}

StepRecord DsmcSolver::collision_step(Ensemble& e, double h, std::uint64_t step, std::uint32_t substep,
                                      double sigma) {
  if (e.n == 0) throw StateError("collision step on an empty ensemble");
  if (!(h >= 0.0)) throw ConfigError("collision step needs h >= 0");
  const double eps = model_.epsilon;
  if (sigma * h / eps > 1.0 + 1e-12)
    throw StepSizeError("kernel bound Sigma=" + std::to_string(sigma) + " with dt=" + std::to_string(h) +
                        " gives Sigma*dt/eps=" + std::to_string(sigma * h / eps) + " > 1");
  const bool pairwise = model_.pairwise();
  const double x = pairwise ? sigma * h * static_cast<double>(e.n) / (2.0 * eps)
                            : sigma * h * static_cast<double>(e.n) / eps;
  const std::uint64_t nc = sround(x, CounterRng(cfg_.seed, step, substep, kSlotRounding).uniform01());
  const std::uint64_t chosen = pairwise ? 2 * nc : nc;
  if (chosen > e.n)
    throw ConfigError("collision step needs " + std::to_string(chosen) + " particles but N=" + std::to_string(e.n));

  if (perm_.size() != e.n) {
    perm_.resize(e.n);
    for (std::size_t i = 0; i < e.n; ++i) perm_[i] = static_cast<std::uint32_t>(i);
  }
  CounterRng sel(cfg_.seed, step, substep, kSlotSelection);
  for (std::uint64_t s = 0; s < chosen; ++s) {
    const std::uint64_t j = s + sel.below(e.n - s);
    std::swap(perm_[s], perm_[j]);
  }

  StepRecord rec;
  rec.step = step;
  rec.substep = substep;
  rec.h = h;
  rec.sigma = sigma;
  rec.events.resize(nc);
  for (std::uint64_t s = 0; s < nc; ++s) {
    CounterRng r(cfg_.seed, step, substep, s);
    auto& ev = rec.events[s];
    ev.i = pairwise ? perm_[2 * s] : perm_[s];
    ev.j = pairwise ? perm_[2 * s + 1] : kBackgroundPartner;
    ev.xi = r.uniform01();
    ev.eta = model_.sample_eta(r.uniform01());
    ev.extra = model_.sample_extra(r.uniform01());
  }
  stats_.candidates += nc;
  ++stats_.substeps;
  stats_.max_sigma = std::max(stats_.max_sigma, sigma);
  apply_events(e, rec.events, sigma);
  return rec;
}

void DsmcSolver::advance(Ensemble& e, double dt, std::uint64_t step, EventLog* log) {
  const double eps = model_.epsilon;
  double remaining = dt;
  for (std::uint32_t sub = 0;; ++sub) {
    const double sigma = current_sigma(e);
    const double ratio = sigma * remaining / eps;
    double h = remaining;
    bool last = true;
    if (ratio > 1.0 + 1e-12) {
      if (cfg_.strict_step)
        throw StepSizeError("kernel bound Sigma=" + std::to_string(sigma) + " with dt=" + std::to_string(dt) +
                            " gives Sigma*dt/eps=" + std::to_string(ratio) + " > 1 at step " +
                            std::to_string(step));
      const double pieces = std::ceil(ratio * (1.0 - 1e-12));
      h = remaining / pieces;
      last = pieces <= 1.0;
    }
    auto rec = collision_step(e, h, step, sub, sigma);
    if (log) log->records.push_back(std::move(rec));
    if (last) break;
    remaining -= h;
  }
  e.t += dt;
}

void DsmcSolver::apply_record(Ensemble& e, const StepRecord& rec) {
  const bool pairwise = model_.pairwise();
  for (const auto& ev : rec.events) {
    if (ev.i >= e.n) throw ReplayError("event refers to particle " + std::to_string(ev.i) + " beyond N");
    if (pairwise && (ev.j >= e.n || ev.j == ev.i)) throw ReplayError("event has an invalid partner index");
    if (!pairwise && ev.j != kBackgroundPartner) throw ReplayError("background model event has a particle partner");
  }
  stats_.candidates += rec.events.size();
  ++stats_.substeps;
  stats_.max_sigma = std::max(stats_.max_sigma, rec.sigma);
  apply_events(e, rec.events, rec.sigma);
}

namespace {

void record_point(Trajectory& tr, const Ensemble& e, std::span<const double> vals, std::size_t nq) {
  std::vector<double> m, s;
  node_moments_from_values(vals, e.n, nq, m, s);
  tr.times.push_back(e.t);
  tr.mean.push_back(std::move(m));
  tr.second.push_back(std::move(s));
}

bool should_record(std::size_t step, std::size_t total, std::size_t every) {
  if (step + 1 == total) return true;
  return every > 0 && (step + 1) % every == 0;
}

void do_rescale(RunResult& res, Ensemble& e, const GpcBasis& basis, const ModelSpec& model, RescaleForm form,
                MomentTargets* targets) {
  const std::size_t nq = basis.num_nodes();
  std::vector<double> v(nq), s(nq);
  targets->moments_at(e.t, v, s);
  res.rescales.push_back(rescale_moments(e, v, s, basis, form, model));
}

EventLogHeader make_header(const ModelSpec& model, const GpcBasis& basis, const CollisionConfig& cfg,
                           std::size_t n) {
  EventLogHeader h;
  h.seed = cfg.seed;
  h.model = model.kind;
  h.n = n;
  h.dt = cfg.dt;
  h.epsilon = model.epsilon;
  h.outer_steps = cfg.outer_steps();
  h.dims = basis.param_spec().dimensions();
  h.orders = basis.orders();
  h.nq = basis.nq();
  h.mode = cfg.mode;
  h.beta = cfg.beta;
  h.rescale = cfg.rescale;
  h.rescale_form = static_cast<std::uint32_t>(cfg.rescale_form);
  return h;
}

}  // namespace

RunResult run_from(const ModelSpec& model, const GpcBasis& basis, const CollisionConfig& config, Ensemble initial,
                   MomentTargets* targets, const RunObserver& observer) {
  config.validate();
  if (config.rescale && targets == nullptr) throw ConfigError("rescaling requires a Fokker-Planck moment source");
  if (initial.k != basis.size()) throw ShapeError("initial ensemble does not match the basis");
  if (initial.n >= kBackgroundPartner) throw ConfigError("N too large for 32-bit particle indices");
  RunResult res;
  res.final_state = std::move(initial);
  Ensemble& e = res.final_state;
  const std::size_t nq = basis.num_nodes();
  const std::size_t steps = config.outer_steps();

  if (config.record_log) {
    res.log.header = make_header(model, basis, config, e.n);
    res.log.initial.resize(e.n);
    for (std::size_t i = 0; i < e.n; ++i) {
      const auto r = e.row(i);
      if (std::any_of(r.begin() + 1, r.end(), [](double c) { return c != 0.0; }))
        throw ConfigError("event logging needs a z-independent initial ensemble");
      res.log.initial[i] = r[0];
    }
  }

  DsmcSolver solver(model, basis, config);
  auto vals = node_values(e, basis);
  solver.refresh_bounds(vals, e.n);
  record_point(res.trajectory, e, vals, nq);
  if (observer) observer(e, e.t);

  const double t0 = e.t;
  for (std::size_t step = 0; step < steps; ++step) {
    solver.advance(e, config.dt, step, config.record_log ? &res.log : nullptr);
    e.t = t0 + static_cast<double>(step + 1) * config.dt;
    if (config.rescale) do_rescale(res, e, basis, model, config.rescale_form, targets);
    const bool rec = should_record(step, steps, config.record_every);
    if (model.kind != ModelKind::traffic || rec || config.rescale) {
      vals = node_values(e, basis);
      solver.refresh_bounds(vals, e.n);
    }
    if (rec) {
      record_point(res.trajectory, e, vals, nq);
      if (observer) observer(e, e.t);
    }
  }
  res.stats = solver.stats();
  return res;
}

RunResult run(const ModelSpec& model, const GpcBasis& basis, const CollisionConfig& config,
              const InitialDensity& f0, std::size_t n, MomentTargets* targets, const RunObserver& observer) {
  return run_from(model, basis, config, init_ensemble(f0, n, basis, config.seed), targets, observer);
}

RunResult replay(const EventLog& log, const GpcBasis& basis, const ModelSpec& model, MomentTargets* targets,
                 const RunObserver& observer, std::size_t record_every) {
  const auto& h = log.header;
  if (!log.complete()) throw ReplayError("event log is incomplete");
  if (h.model != model.kind) throw ReplayError("event log was recorded with the " + to_string(h.model) + " model");
  if (h.epsilon != model.epsilon) throw ReplayError("event log epsilon differs from the model's");
  if (h.dims != basis.param_spec().dimensions())
    throw ReplayError("replay basis must share the logged random parameter space");
  if (h.rescale && targets == nullptr) throw ReplayError("log was recorded with rescaling; moment targets required");

  CollisionConfig cfg;
  cfg.dt = h.dt;
  cfg.t_final = h.dt * static_cast<double>(h.outer_steps);
  cfg.mode = h.mode;
  cfg.beta = h.beta;
  cfg.seed = h.seed;
  cfg.rescale = h.rescale;
  cfg.record_log = false;
  cfg.record_every = record_every;

  RunResult res;
  res.log.header = h;
  res.final_state = ensemble_from_states(log.initial, basis);
  Ensemble& e = res.final_state;
  const std::size_t nq = basis.num_nodes();
  DsmcSolver solver(model, basis, cfg);
  auto vals = node_values(e, basis);
  record_point(res.trajectory, e, vals, nq);
  if (observer) observer(e, e.t);

  std::size_t r = 0;
  for (std::uint64_t step = 0; step < h.outer_steps; ++step) {
    while (r < log.records.size() && log.records[r].step == step) solver.apply_record(e, log.records[r++]);
    e.t = static_cast<double>(step + 1) * h.dt;
    if (cfg.rescale) do_rescale(res, e, basis, model, static_cast<RescaleForm>(h.rescale_form), targets);
    if (should_record(step, h.outer_steps, record_every)) {
      vals = node_values(e, basis);
      record_point(res.trajectory, e, vals, nq);
      if (observer) observer(e, e.t);
    }
  }
  res.stats = solver.stats();
  return res;
}

}  // namespace dsmcsg
