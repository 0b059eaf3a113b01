#pragma once

// DSMC stochastic-Galerkin solver. Each particle carries the gPC
// coefficients of its state; a collision pair is updated through the
// quadrature projection of the (accepted) binary interaction.
//
// Time is measured in the model's own clock, in which a particle meets
// partners at rate B/eps. For eps = 1 (gambling) this is the kinetic time.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dsmcsg/event_log.hpp"
#include "dsmcsg/gpc.hpp"
#include "dsmcsg/models.hpp"

namespace dsmcsg {

struct Ensemble {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> coeffs;  // n x k, row-major
  double t = 0.0;

  std::span<double> row(std::size_t i) { return {coeffs.data() + i * k, k}; }
  std::span<const double> row(std::size_t i) const { return {coeffs.data() + i * k, k}; }
};

enum class RescaleForm : std::uint32_t {
  variance_matching = 0,  // (v - V_K) sqrt((E_FP - V_FP^2)/(E_K - V_K^2)) + V_FP
  literal = 1,            // (v - V_K) sqrt(E_FP / E_K) + V_FP
};

struct CollisionConfig {
  double dt = 0.1;
  AcceptanceMode mode = AcceptanceMode::indicator;
  double beta = 1.0;
  bool rescale = false;
  RescaleForm rescale_form = RescaleForm::variance_matching;
  double t_final = 10.0;
  std::uint64_t seed = 1;
  /// Abort instead of sub-stepping when Sigma dt / eps > 1.
  bool strict_step = false;
  bool record_log = true;
  /// Number of outer steps between recorded observables (0 records only the ends).
  std::size_t record_every = 1;

  void validate() const;
  std::size_t outer_steps() const;
};

/// z-independent initial density.
struct InitialDensity {
  enum class Kind { uniform, point_mass } kind = Kind::uniform;
  double lo = 0.0;
  double hi = 2.0;

  static InitialDensity uniform(double lo, double hi);
  static InitialDensity point_mass(double v0);
  double sample(double u) const;
  double mean() const;
};

/// Samples N states and returns rows (v_i, 0, ..., 0).
Ensemble init_ensemble(const InitialDensity& f0, std::size_t n, const GpcBasis& basis, std::uint64_t seed);
/// Builds an ensemble from given deterministic states.
Ensemble ensemble_from_states(std::span<const double> states, const GpcBasis& basis);

/// Stochastic rounding: floor(x) + 1 with probability x - floor(x).
std::uint64_t sround(double x, double u);

double acceptance_factor(AcceptanceMode mode, double sigma, double xi, double b, double beta);

struct CollisionMatrices {
  std::vector<double> v;
  std::vector<double> w;
};

/// Projections of one accepted-weighted interaction. For a background
/// partner (wealth), w_hat is ignored and the partner state is draws.extra.
CollisionMatrices collision_matrices(std::span<const double> v_hat, std::span<const double> w_hat,
                                     const PairDraws& draws, double sigma, const GpcBasis& basis,
                                     const ModelSpec& model, AcceptanceMode mode, double beta);

/// Node values of every particle: n x num_nodes, row-major.
std::vector<double> node_values(const Ensemble& e, const GpcBasis& basis);

/// Per-node ensemble mean and second moment.
void node_moments(const Ensemble& e, const GpcBasis& basis, std::vector<double>& mean,
                  std::vector<double>& second);
void node_moments_from_values(std::span<const double> values, std::size_t n, std::size_t nodes,
                              std::vector<double>& mean, std::vector<double>& second);

struct RescaleReport {
  bool applied = false;
  std::size_t degenerate_nodes = 0;
  std::size_t clamped_values = 0;
  /// Largest |moment - target| over nodes after re-projection.
  double max_residual = 0.0;
};

/// Affine moment matching at every node, then re-projection.
RescaleReport rescale_moments(Ensemble& e, std::span<const double> v_fp, std::span<const double> e_fp,
                              const GpcBasis& basis, RescaleForm form, const ModelSpec& model);

/// Source of per-node (V, E) targets at a given time.
class MomentTargets {
 public:
  virtual ~MomentTargets() = default;
  virtual void moments_at(double t, std::span<double> v, std::span<double> e) = 0;
};

struct StepStats {
  std::size_t candidates = 0;
  std::size_t substeps = 0;
  std::size_t clamped = 0;
  double max_sigma = 0.0;
};

class DsmcSolver {
 public:
  DsmcSolver(const ModelSpec& model, const GpcBasis& basis, CollisionConfig config);

  const ModelSpec& model() const noexcept { return model_; }
  const GpcBasis& basis() const noexcept { return basis_; }
  const CollisionConfig& config() const noexcept { return cfg_; }

  /// Kernel bound for the current ensemble.
  double current_sigma(const Ensemble& e);

  /// One strict collision step of length h: throws StepSizeError if
  /// Sigma h / eps > 1. Appends the step's record to log when given.
  StepRecord collision_step(Ensemble& e, double h, std::uint64_t step, std::uint32_t substep, double sigma);

  /// Advances one outer step of length dt, splitting into sub-steps when
  /// the kernel bound requires it (or throwing when strict_step is set).
  void advance(Ensemble& e, double dt, std::uint64_t step, EventLog* log);

  /// Applies one logged record (pairs, draws and Sigma taken from the log).
  void apply_record(Ensemble& e, const StepRecord& rec);

  const StepStats& stats() const noexcept { return stats_; }

  /// Tallies the node evaluation of every particle; called after each
  /// outer step to refresh the per-node maxima behind Sigma.
  void refresh_bounds(std::span<const double> values, std::size_t n);

 private:
  void apply_events(Ensemble& e, std::span<const CollisionEvent> events, double sigma);
  void check_row(std::span<double> row, std::span<double> vals, std::vector<double>& local_max,
                 TransformScratch& scratch, std::size_t& clamped) const;

  const ModelSpec& model_;
  const GpcBasis& basis_;
  CollisionConfig cfg_;
  std::vector<std::uint32_t> perm_;
  std::vector<double> node_max_;
  bool bounds_valid_ = false;
  StepStats stats_;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> mean;    // [time][node]
  std::vector<std::vector<double>> second;  // [time][node]
};

struct RunResult {
  Trajectory trajectory;
  Ensemble final_state;
  EventLog log;
  StepStats stats;
  std::vector<RescaleReport> rescales;
};

using RunObserver = std::function<void(const Ensemble&, double t)>;

RunResult run(const ModelSpec& model, const GpcBasis& basis, const CollisionConfig& config,
              const InitialDensity& f0, std::size_t n, MomentTargets* targets = nullptr,
              const RunObserver& observer = {});

/// Starts from a given ensemble instead of sampling one.
RunResult run_from(const ModelSpec& model, const GpcBasis& basis, const CollisionConfig& config,
                   Ensemble initial, MomentTargets* targets = nullptr, const RunObserver& observer = {});

/// Re-runs a logged collision sequence with another basis over the same
/// parameter space. The model must have been built on that basis.
RunResult replay(const EventLog& log, const GpcBasis& basis, const ModelSpec& model,
                 MomentTargets* targets = nullptr, const RunObserver& observer = {},
                 std::size_t record_every = 1);

}  // namespace dsmcsg
