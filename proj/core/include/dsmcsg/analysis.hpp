#pragma once

// Post-processing: histogram reconstruction, statistics over the random
// parameter, weighted L2 errors, convergence studies and the analytic
// mean-speed envelopes of the traffic model.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dsmcsg/dsmc.hpp"
#include "dsmcsg/event_log.hpp"
#include "dsmcsg/fokker_planck.hpp"
#include "dsmcsg/gpc.hpp"
#include "dsmcsg/models.hpp"

namespace dsmcsg {

struct DensityGrid {
  VGrid grid;
  std::vector<std::vector<double>> f;  // [node][cell]
  /// Largest number of node-evaluated states that fell outside the grid
  /// and were counted in an edge bin.
  std::size_t out_of_range = 0;
  std::size_t particles = 0;
};

/// Fails when more than this fraction of particles leaves the grid.
inline constexpr double kDefaultOutOfRangeLimit = 1e-3;

/// Histogram of the node values of every particle, normalised to unit mass.
/// A negative limit disables the out-of-range check.
DensityGrid reconstruct(const Ensemble& e, const GpcBasis& basis, const VGrid& grid,
                        double out_of_range_limit = kDefaultOutOfRangeLimit);
DensityGrid reconstruct_values(std::span<const double> values, std::size_t n, std::size_t nodes,
                               const VGrid& grid, double out_of_range_limit = kDefaultOutOfRangeLimit);

struct ZStats {
  std::vector<double> mean;
  std::vector<double> variance;
};

/// Quadrature expectation and variance in z of per-node vectors
/// ([node][x]), taken component-wise in x.
ZStats stats_over_z(const std::vector<std::vector<double>>& per_node, const GpcBasis& basis);

/// sqrt(sum_q w_q |a_q - b_q|^2).
double l2p_error(std::span<const double> a, std::span<const double> b, const GpcBasis& basis);
/// Max over output times of the per-time error ([time][node]).
double l2p_error_max(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                     const GpcBasis& basis);

/// Weighted L1 distance dv * sum |a - b| restricted to cells with centres in [lo, hi].
double l1_distance(std::span<const double> a, std::span<const double> b, const VGrid& grid, double lo, double hi);

/// Coefficient-space L2 distance between a nodal field on basis_a and one
/// on basis_b over the same parameter space (missing modes count as zero).
double l2_between_bases(std::span<const double> nodal_a, const GpcBasis& basis_a,
                        std::span<const double> nodal_b, const GpcBasis& basis_b);

using ModelFactory = std::function<ModelSpec(const GpcBasis&)>;
using TargetsFactory = std::function<std::unique_ptr<MomentTargets>(const ModelSpec&, const GpcBasis&)>;

struct SpectralRow {
  int order = 0;
  double error_second = 0.0;
  double error_mean = 0.0;
};

struct SpectralStudy {
  int reference_order = 0;
  std::vector<SpectralRow> rows;
};

/// Replays the log at every order in `orders` and at `reference_order`,
/// and reports the max-over-time L2 error of E(t,z) and V(t,z).
/// `targets` is required when the log was recorded with rescaling. A
/// given reference trajectory (at reference_order) skips that replay.
SpectralStudy spectral_study(const EventLog& log, const ModelFactory& make_model, const std::vector<int>& orders,
                             int reference_order, const TargetsFactory& targets = {},
                             std::size_t record_every = 1, const Trajectory* reference = nullptr);

struct McRow {
  std::size_t n = 0;
  double rms = 0.0;
};

struct McStudy {
  std::vector<McRow> rows;
  double slope = 0.0;
  double slope_stderr = 0.0;
};

/// RMS over `repetitions` seeds of observable(n, seed) - reference, and
/// the least-squares slope of log rms against log n.
McStudy mc_error_study(const std::function<double(std::size_t n, std::uint64_t seed)>& observable, double reference,
                       const std::vector<std::size_t>& sizes, std::size_t repetitions, std::uint64_t seed0 = 1);

/// Least-squares slope and its standard error.
void fit_slope(std::span<const double> x, std::span<const double> y, double& slope, double& stderr_out);

struct TrafficBoundConstants {
  double c1 = 0.0;
  double c2 = 0.0;
  double beta = 0.0;  // 3 - 3P - P^2, meaningful for alpha = 1
};

TrafficBoundConstants traffic_bound_constants(double p, double epsilon, int alpha_case);
/// Upper and lower envelope at time t (in units where the constants carry eps).
double traffic_v_plus(const TrafficBoundConstants& c, int alpha_case, double v0, double t);
double traffic_v_minus(const TrafficBoundConstants& c, int alpha_case, double v0, double t);

struct TrafficBounds {
  int alpha_case = 1;
  double v0 = 0.0;
  bool degenerate = false;
  std::vector<TrafficBoundConstants> constants;  // per node
  std::vector<double> times;
  std::vector<std::vector<double>> upper;  // [time][node]
  std::vector<std::vector<double>> lower;
};

TrafficBounds traffic_bounds(const ModelSpec& model, int alpha_case, double v0, std::span<const double> times);

struct BoundReport {
  std::size_t samples = 0;
  std::size_t violations = 0;
  double tolerance = 0.0;
  double fraction() const { return samples ? static_cast<double>(violations) / static_cast<double>(samples) : 0.0; }
  bool pass() const { return fraction() <= 0.01; }
};

/// Counts samples outside [V- - tol, V+ + tol] with tol = 5/sqrt(N).
BoundReport bound_check(const std::vector<std::vector<double>>& v, const TrafficBounds& bounds, std::size_t n);

}  // namespace dsmcsg
