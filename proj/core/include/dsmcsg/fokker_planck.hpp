#pragma once

// Surrogate Fokker-Planck model, solved independently at every
// collocation node:
//
//   d_t f = d_v [ Btilde[f] f + D[f] d_v f ],   zero flux at both ends,
//
// with a Chang-Cooper finite-volume discretisation that is semi-implicit
// in time (coefficients frozen at the old level, tridiagonal solve).

#include <functional>
#include <span>
#include <vector>

#include "dsmcsg/dsmc.hpp"
#include "dsmcsg/gpc.hpp"
#include "dsmcsg/models.hpp"

namespace dsmcsg {

/// Uniform cell-centred grid on [v_min, v_max].
class VGrid {
 public:
  VGrid(double v_min, double v_max, std::size_t cells);
  static VGrid with_spacing(double v_min, double v_max, double dv);

  std::size_t size() const noexcept { return n_; }
  double v_min() const noexcept { return lo_; }
  double v_max() const noexcept { return hi_; }
  double dv() const noexcept { return dv_; }
  double center(std::size_t i) const { return lo_ + (static_cast<double>(i) + 0.5) * dv_; }
  /// Face i sits at v_min + i dv, i = 0..n.
  double face(std::size_t i) const { return lo_ + static_cast<double>(i) * dv_; }

 private:
  double lo_;
  double hi_;
  double dv_;
  std::size_t n_;
};

struct FpState {
  std::vector<std::vector<double>> f;  // [node][cell]
  double t = 0.0;
};

/// Drift and diffusion at the n-1 interior faces.
struct FpCoefficients {
  std::vector<double> drift;
  std::vector<double> diffusion;
  /// Faces where roundoff made the diffusion negative (reset to 0).
  std::size_t diffusion_clamped = 0;
};

/// Precomputed nonlocal kernels for one node; pairwise models need dense
/// (face x cell) tables, the wealth model uses background moments.
class FpOperator {
 public:
  FpOperator(const ModelSpec& model, std::size_t node, const VGrid& grid);

  FpCoefficients coefficients(std::span<const double> f) const;

 private:
  const ModelSpec* model_;
  std::size_t node_;
  VGrid grid_;
  std::vector<double> kc_;  // B(v_i, w_j) at centres, n x n
  std::vector<double> kf_;  // B(v_f, w_j) at faces, (n-1) x n
  std::vector<double> af_;  // drift integrand at faces, (n-1) x n
  std::vector<double> dc_;  // diffusion weight at centres
  std::vector<double> df_;  // diffusion weight at faces
  // Wealth closed forms.
  double m_delta_ = 0.0;
  double m_one_delta_ = 0.0;
};

FpCoefficients fp_coefficients(std::span<const double> f, const ModelSpec& model, std::size_t node,
                               const VGrid& grid);

/// delta = 1/lambda - 1/(e^lambda - 1), with the series near zero.
double chang_cooper_weight(double lambda);
/// x / (e^x - 1), equal to 1 at 0.
double bernoulli_fn(double x);

/// One semi-implicit step for a single node density. Returns nothing;
/// throws NumericalError on a negative or non-finite result.
void fp_step_node(std::vector<double>& f, const FpCoefficients& c, double dv, double dt);

void fp_step(FpState& state, const ModelSpec& model, const VGrid& grid, double dt);

/// Cell averages of a z-independent density given by its CDF; the result
/// is renormalised to unit mass on the grid.
std::vector<double> cell_averages(const VGrid& grid, const std::function<double(double)>& cdf);
std::vector<double> uniform_cells(const VGrid& grid, double lo, double hi);

double fp_mass(std::span<const double> f, const VGrid& grid);
double fp_moment(std::span<const double> f, const VGrid& grid, int order);

class FpSolver : public MomentTargets {
 public:
  FpSolver(const ModelSpec& model, const GpcBasis& basis, VGrid grid, std::vector<double> f0, double dt);

  const FpState& state() const noexcept { return state_; }
  const VGrid& grid() const noexcept { return grid_; }
  double dt() const noexcept { return dt_; }

  /// Advances to time t (the last step is shortened to land on t).
  void advance_to(double t);
  void moments(std::span<double> v, std::span<double> e) const;
  void moments_at(double t, std::span<double> v, std::span<double> e) override;
  std::size_t diffusion_clamped() const noexcept { return clamped_; }

 private:
  const ModelSpec& model_;
  VGrid grid_;
  std::vector<FpOperator> ops_;
  FpState state_;
  double dt_;
  std::size_t clamped_ = 0;
};

/// ||f||_{L2_p} and ||d_v f||_{L2_p}: L2 in v, then quadrature in z.
struct WeightedNorms {
  double f = 0.0;
  double df = 0.0;
};
WeightedNorms weighted_norms(const FpState& state, const VGrid& grid, const GpcBasis& basis);

struct FpTrajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> second;
  std::vector<WeightedNorms> norms;
  FpState final_state;
  std::size_t diffusion_clamped = 0;

  /// Least-squares rate C of log ||d_v f|| ~ C t (growth diagnostic).
  double norm_growth_rate() const;
};

FpTrajectory fp_solve(const ModelSpec& model, const VGrid& grid, const GpcBasis& basis,
                      const std::vector<double>& f0, double t_final, double dt, double output_every);

/// Gamma equilibrium of the gambling model (shape and rate 1 - delta).
double equilibrium_gambling(double v, double delta);
double equilibrium_gambling_cell(double a, double b, double delta);

/// Inverse-gamma equilibrium of the wealth Fokker-Planck model.
struct WealthEquilibrium {
  double shape;  // 1 + mu + delta
  double scale;  // mu m
};
WealthEquilibrium wealth_equilibrium_params(const WealthParams& p, double delta);
double equilibrium_wealth(double v, const WealthParams& p, double delta);
double equilibrium_wealth_cell(double a, double b, const WealthParams& p, double delta);

std::vector<double> equilibrium_cells_gambling(const VGrid& grid, double delta);
std::vector<double> equilibrium_cells_wealth(const VGrid& grid, const WealthParams& p, double delta);

}  // namespace dsmcsg
