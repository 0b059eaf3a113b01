#pragma once

// The three kinetic models: pure gambling, wealth exchange with a
// background, and traffic flow. A binary interaction updates
//
//   v' = v - eps I1(v,w,z) + D1(v) eta,   w' = w - eps I2(v,w,z) + D2(w) eta
//
// and is accepted with a kernel-dependent probability B(v,w,z)/Sigma.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsmcsg/gpc.hpp"

namespace dsmcsg {

/// Parameter of the form offset + slope * z[dim].
struct AffineParam {
  double offset = 0.0;
  double slope = 0.0;
  int dim = 0;

  double at(std::span<const double> z) const;
  static AffineParam constant(double c) { return {c, 0.0, 0}; }
};

enum class ModelKind : std::uint32_t { gambling = 0, wealth = 1, traffic = 2 };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct GamblingParams {
  double kappa = 1.0;
  AffineParam delta{0.0, 0.5, 0};  // delta(z) = z/2
};

struct WealthParams {
  double kappa = 1.0;
  AffineParam delta{0.0, 1.0, 0};  // delta(z) = z
  double lambda = 0.5;
  double sigma2 = 0.5;
  double epsilon = 0.1;
  double w_a = 0.9;  // background U([w_a, w_b])
  double w_b = 1.1;
};

struct TrafficParams {
  double rho = 0.4;
  AffineParam mu{1.0, 2.0, 0};     // mu(z1) = 1 + 2 z1
  AffineParam alpha{0.0, 2.0, 1};  // alpha(z2) = 2 z2
  double epsilon = 0.1;
  double sigma2 = 0.5;
  /// Diffusion amplitude; negative selects sqrt(2 rho (1 - rho)).
  double a = -1.0;
  /// Noise support half-width factor; negative selects the largest
  /// admissible value sqrt(eps / (1 + eps)) / a.
  double c = -1.0;
};

double traffic_default_a(double rho);
/// Largest c with (a c)^2 <= eps / (1 + eps): keeps v' in [0,1].
double traffic_max_c(double a, double epsilon);

/// Per-node constants the interaction functions need.
struct NodeParams {
  double exponent = 0.0;  // delta(z) or alpha(z)
  double p = 0.0;         // traffic P(rho, z)
};

/// Randomness shared by every quadrature node of one collision pair.
struct PairDraws {
  double xi = 0.5;
  double eta = 0.0;
  double extra = 0.0;  // omega (gambling) or background w (wealth)
};

class ModelSpec {
 public:
  ModelKind kind = ModelKind::gambling;
  double epsilon = 1.0;
  double sigma2 = 0.0;  // eta has variance eps * sigma2
  double kappa = 1.0;
  double v_lo = 0.0;
  double v_hi = 0.0;  // 0 means unbounded above
  // Wealth background support.
  double w_a = 0.0;
  double w_b = 0.0;
  double lambda = 0.0;
  // Traffic.
  double rho = 0.0;
  double a = 0.0;
  double c = 0.0;
  /// Node constants, one per quadrature node of the basis the model was built on.
  std::vector<NodeParams> nodes;
  AffineParam exponent_param;
  AffineParam mu_param;

  bool pairwise() const noexcept { return kind != ModelKind::wealth; }
  bool bounded() const noexcept { return kind == ModelKind::traffic; }

  NodeParams node_params(std::span<const double> z) const;

  double kernel(double v, double w, const NodeParams& np) const;
  double interaction1(double v, double w, double extra, const NodeParams& np) const;
  double interaction2(double v, double w, double extra, const NodeParams& np) const;
  double diffusion1(double v) const;
  double diffusion2(double w) const;

  /// Unaccepted post-interaction displacement (v' - v, w' - w).
  void increment(double v, double w, const PairDraws& d, const NodeParams& np, double& dv,
                 double& dw) const;

  /// Maps two uniforms to eta: symmetric uniform with variance eps*sigma2,
  /// clipped to the admissible support.
  double sample_eta(double u) const;
  /// Maps a uniform to omega (gambling), a background draw (wealth) or 0.
  double sample_extra(double u) const;

  /// Lower/upper clip for eta.
  double eta_min() const;
  double eta_max() const;

  /// FP drift integrand such that Btilde(v) = int integrand(v,w) f(w) dw + ...
  /// Pairwise models average the two roles a particle can play in a pair.
  double fp_drift_integrand(double v, double w, const NodeParams& np) const;
  /// Weight d(v) of the diffusion, D[f] = (sigma2/2) d(v) int B f dw.
  double fp_diffusion_weight(double v) const;
};

ModelSpec gambling_model(const GamblingParams& p, const GpcBasis& basis);
ModelSpec wealth_model(const WealthParams& p, const GpcBasis& basis);
ModelSpec traffic_model(const TrafficParams& p, const GpcBasis& basis);

/// int v^e dE(v) for the uniform background on [w_a, w_b].
double background_moment(const WealthParams& p, double exponent);
double background_moment(double w_a, double w_b, double exponent);

/// Kernel bound Sigma given the largest state over particles and nodes.
double kernel_upper_bound(const ModelSpec& model, double max_state);
/// Per-node variant; the scalar bound is its maximum.
std::vector<double> kernel_upper_bound_per_node(const ModelSpec& model, std::span<const double> max_state);

/// Checks the model's parameter invariants at every quadrature node.
void validate(const GamblingParams& p, const GpcBasis& basis);
void validate(const WealthParams& p, const GpcBasis& basis);
void validate(const TrafficParams& p, const GpcBasis& basis);

}  // namespace dsmcsg
