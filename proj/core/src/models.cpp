#include "dsmcsg/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dsmcsg/error.hpp"

namespace dsmcsg {

double AffineParam::at(std::span<const double> z) const {
  if (slope == 0.0) return offset;
  if (dim < 0 || static_cast<std::size_t>(dim) >= z.size())
    throw ConfigError("parameter refers to random dimension " + std::to_string(dim) +
                      " but only " + std::to_string(z.size()) + " exist");
  return offset + slope * z[dim];
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gambling: return "gambling";
    case ModelKind::wealth: return "wealth";
    case ModelKind::traffic: return "traffic";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "gambling") return ModelKind::gambling;
  if (name == "wealth") return ModelKind::wealth;
  if (name == "traffic") return ModelKind::traffic;
  throw ConfigError("unknown model '" + name + "' (expected gambling, wealth or traffic)");
}

double traffic_default_a(double rho) { return std::sqrt(2.0 * rho * (1.0 - rho)); }

double traffic_max_c(double a, double epsilon) {
  if (a <= 0.0) return 1.0;
  return std::sqrt(epsilon / (1.0 + epsilon)) / a;
}

NodeParams ModelSpec::node_params(std::span<const double> z) const {
  NodeParams np;
  np.exponent = exponent_param.at(z);
  if (kind == ModelKind::traffic) np.p = std::pow(1.0 - rho, mu_param.at(z));
  return np;
}

double ModelSpec::kernel(double v, double w, const NodeParams& np) const {
  if (kind == ModelKind::traffic) return std::pow(std::abs(v - w), np.exponent);
  const double prod = std::max(v, 0.0) * std::max(w, 0.0);
  return kappa * std::pow(prod, np.exponent);
}

double ModelSpec::interaction1(double v, double w, double extra, const NodeParams& np) const {
  switch (kind) {
    case ModelKind::gambling: return (1.0 - extra) * v - extra * w;
    case ModelKind::wealth: return lambda * (v - w);
    case ModelKind::traffic: {
      const double p = np.p;
      return -(p * (1.0 - v) + (1.0 - p) * (p * w - v));
    }
  }
  return 0.0;
}

double ModelSpec::interaction2(double v, double w, double extra, const NodeParams&) const {
  if (kind == ModelKind::gambling) return (extra - 1.0) * v + extra * w;
  return 0.0;
}

double ModelSpec::diffusion1(double v) const {
  switch (kind) {
    case ModelKind::gambling: return 0.0;
    case ModelKind::wealth: return v;
    case ModelKind::traffic: {
      const double s = (1.0 + epsilon) * v * (1.0 - v) - 0.25 * epsilon;
      return s > 0.0 ? a * std::sqrt(s) : 0.0;
    }
  }
  return 0.0;
}

double ModelSpec::diffusion2(double) const { return 0.0; }

void ModelSpec::increment(double v, double w, const PairDraws& d, const NodeParams& np, double& dv,
                          double& dw) const {
  dv = -epsilon * interaction1(v, w, d.extra, np) + diffusion1(v) * d.eta;
  dw = -epsilon * interaction2(v, w, d.extra, np) + diffusion2(w) * d.eta;
}

double ModelSpec::eta_min() const {
  switch (kind) {
    case ModelKind::gambling: return 0.0;
    case ModelKind::wealth: return -1.0 + epsilon * lambda;
    case ModelKind::traffic: return -c * (1.0 - epsilon);
  }
  return 0.0;
}

double ModelSpec::eta_max() const {
  switch (kind) {
    case ModelKind::gambling: return 0.0;
    case ModelKind::wealth: return std::numeric_limits<double>::infinity();
    case ModelKind::traffic: return c * (1.0 - epsilon);
  }
  return 0.0;
}

double ModelSpec::sample_eta(double u) const {
  if (sigma2 <= 0.0) return 0.0;
  const double half = std::sqrt(3.0 * epsilon * sigma2);
  return std::clamp(half * (2.0 * u - 1.0), eta_min(), eta_max());
}

double ModelSpec::sample_extra(double u) const {
  switch (kind) {
    case ModelKind::gambling: return u;
    case ModelKind::wealth: return w_a + (w_b - w_a) * u;
    case ModelKind::traffic: return 0.0;
  }
  return 0.0;
}

double ModelSpec::fp_drift_integrand(double v, double w, const NodeParams& np) const {
  if (kind == ModelKind::wealth) return kernel(v, w, np) * interaction1(v, w, 0.0, np);
  // Interactions are affine in omega, so the mean omega = 1/2 gives the average.
  const double extra = (kind == ModelKind::gambling) ? 0.5 : 0.0;
  return 0.5 * (kernel(v, w, np) * interaction1(v, w, extra, np) +
                kernel(w, v, np) * interaction2(w, v, extra, np));
}

double ModelSpec::fp_diffusion_weight(double v) const {
  const double d1 = diffusion1(v);
  if (kind == ModelKind::wealth) return d1 * d1;
  const double d2 = diffusion2(v);
  return 0.5 * (d1 * d1 + d2 * d2);
}

namespace {

std::vector<NodeParams> tabulate_nodes(const ModelSpec& m, const GpcBasis& basis) {
  std::vector<NodeParams> out(basis.num_nodes());
  for (std::size_t q = 0; q < out.size(); ++q) out[q] = m.node_params(basis.node(q));
  return out;
}

void check_dim(const AffineParam& p, const GpcBasis& basis, const char* name) {
  if (p.slope != 0.0 && (p.dim < 0 || static_cast<std::size_t>(p.dim) >= basis.dims()))
    throw ConfigError(std::string(name) + " depends on random dimension " + std::to_string(p.dim) +
                      " but the basis has " + std::to_string(basis.dims()));
}

}  // namespace

void validate(const GamblingParams& p, const GpcBasis& basis) {
  if (!(p.kappa > 0.0)) throw ConfigError("gambling.kappa must be > 0");
  check_dim(p.delta, basis, "gambling.delta");
  for (std::size_t q = 0; q < basis.num_nodes(); ++q) {
    const double d = p.delta.at(basis.node(q));
    if (!(d > 0.0 && d < 1.0))
      throw ConfigError("gambling.delta must lie in (0,1) at every quadrature node; node " +
                        std::to_string(q) + " gives " + std::to_string(d));
  }
}

void validate(const WealthParams& p, const GpcBasis& basis) {
  if (!(p.kappa > 0.0)) throw ConfigError("wealth.kappa must be > 0");
  if (!(p.lambda > 0.0 && p.lambda <= 1.0)) throw ConfigError("wealth.lambda must lie in (0,1]");
  if (!(p.sigma2 > 0.0)) throw ConfigError("wealth.sigma2 must be > 0");
  if (!(p.sigma2 + p.lambda * p.lambda < 2.0 * p.lambda))
    throw ConfigError("wealth: sigma2 + lambda^2 < 2 lambda is violated (sigma2=" +
                      std::to_string(p.sigma2) + ", lambda=" + std::to_string(p.lambda) + ")");
  if (!(p.epsilon > 0.0 && p.epsilon * p.lambda < 1.0))
    throw ConfigError("wealth.epsilon must be > 0 with epsilon*lambda < 1");
  if (!(p.w_a > 0.0 && p.w_a < p.w_b)) throw ConfigError("wealth background needs 0 < w_a < w_b");
  check_dim(p.delta, basis, "wealth.delta");
  for (std::size_t q = 0; q < basis.num_nodes(); ++q) {
    const double d = p.delta.at(basis.node(q));
    if (!(d > 0.0 && d <= 1.0))
      throw ConfigError("wealth.delta must lie in (0,1] at every quadrature node; node " +
                        std::to_string(q) + " gives " + std::to_string(d));
  }
}

void validate(const TrafficParams& p, const GpcBasis& basis) {
  if (!(p.rho >= 0.0 && p.rho <= 1.0)) throw ConfigError("traffic.rho must lie in [0,1]");
  if (!(p.epsilon > 0.0 && p.epsilon < 1.0)) throw ConfigError("traffic.epsilon must lie in (0,1)");
  if (!(p.sigma2 >= 0.0)) throw ConfigError("traffic.sigma2 must be >= 0");
  check_dim(p.mu, basis, "traffic.mu");
  check_dim(p.alpha, basis, "traffic.alpha");
  for (std::size_t q = 0; q < basis.num_nodes(); ++q) {
    const auto z = basis.node(q);
    if (!(p.mu.at(z) > 0.0)) throw ConfigError("traffic.mu must be > 0 at every quadrature node");
    if (!(p.alpha.at(z) >= 0.0)) throw ConfigError("traffic.alpha must be >= 0 at every quadrature node");
  }
  const double a = p.a < 0.0 ? traffic_default_a(p.rho) : p.a;
  const double c = p.c < 0.0 ? traffic_max_c(a, p.epsilon) : p.c;
  if (!(c > 0.0)) throw ConfigError("traffic.c must be > 0");
  if ((a * c) * (a * c) > p.epsilon / (1.0 + p.epsilon) * (1.0 + 1e-12))
    throw ConfigError("traffic: (a c)^2 <= eps/(1+eps) is required to keep speeds in [0,1] (a=" +
                      std::to_string(a) + ", c=" + std::to_string(c) + ")");
}

ModelSpec gambling_model(const GamblingParams& p, const GpcBasis& basis) {
  validate(p, basis);
  ModelSpec m;
  m.kind = ModelKind::gambling;
  m.epsilon = 1.0;
  m.sigma2 = 0.0;
  m.kappa = p.kappa;
  m.exponent_param = p.delta;
  m.nodes = tabulate_nodes(m, basis);
  return m;
}

ModelSpec wealth_model(const WealthParams& p, const GpcBasis& basis) {
  validate(p, basis);
  ModelSpec m;
  m.kind = ModelKind::wealth;
  m.epsilon = p.epsilon;
  m.sigma2 = p.sigma2;
  m.kappa = p.kappa;
  m.lambda = p.lambda;
  m.w_a = p.w_a;
  m.w_b = p.w_b;
  m.exponent_param = p.delta;
  m.nodes = tabulate_nodes(m, basis);
  return m;
}

ModelSpec traffic_model(const TrafficParams& p, const GpcBasis& basis) {
  validate(p, basis);
  ModelSpec m;
  m.kind = ModelKind::traffic;
  m.epsilon = p.epsilon;
  m.sigma2 = p.sigma2;
  m.v_lo = 0.0;
  m.v_hi = 1.0;
  m.rho = p.rho;
  m.a = p.a < 0.0 ? traffic_default_a(p.rho) : p.a;
  m.c = p.c < 0.0 ? traffic_max_c(m.a, p.epsilon) : p.c;
  m.exponent_param = p.alpha;
  m.mu_param = p.mu;
  m.nodes = tabulate_nodes(m, basis);
  return m;
}

double background_moment(double w_a, double w_b, double exponent) {
  if (exponent < 0.0) throw DomainError("background moment exponent must be >= 0");
  const double e1 = exponent + 1.0;
  return (std::pow(w_b, e1) - std::pow(w_a, e1)) / ((w_b - w_a) * e1);
}

double background_moment(const WealthParams& p, double exponent) {
  return background_moment(p.w_a, p.w_b, exponent);
}

std::vector<double> kernel_upper_bound_per_node(const ModelSpec& model, std::span<const double> max_state) {
  if (max_state.size() != model.nodes.size()) throw ShapeError("kernel bound: one max state per node");
  std::vector<double> out(max_state.size(), 1.0);
  if (model.kind == ModelKind::traffic) return out;
  for (std::size_t q = 0; q < out.size(); ++q) {
    const double vmax = std::max(max_state[q], 0.0);
    const double wmax = model.kind == ModelKind::wealth ? model.w_b : vmax;
    out[q] = model.kappa * std::pow(vmax * wmax, model.nodes[q].exponent);
  }
  return out;
}

double kernel_upper_bound(const ModelSpec& model, double max_state) {
  if (model.nodes.empty()) throw StateError("kernel bound: model has no quadrature nodes");
  if (!std::isfinite(max_state)) throw StateError("kernel bound: ensemble maximum is not finite");
  if (model.kind == ModelKind::traffic) return 1.0;
  std::vector<double> ms(model.nodes.size(), max_state);
  const auto per = kernel_upper_bound_per_node(model, ms);
  return *std::max_element(per.begin(), per.end());
}

}  // namespace dsmcsg
