#include "dsmcsg/gpc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "dsmcsg/error.hpp"

namespace dsmcsg {

RandomParamSpec::RandomParamSpec(std::vector<UniformDim> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw ConfigError("random parameter spec needs at least one dimension");
  for (std::size_t d = 0; d < dims_.size(); ++d) {
    const auto& u = dims_[d];
    if (!std::isfinite(u.lo) || !std::isfinite(u.hi) || !(u.lo < u.hi))
      throw ConfigError("dimension " + std::to_string(d) + ": support must be a finite interval [a,b] with a<b");
  }
}

RandomParamSpec RandomParamSpec::unit_cube(std::size_t dims) {
  return RandomParamSpec(std::vector<UniformDim>(dims, UniformDim{0.0, 1.0}));
}

bool RandomParamSpec::contains(std::span<const double> z) const {
  if (z.size() != dims_.size()) return false;
  for (std::size_t d = 0; d < z.size(); ++d)
    if (!(z[d] >= dims_[d].lo && z[d] <= dims_[d].hi)) return false;
  return true;
}

double RandomParamSpec::density(std::span<const double> z) const {
  if (!contains(z)) return 0.0;
  double p = 1.0;
  for (const auto& u : dims_) p /= (u.hi - u.lo);
  return p;
}

namespace {

// P_n(x) and P_n'(x) for |x| < 1.
std::pair<double, double> legendre_and_derivative(int n, double x) {
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= n; ++k) {
    const double pn = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pn;
  }
  const double pnm1 = (n == 1) ? 1.0 : p0;
  return {p1, n * (x * p1 - pnm1) / (x * x - 1.0)};
}

}  // namespace

GaussRule gauss_legendre(int n) {
  if (n < 1) throw ConfigError("Gauss-Legendre rule needs n >= 1");
  GaussRule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre_and_derivative(n, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = legendre_and_derivative(n, x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

double legendre(int n, double x) {
  if (n < 0) throw DomainError("Legendre degree must be >= 0");
  if (n == 0) return 1.0;
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= n; ++k) {
    const double pn = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pn;
  }
  return p1;
}

double orthonormal_legendre(int n, double x) { return std::sqrt(2.0 * n + 1.0) * legendre(n, x); }

TensorMap::TensorMap(std::vector<std::vector<double>> factors, std::vector<std::size_t> rows,
                     std::vector<std::size_t> cols)
    : factors_(std::move(factors)), rows_(std::move(rows)), cols_(std::move(cols)) {
  if (factors_.size() != rows_.size() || rows_.size() != cols_.size())
    throw ShapeError("tensor map: factor/shape count mismatch");
  in_size_ = 1;
  out_size_ = 1;
  for (std::size_t d = 0; d < factors_.size(); ++d) {
    if (factors_[d].size() != rows_[d] * cols_[d]) throw ShapeError("tensor map: factor size mismatch");
    in_size_ *= cols_[d];
    out_size_ *= rows_[d];
  }
}

void TensorMap::apply(std::span<const double> in, std::span<double> out,
                      TransformScratch& scratch) const {
  if (in.size() != in_size_ || out.size() != out_size_) throw ShapeError("tensor map: size mismatch");
  const std::size_t nd = factors_.size();
  if (nd == 1) {
    const auto& A = factors_[0];
    const std::size_t r = rows_[0], c = cols_[0];
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      const double* a = A.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) s += a[j] * in[j];
      out[i] = s;
    }
    return;
  }

  // Mode-d product: the current tensor has shape (outer, c_d, inner) and
  // becomes (outer, r_d, inner). Dimensions before d are already mapped.
  std::vector<std::size_t> shape(cols_.begin(), cols_.end());
  std::size_t cur_size = in_size_;
  scratch.a.assign(in.begin(), in.end());
  for (std::size_t d = 0; d < nd; ++d) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t e = 0; e < d; ++e) outer *= shape[e];
    for (std::size_t e = d + 1; e < nd; ++e) inner *= shape[e];
    const std::size_t r = rows_[d], c = cols_[d];
    const std::size_t next_size = cur_size / c * r;
    scratch.b.assign(next_size, 0.0);
    const auto& A = factors_[d];
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = scratch.a.data() + o * c * inner;
      double* dst = scratch.b.data() + o * r * inner;
      for (std::size_t i = 0; i < r; ++i) {
        double* drow = dst + i * inner;
        for (std::size_t j = 0; j < c; ++j) {
          const double a = A[i * c + j];
          if (a == 0.0) continue;
          const double* srow = src + j * inner;
          for (std::size_t t = 0; t < inner; ++t) drow[t] += a * srow[t];
        }
      }
    }
    shape[d] = r;
    cur_size = next_size;
    std::swap(scratch.a, scratch.b);
  }
  std::copy(scratch.a.begin(), scratch.a.end(), out.begin());
}

GpcBasis::GpcBasis(RandomParamSpec spec, std::vector<int> orders, std::vector<int> nq)
    : spec_(std::move(spec)), orders_(std::move(orders)), nq_(std::move(nq)) {
  const std::size_t nd = spec_.dims();
  if (orders_.size() != nd) throw ConfigError("basis: one order per random dimension required");
  if (nq_.size() != nd) throw ConfigError("basis: one node count per random dimension required");
  size_ = 1;
  std::size_t nn = 1;
  for (std::size_t d = 0; d < nd; ++d) {
    if (orders_[d] < 0) throw ConfigError("basis: order must be >= 0 in dimension " + std::to_string(d));
    if (nq_[d] < orders_[d] + 1)
      throw ConfigError("basis: dimension " + std::to_string(d) + " needs nq >= order+1 (order " +
                        std::to_string(orders_[d]) + ", nq " + std::to_string(nq_[d]) + ")");
    size_ *= static_cast<std::size_t>(orders_[d] + 1);
    nn *= static_cast<std::size_t>(nq_[d]);
  }

  nodes1d_.resize(nd);
  weights1d_.resize(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    const auto rule = gauss_legendre(nq_[d]);
    const auto& u = spec_.dim(d);
    const double half = 0.5 * (u.hi - u.lo);
    nodes1d_[d].resize(nq_[d]);
    weights1d_[d].resize(nq_[d]);
    for (int i = 0; i < nq_[d]; ++i) {
      nodes1d_[d][i] = u.lo + half * (rule.nodes[i] + 1.0);
      weights1d_[d][i] = 0.5 * rule.weights[i];
    }
  }

  nodes_.resize(nn * nd);
  weights_.resize(nn);
  std::vector<int> idx(nd, 0);
  for (std::size_t q = 0; q < nn; ++q) {
    double w = 1.0;
    for (std::size_t d = 0; d < nd; ++d) {
      nodes_[q * nd + d] = nodes1d_[d][idx[d]];
      w *= weights1d_[d][idx[d]];
    }
    weights_[q] = w;
    for (std::size_t d = nd; d-- > 0;) {
      if (++idx[d] < nq_[d]) break;
      idx[d] = 0;
    }
  }

  std::vector<std::vector<double>> to_f(nd), from_f(nd);
  std::vector<std::size_t> kd(nd), qd(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    kd[d] = static_cast<std::size_t>(orders_[d] + 1);
    qd[d] = static_cast<std::size_t>(nq_[d]);
    to_f[d].resize(qd[d] * kd[d]);
    from_f[d].resize(kd[d] * qd[d]);
    for (std::size_t i = 0; i < qd[d]; ++i)
      for (std::size_t h = 0; h < kd[d]; ++h) {
        const double phi = phi_1d(d, static_cast<int>(h), nodes1d_[d][i]);
        to_f[d][i * kd[d] + h] = phi;
        from_f[d][h * qd[d] + i] = weights1d_[d][i] * phi;
      }
  }
  to_nodes_ = TensorMap(std::move(to_f), qd, kd);
  from_nodes_ = TensorMap(std::move(from_f), kd, qd);
}

std::span<const double> GpcBasis::node(std::size_t q) const {
  if (q >= num_nodes()) throw ShapeError("basis: node index out of range");
  return {nodes_.data() + q * dims(), dims()};
}

std::size_t GpcBasis::flat_index(std::span<const int> multi) const {
  if (multi.size() != dims()) throw ShapeError("basis: multi-index rank mismatch");
  std::size_t flat = 0;
  for (std::size_t d = 0; d < dims(); ++d) {
    if (multi[d] < 0 || multi[d] > orders_[d]) throw ShapeError("basis: multi-index out of range");
    flat = flat * static_cast<std::size_t>(orders_[d] + 1) + static_cast<std::size_t>(multi[d]);
  }
  return flat;
}

std::vector<int> GpcBasis::multi_index(std::size_t flat) const {
  if (flat >= size_) throw ShapeError("basis: flat index out of range");
  std::vector<int> multi(dims());
  for (std::size_t d = dims(); d-- > 0;) {
    const auto kd = static_cast<std::size_t>(orders_[d] + 1);
    multi[d] = static_cast<int>(flat % kd);
    flat /= kd;
  }
  return multi;
}

double GpcBasis::phi_1d(std::size_t d, int h, double z) const {
  const auto& u = spec_.dim(d);
  const double x = 2.0 * (z - u.lo) / (u.hi - u.lo) - 1.0;
  return orthonormal_legendre(h, x);
}

void GpcBasis::eval_into(std::span<const double> z, std::span<double> out) const {
  if (out.size() != size_) throw ShapeError("eval_basis: output length must equal K");
  if (!spec_.contains(z)) throw DomainError("eval_basis: point outside the support box");
  const std::size_t nd = dims();
  std::vector<std::vector<double>> tab(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    tab[d].resize(orders_[d] + 1);
    for (int h = 0; h <= orders_[d]; ++h) tab[d][h] = phi_1d(d, h, z[d]);
  }
  std::vector<int> idx(nd, 0);
  for (std::size_t k = 0; k < size_; ++k) {
    double v = 1.0;
    for (std::size_t d = 0; d < nd; ++d) v *= tab[d][idx[d]];
    out[k] = v;
    for (std::size_t d = nd; d-- > 0;) {
      if (++idx[d] <= orders_[d]) break;
      idx[d] = 0;
    }
  }
}

void GpcBasis::to_nodes(std::span<const double> coeffs, std::span<double> values,
                        TransformScratch& scratch) const {
  if (coeffs.size() != size_) throw ShapeError("to_nodes: coefficient length must equal K");
  if (values.size() != num_nodes()) throw ShapeError("to_nodes: one value per node required");
  to_nodes_.apply(coeffs, values, scratch);
}

void GpcBasis::from_nodes(std::span<const double> values, std::span<double> coeffs,
                          TransformScratch& scratch) const {
  if (values.size() != num_nodes()) throw ShapeError("project: one value per quadrature node required");
  if (coeffs.size() != size_) throw ShapeError("project: coefficient length must equal K");
  from_nodes_.apply(values, coeffs, scratch);
}

TensorMap GpcBasis::grid_evaluator(const std::vector<std::vector<double>>& points) const {
  const std::size_t nd = dims();
  if (points.size() != nd) throw ShapeError("grid evaluator: one point list per dimension");
  std::vector<std::vector<double>> f(nd);
  std::vector<std::size_t> rows(nd), cols(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    const auto& u = spec_.dim(d);
    rows[d] = points[d].size();
    cols[d] = static_cast<std::size_t>(orders_[d] + 1);
    f[d].resize(rows[d] * cols[d]);
    for (std::size_t i = 0; i < rows[d]; ++i) {
      const double z = points[d][i];
      if (!(z >= u.lo && z <= u.hi)) throw DomainError("grid evaluator: point outside support");
      for (std::size_t h = 0; h < cols[d]; ++h) f[d][i * cols[d] + h] = phi_1d(d, static_cast<int>(h), z);
    }
  }
  return TensorMap(std::move(f), std::move(rows), std::move(cols));
}

GpcBasis build_basis(const RandomParamSpec& spec, const std::vector<int>& orders,
                     const std::vector<int>& nq) {
  return GpcBasis(spec, orders, nq);
}

GpcBasis build_basis(const RandomParamSpec& spec, const std::vector<int>& orders) {
  std::vector<int> nq(orders.size());
  for (std::size_t d = 0; d < orders.size(); ++d) nq[d] = orders[d] + 1;
  return GpcBasis(spec, orders, nq);
}

std::vector<double> eval_basis(const GpcBasis& basis, std::span<const double> z) {
  std::vector<double> out(basis.size());
  basis.eval_into(z, out);
  return out;
}

double evaluate(std::span<const double> coeffs, const GpcBasis& basis, std::span<const double> z) {
  if (coeffs.size() != basis.size()) throw ShapeError("evaluate: coefficient length must equal K");
  const auto phi = eval_basis(basis, z);
  double s = 0.0;
  for (std::size_t k = 0; k < phi.size(); ++k) s += coeffs[k] * phi[k];
  return s;
}

std::vector<double> project(std::span<const double> values_at_nodes, const GpcBasis& basis) {
  std::vector<double> c(basis.size());
  TransformScratch scratch;
  basis.from_nodes(values_at_nodes, c, scratch);
  return c;
}

double quad_expectation(std::span<const double> values_at_nodes, const GpcBasis& basis) {
  if (values_at_nodes.size() != basis.num_nodes())
    throw ShapeError("expectation: one value per quadrature node required");
  double s = 0.0;
  for (std::size_t q = 0; q < values_at_nodes.size(); ++q) s += basis.weight(q) * values_at_nodes[q];
  return s;
}

double quad_variance(std::span<const double> values_at_nodes, const GpcBasis& basis) {
  const double m = quad_expectation(values_at_nodes, basis);
  // Centred second pass; equals sum w v^2 - m^2 without the cancellation.
  double s = 0.0;
  for (std::size_t q = 0; q < values_at_nodes.size(); ++q) {
    const double d = values_at_nodes[q] - m;
    s += basis.weight(q) * d * d;
  }
  return std::max(0.0, s);
}

}  // namespace dsmcsg
