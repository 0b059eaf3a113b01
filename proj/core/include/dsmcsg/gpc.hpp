#pragma once

// Orthonormal polynomial chaos bases over a box of independent uniform
// parameters, with tensor-product Gauss-Legendre quadrature.
//
// Coefficients and quadrature nodes are both stored in lexicographic
// tensor order: the last dimension varies fastest, so in 2D the pair
// (h, k) lives at flat index h * (M2 + 1) + k.

#include <cstddef>
#include <span>
#include <vector>

namespace dsmcsg {

struct UniformDim {
  double lo = 0.0;
  double hi = 1.0;

  friend bool operator==(const UniformDim&, const UniformDim&) = default;
};

/// Joint law of the random parameters: a product of uniform marginals.
class RandomParamSpec {
 public:
  explicit RandomParamSpec(std::vector<UniformDim> dims);

  static RandomParamSpec unit_cube(std::size_t dims);

  std::size_t dims() const noexcept { return dims_.size(); }
  const UniformDim& dim(std::size_t d) const { return dims_.at(d); }
  const std::vector<UniformDim>& dimensions() const noexcept { return dims_; }

  bool contains(std::span<const double> z) const;
  /// Product density p(z); zero outside the support box.
  double density(std::span<const double> z) const;

  friend bool operator==(const RandomParamSpec&, const RandomParamSpec&) = default;

 private:
  std::vector<UniformDim> dims_;
};

struct GaussRule {
  std::vector<double> nodes;    // ascending, in (-1, 1)
  std::vector<double> weights;  // sum to 2
};

/// n-point Gauss-Legendre rule on [-1, 1] (Newton iteration on P_n).
GaussRule gauss_legendre(int n);

/// Legendre polynomial P_n(x) by the three-term recurrence.
double legendre(int n, double x);

/// sqrt(2n+1) P_n(x): orthonormal against the uniform probability on [-1, 1].
double orthonormal_legendre(int n, double x);

/// Reusable buffers for the sum-factorised tensor transforms.
struct TransformScratch {
  std::vector<double> a;
  std::vector<double> b;
};

/// Separable linear map between tensor-shaped arrays, applied one
/// dimension at a time. Each factor is a dense row-major matrix of shape
/// rows[d] x cols[d].
class TensorMap {
 public:
  TensorMap() = default;
  TensorMap(std::vector<std::vector<double>> factors, std::vector<std::size_t> rows,
            std::vector<std::size_t> cols);

  std::size_t input_size() const noexcept { return in_size_; }
  std::size_t output_size() const noexcept { return out_size_; }

  void apply(std::span<const double> in, std::span<double> out, TransformScratch& scratch) const;

 private:
  std::vector<std::vector<double>> factors_;
  std::vector<std::size_t> rows_;
  std::vector<std::size_t> cols_;
  std::size_t in_size_ = 0;
  std::size_t out_size_ = 0;
};

class GpcBasis {
 public:
  GpcBasis(RandomParamSpec spec, std::vector<int> orders, std::vector<int> nq);

  const RandomParamSpec& param_spec() const noexcept { return spec_; }
  std::size_t dims() const noexcept { return spec_.dims(); }
  const std::vector<int>& orders() const noexcept { return orders_; }
  const std::vector<int>& nq() const noexcept { return nq_; }

  /// Number of basis functions K = prod(order_d + 1).
  std::size_t size() const noexcept { return size_; }
  /// Number of tensor quadrature nodes prod(nq_d).
  std::size_t num_nodes() const noexcept { return weights_.size(); }

  std::span<const double> node(std::size_t q) const;
  double weight(std::size_t q) const { return weights_.at(q); }
  std::span<const double> weights() const noexcept { return weights_; }

  /// 1D nodes of dimension d, mapped to its support.
  const std::vector<double>& nodes_1d(std::size_t d) const { return nodes1d_.at(d); }

  std::size_t flat_index(std::span<const int> multi) const;
  std::vector<int> multi_index(std::size_t flat) const;

  /// Orthonormal 1D polynomial of degree h on the support of dimension d.
  double phi_1d(std::size_t d, int h, double z) const;

  void eval_into(std::span<const double> z, std::span<double> out) const;

  /// Coefficients -> values at every quadrature node.
  void to_nodes(std::span<const double> coeffs, std::span<double> values,
                TransformScratch& scratch) const;
  /// Node values -> coefficients, c_h = sum_q w_q v_q Phi_h(z_q).
  void from_nodes(std::span<const double> values, std::span<double> coeffs,
                  TransformScratch& scratch) const;

  /// Evaluator for coefficient vectors on an arbitrary tensor grid of
  /// points (one list per dimension, inside the support).
  TensorMap grid_evaluator(const std::vector<std::vector<double>>& points) const;

 private:
  RandomParamSpec spec_;
  std::vector<int> orders_;
  std::vector<int> nq_;
  std::size_t size_ = 0;
  std::vector<std::vector<double>> nodes1d_;
  std::vector<std::vector<double>> weights1d_;
  std::vector<double> nodes_;    // num_nodes x dims
  std::vector<double> weights_;  // num_nodes, sum to 1
  TensorMap to_nodes_;
  TensorMap from_nodes_;
};

/// Shifted orthonormal Legendre basis with Gauss nodes mapped to the
/// support; weights absorb p(z) and sum to 1.
GpcBasis build_basis(const RandomParamSpec& spec, const std::vector<int>& orders,
                     const std::vector<int>& nq);
/// Same with nq_d = order_d + 1 in every dimension.
GpcBasis build_basis(const RandomParamSpec& spec, const std::vector<int>& orders);

std::vector<double> eval_basis(const GpcBasis& basis, std::span<const double> z);
double evaluate(std::span<const double> coeffs, const GpcBasis& basis, std::span<const double> z);
std::vector<double> project(std::span<const double> values_at_nodes, const GpcBasis& basis);
double quad_expectation(std::span<const double> values_at_nodes, const GpcBasis& basis);
double quad_variance(std::span<const double> values_at_nodes, const GpcBasis& basis);

}  // namespace dsmcsg
