#include "dsmcsg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsmcsg/error.hpp"

namespace dsmcsg {

DensityGrid reconstruct_values(std::span<const double> values, std::size_t n, std::size_t nodes, const VGrid& grid,
                               double out_of_range_limit) {
  if (values.size() != n * nodes) throw ShapeError("reconstruct: values must be N x nodes");
  if (n == 0) throw ShapeError("reconstruct: empty ensemble");
  DensityGrid d{grid, std::vector<std::vector<double>>(nodes, std::vector<double>(grid.size(), 0.0)), 0, n};
  const double inv = 1.0 / (static_cast<double>(n) * grid.dv());
  const auto last = static_cast<std::int64_t>(grid.size()) - 1;
  // Roundoff-sized excursions past an edge are read out as the edge.
  const double lo_tol = 1e-12 * std::max(1.0, std::abs(grid.v_min()));
  const double hi_tol = 1e-12 * std::max(1.0, std::abs(grid.v_max()));
  for (std::size_t q = 0; q < nodes; ++q) {
    auto& f = d.f[q];
    std::size_t out = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = values[i * nodes + q];
      const double x = (v - grid.v_min()) / grid.dv();
      std::int64_t b;
      if (!(x >= 0.0)) {
        b = 0;
        if (!(v >= grid.v_min() - lo_tol)) ++out;
      } else if (x >= static_cast<double>(grid.size())) {
        // The closed right end belongs to the last bin.
        if (v > grid.v_max() + hi_tol) ++out;
        b = last;
      } else {
        b = std::min<std::int64_t>(static_cast<std::int64_t>(x), last);
      }
      f[static_cast<std::size_t>(b)] += inv;
    }
    d.out_of_range = std::max(d.out_of_range, out);
  }
  if (out_of_range_limit >= 0.0 && static_cast<double>(d.out_of_range) > out_of_range_limit * static_cast<double>(n))
    throw DomainError("reconstruct: " + std::to_string(d.out_of_range) + " of " + std::to_string(n) +
                      " particles fall outside [" + std::to_string(grid.v_min()) + ", " +
                      std::to_string(grid.v_max()) + "] at some node");
  return d;
}

DensityGrid reconstruct(const Ensemble& e, const GpcBasis& basis, const VGrid& grid, double out_of_range_limit) {
  const auto vals = node_values(e, basis);
  return reconstruct_values(vals, e.n, basis.num_nodes(), grid, out_of_range_limit);
}

ZStats stats_over_z(const std::vector<std::vector<double>>& per_node, const GpcBasis& basis) {
  if (per_node.size() != basis.num_nodes()) throw ShapeError("stats_over_z: one vector per quadrature node");
  const std::size_t m = per_node.empty() ? 0 : per_node.front().size();
  ZStats s{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  for (std::size_t q = 0; q < per_node.size(); ++q) {
    if (per_node[q].size() != m) throw ShapeError("stats_over_z: ragged input");
    const double w = basis.weight(q);
    for (std::size_t x = 0; x < m; ++x) s.mean[x] += w * per_node[q][x];
  }
  for (std::size_t q = 0; q < per_node.size(); ++q) {
    const double w = basis.weight(q);
    for (std::size_t x = 0; x < m; ++x) {
      const double d = per_node[q][x] - s.mean[x];
      s.variance[x] += w * d * d;
    }
  }
  return s;
}

double l2p_error(std::span<const double> a, std::span<const double> b, const GpcBasis& basis) {
  if (a.size() != basis.num_nodes() || b.size() != basis.num_nodes())
    throw ShapeError("l2p_error: inputs must have one value per node");
  double s = 0.0;
  for (std::size_t q = 0; q < a.size(); ++q) {
    const double d = a[q] - b[q];
    s += basis.weight(q) * d * d;
  }
  return std::sqrt(s);
}

double l2p_error_max(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                     const GpcBasis& basis) {
  if (a.size() != b.size()) throw ShapeError("l2p_error: trajectories have different lengths");
  double m = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) m = std::max(m, l2p_error(a[t], b[t], basis));
  return m;
}

double l1_distance(std::span<const double> a, std::span<const double> b, const VGrid& grid, double lo, double hi) {
  if (a.size() != grid.size() || b.size() != grid.size()) throw ShapeError("l1_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = grid.center(i);
    if (v >= lo && v <= hi) s += std::abs(a[i] - b[i]);
  }
  return s * grid.dv();
}

double l2_between_bases(std::span<const double> nodal_a, const GpcBasis& basis_a, std::span<const double> nodal_b,
                        const GpcBasis& basis_b) {
  if (basis_a.param_spec() != basis_b.param_spec()) throw ShapeError("l2_between_bases: different parameter spaces");
  if (nodal_a.size() != basis_a.num_nodes() || nodal_b.size() != basis_b.num_nodes())
    throw ShapeError("l2_between_bases: nodal sizes do not match the bases");
  TransformScratch scratch;
  std::vector<double> ca(basis_a.size()), cb(basis_b.size());
  basis_a.from_nodes(nodal_a, ca, scratch);
  basis_b.from_nodes(nodal_b, cb, scratch);
  // Map every mode of b into a's index space when it exists there.
  std::vector<double> diff = ca;
  double extra = 0.0;
  const std::size_t nd = basis_a.dims();
  for (std::size_t h = 0; h < cb.size(); ++h) {
    const auto mi = basis_b.multi_index(h);
    bool inside = true;
    for (std::size_t d = 0; d < nd; ++d) inside = inside && mi[d] <= basis_a.orders()[d];
    if (inside)
      diff[basis_a.flat_index(mi)] -= cb[h];
    else
      extra += cb[h] * cb[h];
  }
  double s = extra;
  for (double x : diff) s += x * x;
  return std::sqrt(s);
}

SpectralStudy spectral_study(const EventLog& log, const ModelFactory& make_model, const std::vector<int>& orders,
                             int reference_order, const TargetsFactory& targets, std::size_t record_every,
                             const Trajectory* reference) {
  if (orders.empty()) throw ConfigError("spectral study needs at least one order");
  if (log.header.rescale && !targets) throw ConfigError("spectral study: log uses rescaling, moment targets needed");
  const RandomParamSpec spec(log.header.dims);
  auto run_at = [&](int m, GpcBasis& out_basis) {
    out_basis = build_basis(spec, std::vector<int>(spec.dims(), m));
    const ModelSpec model = make_model(out_basis);
    std::unique_ptr<MomentTargets> tg;
    if (log.header.rescale) tg = targets(model, out_basis);
    return replay(log, out_basis, model, tg.get(), {}, record_every).trajectory;
  };
  GpcBasis ref_basis = build_basis(spec, std::vector<int>(spec.dims(), reference_order));
  const Trajectory ref = reference ? *reference : run_at(reference_order, ref_basis);

  SpectralStudy st;
  st.reference_order = reference_order;
  for (int m : orders) {
    GpcBasis b = ref_basis;
    const Trajectory tr = run_at(m, b);
    if (tr.times.size() != ref.times.size()) throw ShapeError("spectral study: trajectories differ in length");
    SpectralRow row;
    row.order = m;
    for (std::size_t t = 0; t < tr.times.size(); ++t) {
      row.error_second = std::max(row.error_second, l2_between_bases(tr.second[t], b, ref.second[t], ref_basis));
      row.error_mean = std::max(row.error_mean, l2_between_bases(tr.mean[t], b, ref.mean[t], ref_basis));
    }
    st.rows.push_back(row);
  }
  return st;
}

void fit_slope(std::span<const double> x, std::span<const double> y, double& slope, double& stderr_out) {
  if (x.size() != y.size() || x.size() < 2) throw ShapeError("fit_slope: need at least two matching points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ShapeError("fit_slope: abscissae are all equal");
  slope = sxy / sxx;
  const double icpt = my - slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - icpt - slope * x[i];
    rss += r * r;
  }
  stderr_out = x.size() > 2 ? std::sqrt(rss / (n - 2.0) / sxx) : 0.0;
}

McStudy mc_error_study(const std::function<double(std::size_t, std::uint64_t)>& observable, double reference,
                       const std::vector<std::size_t>& sizes, std::size_t repetitions, std::uint64_t seed0) {
  if (sizes.empty() || repetitions == 0) throw ConfigError("MC study needs sizes and at least one repetition");
  McStudy st;
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    double s = 0.0;
    for (std::size_t r = 0; r < repetitions; ++r) {
      const double d = observable(sizes[k], seed0 + 1000003ull * k + r) - reference;
      s += d * d;
    }
    const double rms = std::sqrt(s / static_cast<double>(repetitions));
    st.rows.push_back({sizes[k], rms});
    if (rms > 0.0) {
      lx.push_back(std::log10(static_cast<double>(sizes[k])));
      ly.push_back(std::log10(rms));
    }
  }
  if (lx.size() >= 2) fit_slope(lx, ly, st.slope, st.slope_stderr);
  return st;
}

TrafficBoundConstants traffic_bound_constants(double p, double epsilon, int alpha_case) {
  TrafficBoundConstants c;
  c.beta = 3.0 - 3.0 * p - p * p;
  if (alpha_case == 1) {
    c.c1 = c.beta > 0.0 ? 0.5 * epsilon * (3.0 - p - p * p) : epsilon * p;
    c.c2 = 0.5 * epsilon * (1.0 + p - p * p);
  } else if (alpha_case == 2) {
    c.c1 = epsilon * p;
    c.c2 = 0.5 * epsilon * (p * p + 1.0 - p);
  } else {
    throw ConfigError("traffic bounds exist for alpha = 1 and alpha = 2 only");
  }
  return c;
}

namespace {

// [a + e^{s t} (1/v0 - a)]^{-1}; a non-positive bracket means the
// envelope has left (0, inf) and is reported as 0 (lower) or inf (upper).
double bernoulli_envelope(double a, double s, double v0, double t, bool lower) {
  const double br = a + std::exp(s * t) * (1.0 / v0 - a);
  if (!(br > 0.0)) return lower ? 0.0 : std::numeric_limits<double>::infinity();
  return 1.0 / br;
}

}  // namespace

double traffic_v_plus(const TrafficBoundConstants& c, int alpha_case, double v0, double t) {
  if (!(v0 > 0.0)) return 0.0;
  if (alpha_case == 1) {
    if (!(c.c1 > 0.0)) throw DomainError("traffic bounds: C1 = 0 is degenerate");
    return bernoulli_envelope(c.c2 / c.c1, -c.c1, v0, t, false);
  }
  const double k = c.c1 + c.c2;
  return bernoulli_envelope(c.c1 / k, -k, v0, t, false);
}

double traffic_v_minus(const TrafficBoundConstants& c, int alpha_case, double v0, double t) {
  if (!(v0 > 0.0)) return 0.0;
  if (alpha_case == 1) {
    if (!(c.c1 > 0.0)) throw DomainError("traffic bounds: C1 = 0 is degenerate");
    return bernoulli_envelope(c.c2 / c.c1, c.c1, v0, t, true);
  }
  const double k = c.c1 + c.c2;
  return bernoulli_envelope(c.c1 / k, k, v0, t, true);
}

TrafficBounds traffic_bounds(const ModelSpec& model, int alpha_case, double v0, std::span<const double> times) {
  if (model.kind != ModelKind::traffic) throw ConfigError("traffic bounds need the traffic model");
  if (v0 < 0.0 || v0 > 1.0) throw DomainError("traffic bounds need V0 in [0, 1]");
  TrafficBounds b;
  b.alpha_case = alpha_case;
  b.v0 = v0;
  b.degenerate = v0 == 0.0;
  for (const auto& np : model.nodes) {
    b.constants.push_back(traffic_bound_constants(np.p, model.epsilon, alpha_case));
    if (b.constants.back().c1 <= 0.0) b.degenerate = true;
  }
  b.times.assign(times.begin(), times.end());
  for (double t : times) {
    std::vector<double> up(model.nodes.size(), 0.0), lo(model.nodes.size(), 0.0);
    if (!b.degenerate) {
      for (std::size_t q = 0; q < model.nodes.size(); ++q) {
        up[q] = traffic_v_plus(b.constants[q], alpha_case, v0, t);
        lo[q] = traffic_v_minus(b.constants[q], alpha_case, v0, t);
      }
    }
    b.upper.push_back(std::move(up));
    b.lower.push_back(std::move(lo));
  }
  return b;
}

BoundReport bound_check(const std::vector<std::vector<double>>& v, const TrafficBounds& bounds, std::size_t n) {
  if (v.size() != bounds.times.size()) throw ShapeError("bound_check: trajectory and bounds differ in length");
  if (n == 0) throw ShapeError("bound_check: N must be positive");
  BoundReport r;
  r.tolerance = 5.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t t = 0; t < v.size(); ++t) {
    if (v[t].size() != bounds.upper[t].size()) throw ShapeError("bound_check: node count mismatch");
    for (std::size_t q = 0; q < v[t].size(); ++q) {
      ++r.samples;
      if (v[t][q] < bounds.lower[t][q] - r.tolerance || v[t][q] > bounds.upper[t][q] + r.tolerance) ++r.violations;
    }
  }
  return r;
}

}  // namespace dsmcsg
