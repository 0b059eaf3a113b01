#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <doctest.h>

#include "dsmcsg/analysis.hpp"
#include "dsmcsg/error.hpp"
#include "generators.hpp"

using namespace dsmcsg;

namespace {

const GpcBasis& basis1(int m = 5) {
  static std::deque<GpcBasis> cache;
  for (const auto& b : cache)
    if (b.orders()[0] == m) return b;
  cache.push_back(build_basis(RandomParamSpec::unit_cube(1), {m}));
  return cache.back();
}

const GpcBasis& basis2() {
  static const GpcBasis b = build_basis(RandomParamSpec::unit_cube(2), {3, 3});
  return b;
}

// Nodal values of c0 + c1 Phi_1(z).
std::vector<double> linear_field(const GpcBasis& b, double c0, double c1) {
  std::vector<double> out(b.num_nodes());
  for (std::size_t q = 0; q < b.num_nodes(); ++q) out[q] = c0 + c1 * b.phi_1d(0, 1, b.node(q)[0]);
  return out;
}

}  // namespace

TEST_CASE("reconstruct puts a point mass in one bin") {
  const auto& b = basis1(3);
  const VGrid grid(0.0, 2.0, 20);
  const std::vector<double> st(500, 0.73);
  const auto d = reconstruct(ensemble_from_states(st, b), b, grid);
  REQUIRE(d.f.size() == b.num_nodes());
  for (const auto& f : d.f) {
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == doctest::Approx(i == 7 ? 1.0 / grid.dv() : 0.0));
  }
  CHECK(d.out_of_range == 0);
}

TEST_CASE("reconstructed density has unit mass") {
  gen::for_all(30, 11, [](gen::Gen& g) {
    const std::size_t n = g.size(1, 400);
    const std::size_t nodes = g.size(1, 6);
    const VGrid grid(-1.0, 3.0, g.size(8, 80));
    std::vector<double> vals(n * nodes);
    for (auto& v : vals) v = g.uniform(-1.0, 3.0);
    const auto d = reconstruct_values(vals, n, nodes, grid);
    for (const auto& f : d.f) CHECK(std::abs(fp_mass(f, grid) - 1.0) <= 1e-12);
  });
}

TEST_CASE("out-of-range particles are tallied and limited") {
  const VGrid grid(0.0, 1.0, 10);
  std::vector<double> vals(1000, 0.5);
  vals[3] = 1.5;
  vals[4] = -0.2;
  const auto d = reconstruct_values(vals, 1000, 1, grid, 0.01);
  CHECK(d.out_of_range == 2);
  CHECK(d.f[0][0] == doctest::Approx(1.0 / (1000 * 0.1)));
  CHECK(d.f[0][9] == doctest::Approx(1.0 / (1000 * 0.1)));
  CHECK_THROWS_AS(reconstruct_values(vals, 1000, 1, grid, 1e-3), DomainError);
  CHECK_NOTHROW(reconstruct_values(vals, 1000, 1, grid, -1.0));
  // The closed right end and roundoff below the left end are not excursions.
  std::vector<double> edge{1.0, -1e-15};
  CHECK(reconstruct_values(edge, 2, 1, grid).out_of_range == 0);
}

TEST_CASE("histogram error shrinks with N") {
  const VGrid grid(0.0, 10.0, 100);
  auto sup_error = [&](std::size_t n) {
    std::mt19937_64 rng(5);
    std::gamma_distribution<double> gamma(2.0, 0.5);
    std::vector<double> vals(n);
    for (auto& v : vals) v = gamma(rng);
    const auto d = reconstruct_values(vals, n, 1, grid, -1.0);
    double err = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double exact = (boost::math::gamma_p(2.0, grid.face(i + 1) / 0.5) -
                            boost::math::gamma_p(2.0, grid.face(i) / 0.5)) / grid.dv();
      err = std::max(err, std::abs(d.f[0][i] - exact));
    }
    return err;
  };
  const double coarse = sup_error(1000);
  const double fine = sup_error(100000);
  MESSAGE("sup error: N=1e3 " << coarse << ", N=1e5 " << fine);
  CHECK(fine < coarse / 3.0);
  CHECK(fine < 0.03);
}

TEST_CASE("stats over z") {
  const auto& b = basis1(4);
  std::vector<std::vector<double>> flat(b.num_nodes(), std::vector<double>{1.5, -2.0});
  const auto s = stats_over_z(flat, b);
  CHECK(s.mean[0] == doctest::Approx(1.5));
  CHECK(s.mean[1] == doctest::Approx(-2.0));
  CHECK(s.variance[0] <= 1e-28);
  CHECK(s.variance[1] <= 1e-28);

  const auto lin = linear_field(b, 0.4, 0.3);
  std::vector<std::vector<double>> per(b.num_nodes());
  for (std::size_t q = 0; q < b.num_nodes(); ++q) per[q] = {lin[q]};
  const auto sl = stats_over_z(per, b);
  CHECK(sl.mean[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(sl.variance[0] == doctest::Approx(0.09).epsilon(1e-12));

  CHECK_THROWS_AS(stats_over_z(std::vector<std::vector<double>>(2, {1.0}), b), ShapeError);
}

TEST_CASE("reconstruction of a z-independent ensemble has no z variance") {
  gen::for_all(10, 23, [](gen::Gen& g) {
    const auto& b = basis2();
    std::vector<double> st(g.size(10, 300));
    for (auto& v : st) v = g.uniform(0.0, 1.0);
    const VGrid grid(0.0, 1.0, 25);
    const auto d = reconstruct(ensemble_from_states(st, b), b, grid);
    const auto s = stats_over_z(d.f, b);
    for (double v : s.variance) CHECK(v <= 1e-24);
    for (std::size_t i = 0; i < grid.size(); ++i) CHECK(s.mean[i] == doctest::Approx(d.f[0][i]).epsilon(1e-12));
  });
}

TEST_CASE("l2p error is a metric") {
  const auto& b = basis2();
  gen::for_all(50, 31, [&](gen::Gen& g) {
    const auto x = g.vector(b.num_nodes(), -3.0, 3.0);
    const auto y = g.vector(b.num_nodes(), -3.0, 3.0);
    const auto z = g.vector(b.num_nodes(), -3.0, 3.0);
    CHECK(l2p_error(x, x, b) == 0.0);
    CHECK(l2p_error(x, y, b) == l2p_error(y, x, b));
    CHECK(l2p_error(x, z, b) <= l2p_error(x, y, b) + l2p_error(y, z, b) + 1e-12);
  });
}

TEST_CASE("l2p error examples") {
  const auto& b = basis1(5);
  const auto a = linear_field(b, 0.2, 1.0);
  const std::vector<double> base(b.num_nodes(), 0.2);
  CHECK(l2p_error(a, base, b) == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<double> shifted(b.num_nodes(), -0.5);
  CHECK(l2p_error(base, shifted, b) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(l2p_error_max({a, base}, {base, base}, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(l2p_error(std::vector<double>(2), std::vector<double>(2), b), ShapeError);
}

TEST_CASE("l2 between bases") {
  const auto& lo = basis1(3);
  const auto& hi = basis1(6);
  const auto a = linear_field(lo, 1.0, 0.5);
  const auto c = linear_field(hi, 1.0, 0.5);
  CHECK(l2_between_bases(a, lo, c, hi) <= 1e-12);
  // A mode missing from the smaller basis counts in full.
  std::vector<double> cubic(hi.num_nodes());
  for (std::size_t q = 0; q < hi.num_nodes(); ++q) cubic[q] = hi.phi_1d(0, 5, hi.node(q)[0]);
  const std::vector<double> zero(lo.num_nodes(), 0.0);
  CHECK(l2_between_bases(zero, lo, cubic, hi) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("l1 distance on a window") {
  const VGrid grid(0.0, 1.0, 10);
  std::vector<double> a(10, 1.0), b(10, 0.0);
  CHECK(l1_distance(a, b, grid, 0.0, 1.0) == doctest::Approx(1.0));
  CHECK(l1_distance(a, b, grid, 0.0, 0.5) == doctest::Approx(0.5));
  CHECK_THROWS_AS(l1_distance(a, std::vector<double>(3), grid, 0, 1), ShapeError);
}

TEST_CASE("fit slope") {
  std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
  double s = 0, se = 1;
  fit_slope(x, y, s, se);
  CHECK(s == doctest::Approx(2.0));
  CHECK(se == doctest::Approx(0.0));
  CHECK_THROWS_AS(fit_slope(std::vector<double>{1, 1}, std::vector<double>{0, 1}, s, se), ShapeError);
  CHECK_THROWS_AS(fit_slope(std::vector<double>{1}, std::vector<double>{0}, s, se), ShapeError);
}

TEST_CASE("Monte Carlo study of a sample mean has slope -1/2") {
  auto obs = [](std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += u(rng);
    return s / static_cast<double>(n);
  };
  const auto st = mc_error_study(obs, 0.5, {100, 1000, 10000, 100000}, 40, 3);
  REQUIRE(st.rows.size() == 4);
  MESSAGE("slope " << st.slope << " +- " << st.slope_stderr);
  CHECK(std::abs(st.slope + 0.5) <= 0.1);
  const auto exact = mc_error_study([](std::size_t, std::uint64_t) { return 1.0; }, 1.0, {10, 20}, 3);
  for (const auto& r : exact.rows) CHECK(r.rms == 0.0);
}

TEST_CASE("traffic bound constants") {
  // alpha = 1, P = 1/2: beta = 5/4 > 0.
  auto c = traffic_bound_constants(0.5, 0.1, 1);
  CHECK(c.beta == doctest::Approx(1.25));
  CHECK(c.c1 == doctest::Approx(0.05 * 2.25));
  CHECK(c.c2 == doctest::Approx(0.05 * 1.25));
  // P = 0.9: beta = 3 - 2.7 - 0.81 < 0.
  c = traffic_bound_constants(0.9, 0.1, 1);
  CHECK(c.beta < 0.0);
  CHECK(c.c1 == doctest::Approx(0.09));
  c = traffic_bound_constants(0.5, 0.1, 2);
  CHECK(c.c1 == doctest::Approx(0.05));
  CHECK(c.c2 == doctest::Approx(0.05 * 0.75));
  CHECK_THROWS_AS(traffic_bound_constants(0.5, 0.1, 3), ConfigError);
}

TEST_CASE("traffic envelopes: initial value and limits") {
  gen::for_all(100, 41, [](gen::Gen& g) {
    const double p = g.uniform(0.05, 1.0), eps = g.uniform(0.01, 1.0), v0 = g.uniform(0.01, 1.0);
    for (int a : {1, 2}) {
      const auto c = traffic_bound_constants(p, eps, a);
      CHECK(traffic_v_plus(c, a, v0, 0.0) == doctest::Approx(v0).epsilon(1e-12));
      CHECK(traffic_v_minus(c, a, v0, 0.0) == doctest::Approx(v0).epsilon(1e-12));
    }
    // alpha = 2: V+ tends to (C1 + C2) / C1 = (P^2 + P + 1) / (2P), the
    // reciprocal of the constant inside the bracket.
    const auto c2 = traffic_bound_constants(p, eps, 2);
    CHECK(traffic_v_plus(c2, 2, v0, 1e4 / eps) == doctest::Approx((p * p + p + 1) / (2 * p)).epsilon(1e-9));
    // alpha = 1: V+ tends to C1 / C2.
    const auto c1 = traffic_bound_constants(p, eps, 1);
    CHECK(traffic_v_plus(c1, 1, v0, 1e4 / eps) == doctest::Approx(c1.c1 / c1.c2).epsilon(1e-9));
  });
}

TEST_CASE("traffic envelope closed form at rho = 0.4, mu = 1") {
  const double p = 1.0 - std::pow(0.4, 1.0);  // P = 1 - rho^mu
  const auto c = traffic_bound_constants(p, 0.1, 1);
  CHECK(c.beta == doctest::Approx(0.84));
  const double c1 = 0.05 * (3 - p - p * p), c2 = 0.05 * (1 + p - p * p);
  for (double t : {0.5, 2.0, 7.0}) {
    const double up = 1.0 / (c2 / c1 + std::exp(-c1 * t) * (1 / 0.3 - c2 / c1));
    CHECK(traffic_v_plus(c, 1, 0.3, t) == doctest::Approx(up).epsilon(1e-12));
  }
}

TEST_CASE("lower envelope never exceeds the upper one") {
  gen::for_all(200, 43, [](gen::Gen& g) {
    const double p = g.uniform(0.01, 1.0), eps = g.uniform(0.01, 1.0), v0 = g.uniform(0.0, 1.0);
    const int a = g.coin() ? 1 : 2;
    const auto c = traffic_bound_constants(p, eps, a);
    for (int k = 0; k <= 400; ++k) {
      const double t = 0.25 * k / eps;
      const double lo = traffic_v_minus(c, a, v0, t), hi = traffic_v_plus(c, a, v0, t);
      CHECK(lo >= 0.0);
      CHECK(lo <= hi);
    }
  });
}

TEST_CASE("traffic bounds over the nodes and the bound check") {
  const auto& b = basis2();
  TrafficParams tp;
  const auto model = traffic_model(tp, b);
  const std::vector<double> times{0.0, 1.0, 5.0};
  const auto bounds = traffic_bounds(model, 1, 0.5, times);
  REQUIRE(bounds.upper.size() == 3);
  CHECK_FALSE(bounds.degenerate);
  for (std::size_t q = 0; q < b.num_nodes(); ++q) CHECK(bounds.upper[0][q] == doctest::Approx(0.5));

  // A trajectory sitting on the midpoint of the envelope passes; one far
  // outside fails at every sample past t = 0.
  std::vector<std::vector<double>> mid(3), off(3);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t q = 0; q < b.num_nodes(); ++q) {
      mid[t].push_back(0.5 * (bounds.upper[t][q] + bounds.lower[t][q]));
      off[t].push_back(t == 0 ? 0.5 : 5.0);
    }
  const auto ok = bound_check(mid, bounds, 10000);
  CHECK(ok.violations == 0);
  CHECK(ok.tolerance == doctest::Approx(0.05));
  CHECK(ok.pass());
  const auto bad = bound_check(off, bounds, 10000);
  CHECK(bad.violations == 2 * b.num_nodes());
  CHECK_FALSE(bad.pass());
  CHECK_THROWS_AS(bound_check(std::vector<std::vector<double>>(2), bounds, 100), ShapeError);

  CHECK_THROWS_AS(traffic_bounds(model, 1, 1.5, times), DomainError);
  const auto wm = wealth_model(WealthParams{}, basis1(3));
  CHECK_THROWS_AS(traffic_bounds(wm, 1, 0.5, times), ConfigError);
  // rho = 1 makes P = 0 at every node: C1 = eps P = 0 for alpha = 2,
  // while alpha = 1 keeps C1 = 3 eps / 2.
  tp.rho = 1.0;
  const auto dead_model = traffic_model(tp, b);
  CHECK_FALSE(traffic_bounds(dead_model, 1, 0.5, times).degenerate);
  const auto dead = traffic_bounds(dead_model, 2, 0.5, times);
  CHECK(dead.degenerate);
  for (const auto& row : dead.upper)
    for (double u : row) CHECK(u == 0.0);
  CHECK_THROWS_AS(traffic_v_plus(TrafficBoundConstants{0.0, 0.05, 3.0}, 1, 0.5, 1.0), DomainError);
  // V0 = 0 flags the bounds and returns zeros.
  const auto zero = traffic_bounds(model, 1, 0.0, times);
  CHECK(zero.degenerate);
  CHECK(zero.upper[2][0] == 0.0);
}

TEST_CASE("spectral study") {
  const auto& b = basis1(6);
  WealthParams wp;
  const auto model = wealth_model(wp, b);
  CollisionConfig cfg;
  cfg.dt = 0.02;
  cfg.t_final = 0.2;
  cfg.mode = AcceptanceMode::sigmoid;
  cfg.beta = 1.0;
  cfg.seed = 9;
  const auto res = run(model, b, cfg, InitialDensity::uniform(0.0, 2.0), 300);
  auto make = [&](const GpcBasis& basis) { return wealth_model(wp, basis); };

  const auto s40 = spectral_study(res.log, make, {1, 3, 6, 40}, 40);
  const auto s50 = spectral_study(res.log, make, {1, 3, 6, 40}, 50);
  REQUIRE(s40.rows.size() == 4);
  CHECK(s40.rows[3].error_second == 0.0);
  CHECK(s40.rows[3].error_mean == 0.0);
  // The gap between the two references bounds how far the errors can move.
  const double gap = s50.rows[3].error_second;
  MESSAGE("reference gap " << gap);
  for (std::size_t i = 0; i < 3; ++i) {
    MESSAGE("M=" << s40.rows[i].order << " err " << s40.rows[i].error_second << " vs " << s50.rows[i].error_second);
    CHECK(std::abs(s40.rows[i].error_second - s50.rows[i].error_second) <= gap + 1e-12);
    CHECK(gap <= 0.1 * s40.rows[i].error_second);
  }
  CHECK(s40.rows[2].error_second < s40.rows[0].error_second);

  CHECK_THROWS_AS(spectral_study(res.log, make, {}, 40), ConfigError);
}
