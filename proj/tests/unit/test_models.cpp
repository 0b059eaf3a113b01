#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "dsmcsg/error.hpp"
#include "dsmcsg/models.hpp"
#include "generators.hpp"

using namespace dsmcsg;

namespace {

const GpcBasis& basis1() {
  static const auto b = build_basis(RandomParamSpec::unit_cube(1), {5});
  return b;
}

const GpcBasis& basis2() {
  static const auto b = build_basis(RandomParamSpec::unit_cube(2), {3, 3});
  return b;
}

NodeParams exponent(double e) { return {e, 0.0}; }

void post(const ModelSpec& m, double v, double w, const PairDraws& d, const NodeParams& np, double& vp, double& wp) {
  double dv = 0, dw = 0;
  m.increment(v, w, d, np, dv, dw);
  vp = v + dv;
  wp = w + dw;
}

struct Stats {
  double mean = 0, var = 0;
};

Stats sample_stats(const std::vector<double>& x) {
  Stats s;
  for (double v : x) s.mean += v;
  s.mean /= static_cast<double>(x.size());
  for (double v : x) s.var += (v - s.mean) * (v - s.mean);
  s.var /= static_cast<double>(x.size() - 1);
  return s;
}

}  // namespace

TEST_CASE("gambling interaction examples") {
  const auto m = gambling_model({}, basis1());
  CHECK(m.epsilon == 1.0);
  CHECK(m.diffusion1(3.0) == 0.0);
  double vp, wp;
  post(m, 2.0, 3.0, {0.5, 0.0, 1.0}, m.nodes[0], vp, wp);
  CHECK(vp == doctest::Approx(5.0));
  CHECK(wp == doctest::Approx(0.0));
  post(m, 1.0, 1.0, {0.5, 0.0, 0.5}, m.nodes[0], vp, wp);
  CHECK(vp == doctest::Approx(1.0));
  CHECK(wp == doctest::Approx(1.0));
  CHECK(m.kernel(2.0, 3.0, exponent(0.5)) == doctest::Approx(std::sqrt(6.0)).epsilon(1e-14));
}

TEST_CASE("gambling conserves wealth pointwise") {
  const auto m = gambling_model({}, basis1());
  gen::for_all(2000, 21, [&](gen::Gen& g) {
    const double v = g.uniform(0, 20), w = g.uniform(0, 20), omega = g.uniform(0, 1);
    const auto& np = m.nodes[g.size(0, m.nodes.size() - 1)];
    CHECK(std::abs(m.interaction1(v, w, omega, np) + m.interaction2(v, w, omega, np)) <= 1e-12 * (1 + v + w));
    double vp, wp;
    post(m, v, w, {0.5, 0.0, omega}, np, vp, wp);
    CHECK(vp >= 0.0);
    CHECK(wp >= 0.0);
  });
}

TEST_CASE("wealth interaction examples") {
  WealthParams p;
  p.epsilon = 0.1;
  p.lambda = 0.5;
  const auto m = wealth_model(p, basis1());
  double vp, wp;
  post(m, 1.3, 1.3, {0.5, 0.0, 1.3}, m.nodes[0], vp, wp);
  CHECK(vp == doctest::Approx(1.3));
  post(m, 2.0, 1.0, {0.5, 0.0, 1.0}, m.nodes[0], vp, wp);
  CHECK(vp == doctest::Approx(1.95).epsilon(1e-14));
  post(m, 0.0, 1.05, {0.5, 0.37, 1.05}, m.nodes[0], vp, wp);
  CHECK(vp == doctest::Approx(0.1 * 0.5 * 1.05).epsilon(1e-14));
  CHECK(m.eta_min() == doctest::Approx(-1.0 + 0.05));
}

TEST_CASE("wealth stays nonnegative for admissible noise") {
  WealthParams p;
  gen::for_all(200, 22, [&](gen::Gen& g) {
    p.epsilon = g.uniform(0.01, 1.0);
    p.lambda = g.uniform(0.05, 1.0);
    p.sigma2 = g.uniform(1e-3, 0.999) * (2 * p.lambda - p.lambda * p.lambda);
    const auto m = wealth_model(p, basis1());
    for (int k = 0; k < 500; ++k) {
      const double v = g.coin() ? 0.0 : g.uniform(0, 50);
      const double w = m.sample_extra(g.uniform(0, 1));
      const double eta = g.coin() ? m.eta_min() : m.sample_eta(g.uniform(0, 1));
      double vp, wp;
      post(m, v, w, {0.5, eta, w}, m.nodes[0], vp, wp);
      CHECK(vp >= -1e-14);
    }
  });
}

TEST_CASE("traffic interaction examples") {
  TrafficParams p;
  p.rho = 0.4;
  p.mu = AffineParam::constant(1.0);
  const auto m = traffic_model(p, basis2());
  CHECK(m.nodes[0].p == doctest::Approx(0.6));
  CHECK(m.interaction1(0.5, 0.5, 0.0, m.nodes[0]) == doctest::Approx(-0.22).epsilon(1e-14));
  CHECK(m.diffusion1(0.0) == 0.0);
  CHECK(m.diffusion1(1.0) == 0.0);
  CHECK(m.a == doctest::Approx(std::sqrt(2 * 0.4 * 0.6)));

  p.rho = 0.0;
  const auto free = traffic_model(p, basis2());
  CHECK(free.nodes[0].p == 1.0);
  CHECK(free.interaction1(0.3, 0.9, 0.0, free.nodes[0]) == doctest::Approx(-(1 - 0.3)));
}

TEST_CASE("traffic speeds stay in [0,1]") {
  // 10^6 random tuples over random admissible parameters.
  gen::for_all(100, 23, [&](gen::Gen& g) {
    TrafficParams p;
    p.rho = g.uniform(0, 1);
    p.epsilon = g.uniform(0.001, 0.99);
    p.mu = {g.uniform(0.1, 2), g.uniform(0, 3), 0};
    const auto m = traffic_model(p, basis2());
    for (int k = 0; k < 10000; ++k) {
      const double v = g.coin() ? g.uniform(0, 1) : (g.coin() ? 0.0 : 1.0);
      const double w = g.uniform(0, 1);
      const double eta = g.integer(0, 3) == 0 ? (g.coin() ? m.eta_min() : m.eta_max()) : g.uniform(m.eta_min(), m.eta_max());
      const auto& np = m.nodes[g.size(0, m.nodes.size() - 1)];
      double vp, wp;
      post(m, v, w, {0.5, eta, 0.0}, np, vp, wp);
      REQUIRE(vp >= -1e-14);
      REQUIRE(vp <= 1.0 + 1e-14);
      CHECK(wp == w);
    }
  });
}

TEST_CASE("kernels are nonnegative and symmetric for pairwise models") {
  const auto gm = gambling_model({}, basis1());
  const auto tm = traffic_model({}, basis2());
  gen::for_all(2000, 24, [&](gen::Gen& g) {
    const double v = g.uniform(0, 10), w = g.uniform(0, 10);
    const auto& gn = gm.nodes[g.size(0, gm.nodes.size() - 1)];
    CHECK(gm.kernel(v, w, gn) >= 0.0);
    CHECK(gm.kernel(v, w, gn) == gm.kernel(w, v, gn));
    const double a = g.uniform(0, 1), b = g.uniform(0, 1);
    const auto& tn = tm.nodes[g.size(0, tm.nodes.size() - 1)];
    CHECK(tm.kernel(a, b, tn) >= 0.0);
    CHECK(tm.kernel(a, b, tn) == tm.kernel(b, a, tn));
  });
  const auto wm = wealth_model({}, basis1());
  CHECK(wm.kernel(0.0, 1.0, wm.nodes[0]) >= 0.0);
}

TEST_CASE("noise has mean 0 and variance eps sigma^2") {
  auto check_noise = [](const ModelSpec& m, double var) {
    std::vector<double> x(200000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = m.sample_eta((static_cast<double>(i) + 0.5) / static_cast<double>(x.size()));
    // Shuffle-free stratified draws give exact moments up to discretisation;
    // also check a random sample against 5 standard errors.
    gen::Gen g(25);
    std::vector<double> y(100000);
    for (auto& v : y) v = m.sample_eta(g.uniform(0, 1));
    const auto s = sample_stats(y);
    CHECK(std::abs(s.mean) <= 5 * std::sqrt(var / static_cast<double>(y.size())));
    // Var of the sample variance of a uniform: (m4 - var^2)/n with m4 = 9/5 var^2.
    CHECK(std::abs(s.var - var) <= 5 * std::sqrt(0.8 * var * var / static_cast<double>(y.size())));
    CHECK(sample_stats(x).var == doctest::Approx(var).epsilon(1e-4));
  };
  WealthParams wp;
  const auto wm = wealth_model(wp, basis1());
  check_noise(wm, wp.epsilon * wp.sigma2);

  TrafficParams tp;
  tp.rho = 0.4;
  tp.sigma2 = 0.05;
  const auto tm = traffic_model(tp, basis2());
  REQUIRE(std::sqrt(3 * tp.epsilon * tp.sigma2) <= tm.eta_max());
  check_noise(tm, tp.epsilon * tp.sigma2);

  const auto gm = gambling_model({}, basis1());
  CHECK(gm.sample_eta(0.9) == 0.0);
}

TEST_CASE("background moments") {
  CHECK(background_moment(0.9, 1.1, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(background_moment(0.9, 1.1, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(background_moment(0.9, 1.1, 2.0) == doctest::Approx((1.331 - 0.729) / 0.6).epsilon(1e-14));
  CHECK(background_moment(0.9, 1.1, 2.0) == doctest::Approx(1.0033333333333333).epsilon(1e-14));
  // Midpoint quadrature oracle for a fractional exponent.
  gen::for_all(20, 26, [](gen::Gen& g) {
    const double a = g.uniform(0.1, 2), b = a + g.uniform(0.1, 2), e = g.uniform(0, 4);
    const int n = 20000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::pow(a + (b - a) * (i + 0.5) / n, e);
    CHECK(background_moment(a, b, e) == doctest::Approx(s / n).epsilon(1e-7));
  });
  CHECK_THROWS_AS(background_moment(0.9, 1.1, -1.0), DomainError);
}

TEST_CASE("kernel upper bound") {
  const auto tm = traffic_model({}, basis2());
  CHECK(kernel_upper_bound(tm, 0.7) == 1.0);

  const auto gm = gambling_model({}, basis1());  // delta(z) = z/2
  double expect = 0.0;
  for (std::size_t q = 0; q < basis1().num_nodes(); ++q) expect = std::max(expect, std::pow(16.0, basis1().node(q)[0] / 2));
  CHECK(kernel_upper_bound(gm, 4.0) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(kernel_upper_bound(gm, 4.0) <= 4.0);

  WealthParams wp;
  wp.w_b = 1.1;
  const auto wm = wealth_model(wp, basis1());
  CHECK(kernel_upper_bound(wm, 1.0) <= 1.1 + 1e-15);

  gen::for_all(500, 27, [&](gen::Gen& g) {
    const double vmax = g.uniform(0, 10);
    const double sigma = kernel_upper_bound(gm, vmax);
    const double v = g.uniform(0, vmax), w = g.uniform(0, vmax);
    for (const auto& np : gm.nodes) CHECK(gm.kernel(v, w, np) <= sigma * (1 + 1e-14));
    const double sw = kernel_upper_bound(wm, vmax);
    const double bw = wm.sample_extra(g.uniform(0, 1));
    for (const auto& np : wm.nodes) CHECK(wm.kernel(v, bw, np) <= sw * (1 + 1e-14));
  });
  ModelSpec empty;
  CHECK_THROWS_AS(kernel_upper_bound(empty, 1.0), StateError);
}

TEST_CASE("parameter validation") {
  GamblingParams g;
  g.delta = {0.6, 0.5, 0};
  CHECK_THROWS_AS(gambling_model(g, basis1()), ConfigError);
  g.delta = {0.0, 0.5, 1};
  CHECK_THROWS_AS(gambling_model(g, basis1()), ConfigError);

  WealthParams w;
  w.sigma2 = 1.0;
  CHECK_THROWS_AS(wealth_model(w, basis1()), ConfigError);
  w = {};
  w.w_a = 1.2;
  CHECK_THROWS_AS(wealth_model(w, basis1()), ConfigError);

  TrafficParams t;
  t.rho = 1.5;
  CHECK_THROWS_AS(traffic_model(t, basis2()), ConfigError);
  t = {};
  t.c = 10.0;
  CHECK_THROWS_AS(traffic_model(t, basis2()), ConfigError);
  t = {};
  CHECK_THROWS_AS(traffic_model(t, basis1()), ConfigError);  // alpha depends on z2

  CHECK(model_kind_from_string("wealth") == ModelKind::wealth);
  CHECK(to_string(ModelKind::traffic) == "traffic");
  CHECK_THROWS_AS(model_kind_from_string("boltzmann"), ConfigError);
}
