#include <cmath>
#include <random>

#include "doctest.h"
#include "msmgp/error.hpp"
#include "msmgp/quadrature.hpp"
#include "oracles.hpp"

using namespace msmgp;

TEST_CASE("gh_rule closed forms") {
  const auto r1 = gh_rule(1);
  REQUIRE(r1.order() == 1);
  CHECK(r1.nodes()[0] == doctest::Approx(0.0));
  CHECK(r1.weights()[0] == doctest::Approx(std::sqrt(oracle::kPi)).epsilon(1e-14));

  const auto r2 = gh_rule(2);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(r2.nodes()[i]) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(r2.weights()[i] == doctest::Approx(std::sqrt(oracle::kPi) / 2).epsilon(1e-14));
  }
  CHECK_THROWS_AS(gh_rule(0), InvalidParameter);
  CHECK_THROWS_AS(gh_rule(101), InvalidParameter);
}

TEST_CASE("gh_rule moments and symmetry") {
  const auto r = gh_rule(20);
  double x4 = 0.0;
  for (int i = 0; i < r.order(); ++i) x4 += r.weights()[i] * std::pow(r.nodes()[i], 4);
  CHECK(std::abs(x4 - 3.0 * std::sqrt(oracle::kPi) / 4.0) < 1e-12);

  for (int order : {3, 10, 40, 100}) {
    const auto q = gh_rule(order);
    double sum = 0.0;
    for (double w : q.weights()) {
      CHECK(w > 0.0);
      sum += w;
    }
    CHECK(std::abs(sum - std::sqrt(oracle::kPi)) < 1e-12);
    for (int i = 0; i < order; ++i) {
      double mirror = 1e300;
      for (double x : q.nodes()) mirror = std::min(mirror, std::abs(x + q.nodes()[i]));
      CHECK(mirror < 1e-12);
    }
  }
}

TEST_CASE("gh_rule matches Newton-iterated nodes") {
  for (int order : {5, 15, 40}) {
    const auto q = gh_rule(order);
    const auto o = oracle::hermite_newton(order);
    for (int i = 0; i < order; ++i) {
      double best = 1e300;
      for (int j = 0; j < order; ++j) best = std::min(best, std::abs(q.nodes()[i] - o.x[j]));
      CHECK(best < 1e-12);
    }
  }
}

TEST_CASE("gh_rule integrates polynomials up to degree 2n - 1") {
  const auto r = gh_rule(6);
  // Integral of x^(2k) exp(-x^2) = Gamma(k + 1/2).
  for (int k = 0; k <= 5; ++k) {
    double s = 0.0;
    for (int i = 0; i < r.order(); ++i) s += r.weights()[i] * std::pow(r.nodes()[i], 2 * k);
    CHECK(s == doctest::Approx(std::tgamma(k + 0.5)).epsilon(1e-12));
  }
}

TEST_CASE("expect_sigmoid examples") {
  const auto r2 = gh_rule(2);
  const auto r20 = gh_rule(20);
  CHECK(std::abs(expect_sigmoid(0.0, 3.0, r2) - 0.5) < 1e-10);
  CHECK(std::abs(expect_sigmoid(0.0, 0.5, r20) - 0.5) < 1e-10);
  CHECK(std::abs(expect_sigmoid(10.0, 0.01, r20) - 1.0) < 1e-4);

  const auto r50 = gh_rule(50);
  const double dense = oracle::gauss_expect_dense(oracle::sigmoid, 1.0, 4.0, 200001);
  CHECK(std::abs(expect_sigmoid(1.0, 4.0, r50) - dense) < 1e-8);
  CHECK_THROWS_AS(expect_sigmoid(0.0, -1.0, r20), InvalidParameter);
}

TEST_CASE("expect_sigmoid_sq examples") {
  const auto r = gh_rule(40);
  CHECK(expect_sigmoid_sq(0.0, 0.0, r) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(std::abs(expect_sigmoid_sq(-10.0, 0.01, r)) < 1e-4);
  const double dense =
      oracle::gauss_expect_dense([](double x) { return oracle::sigmoid(x) * oracle::sigmoid(x); }, 0.5, 1.0, 200001);
  CHECK(std::abs(expect_sigmoid_sq(0.5, 1.0, r) - dense) < 1e-8);
  CHECK_THROWS_AS(expect_sigmoid_sq(0.0, -1e-3, r), InvalidParameter);
}

TEST_CASE("sigmoid expectations: symmetry and bounds") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> mean(-6.0, 6.0), var(0.0, 9.0);
  const auto r = gh_rule(kTrainingQuadratureOrder);
  for (int i = 0; i < 500; ++i) {
    const double m = mean(rng), v = var(rng);
    const double e1 = expect_sigmoid(m, v, r), e2 = expect_sigmoid_sq(m, v, r);
    CHECK(std::abs(expect_sigmoid(-m, v, r) - (1.0 - e1)) < 1e-10);
    CHECK(e1 > 0.0);
    CHECK(e1 < 1.0);
    CHECK(e2 > 0.0);
    CHECK(e2 < 1.0);
    CHECK(e2 <= e1);
    CHECK(e2 >= e1 * e1 - 1e-12);
  }
}

TEST_CASE("quadrature error does not grow as the order doubles") {
  for (const auto& [m, v] : {std::pair{1.0, 4.0}, std::pair{-0.3, 2.0}, std::pair{2.0, 9.0}}) {
    const double dense = oracle::gauss_expect_dense(oracle::sigmoid, m, v, 200001);
    double prev = 1e300;
    for (int order : {5, 10, 20, 40}) {
      const double err = std::abs(expect_sigmoid(m, v, gh_rule(order)) - dense);
      CHECK(err <= prev + 1e-13);
      prev = err;
    }
  }
}

TEST_CASE("sigmoid_moments agree with the separate expectations and finite differences") {
  const auto r = gh_rule(20);
  const double m = 0.7, v = 1.3, h = 1e-6;
  const auto sm = sigmoid_moments(m, v, r);
  CHECK(sm.e1 == doctest::Approx(expect_sigmoid(m, v, r)).epsilon(1e-14));
  CHECK(sm.e2 == doctest::Approx(expect_sigmoid_sq(m, v, r)).epsilon(1e-14));
  CHECK(sm.de1_dmean == doctest::Approx((expect_sigmoid(m + h, v, r) - expect_sigmoid(m - h, v, r)) / (2 * h)).epsilon(1e-7));
  CHECK(sm.de1_dvar == doctest::Approx((expect_sigmoid(m, v + h, r) - expect_sigmoid(m, v - h, r)) / (2 * h)).epsilon(1e-6));
  CHECK(sm.de2_dmean ==
        doctest::Approx((expect_sigmoid_sq(m + h, v, r) - expect_sigmoid_sq(m - h, v, r)) / (2 * h)).epsilon(1e-7));
  CHECK(sm.de2_dvar ==
        doctest::Approx((expect_sigmoid_sq(m, v + h, r) - expect_sigmoid_sq(m, v - h, r)) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("expect_loglik_2d examples") {
  const auto r = gh_rule(40);
  const double nu = 0.3;
  const double exact = oracle::log_normal_pdf(0.4, oracle::sigmoid(0.8) * 1.5, nu);
  CHECK(expect_loglik_2d(0.4, 1.5, 0.0, 0.8, 0.0, nu, r) == doctest::Approx(exact).epsilon(1e-13));
  std::vector<double> xs(r.nodes().rbegin(), r.nodes().rend()), ws(r.weights().rbegin(), r.weights().rend());
  const GaussHermiteRule reversed(xs, ws);
  CHECK(expect_loglik_2d(0.0, 0.0, 1.0, 0.6, 0.5, nu, r) ==
        doctest::Approx(expect_loglik_2d(0.0, 0.0, 1.0, 0.6, 0.5, nu, reversed)).epsilon(1e-13));
  CHECK(expect_loglik_2d(0.3, 0.5, 1.0, 0.6, 0.5, nu, r) ==
        doctest::Approx(expect_loglik_2d(-0.3, -0.5, 1.0, 0.6, 0.5, nu, r)).epsilon(1e-13));

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pv(0.05, 1.0);
  for (int i = 0; i < 3; ++i) {
    const double y = u(rng), mf = u(rng), vf = pv(rng), mg = 2 * u(rng), vg = pv(rng), noise = 0.2 + pv(rng);
    const double dense = oracle::expect_loglik_dense_2d(y, mf, vf, mg, vg, noise, 401);
    CHECK(std::abs(expect_loglik_2d(y, mf, vf, mg, vg, noise, r) - dense) < 1e-6);
  }
  CHECK_THROWS_AS(expect_loglik_2d(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, r), InvalidParameter);
}

TEST_CASE("expect_loglik_1d_decomp examples") {
  const auto r = gh_rule(40);
  const double nu = 0.05;
  const double exact = oracle::log_normal_pdf(-0.2, oracle::sigmoid(-1.0) * 0.9, nu);
  CHECK(expect_loglik_1d_decomp(-0.2, 0.9, 0.0, -1.0, 0.0, nu, r) == doctest::Approx(exact).epsilon(1e-13));

  const double vf = 0.7, mg = 0.4, vg = 1.1;
  const double e2 = expect_sigmoid_sq(mg, vg, r);
  const double expected = -vf * e2 / (2 * nu) - 0.5 * std::log(2 * oracle::kPi * nu);
  CHECK(expect_loglik_1d_decomp(0.0, 0.0, vf, mg, vg, nu, r) == doctest::Approx(expected).epsilon(1e-13));
  CHECK_THROWS_AS(expect_loglik_1d_decomp(0.0, 0.0, 1.0, 0.0, 1.0, -1.0, r), InvalidParameter);
}

TEST_CASE("1-D decomposition equals the 2-D quadrature") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-2.0, 2.0), pv(0.0, 2.0), nv(0.01, 1.0);
  const auto r = gh_rule(kVerificationQuadratureOrder);
  for (int i = 0; i < 200; ++i) {
    const double y = u(rng), mf = u(rng), vf = pv(rng), mg = 2 * u(rng), vg = pv(rng), nu = nv(rng);
    CHECK(std::abs(expect_loglik_1d_decomp(y, mf, vf, mg, vg, nu, r) - expect_loglik_2d(y, mf, vf, mg, vg, nu, r)) <=
          1e-6);
  }
}
