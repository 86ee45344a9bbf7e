#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>
#include <fftw3.h>

#include "doctest.h"
#include "msmgp/error.hpp"
#include "msmgp/kernels.hpp"
#include "oracles.hpp"

using namespace msmgp;

namespace {

MsmKernel random_kernel(std::mt19937_64& rng, int max_terms = 6) {
  std::uniform_int_distribution<int> count(1, max_terms);
  std::uniform_real_distribution<double> var(0.05, 2.0), ls(0.002, 1.0), hz(0.0, 3000.0);
  std::vector<LorentzianComponent> c;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) c.push_back(LorentzianComponent::from_hz(var(rng), ls(rng), hz(rng)));
  return MsmKernel(c);
}

std::vector<oracle::Term> terms_of(const MsmKernel& k) {
  std::vector<oracle::Term> t;
  for (const auto& c : k.components()) t.push_back({c.variance, c.decay, c.center_freq});
  return t;
}

}  // namespace

TEST_CASE("matern12 values") {
  CHECK(matern12(0.0, 2.5, 3.0) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(matern12(1.0 / 7.0, 1.0, 7.0) == doctest::Approx(0.36787944117144233).epsilon(1e-14));
  CHECK(matern12(0.2, 1.7, 4.0) == doctest::Approx(1.7 * std::exp(-0.8)).epsilon(1e-14));
  CHECK_THROWS_AS(matern12(0.1, 1.0, 0.0), InvalidParameter);
  CHECK_THROWS_AS(matern12(0.1, 1.0, -2.0), InvalidParameter);
}

TEST_CASE("matern12 strictly decreasing in the lag") {
  double prev = matern12(0.0, 1.3, 5.0);
  for (int i = 1; i < 50; ++i) {
    const double v = matern12(0.01 * i, 1.3, 5.0);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("cosine kernel values") {
  CHECK(cosine_kernel(0.0, 261.6) == 1.0);
  CHECK(cosine_kernel(1.0 / (2.0 * 440.0), 440.0) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(cosine_kernel(0.001, 261.6) == doctest::Approx(std::cos(2.0 * oracle::kPi * 0.2616)).epsilon(1e-14));
  CHECK(cosine_kernel(0.123 + 1.0 / 261.6, 261.6) == doctest::Approx(cosine_kernel(0.123, 261.6)).epsilon(1e-9));
}

TEST_CASE("msm_eval against term-by-term evaluation") {
  const MsmKernel single({LorentzianComponent{1.0, 1.0, 0.0}});
  CHECK(msm_eval(single, 0.5) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));

  const LorentzianComponent a = LorentzianComponent::from_hz(0.7, 0.05, 261.6);
  const LorentzianComponent b = LorentzianComponent::from_hz(0.2, 0.2, 523.2);
  const MsmKernel two({a, b});
  CHECK(msm_eval(two, 0.0) == doctest::Approx(0.9).epsilon(1e-15));
  const double r = 0.3;
  const double expected = 0.7 * std::exp(-r / 0.05) * std::cos(2 * oracle::kPi * 261.6 * r) +
                          0.2 * std::exp(-r / 0.2) * std::cos(2 * oracle::kPi * 523.2 * r);
  CHECK(msm_eval(two, r) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(MsmKernel(std::vector<LorentzianComponent>{}), InvalidParameter);
}

TEST_CASE("kernel is even and reduces to matern12") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lag(-0.5, 0.5);
  for (int i = 0; i < 20; ++i) {
    const MsmKernel k = random_kernel(rng);
    const double r = lag(rng);
    CHECK(msm_eval(k, r) == msm_eval(k, -r));
  }
  const MsmKernel m({LorentzianComponent{1.9, 6.0, 0.0}});
  for (double r : {0.0, 0.01, 0.3, 2.0}) CHECK(msm_eval(m, r) == matern12(r, 1.9, 6.0));
}

TEST_CASE("components are kept in descending variance order") {
  const MsmKernel k({LorentzianComponent{0.1, 1.0, 5.0}, LorentzianComponent{0.9, 1.0, 7.0},
                     LorentzianComponent{0.5, 1.0, 1.0}});
  REQUIRE(k.size() == 3);
  CHECK(k.components()[0].variance == 0.9);
  CHECK(k.components()[1].variance == 0.5);
  CHECK(k.components()[2].variance == 0.1);
}

TEST_CASE("component validation") {
  CHECK_THROWS_AS(LorentzianComponent::from_hz(1.0, 0.0, 100.0), InvalidParameter);
  CHECK_THROWS_AS(LorentzianComponent::from_hz(-1.0, 0.1, 100.0), InvalidParameter);
  CHECK_THROWS_AS(LorentzianComponent::from_hz(1.0, 0.1, -100.0), InvalidParameter);
  const auto c = LorentzianComponent::from_hz(0.3, 0.25, 440.0);
  CHECK(c.decay == doctest::Approx(4.0));
  CHECK(c.freq_hz() == doctest::Approx(440.0).epsilon(1e-14));
  CHECK(c.lengthscale_s() == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("spectral density at the centre and symmetry") {
  const LorentzianComponent c{0.8, 5.0, 2000.0};
  const MsmKernel k({c});
  const double peak = 2 * oracle::kPi * 0.8 / 5.0;
  const double mirror = 2 * oracle::kPi * 0.8 * 5.0 / (25.0 + 4.0 * 2000.0 * 2000.0);
  CHECK(msm_spectral_density(k, 2000.0) == doctest::Approx(peak + mirror).epsilon(1e-14));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> w(-30000.0, 30000.0);
  for (int i = 0; i < 20; ++i) {
    const MsmKernel r = random_kernel(rng);
    const double x = w(rng);
    CHECK(msm_spectral_density(r, x) == doctest::Approx(msm_spectral_density(r, -x)).epsilon(1e-14));
    CHECK(msm_spectral_density(r, x) > 0.0);
  }
}

TEST_CASE("spectral density of two components at omega = 100 is four Lorentzians") {
  const LorentzianComponent a{0.4, 3.0, 90.0}, b{1.1, 20.0, 300.0};
  const MsmKernel k({a, b});
  auto l = [](double w, double v, double d, double c) { return 2 * oracle::kPi * v * d / (d * d + (w - c) * (w - c)); };
  const double expected = l(100, 0.4, 3, 90) + l(-100, 0.4, 3, 90) + l(100, 1.1, 20, 300) + l(-100, 1.1, 20, 300);
  CHECK(msm_spectral_density(k, 100.0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("gram matrix matches a brute-force double loop") {
  const MsmKernel k({LorentzianComponent::from_hz(0.5, 0.1, 261.6), LorentzianComponent::from_hz(0.3, 0.05, 523.0),
                     LorentzianComponent::from_hz(0.2, 0.3, 784.0)});
  const std::vector<double> one{0.0};
  const auto g1 = build_gram(k, one, one, 0.0);
  CHECK(g1.values.rows() == 1);
  CHECK(g1.values(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> t(0.0, 0.02);
  std::vector<double> ta(5), tb(4);
  for (auto& x : ta) x = t(rng);
  for (auto& x : tb) x = t(rng);
  const auto g = build_gram(k, ta, tb, 0.0);
  const Eigen::MatrixXd ref = oracle::gram(terms_of(k), ta, tb);
  CHECK((g.values - ref).cwiseAbs().maxCoeff() < 1e-14);

  const auto sq = build_gram(k, ta, ta, 1e-6);
  CHECK(sq.jitter == 1e-6);
  CHECK((sq.values - sq.values.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  const Eigen::MatrixXd ref_sq = oracle::gram(terms_of(k), ta, ta) + 1e-6 * Eigen::MatrixXd::Identity(5, 5);
  CHECK((sq.values - ref_sq).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS_AS(build_gram(k, ta, ta, -1.0), InvalidParameter);
}

TEST_CASE("jittered gram matrices of random kernels are positive semidefinite") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(2, 64);
  std::uniform_real_distribution<double> t(0.0, 0.05);
  for (int trial = 0; trial < 100; ++trial) {
    const MsmKernel k = random_kernel(rng);
    std::vector<double> times(static_cast<std::size_t>(size(rng)));
    for (auto& x : times) x = t(rng);
    const auto g = build_gram(k, times, times, 1e-6);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.values, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
  }
}

// The density definition used here is 2 pi times the Fourier transform of the
// kernel, so the DFT is scaled by 2 pi before comparing. The grid is long
// enough for exp(-decay T) to be negligible; the remaining error comes from
// the sampling step.
TEST_CASE("numerical Wiener-Khintchine at the peak bin") {
  for (const auto& c : {LorentzianComponent{1.0, 10.0, 2 * oracle::kPi * 50.0},
                        LorentzianComponent{0.5, 40.0, 2 * oracle::kPi * 200.0},
                        LorentzianComponent{2.0, 100.0, 2 * oracle::kPi * 440.0}}) {
    const MsmKernel k({c});
    const double dt = 1.0 / 16000.0;
    const int n = 1 << 20;  // 65 s, exp(-10 * 32) ~ 0
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) {
      const int lag = i <= n / 2 ? i : i - n;
      x[static_cast<std::size_t>(i)] = msm_eval(k, lag * dt);
    }
    std::vector<fftw_complex> out(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(n, x.data(), out.data(), FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    const double df = 1.0 / (n * dt);
    std::size_t peak = 0;
    double best = -1.0;
    for (std::size_t b = 0; b < out.size(); ++b) {
      if (out[b][0] > best) {
        best = out[b][0];
        peak = b;
      }
    }
    const double numeric = 2 * oracle::kPi * dt * best;
    const double analytic = msm_spectral_density(k, 2 * oracle::kPi * df * static_cast<double>(peak));
    CHECK(std::abs(peak * df - c.freq_hz()) <= df);
    CHECK(std::abs(numeric - analytic) / analytic < 0.05);
  }
}

TEST_CASE("scale and merge") {
  const MsmKernel a({LorentzianComponent{0.5, 2.0, 10.0}, LorentzianComponent{0.25, 3.0, 20.0}});
  const MsmKernel b({LorentzianComponent{1.0, 1.0, 30.0}});
  CHECK(a.total_variance() == 0.75);
  const MsmKernel s = a.scaled(4.0);
  CHECK(s.total_variance() == doctest::Approx(3.0));
  CHECK(s.components()[0].decay == 2.0);
  CHECK_THROWS_AS(a.scaled(0.0), InvalidParameter);

  const std::vector<MsmKernel> both{a, b};
  const MsmKernel m = MsmKernel::merge(both);
  CHECK(m.size() == 3);
  for (double w : {0.0, 9.0, 21.0, 31.0, 500.0}) {
    CHECK(msm_spectral_density(m, w) ==
          doctest::Approx(msm_spectral_density(a, w) + msm_spectral_density(b, w)).epsilon(1e-13));
  }
  CHECK(default_jitter(a) == doctest::Approx(0.75e-6));
}
