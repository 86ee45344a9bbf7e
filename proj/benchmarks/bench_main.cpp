#include <cmath>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "msmgp/elbo.hpp"
#include "msmgp/kernels.hpp"
#include "msmgp/models.hpp"
#include "msmgp/quadrature.hpp"
#include "msmgp/spectral_fit.hpp"

using namespace msmgp;

namespace {

const MsmKernel kComp({LorentzianComponent::from_hz(1.0, 0.01, 300.0), LorentzianComponent::from_hz(0.4, 0.02, 600.0)});

Dataset tone(std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    d.times.push_back(static_cast<double>(i) / 16000.0);
    d.values.push_back(std::sin(kTwoPi * 300.0 * d.times.back()) + 0.05 * n01(rng));
  }
  return d;
}

ModelSpec spec(std::size_t sources, ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  for (std::size_t i = 0; i < sources; ++i) {
    s.component_kernels.push_back(kComp.scaled(1.0 + static_cast<double>(i)));
    s.activation_kernels.push_back(default_activation_kernel());
    s.pitch_labels.push_back("p" + std::to_string(i));
  }
  if (kind == ModelKind::Softmax) s.silence_kernel = default_activation_kernel();
  return s;
}

}  // namespace

static void BM_ExpectLoglik2d(benchmark::State& state) {
  const auto r = gh_rule(static_cast<int>(state.range(0)));
  double y = 0.3;
  for (auto _ : state) benchmark::DoNotOptimize(expect_loglik_2d(y, 0.2, 0.5, 0.1, 0.8, 0.1, r));
}
BENCHMARK(BM_ExpectLoglik2d)->Arg(20)->Arg(40);

static void BM_ExpectLoglik1dDecomp(benchmark::State& state) {
  const auto r = gh_rule(static_cast<int>(state.range(0)));
  double y = 0.3;
  for (auto _ : state) benchmark::DoNotOptimize(expect_loglik_1d_decomp(y, 0.2, 0.5, 0.1, 0.8, 0.1, r));
}
BENCHMARK(BM_ExpectLoglik1dDecomp)->Arg(20)->Arg(40);

static void BM_SoftmaxPoint(benchmark::State& state) {
  const std::vector<GaussianMoment> acts{{0.1, 0.5}, {0.3, 0.7}, {-0.2, 0.4}};
  const std::vector<GaussianMoment> comps{{0.2, 0.3}, {-0.5, 0.6}};
  const MonteCarloConfig mc{static_cast<std::size_t>(state.range(0)), 1};
  for (auto _ : state) benchmark::DoNotOptimize(softmax_point_loglik(0.2, acts, comps, 0.1, mc, 0));
}
BENCHMARK(BM_SoftmaxPoint)->Arg(100)->Arg(2000);

static void BM_ElboWithGradient(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = tone(n);
  ElboOptions o;
  o.noise_var = 0.01;
  const ElboProblem p(spec(2, ModelKind::Sigmoid), InducingSet::uniform(0.0, d.times.back(), n / 2), d, o,
                      InducingSet::uniform(0.0, d.times.back(), 2));
  const Eigen::VectorXd x = p.initial_parameters();
  Eigen::VectorXd g;
  for (auto _ : state) benchmark::DoNotOptimize(p.evaluate(x, g).elbo);
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_ElboWithGradient)->Arg(80)->Arg(160);

static void BM_ComponentUpdate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = tone(n);
  ElboOptions o;
  o.noise_var = 0.01;
  const ElboProblem p(spec(2, ModelKind::Sigmoid), InducingSet::uniform(0.0, d.times.back(), n / 2), d, o,
                      InducingSet::uniform(0.0, d.times.back(), 2));
  const Eigen::VectorXd x0 = p.initial_parameters();
  Eigen::VectorXd g;
  for (auto _ : state) {
    Eigen::VectorXd x = x0;
    benchmark::DoNotOptimize(p.update_components_then_evaluate(x, g).elbo);
  }
}
BENCHMARK(BM_ComponentUpdate)->Arg(80)->Arg(160);

static void BM_SpectralFit(benchmark::State& state) {
  MagnitudeSpectrum s;
  s.sample_rate = 16000.0;
  s.source_duration = 2.0;
  const std::size_t bins = 16385;
  for (std::size_t k = 0; k < bins; ++k) s.freqs.push_back(static_cast<double>(k) * 8000.0 / (bins - 1));
  s.mags.assign(bins, 0.0);
  const MsmKernel truth = init_manual(261.63, 10, 0.1, 0.2);
  s = spectrum_of(truth, s);
  for (auto _ : state) benchmark::DoNotOptimize(fit_msm_frequency_domain(s, 10).components.size());
}
BENCHMARK(BM_SpectralFit);
BENCHMARK_MAIN();
