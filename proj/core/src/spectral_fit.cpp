#include "msmgp/spectral_fit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <memory>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <fftw3.h>

#include "msmgp/error.hpp"
#include "msmgp/vgp.hpp"

namespace msmgp {
namespace {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

// Local least squares of one Lorentzian against the residual spectrum in a
// window. Parameters: log variance, log decay, centre (rad/s).
struct LocalFit {
  LorentzianComponent component;
  bool converged = false;
};

LocalFit fit_lorentzian(std::span<const double> omega, std::span<const double> target,
                        const LorentzianComponent& init, double omega_lo, double omega_hi, int max_iters) {
  using Vec3 = Eigen::Vector3d;
  using Mat3 = Eigen::Matrix3d;
  const std::size_t n = omega.size();

  auto cost_of = [&](const Vec3& p) {
    const LorentzianComponent c{std::exp(p(0)), std::exp(p(1)), p(2)};
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double r = lorentzian(omega[k], c) - target[k];
      s += r * r;
    }
    return s;
  };

  Vec3 p(std::log(init.variance), std::log(init.decay), init.center_freq);
  double cost = cost_of(p);
  double mu = 1e-3;
  LocalFit out{init, false};
  if (!std::isfinite(cost)) return out;

  for (int it = 0; it < max_iters; ++it) {
    const double var = std::exp(p(0));
    const double lam = std::exp(p(1));
    Mat3 jtj = Mat3::Zero();
    Vec3 jtr = Vec3::Zero();
    for (std::size_t k = 0; k < n; ++k) {
      const double d = omega[k] - p(2);
      const double den = lam * lam + d * d;
      const double l = kTwoPi * var * lam / den;
      Vec3 j;
      j(0) = l;
      j(1) = kTwoPi * var * lam * (d * d - lam * lam) / (den * den);
      j(2) = kTwoPi * var * lam * 2.0 * d / (den * den);
      const double r = l - target[k];
      jtj.noalias() += j * j.transpose();
      jtr.noalias() += j * r;
    }
    // Marquardt damping on the diagonal; retry with larger damping until the cost drops.
    bool stepped = false;
    for (int tries = 0; tries < 40; ++tries) {
      Mat3 a = jtj;
      a.diagonal() += mu * jtj.diagonal().cwiseMax(1e-300);
      const Vec3 step = a.ldlt().solve(-jtr);
      const Vec3 cand = p + step;
      const double c = cost_of(cand);
      if (std::isfinite(c) && c <= cost) {
        const double rel_drop = (cost - c) / std::max(cost, 1e-300);
        const bool small_step = std::abs(step(0)) < 1e-12 && std::abs(step(1)) < 1e-12 &&
                                std::abs(step(2)) < 1e-12 * std::max(1.0, std::abs(p(2)));
        p = cand;
        cost = c;
        mu = std::max(mu / 3.0, 1e-12);
        stepped = true;
        if (rel_drop < 1e-14 || small_step) {
          out.converged = true;
        }
        break;
      }
      mu *= 4.0;
      if (mu > 1e16) break;
    }
    // No damping level improves the cost: a stationary point up to rounding.
    if (!stepped) out.converged = true;
    if (out.converged) break;
  }

  const LorentzianComponent fitted{std::exp(p(0)), std::exp(p(1)), p(2)};
  const bool in_window = fitted.center_freq >= omega_lo && fitted.center_freq <= omega_hi;
  if (!out.converged || !in_window || !std::isfinite(fitted.variance) || !std::isfinite(fitted.decay)) {
    out.converged = false;
    return out;
  }
  out.component = fitted;
  return out;
}

double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

void MagnitudeSpectrum::validate() const {
  if (freqs.size() != mags.size() || freqs.size() < 2) throw InvalidInput("spectrum needs matching freqs/mags");
  if (freqs[0] != 0.0) throw InvalidInput("spectrum must start at 0 Hz");
  for (double m : mags) {
    if (!(m >= 0.0)) throw InvalidInput("spectrum magnitudes must be non-negative");
  }
}

MagnitudeSpectrum magnitude_ft(std::span<const double> samples, double sample_rate, SpectrumWindow window) {
  if (samples.empty()) throw InvalidInput("magnitude_ft: empty signal");
  if (samples.size() < 2) throw InvalidInput("magnitude_ft: need at least two samples");
  if (!(sample_rate > 0.0)) throw InvalidParameter("magnitude_ft: sample rate must be positive");
  const std::size_t n = next_pow2(samples.size());
  std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
  std::unique_ptr<fftw_complex, FftwFree> out(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1))));
  std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan(
      fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE));
  if (!plan) throw NumericalFailure("FFTW could not create a plan");

  const std::size_t len = samples.size();
  for (std::size_t i = 0; i < n; ++i) {
    double w = 1.0;
    if (window == SpectrumWindow::Hann && len > 1) {
      w = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(len - 1));
    }
    in.get()[i] = i < len ? samples[i] * w : 0.0;
  }
  fftw_execute(plan.get());

  MagnitudeSpectrum spec;
  spec.sample_rate = sample_rate;
  spec.source_duration = static_cast<double>(len) / sample_rate;
  spec.freqs.resize(n / 2 + 1);
  spec.mags.resize(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    spec.freqs[k] = static_cast<double>(k) * sample_rate / static_cast<double>(n);
    spec.mags[k] = std::hypot(out.get()[k][0], out.get()[k][1]) / sample_rate;
  }
  return spec;
}

MagnitudeSpectrum spectrum_of(const MsmKernel& k, const MagnitudeSpectrum& like) {
  MagnitudeSpectrum s = like;
  for (std::size_t i = 0; i < s.freqs.size(); ++i) s.mags[i] = msm_spectral_density(k, kTwoPi * s.freqs[i]);
  return s;
}

MsmKernel FitReport::kernel() const {
  if (components.empty()) throw InvalidInput("spectral fit found no peaks");
  return MsmKernel(components);
}

FitReport fit_msm_frequency_domain(const MagnitudeSpectrum& spec, std::size_t n_harmonics, double peak_window_hz) {
  SpectralFitOptions opts;
  opts.peak_window_hz = peak_window_hz;
  return fit_msm_frequency_domain(spec, n_harmonics, opts);
}

FitReport fit_msm_frequency_domain(const MagnitudeSpectrum& spec, std::size_t n_harmonics,
                                   const SpectralFitOptions& options) {
  spec.validate();
  if (n_harmonics < 1) throw InvalidParameter("n_harmonics must be at least 1");
  if (!(options.peak_window_hz > 0.0)) throw InvalidParameter("peak window must be positive");

  const std::size_t nb = spec.freqs.size();
  std::vector<double> omega(nb);
  for (std::size_t k = 0; k < nb; ++k) omega[k] = kTwoPi * spec.freqs[k];
  std::vector<double> residual = spec.mags;
  const double bin = spec.bin_width_hz();
  const double global_max = *std::max_element(residual.begin(), residual.end());

  FitReport report;
  report.requested = n_harmonics;
  report.initial_l2 = l2(residual);
  if (!(global_max > 0.0)) return report;

  for (std::size_t i = 0; i < n_harmonics; ++i) {
    const auto peak_it = std::max_element(residual.begin(), residual.end());
    const double height = *peak_it;
    if (height < options.noise_floor_relative * global_max) break;
    const auto peak = static_cast<std::size_t>(peak_it - residual.begin());

    const double lambda_init = kTwoPi * 2.0 * bin;
    const LorentzianComponent init{height * lambda_init / kTwoPi, lambda_init, omega[peak]};

    const double f_lo = spec.freqs[peak] - options.peak_window_hz;
    const double f_hi = spec.freqs[peak] + options.peak_window_hz;
    const auto lo = static_cast<std::size_t>(std::lower_bound(spec.freqs.begin(), spec.freqs.end(), f_lo) -
                                             spec.freqs.begin());
    const auto hi = static_cast<std::size_t>(std::upper_bound(spec.freqs.begin(), spec.freqs.end(), f_hi) -
                                             spec.freqs.begin());
    const std::span<const double> w_omega(omega.data() + lo, hi - lo);
    const std::span<const double> w_target(residual.data() + lo, hi - lo);
    const auto local = fit_lorentzian(w_omega, w_target, init, kTwoPi * std::max(f_lo, 0.0), kTwoPi * f_hi,
                                      options.max_solver_iters);

    const auto& theta = local.component;
    for (std::size_t k = 0; k < nb; ++k) {
      const double l = lorentzian(omega[k], theta);
      residual[k] = options.residual == ResidualRule::AbsoluteDifference ? std::abs(l - residual[k])
                                                                         : std::max(residual[k] - l, 0.0);
    }
    report.components.push_back(theta);
    report.peak_freqs_hz.push_back(spec.freqs[peak]);
    report.fallback.push_back(!local.converged);
    report.residual_l2.push_back(l2(residual));
  }
  return report;
}

MsmKernel init_manual(double f0_hz, std::size_t n_harmonics, double variance, double lengthscale_s) {
  if (!(f0_hz > 0.0)) throw InvalidParameter("init_manual: f0 must be positive");
  if (n_harmonics < 1) throw InvalidParameter("init_manual: need at least one harmonic");
  std::vector<LorentzianComponent> comps;
  comps.reserve(n_harmonics);
  for (std::size_t j = 1; j <= n_harmonics; ++j) {
    comps.push_back(LorentzianComponent::from_hz(variance, lengthscale_s, static_cast<double>(j) * f0_hz));
  }
  return MsmKernel(std::move(comps));
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct LmlEval {
  double value = 0.0;
  Eigen::VectorXd grad;  // w.r.t. (log var, log decay, centre / freq scale) per component
};

// Returns false when K + noise I is not positive definite.
bool evaluate_lml(const std::vector<LorentzianComponent>& comps, const Eigen::VectorXd& y,
                  std::span<const double> times, double noise_var, double omega_scale, bool want_grad,
                  LmlEval& out) {
  const auto n = y.size();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (const auto& c : comps) {
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = j; i < n; ++i) {
        const double r = times[static_cast<std::size_t>(i)] - times[static_cast<std::size_t>(j)];
        const double v = c.variance * std::exp(-c.decay * std::abs(r)) * std::cos(c.center_freq * r);
        k(i, j) += v;
      }
    }
  }
  k.diagonal().array() += noise_var;
  Eigen::LLT<Eigen::MatrixXd> llt(k.selfadjointView<Eigen::Lower>());
  if (llt.info() != Eigen::Success) return false;
  const Eigen::VectorXd alpha = llt.solve(y);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  out.value = -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * kLog2Pi;
  if (!std::isfinite(out.value)) return false;
  if (!want_grad) return true;

  Eigen::MatrixXd w = alpha * alpha.transpose() - llt.solve(Eigen::MatrixXd::Identity(n, n));
  out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * comps.size()));
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const auto& comp = comps[c];
    double g_var = 0.0, g_decay = 0.0, g_freq = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = j; i < n; ++i) {
        const double r = times[static_cast<std::size_t>(i)] - times[static_cast<std::size_t>(j)];
        const double ar = std::abs(r);
        const double e = comp.variance * std::exp(-comp.decay * ar);
        const double cs = std::cos(comp.center_freq * r);
        const double sn = std::sin(comp.center_freq * r);
        const double weight = (i == j ? 1.0 : 2.0) * w(i, j);
        g_var += weight * e * cs;
        g_decay += weight * (-comp.decay * ar) * e * cs;
        g_freq += weight * (-r) * e * sn;
      }
    }
    out.grad(static_cast<Eigen::Index>(3 * c)) = 0.5 * g_var;
    out.grad(static_cast<Eigen::Index>(3 * c + 1)) = 0.5 * g_decay;
    out.grad(static_cast<Eigen::Index>(3 * c + 2)) = 0.5 * g_freq * omega_scale;
  }
  return true;
}

std::vector<LorentzianComponent> from_params(const Eigen::VectorXd& x, double omega_scale) {
  std::vector<LorentzianComponent> comps(static_cast<std::size_t>(x.size() / 3));
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const auto i = static_cast<Eigen::Index>(3 * c);
    comps[c] = {std::exp(x(i)), std::exp(x(i + 1)), std::abs(x(i + 2) * omega_scale)};
  }
  return comps;
}

}  // namespace

double log_marginal_likelihood(const MsmKernel& k, std::span<const double> samples, std::span<const double> times,
                               double noise_var) {
  if (samples.size() != times.size() || samples.empty()) throw InvalidInput("samples and times must match");
  if (!(noise_var > 0.0)) throw InvalidParameter("noise variance must be positive");
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(samples.data(), static_cast<Eigen::Index>(samples.size()));
  LmlEval e;
  if (!evaluate_lml(k.components(), y, times, noise_var, 1.0, false, e)) {
    throw NumericalFailure("log marginal likelihood: covariance is not positive definite");
  }
  return e.value;
}

MlRefineResult refine_marginal_likelihood(const MsmKernel& k0, std::span<const double> samples,
                                          std::span<const double> times, int max_iters,
                                          const MlRefineOptions& options) {
  if (samples.size() != times.size() || samples.empty()) throw InvalidInput("samples and times must match");
  if (samples.size() > 4096) throw InvalidInput("marginal likelihood refinement is limited to 4096 samples");
  if (max_iters < 0) throw InvalidParameter("max_iters must be non-negative");

  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(samples.data(), static_cast<Eigen::Index>(samples.size()));
  double noise = options.noise_var;
  if (!(noise > 0.0)) noise = std::max(1e-3 * y.squaredNorm() / static_cast<double>(y.size()), 1e-10);
  const double omega_scale = kTwoPi * options.freq_scale_hz;

  MlRefineResult result{k0, 0.0, 0.0, {}, false, {}};

  // Escalate a diagonal nugget up to 1e-3 of k(0) before giving up.
  const double ceiling = 1e-3 * k0.total_variance();
  double nugget = 0.0;
  LmlEval cur;
  for (;;) {
    if (evaluate_lml(k0.components(), y, times, noise + nugget, omega_scale, max_iters > 0, cur)) break;
    if (nugget >= ceiling) {
      result.failed = true;
      result.failure = "Cholesky failed after jitter escalation";
      return result;
    }
    nugget = nugget > 0.0 ? std::min(10.0 * nugget, ceiling) : 1e-8 * k0.total_variance();
  }
  const double nv = noise + nugget;
  result.initial_lml = cur.value;
  result.final_lml = cur.value;
  result.lml_trace.push_back(cur.value);
  if (max_iters == 0) return result;

  Eigen::VectorXd x(static_cast<Eigen::Index>(3 * k0.size()));
  for (std::size_t c = 0; c < k0.size(); ++c) {
    const auto& comp = k0.components()[c];
    const auto i = static_cast<Eigen::Index>(3 * c);
    x(i) = std::log(std::max(comp.variance, 1e-300));
    x(i + 1) = std::log(comp.decay);
    x(i + 2) = comp.center_freq / omega_scale;
  }

  double step = options.initial_step;
  for (int it = 0; it < max_iters; ++it) {
    const double gnorm = cur.grad.norm();
    if (!(gnorm > 0.0) || !std::isfinite(gnorm)) break;
    const Eigen::VectorXd dir = cur.grad / gnorm;
    bool accepted = false;
    for (int tries = 0; tries < 40 && !accepted; ++tries) {
      const Eigen::VectorXd cand = x + step * dir;
      LmlEval next;
      if (evaluate_lml(from_params(cand, omega_scale), y, times, nv, omega_scale, true, next) &&
          next.value > cur.value) {
        x = cand;
        cur = std::move(next);
        accepted = true;
        step *= 1.5;
      } else {
        step *= 0.5;
      }
    }
    if (!accepted) break;
    result.lml_trace.push_back(cur.value);
  }
  result.final_lml = cur.value;
  result.kernel = MsmKernel(from_params(x, omega_scale));
  return result;
}

}  // namespace msmgp
