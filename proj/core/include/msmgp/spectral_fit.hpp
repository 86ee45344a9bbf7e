#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "msmgp/kernels.hpp"

namespace msmgp {

/// One-sided magnitude spectrum on bins k * sample_rate / fft_length.
///
/// mags are |DFT_k| / sample_rate, i.e. a Riemann approximation of the
/// continuous Fourier transform magnitude. A unit-amplitude cosine that fills
/// the FFT and sits on a bin centre therefore peaks at 0.5 * fft_length /
/// sample_rate. Only relative heights matter for fitting since variances
/// absorb the scale.
struct MagnitudeSpectrum {
  std::vector<double> freqs;
  std::vector<double> mags;
  double source_duration = 0.0;
  double sample_rate = 0.0;

  double bin_width_hz() const noexcept { return freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0; }
  std::size_t fft_length() const noexcept { return freqs.empty() ? 0 : 2 * (freqs.size() - 1); }
  void validate() const;
};

enum class SpectrumWindow { None, Hann };

/// Zero-pads to the next power of two >= samples.size().
MagnitudeSpectrum magnitude_ft(std::span<const double> samples, double sample_rate,
                               SpectrumWindow window = SpectrumWindow::None);

/// Spectrum on the same grid as `like`, filled with a kernel's spectral density.
MagnitudeSpectrum spectrum_of(const MsmKernel& k, const MagnitudeSpectrum& like);

/// Residual update after each extracted peak.
enum class ResidualRule {
  AbsoluteDifference,  ///< R <- |L - R| pointwise
  Rectified,           ///< R <- max(R - L, 0)
};

struct SpectralFitOptions {
  double peak_window_hz = 40.0;
  ResidualRule residual = ResidualRule::AbsoluteDifference;
  double noise_floor_relative = 1e-6;  ///< stop when the residual peak drops below this times the global max
  int max_solver_iters = 500;
};

struct FitReport {
  std::vector<LorentzianComponent> components;  ///< extraction order
  std::vector<double> peak_freqs_hz;            ///< argmax location for each extraction
  std::vector<double> residual_l2;              ///< residual 2-norm after each extraction
  std::vector<bool> fallback;                   ///< local fit did not converge; initial guess kept
  double initial_l2 = 0.0;
  std::size_t requested = 0;

  bool stopped_early() const noexcept { return components.size() < requested; }
  double total_residual_l2() const noexcept { return residual_l2.empty() ? initial_l2 : residual_l2.back(); }
  /// Throws InvalidInput when no component was found.
  MsmKernel kernel() const;
};

/// Greedy peak-by-peak Lorentzian fitting of a magnitude spectrum.
FitReport fit_msm_frequency_domain(const MagnitudeSpectrum& spec, std::size_t n_harmonics,
                                   const SpectralFitOptions& options);
FitReport fit_msm_frequency_domain(const MagnitudeSpectrum& spec, std::size_t n_harmonics,
                                   double peak_window_hz = 40.0);

/// Perfectly harmonic kernel: centres at j * f0, j = 1..n_harmonics, equal
/// variance and lengthscale.
MsmKernel init_manual(double f0_hz, std::size_t n_harmonics, double variance, double lengthscale_s);

/// Exact GP log marginal likelihood of samples under k plus white noise.
/// Throws NumericalFailure if K + noise I cannot be factorised.
double log_marginal_likelihood(const MsmKernel& k, std::span<const double> samples, std::span<const double> times,
                               double noise_var);

struct MlRefineOptions {
  double noise_var = 0.0;  ///< 0 -> 1e-3 times the mean signal power (floored at 1e-10)
  double initial_step = 0.1;
  double freq_scale_hz = 1.0;  ///< centre frequencies are optimised in units of this many Hz
};

struct MlRefineResult {
  MsmKernel kernel;
  double initial_lml = 0.0;
  double final_lml = 0.0;
  std::vector<double> lml_trace;  ///< accepted iterates, starting with the initial value
  bool failed = false;
  std::string failure;
};

/// Monotone gradient ascent (backtracking) on the exact log marginal
/// likelihood over every component's variance, decay and centre. Limited to
/// 4096 samples.
MlRefineResult refine_marginal_likelihood(const MsmKernel& k0, std::span<const double> samples,
                                          std::span<const double> times, int max_iters,
                                          const MlRefineOptions& options = {});

}  // namespace msmgp
