#pragma once

// Synthetic inputs shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "msmgp/spectral_fit.hpp"
#include "oracles.hpp"

namespace synthetic {

struct LorentzianCase {
  std::vector<oracle::Term> truth;  // decay and center in rad/s
  msmgp::MagnitudeSpectrum spectrum;
};

inline msmgp::MagnitudeSpectrum empty_grid(double sample_rate, std::size_t fft_length) {
  msmgp::MagnitudeSpectrum s;
  s.sample_rate = sample_rate;
  s.source_duration = static_cast<double>(fft_length) / sample_rate;
  s.freqs.resize(fft_length / 2 + 1);
  for (std::size_t k = 0; k < s.freqs.size(); ++k) s.freqs[k] = static_cast<double>(k) * sample_rate / fft_length;
  s.mags.assign(s.freqs.size(), 0.0);
  return s;
}

// 3 to 8 Lorentzians, centres at least min_gap_hz apart, half widths of 1 to
// 5 Hz (2 to 10 bins on the 16 kHz / 32768 grid), variances 0.1 to 1.
inline LorentzianCase lorentzian_case(std::mt19937_64& rng, double min_gap_hz = 150.0) {
  std::uniform_int_distribution<int> count(3, 8);
  std::uniform_real_distribution<double> centre(100.0, 7000.0), hwhm(1.0, 5.0), var(0.1, 1.0);
  LorentzianCase c;
  c.spectrum = empty_grid(16000.0, 32768);
  const int n = count(rng);
  std::vector<double> centres;
  while (static_cast<int>(centres.size()) < n) {
    const double f = centre(rng);
    if (std::all_of(centres.begin(), centres.end(), [&](double g) { return std::abs(f - g) >= min_gap_hz; })) {
      centres.push_back(f);
    }
  }
  for (double f : centres) c.truth.push_back({var(rng), 2.0 * oracle::kPi * hwhm(rng), 2.0 * oracle::kPi * f});
  c.spectrum.mags = oracle::lorentzian_spectrum(c.truth, c.spectrum.freqs);
  return c;
}

struct Recovery {
  double worst_center_bins = 0.0;
  double worst_variance_rel = 0.0;
  double worst_decay_rel = 0.0;
  bool residual_monotone = true;
  bool matched = true;
};

// Pairs every generating term with the nearest recovered centre.
inline Recovery score_recovery(const LorentzianCase& c, const msmgp::FitReport& fit) {
  Recovery r;
  const double bin = c.spectrum.bin_width_hz();
  std::vector<bool> used(fit.components.size(), false);
  for (const auto& t : c.truth) {
    std::size_t best = fit.components.size();
    double dist = 1e300;
    for (std::size_t j = 0; j < fit.components.size(); ++j) {
      const double d = std::abs(fit.components[j].center_freq - t.center);
      if (!used[j] && d < dist) {
        dist = d;
        best = j;
      }
    }
    if (best == fit.components.size()) {
      r.matched = false;
      continue;
    }
    used[best] = true;
    const auto& f = fit.components[best];
    r.worst_center_bins = std::max(r.worst_center_bins, dist / (2.0 * oracle::kPi) / bin);
    r.worst_variance_rel = std::max(r.worst_variance_rel, std::abs(f.variance - t.var) / t.var);
    r.worst_decay_rel = std::max(r.worst_decay_rel, std::abs(f.decay - t.decay) / t.decay);
  }
  double prev = fit.initial_l2;
  for (double v : fit.residual_l2) {
    if (v > prev) r.residual_monotone = false;
    prev = v;
  }
  return r;
}

}  // namespace synthetic
