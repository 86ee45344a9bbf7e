#include "msmgp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "msmgp/error.hpp"

namespace msmgp {

void LorentzianComponent::validate() const {
  if (!(decay > 0.0) || !std::isfinite(decay)) {
    throw InvalidParameter("Lorentzian decay must be positive and finite, got " + std::to_string(decay));
  }
  if (!(variance >= 0.0) || !std::isfinite(variance)) {
    throw InvalidParameter("Lorentzian variance must be non-negative, got " + std::to_string(variance));
  }
  if (!(center_freq >= 0.0) || !std::isfinite(center_freq)) {
    throw InvalidParameter("Lorentzian center frequency must be non-negative, got " +
                           std::to_string(center_freq));
  }
}

LorentzianComponent LorentzianComponent::from_hz(double variance, double lengthscale_s, double freq_hz) {
  if (!(lengthscale_s > 0.0)) {
    throw InvalidParameter("lengthscale must be positive, got " + std::to_string(lengthscale_s));
  }
  LorentzianComponent c{variance, 1.0 / lengthscale_s, kTwoPi * freq_hz};
  c.validate();
  return c;
}

MsmKernel::MsmKernel(std::vector<LorentzianComponent> components) : components_(std::move(components)) {
  if (components_.empty()) {
    throw InvalidParameter("MsmKernel needs at least one component");
  }
  for (const auto& c : components_) c.validate();
  std::stable_sort(components_.begin(), components_.end(), [](const auto& a, const auto& b) {
    if (a.variance != b.variance) return a.variance > b.variance;
    return a.center_freq < b.center_freq;
  });
}

double MsmKernel::total_variance() const noexcept {
  double s = 0.0;
  for (const auto& c : components_) s += c.variance;
  return s;
}

MsmKernel MsmKernel::scaled(double factor) const {
  if (!(factor > 0.0)) throw InvalidParameter("kernel scale factor must be positive");
  auto comps = components_;
  for (auto& c : comps) c.variance *= factor;
  return MsmKernel(std::move(comps));
}

MsmKernel MsmKernel::merge(std::span<const MsmKernel> kernels) {
  std::vector<LorentzianComponent> all;
  for (const auto& k : kernels) all.insert(all.end(), k.components().begin(), k.components().end());
  return MsmKernel(std::move(all));
}

double matern12(double r, double variance, double decay) {
  if (!(decay > 0.0)) throw InvalidParameter("matern12: decay must be positive");
  return variance * std::exp(-decay * std::abs(r));
}

double cosine_kernel(double r, double f0_hz) { return std::cos(kTwoPi * f0_hz * r); }

double lorentzian(double omega, const LorentzianComponent& c) {
  const double d = omega - c.center_freq;
  return kTwoPi * c.variance * c.decay / (c.decay * c.decay + d * d);
}

double msm_eval(const MsmKernel& k, double r) {
  const double ar = std::abs(r);
  double s = 0.0;
  for (const auto& c : k.components()) {
    s += c.variance * std::exp(-c.decay * ar) * std::cos(c.center_freq * r);
  }
  return s;
}

double msm_spectral_density(const MsmKernel& k, double omega) {
  double s = 0.0;
  for (const auto& c : k.components()) s += lorentzian(omega, c) + lorentzian(-omega, c);
  return s;
}

double default_jitter(const MsmKernel& k, double relative) { return relative * k.total_variance(); }

GramMatrix build_gram(const MsmKernel& k, std::span<const double> times_a, std::span<const double> times_b,
                      double jitter) {
  if (times_a.empty() || times_b.empty()) throw InvalidInput("build_gram: empty time vector");
  if (jitter < 0.0) throw InvalidParameter("build_gram: jitter must be non-negative");
  const auto na = static_cast<Eigen::Index>(times_a.size());
  const auto nb = static_cast<Eigen::Index>(times_b.size());
  GramMatrix g;
  g.values.setZero(na, nb);
  // Column-major fill, one component at a time keeps the inner loop branch free.
  for (const auto& c : k.components()) {
    for (Eigen::Index j = 0; j < nb; ++j) {
      const double tb = times_b[static_cast<std::size_t>(j)];
      double* col = g.values.col(j).data();
      for (Eigen::Index i = 0; i < na; ++i) {
        const double r = times_a[static_cast<std::size_t>(i)] - tb;
        col[i] += c.variance * std::exp(-c.decay * std::abs(r)) * std::cos(c.center_freq * r);
      }
    }
  }
  const bool same = na == nb && std::equal(times_a.begin(), times_a.end(), times_b.begin());
  if (same && jitter > 0.0) {
    g.values.diagonal().array() += jitter;
    g.jitter = jitter;
  }
  return g;
}

}  // namespace msmgp
