#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace msmgp {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// One shifted Matérn-1/2 term: variance * exp(-decay |r|) * cos(center_freq r).
/// decay and center_freq are angular (rad/s); file formats use seconds and Hz.
struct LorentzianComponent {
  double variance = 1.0;
  double decay = 1.0;
  double center_freq = 0.0;

  /// Throws InvalidParameter unless decay > 0, variance >= 0, center_freq >= 0.
  void validate() const;

  double lengthscale_s() const { return 1.0 / decay; }
  double freq_hz() const { return center_freq / kTwoPi; }

  static LorentzianComponent from_hz(double variance, double lengthscale_s, double freq_hz);
};

/// Matérn spectral mixture kernel. Components are kept sorted by descending
/// variance (ties broken by ascending center frequency) so that serialised
/// kernels are canonical.
class MsmKernel {
 public:
  explicit MsmKernel(std::vector<LorentzianComponent> components);

  const std::vector<LorentzianComponent>& components() const noexcept { return components_; }
  std::size_t size() const noexcept { return components_.size(); }

  /// k(0) = sum of component variances.
  double total_variance() const noexcept;

  /// Same kernel with every variance multiplied by factor (> 0).
  MsmKernel scaled(double factor) const;

  /// Concatenation of components; spectral densities add.
  static MsmKernel merge(std::span<const MsmKernel> kernels);

 private:
  std::vector<LorentzianComponent> components_;
};

double matern12(double r, double variance, double decay);

double cosine_kernel(double r, double f0_hz);

/// L(omega; theta) = 2 pi var decay / (decay^2 + (omega - center)^2).
double lorentzian(double omega, const LorentzianComponent& c);

double msm_eval(const MsmKernel& k, double r);

/// Sum over components of L(omega) + L(-omega). Even in omega.
double msm_spectral_density(const MsmKernel& k, double omega);

struct GramMatrix {
  Eigen::MatrixXd values;
  double jitter = 0.0;
};

/// Default diagonal jitter: 1e-6 times the mean prior variance.
double default_jitter(const MsmKernel& k, double relative = 1e-6);

/// Entry (i, j) = msm_eval(k, a[i] - b[j]). jitter * I is added only when a
/// and b hold identical times.
GramMatrix build_gram(const MsmKernel& k, std::span<const double> times_a,
                      std::span<const double> times_b, double jitter);

}  // namespace msmgp
