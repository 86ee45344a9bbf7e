#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "msmgp/kernels.hpp"

namespace msmgp {

/// Inducing inputs Z, strictly increasing.
class InducingSet {
 public:
  explicit InducingSet(std::vector<double> points);

  /// count points at the centres of count equal cells spanning [t_begin, t_end].
  static InducingSet uniform(double t_begin, double t_end, std::size_t count);

  std::span<const double> points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }

 private:
  std::vector<double> points_;
};

/// q(u) = N(mean, cov_chol cov_chol^T).
struct VariationalGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov_chol;

  std::size_t size() const noexcept { return static_cast<std::size_t>(mean.size()); }
  /// Throws InvalidParameter unless cov_chol is square, lower triangular with
  /// a strictly positive diagonal, and matches mean.
  void validate() const;
};

struct MarginalMoments {
  Eigen::VectorXd means;
  Eigen::VectorXd vars;
  std::size_t clipped = 0;  ///< variances raised to kMinMarginalVariance
};

inline constexpr double kMinMarginalVariance = 1e-12;

/// Cholesky factor of k + jitter I. When the factorisation fails the jitter
/// is multiplied by 10 until it reaches max_relative times the mean diagonal;
/// past that NumericalFailure is thrown with a condition estimate.
Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& k, double jitter, double max_relative = 1e-3);

/// Sparse GP marginals q(f_n) at the given times:
///   mean = A m, var = diag(K_tt - A K_zz A^T + A S A^T), A = K_tz K_zz^-1.
MarginalMoments predict_marginals(const MsmKernel& kernel, const InducingSet& z, const VariationalGaussian& q,
                                  std::span<const double> times, double jitter);

/// KL(N(m, S) || N(0, K)) given the Cholesky factor of K.
double kl_gaussian(const VariationalGaussian& q, const Eigen::MatrixXd& prior_chol);

/// Quantities for one process that depend only on the (frozen) kernel, Z and
/// the data times. With whitened variables v = Lzz^-1 u the marginals are
///   mean = proj m~, var = residual_var + rowsum((proj L~)^2).
struct WhitenedProjection {
  Eigen::MatrixXd prior_chol;     ///< chol(K_zz + jitter I)
  Eigen::MatrixXd proj;           ///< K_tz Lzz^-T, N x M
  Eigen::VectorXd residual_var;   ///< diag(K_tt) - rowsum(proj^2), floored at 0

  static WhitenedProjection build(const MsmKernel& kernel, const InducingSet& z, std::span<const double> times,
                                  double jitter);
};

/// Maps between u-space and whitened q for a process with prior factor Lzz.
VariationalGaussian unwhiten(const VariationalGaussian& whitened, const Eigen::MatrixXd& prior_chol);
VariationalGaussian whiten(const VariationalGaussian& q, const Eigen::MatrixXd& prior_chol);

/// Inducing points plus one q(u) per process. Softmax models put the silence
/// activation first in `activations`.
struct VariationalState {
  InducingSet inducing{std::vector<double>{0.0}};
  std::vector<VariationalGaussian> components;
  std::vector<VariationalGaussian> activations;
  /// Separate (usually sparser) inducing points for the slow activation
  /// processes; unset means they share `inducing`.
  std::optional<InducingSet> activation_inducing;

  const InducingSet& activation_points() const noexcept {
    return activation_inducing ? *activation_inducing : inducing;
  }
};

}  // namespace msmgp
