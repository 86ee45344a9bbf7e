#pragma once

#include <vector>

namespace msmgp {

/// Physicists' Gauss-Hermite rule: integral of h(x) exp(-x^2) dx ~= sum_i w_i h(x_i).
class GaussHermiteRule {
 public:
  GaussHermiteRule(std::vector<double> nodes, std::vector<double> weights);

  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  int order() const noexcept { return static_cast<int>(nodes_.size()); }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

inline constexpr int kTrainingQuadratureOrder = 20;
inline constexpr int kVerificationQuadratureOrder = 40;

/// Nodes and weights from the eigen-decomposition of the Hermite Jacobi
/// matrix (Golub-Welsch). Valid for 1 <= order <= 100.
GaussHermiteRule gh_rule(int order);

double sigmoid(double x) noexcept;

/// E[sigma(g)] for g ~ N(mean, var).
double expect_sigmoid(double mean, double var, const GaussHermiteRule& rule);

/// E[sigma(g)^2] for g ~ N(mean, var).
double expect_sigmoid_sq(double mean, double var, const GaussHermiteRule& rule);

/// E[sigma], E[sigma^2] and their derivatives w.r.t. the Gaussian mean and
/// variance, all from one sweep over the nodes. Derivatives are those of the
/// quadrature sums themselves, so they are exact for the objective the
/// optimiser sees.
struct SigmoidMoments {
  double e1 = 0.0;
  double e2 = 0.0;
  double de1_dmean = 0.0;
  double de1_dvar = 0.0;
  double de2_dmean = 0.0;
  double de2_dvar = 0.0;
};

SigmoidMoments sigmoid_moments(double mean, double var, const GaussHermiteRule& rule);

/// Tensor-product quadrature of E[log N(y | sigma(g) f, noise_var)] with
/// f ~ N(mf, vf) and g ~ N(mg, vg) independent.
double expect_loglik_2d(double y, double mf, double vf, double mg, double vg, double noise_var,
                        const GaussHermiteRule& rule);

/// Same expectation reduced to two 1-D quadratures:
///   -(y^2 - 2 y mf E[s] + (vf + mf^2) E[s^2]) / (2 noise_var) - log(2 pi noise_var) / 2.
double expect_loglik_1d_decomp(double y, double mf, double vf, double mg, double vg, double noise_var,
                               const GaussHermiteRule& rule);

}  // namespace msmgp
