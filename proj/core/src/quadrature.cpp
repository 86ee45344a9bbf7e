#include "msmgp/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "msmgp/error.hpp"

namespace msmgp {
namespace {

constexpr double kSqrtPi = 1.7724538509055160272981674833411;
constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_variance(double var, const char* what) {
  if (!(var >= 0.0)) throw InvalidParameter(std::string(what) + ": variance must be non-negative");
}

void check_noise(double noise_var) {
  if (!(noise_var > 0.0)) throw InvalidParameter("noise variance must be positive");
}

}  // namespace

GaussHermiteRule::GaussHermiteRule(std::vector<double> nodes, std::vector<double> weights)
    : nodes_(std::move(nodes)), weights_(std::move(weights)) {
  if (nodes_.empty() || nodes_.size() != weights_.size()) {
    throw InvalidParameter("Gauss-Hermite rule needs matching non-empty nodes and weights");
  }
}

GaussHermiteRule gh_rule(int order) {
  if (order < 1 || order > 100) {
    throw InvalidParameter("Gauss-Hermite order must lie in [1, 100], got " + std::to_string(order));
  }
  const auto n = static_cast<Eigen::Index>(order);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n > 1 ? n - 1 : 0);
  for (Eigen::Index k = 1; k < n; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k) / 2.0);

  std::vector<double> nodes(static_cast<std::size_t>(order));
  std::vector<double> weights(static_cast<std::size_t>(order));
  if (n == 1) {
    nodes[0] = 0.0;
    weights[0] = kSqrtPi;
    return GaussHermiteRule(std::move(nodes), std::move(weights));
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (eig.info() != Eigen::Success) throw NumericalFailure("Golub-Welsch eigen-decomposition failed");

  for (Eigen::Index i = 0; i < n; ++i) {
    const double v0 = eig.eigenvectors()(0, i);
    nodes[static_cast<std::size_t>(i)] = eig.eigenvalues()(i);
    weights[static_cast<std::size_t>(i)] = kSqrtPi * v0 * v0;
  }
  // Enforce exact symmetry about zero.
  for (std::size_t i = 0, j = nodes.size() - 1; i < j; ++i, --j) {
    const double x = 0.5 * (nodes[j] - nodes[i]);
    const double w = 0.5 * (weights[i] + weights[j]);
    nodes[i] = -x;
    nodes[j] = x;
    weights[i] = w;
    weights[j] = w;
  }
  if (order % 2 == 1) nodes[nodes.size() / 2] = 0.0;
  return GaussHermiteRule(std::move(nodes), std::move(weights));
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double expect_sigmoid(double mean, double var, const GaussHermiteRule& rule) {
  check_variance(var, "expect_sigmoid");
  const double scale = kSqrt2 * std::sqrt(var);
  double s = 0.0;
  for (int i = 0; i < rule.order(); ++i) {
    s += rule.weights()[static_cast<std::size_t>(i)] * sigmoid(scale * rule.nodes()[static_cast<std::size_t>(i)] + mean);
  }
  return s / kSqrtPi;
}

double expect_sigmoid_sq(double mean, double var, const GaussHermiteRule& rule) {
  check_variance(var, "expect_sigmoid_sq");
  const double scale = kSqrt2 * std::sqrt(var);
  double s = 0.0;
  for (int i = 0; i < rule.order(); ++i) {
    const double p = sigmoid(scale * rule.nodes()[static_cast<std::size_t>(i)] + mean);
    s += rule.weights()[static_cast<std::size_t>(i)] * p * p;
  }
  return s / kSqrtPi;
}

SigmoidMoments sigmoid_moments(double mean, double var, const GaussHermiteRule& rule) {
  check_variance(var, "sigmoid_moments");
  const double sd = std::sqrt(var);
  const double scale = kSqrt2 * sd;
  // d/dvar of sum w h(mean + sqrt(2 var) x) is sum w h'(.) x / sqrt(2 var);
  // at var -> 0 that limit is E[h'']/2, which is used below a tiny sd.
  const bool degenerate = sd < 1e-9;
  SigmoidMoments m;
  for (int i = 0; i < rule.order(); ++i) {
    const double w = rule.weights()[static_cast<std::size_t>(i)];
    const double x = rule.nodes()[static_cast<std::size_t>(i)];
    const double p = sigmoid(scale * x + mean);
    const double d1 = p * (1.0 - p);             // sigma'
    const double d2 = d1 * (1.0 - 2.0 * p);      // sigma''
    m.e1 += w * p;
    m.e2 += w * p * p;
    m.de1_dmean += w * d1;
    m.de2_dmean += w * 2.0 * p * d1;
    if (degenerate) {
      m.de1_dvar += w * 0.5 * d2;
      m.de2_dvar += w * (d1 * d1 + p * d2);
    } else {
      const double dx = x / scale;
      m.de1_dvar += w * d1 * dx;
      m.de2_dvar += w * 2.0 * p * d1 * dx;
    }
  }
  m.e1 /= kSqrtPi;
  m.e2 /= kSqrtPi;
  m.de1_dmean /= kSqrtPi;
  m.de2_dmean /= kSqrtPi;
  m.de1_dvar /= kSqrtPi;
  m.de2_dvar /= kSqrtPi;
  return m;
}

double expect_loglik_2d(double y, double mf, double vf, double mg, double vg, double noise_var,
                        const GaussHermiteRule& rule) {
  check_variance(vf, "expect_loglik_2d");
  check_variance(vg, "expect_loglik_2d");
  check_noise(noise_var);
  const double sf = kSqrt2 * std::sqrt(vf);
  const double sg = kSqrt2 * std::sqrt(vg);
  const double log_norm = -0.5 * (kLog2Pi + std::log(noise_var));
  double total = 0.0;
  for (int j = 0; j < rule.order(); ++j) {
    const double phi = sigmoid(sg * rule.nodes()[static_cast<std::size_t>(j)] + mg);
    double inner = 0.0;
    for (int i = 0; i < rule.order(); ++i) {
      const double f = sf * rule.nodes()[static_cast<std::size_t>(i)] + mf;
      const double r = y - phi * f;
      inner += rule.weights()[static_cast<std::size_t>(i)] * (log_norm - 0.5 * r * r / noise_var);
    }
    total += rule.weights()[static_cast<std::size_t>(j)] * inner;
  }
  return total / std::numbers::pi;
}

double expect_loglik_1d_decomp(double y, double mf, double vf, double mg, double vg, double noise_var,
                               const GaussHermiteRule& rule) {
  check_variance(vf, "expect_loglik_1d_decomp");
  check_variance(vg, "expect_loglik_1d_decomp");
  check_noise(noise_var);
  const double e1 = expect_sigmoid(mg, vg, rule);
  const double e2 = expect_sigmoid_sq(mg, vg, rule);
  const double quad = y * y - 2.0 * y * mf * e1 + (vf + mf * mf) * e2;
  return -0.5 * quad / noise_var - 0.5 * kLog2Pi - 0.5 * std::log(noise_var);
}

}  // namespace msmgp
