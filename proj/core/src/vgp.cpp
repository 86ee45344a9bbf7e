#include "msmgp/vgp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "msmgp/error.hpp"

namespace msmgp {

InducingSet::InducingSet(std::vector<double> points) : points_(std::move(points)) {
  if (points_.empty()) throw InvalidParameter("inducing set needs at least one point");
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (!(points_[i] > points_[i - 1])) throw InvalidParameter("inducing points must be strictly increasing");
  }
}

InducingSet InducingSet::uniform(double t_begin, double t_end, std::size_t count) {
  if (count == 0) throw InvalidParameter("inducing set needs at least one point");
  if (!(t_end > t_begin) && count > 1) throw InvalidParameter("inducing span must be non-empty");
  std::vector<double> pts(count);
  const double cell = (t_end - t_begin) / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) pts[i] = t_begin + (static_cast<double>(i) + 0.5) * cell;
  return InducingSet(std::move(pts));
}

void VariationalGaussian::validate() const {
  if (cov_chol.rows() != cov_chol.cols() || cov_chol.rows() != mean.size()) {
    throw InvalidParameter("variational Gaussian dimension mismatch");
  }
  for (Eigen::Index j = 0; j < cov_chol.cols(); ++j) {
    if (!(cov_chol(j, j) > 0.0)) throw InvalidParameter("variational Cholesky diagonal must be positive");
    for (Eigen::Index i = 0; i < j; ++i) {
      if (cov_chol(i, j) != 0.0) throw InvalidParameter("variational Cholesky factor must be lower triangular");
    }
  }
}

Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& k, double jitter, double max_relative) {
  const auto n = k.rows();
  const double mean_diag = n > 0 ? k.diagonal().mean() : 0.0;
  const double ceiling = max_relative * std::max(mean_diag, 1e-300);
  double j = jitter;
  for (;;) {
    Eigen::MatrixXd a = k;
    a.diagonal().array() += j;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd l = llt.matrixL();
      if (l.diagonal().minCoeff() > 0.0 && l.allFinite()) return l;
    }
    if (j >= ceiling) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(k);
      const auto d = ldlt.vectorD().cwiseAbs();
      const double cond = d.minCoeff() > 0.0 ? d.maxCoeff() / d.minCoeff() : INFINITY;
      throw NumericalFailure("Cholesky failed after jitter escalation to " + std::to_string(j), cond);
    }
    j = j > 0.0 ? std::min(10.0 * j, ceiling) : 1e-10 * std::max(mean_diag, 1e-300);
  }
}

WhitenedProjection WhitenedProjection::build(const MsmKernel& kernel, const InducingSet& z,
                                             std::span<const double> times, double jitter) {
  WhitenedProjection p;
  const auto kzz = build_gram(kernel, z.points(), z.points(), 0.0);
  p.prior_chol = robust_cholesky(kzz.values, jitter);
  if (times.empty()) {
    p.proj.resize(0, static_cast<Eigen::Index>(z.size()));
    p.residual_var.resize(0);
    return p;
  }
  const auto kzt = build_gram(kernel, z.points(), times, 0.0);
  // proj^T = Lzz^-1 K_zt
  Eigen::MatrixXd w = p.prior_chol.triangularView<Eigen::Lower>().solve(kzt.values);
  p.proj = w.transpose();
  const double kdiag = kernel.total_variance();
  p.residual_var = (kdiag - p.proj.rowwise().squaredNorm().array()).max(0.0).matrix();
  return p;
}

VariationalGaussian unwhiten(const VariationalGaussian& whitened, const Eigen::MatrixXd& prior_chol) {
  VariationalGaussian q;
  q.mean = prior_chol.triangularView<Eigen::Lower>() * whitened.mean;
  q.cov_chol = prior_chol.triangularView<Eigen::Lower>() * whitened.cov_chol;
  q.cov_chol.triangularView<Eigen::StrictlyUpper>().setZero();
  return q;
}

VariationalGaussian whiten(const VariationalGaussian& q, const Eigen::MatrixXd& prior_chol) {
  VariationalGaussian w;
  w.mean = prior_chol.triangularView<Eigen::Lower>().solve(q.mean);
  w.cov_chol = prior_chol.triangularView<Eigen::Lower>().solve(q.cov_chol);
  w.cov_chol.triangularView<Eigen::StrictlyUpper>().setZero();
  return w;
}

MarginalMoments predict_marginals(const MsmKernel& kernel, const InducingSet& z, const VariationalGaussian& q,
                                  std::span<const double> times, double jitter) {
  if (q.size() != z.size()) throw InvalidParameter("predict_marginals: q and Z sizes differ");
  const auto proj = WhitenedProjection::build(kernel, z, times, jitter);
  const auto w = whiten(q, proj.prior_chol);
  MarginalMoments out;
  out.means = proj.proj * w.mean;
  Eigen::MatrixXd b = proj.proj * w.cov_chol.triangularView<Eigen::Lower>();
  out.vars = proj.residual_var + b.rowwise().squaredNorm();
  for (Eigen::Index i = 0; i < out.vars.size(); ++i) {
    if (!(out.vars(i) >= kMinMarginalVariance)) {
      out.vars(i) = kMinMarginalVariance;
      ++out.clipped;
    }
  }
  return out;
}

double kl_gaussian(const VariationalGaussian& q, const Eigen::MatrixXd& prior_chol) {
  const auto m = static_cast<Eigen::Index>(q.size());
  if (prior_chol.rows() != m || prior_chol.cols() != m || q.cov_chol.rows() != m || q.cov_chol.cols() != m) {
    throw InvalidParameter("kl_gaussian: dimension mismatch");
  }
  const auto lk = prior_chol.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd a = lk.solve(q.cov_chol.triangularView<Eigen::Lower>().toDenseMatrix());
  const Eigen::VectorXd b = lk.solve(q.mean);
  const double trace = a.squaredNorm();
  const double maha = b.squaredNorm();
  const double logdet_k = 2.0 * prior_chol.diagonal().array().log().sum();
  const double logdet_s = 2.0 * q.cov_chol.diagonal().array().abs().log().sum();
  const double kl = 0.5 * (trace + maha - static_cast<double>(m) + logdet_k - logdet_s);
  return std::max(kl, 0.0);
}

}  // namespace msmgp
