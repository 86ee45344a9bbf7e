#include "msmgp/elbo.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <utility>
#include <vector>
#include <string>

#include <Eigen/Cholesky>

#include "msmgp/error.hpp"

namespace msmgp {
namespace {

struct ProcessView {
  Eigen::VectorXd mean;  // whitened m~
  Eigen::MatrixXd chol;  // whitened L~, lower
};

ProcessView unpack(const Eigen::VectorXd& params, std::size_t offset, Eigen::Index m) {
  ProcessView v;
  v.mean = params.segment(static_cast<Eigen::Index>(offset), m);
  v.chol = Eigen::MatrixXd::Zero(m, m);
  auto k = static_cast<Eigen::Index>(offset) + m;
  for (Eigen::Index j = 0; j < m; ++j) {
    v.chol(j, j) = std::exp(params(k++));
    for (Eigen::Index i = j + 1; i < m; ++i) v.chol(i, j) = params(k++);
  }
  return v;
}

void pack(const ProcessView& v, Eigen::VectorXd& params, std::size_t offset) {
  const auto m = v.mean.size();
  params.segment(static_cast<Eigen::Index>(offset), m) = v.mean;
  auto k = static_cast<Eigen::Index>(offset) + m;
  for (Eigen::Index j = 0; j < m; ++j) {
    params(k++) = std::log(v.chol(j, j));
    for (Eigen::Index i = j + 1; i < m; ++i) params(k++) = v.chol(i, j);
  }
}

double whitened_kl(const ProcessView& v) {
  const double m = static_cast<double>(v.mean.size());
  const double kl = 0.5 * (v.chol.squaredNorm() + v.mean.squaredNorm() - m -
                           2.0 * v.chol.diagonal().array().log().sum());
  return std::max(kl, 0.0);
}


// Limited-memory BFGS ascent with a backtracking (Armijo) line search. With
// closed-form components only the activation blocks are searched over.
template <class Eval, class Check>
void fit_lbfgs(const ElboProblem& problem, const FitConfig& config, Eigen::VectorXd& params, Eigen::VectorXd& grad,
               std::vector<ElboBreakdown>& trace, Eval& evaluate, Check& check) {
  constexpr std::size_t memory = 10;
  constexpr double armijo = 1e-4;
  const auto first = static_cast<Eigen::Index>(
      config.closed_form_components ? problem.block_offset(problem.model().num_sources()) : 0);
  const Eigen::Index dim = params.size() - first;

  ElboBreakdown cur = evaluate(params, grad);
  check(cur, grad, 0);
  trace.push_back(cur);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> hist;
  Eigen::VectorXd trial, trial_grad;
  int it = 0;
  while (it < config.max_iters && dim > 0) {
    // Minimise -ELBO.
    const Eigen::VectorXd g = -grad.tail(dim);
    Eigen::VectorXd d = -g;
    if (hist.empty()) {
      d *= std::min(1.0, config.learning_rate * config.clip_norm / std::max(g.norm(), 1e-300));
    } else {
      std::vector<double> alpha(hist.size());
      for (std::size_t k = hist.size(); k-- > 0;) {
        const auto& [sk, yk] = hist[k];
        alpha[k] = sk.dot(d) / yk.dot(sk);
        d -= alpha[k] * yk;
      }
      const auto& [sl, yl] = hist.back();
      d *= sl.dot(yl) / yl.squaredNorm();
      for (std::size_t k = 0; k < hist.size(); ++k) {
        const auto& [sk, yk] = hist[k];
        const double beta = yk.dot(d) / yk.dot(sk);
        d += (alpha[k] - beta) * sk;
      }
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      hist.clear();
      d = -g * std::min(1.0, 1.0 / std::max(g.norm(), 1e-300));
      slope = g.dot(d);
    }
    if (!(slope < 0.0)) break;  // zero gradient

    bool accepted = false;
    double step = 1.0;
    ElboBreakdown next;
    for (int k = 0; k < 30; ++k, step *= 0.5) {
      trial = params;
      trial.tail(dim) += step * d;
      next = evaluate(trial, trial_grad);
      if (std::isfinite(next.elbo) && trial_grad.allFinite() && next.elbo >= cur.elbo - armijo * step * slope) {
        accepted = true;
        break;
      }
    }
    ++it;
    if (!accepted) {
      if (hist.empty()) break;  // no ascent along the gradient either: converged
      hist.clear();
      continue;
    }
    check(next, trial_grad, it);
    Eigen::VectorXd sk = step * d;
    Eigen::VectorXd yk = -trial_grad.tail(dim) - g;
    if (sk.dot(yk) > 1e-12 * sk.norm() * yk.norm()) {
      hist.emplace_back(std::move(sk), std::move(yk));
      if (hist.size() > memory) hist.pop_front();
    }
    const double gain = next.elbo - cur.elbo;
    params.swap(trial);
    grad.swap(trial_grad);
    cur = next;
    trace.push_back(cur);
    if (gain <= config.tolerance * (1.0 + std::abs(cur.elbo))) break;
  }
}

}  // namespace

ElboProblem::ElboProblem(ModelSpec model, InducingSet inducing, Dataset data, ElboOptions options,
                         std::optional<InducingSet> activation_inducing)
    : model_(std::move(model)),
      inducing_(std::move(inducing)),
      activation_inducing_(std::move(activation_inducing)),
      data_(std::move(data)),
      options_(options),
      rule_(gh_rule(options.quad_order)) {
  model_.validate();
  if (model_.kind == ModelKind::Softmax && !model_.silence_kernel) {
    model_.silence_kernel = default_activation_kernel();
  }
  if (data_.times.size() != data_.values.size()) throw InvalidInput("data times and values differ in length");
  if (!(options_.noise_var > 0.0)) throw InvalidParameter("noise variance must be positive");
  const std::size_t procs = model_.num_sources() + model_.num_activation_processes();
  projections_.reserve(procs);
  offsets_.assign(1, 0);
  for (std::size_t p = 0; p < procs; ++p) {
    const auto& k = process_kernel(p);
    const auto& z = p < model_.num_sources() ? inducing_ : this->activation_inducing();
    projections_.push_back(
        WhitenedProjection::build(k, z, data_.times, default_jitter(k, options_.jitter_relative)));
    offsets_.push_back(offsets_.back() + z.size() + z.size() * (z.size() + 1) / 2);
  }
}

const MsmKernel& ElboProblem::process_kernel(std::size_t process) const {
  const std::size_t s = model_.num_sources();
  if (process < s) return model_.component_kernels[process];
  return model_.activation_process_kernel(process - s);
}

std::size_t ElboProblem::inducing_size(std::size_t process) const noexcept {
  return process < model_.num_sources() ? inducing_.size() : activation_inducing().size();
}

std::string ElboProblem::process_name(std::size_t process) const {
  const std::size_t s = model_.num_sources();
  auto label = [&](std::size_t src) {
    return src < model_.pitch_labels.size() ? " (" + model_.pitch_labels[src] + ")" : std::string();
  };
  if (process < s) return "component[" + std::to_string(process) + "]" + label(process);
  const std::size_t a = process - s;
  if (model_.kind == ModelKind::Softmax) {
    if (a == 0) return "activation[silence]";
    return "activation[" + std::to_string(a - 1) + "]" + label(a - 1);
  }
  return "activation[" + std::to_string(a) + "]" + label(a);
}

Eigen::VectorXd ElboProblem::initial_parameters() const {
  Eigen::VectorXd params(static_cast<Eigen::Index>(num_parameters()));
  const std::size_t s = model_.num_sources();
  for (std::size_t p = 0; p < num_processes(); ++p) {
    const auto m = static_cast<Eigen::Index>(inducing_size(p));
    ProcessView v;
    v.mean = Eigen::VectorXd::Zero(m);
    v.chol = Eigen::MatrixXd::Identity(m, m) * (p < s ? 1.0 : 0.1);
    pack(v, params, block_offset(p));
  }
  return params;
}

VariationalState ElboProblem::to_state(const Eigen::VectorXd& params) const {
  VariationalState st;
  st.inducing = inducing_;
  st.activation_inducing = activation_inducing_;
  const std::size_t s = model_.num_sources();
  for (std::size_t p = 0; p < num_processes(); ++p) {
    const auto v = unpack(params, block_offset(p), static_cast<Eigen::Index>(inducing_size(p)));
    auto q = unwhiten(VariationalGaussian{v.mean, v.chol}, projections_[p].prior_chol);
    (p < s ? st.components : st.activations).push_back(std::move(q));
  }
  return st;
}

Eigen::VectorXd ElboProblem::from_state(const VariationalState& state) const {
  const std::size_t s = model_.num_sources();
  if (state.components.size() != s || state.activations.size() != model_.num_activation_processes()) {
    throw InvalidParameter("variational state does not match the model's process count");
  }
  if (state.inducing.size() != inducing_.size() || state.activation_points().size() != activation_inducing().size()) {
    throw InvalidParameter("inducing set size mismatch");
  }
  Eigen::VectorXd params(static_cast<Eigen::Index>(num_parameters()));
  for (std::size_t p = 0; p < num_processes(); ++p) {
    const auto& q = p < s ? state.components[p] : state.activations[p - s];
    q.validate();
    const auto w = whiten(q, projections_[p].prior_chol);
    ProcessView v{w.mean, w.cov_chol};
    if (!(v.chol.diagonal().array() > 0.0).all()) throw NumericalFailure("whitened Cholesky lost positivity");
    pack(v, params, block_offset(p));
  }
  return params;
}

ElboBreakdown ElboProblem::evaluate(const Eigen::VectorXd& params) const { return run(params, nullptr); }

ElboBreakdown ElboProblem::evaluate(const Eigen::VectorXd& params, Eigen::VectorXd& grad) const {
  return run(params, &grad);
}

ElboBreakdown ElboProblem::run(const Eigen::VectorXd& params, Eigen::VectorXd* grad, const Marginals* fixed) const {
  if (params.size() != static_cast<Eigen::Index>(num_parameters())) {
    throw InvalidParameter("parameter vector has the wrong length");
  }
  const auto n = static_cast<Eigen::Index>(data_.size());
  const std::size_t procs = num_processes();
  const std::size_t sources = model_.num_sources();

  std::vector<ProcessView> views;
  std::vector<Eigen::MatrixXd> scaled(procs);  // proj * L~
  std::vector<Eigen::VectorXd> means(procs), vars(procs), d_mean(procs), d_var(procs);
  std::vector<std::vector<bool>> clipped(procs);
  ElboBreakdown out;
  views.reserve(procs);
  for (std::size_t p = 0; p < procs; ++p) {
    views.push_back(unpack(params, block_offset(p), static_cast<Eigen::Index>(inducing_size(p))));
    const auto& proj = projections_[p];
    if (fixed && p < sources) {
      means[p] = fixed->means[p];
      vars[p] = fixed->vars[p];
    } else {
      means[p] = proj.proj * views[p].mean;
      scaled[p].noalias() = proj.proj * views[p].chol.triangularView<Eigen::Lower>();
      vars[p] = proj.residual_var + scaled[p].rowwise().squaredNorm();
    }
    clipped[p].assign(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(vars[p](i) >= kMinMarginalVariance)) {
        vars[p](i) = kMinMarginalVariance;
        clipped[p][static_cast<std::size_t>(i)] = true;
      }
    }
    d_mean[p] = Eigen::VectorXd::Zero(n);
    d_var[p] = Eigen::VectorXd::Zero(n);
    const double kl = whitened_kl(views[p]);
    (p < sources ? out.kl_f_total : out.kl_g_total) += kl;
  }

  const double nu = options_.noise_var;
  if (model_.kind == ModelKind::Softmax) {
    const std::size_t k = model_.num_activation_processes();
    std::vector<GaussianMoment> act(k), comp(sources);
    std::vector<MomentGrad> dact(k), dcomp(sources);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < k; ++a) act[a] = {means[sources + a](i), vars[sources + a](i)};
      for (std::size_t c = 0; c < sources; ++c) comp[c] = {means[c](i), vars[c](i)};
      const auto y = data_.values[static_cast<std::size_t>(i)];
      const auto idx = static_cast<std::uint64_t>(i);
      if (grad) {
        std::fill(dact.begin(), dact.end(), MomentGrad{});
        std::fill(dcomp.begin(), dcomp.end(), MomentGrad{});
        out.expected_loglik += softmax_point_loglik_grad(y, act, comp, nu, options_.mc, idx, dact, dcomp);
        for (std::size_t a = 0; a < k; ++a) {
          d_mean[sources + a](i) = dact[a].d_mean;
          d_var[sources + a](i) = dact[a].d_var;
        }
        for (std::size_t c = 0; c < sources; ++c) {
          d_mean[c](i) = dcomp[c].d_mean;
          d_var[c](i) = dcomp[c].d_var;
        }
      } else {
        out.expected_loglik += softmax_point_loglik(y, act, comp, nu, options_.mc, idx);
      }
    }
  } else {
    std::vector<SourceMoments> src(sources);
    std::vector<SourceMomentGrad> g(sources);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < sources; ++d) {
        const std::size_t a = sources + model_.activation_index(d);
        src[d] = {{means[d](i), vars[d](i)}, {means[a](i), vars[a](i)}};
      }
      const auto y = data_.values[static_cast<std::size_t>(i)];
      if (grad) {
        std::fill(g.begin(), g.end(), SourceMomentGrad{});
        out.expected_loglik += sigmoid_multi_point_loglik_grad(y, src, nu, rule_, g);
        for (std::size_t d = 0; d < sources; ++d) {
          const std::size_t a = sources + model_.activation_index(d);
          d_mean[d](i) = g[d].f.d_mean;
          d_var[d](i) = g[d].f.d_var;
          d_mean[a](i) = g[d].g.d_mean;
          d_var[a](i) = g[d].g.d_var;
        }
      } else {
        out.expected_loglik += sigmoid_multi_point_loglik(y, src, nu, rule_);
      }
    }
  }
  out.elbo = out.expected_loglik - out.kl_f_total - out.kl_g_total;
  if (!grad) return out;

  grad->resize(params.size());
  if (fixed) grad->head(static_cast<Eigen::Index>(block_offset(sources))).setZero();
  for (std::size_t p = fixed ? sources : 0; p < procs; ++p) {
    const auto& proj = projections_[p].proj;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (clipped[p][static_cast<std::size_t>(i)]) d_var[p](i) = 0.0;
    }
    const auto& v = views[p];
    ProcessView gv;
    gv.mean = proj.transpose() * d_mean[p] - v.mean;
    Eigen::MatrixXd weighted = d_var[p].asDiagonal() * scaled[p];
    gv.chol.noalias() = 2.0 * proj.transpose() * weighted;
    gv.chol -= v.chol;
    gv.chol.diagonal().array() += v.chol.diagonal().array().inverse();
    // Chain rule for the log-diagonal parameterisation.
    gv.chol.diagonal().array() *= v.chol.diagonal().array();
    const auto offset = static_cast<Eigen::Index>(block_offset(p));
    const auto m = static_cast<Eigen::Index>(inducing_size(p));
    grad->segment(offset, m) = gv.mean;
    auto k = offset + m;
    for (Eigen::Index j = 0; j < m; ++j) {
      (*grad)(k++) = gv.chol(j, j);
      for (Eigen::Index i = j + 1; i < m; ++i) (*grad)(k++) = gv.chol(i, j);
    }
  }
  return out;
}

void ElboProblem::update_components(Eigen::VectorXd& params) const { update(params, nullptr); }

ElboBreakdown ElboProblem::update_components_then_evaluate(Eigen::VectorXd& params, Eigen::VectorXd& grad) const {
  Marginals m;
  update(params, &m);
  if (m.means.empty()) return run(params, &grad);
  return run(params, &grad, &m);
}

void ElboProblem::update(Eigen::VectorXd& params, Marginals* out) const {
  if (params.size() != static_cast<Eigen::Index>(num_parameters())) {
    throw InvalidParameter("parameter vector has the wrong length");
  }
  const auto m = static_cast<Eigen::Index>(inducing_.size());
  const auto n = static_cast<Eigen::Index>(data_.size());
  const std::size_t sources = model_.num_sources();
  const auto s = static_cast<Eigen::Index>(sources);
  const auto ma = static_cast<Eigen::Index>(activation_inducing().size());
  const std::size_t acts = model_.num_activation_processes();
  if (n == 0) return;

  std::vector<Eigen::VectorXd> act_mean(acts), act_var(acts);
  for (std::size_t a = 0; a < acts; ++a) {
    const auto v = unpack(params, block_offset(sources + a), ma);
    const auto& proj = projections_[sources + a];
    act_mean[a] = proj.proj * v.mean;
    Eigen::MatrixXd sc = proj.proj * v.chol.triangularView<Eigen::Lower>();
    act_var[a] = (proj.residual_var + sc.rowwise().squaredNorm()).cwiseMax(kMinMarginalVariance);
  }

  // first(d, i) = E[phi_d(t_i)]; second[i](d, e) = E[phi_d phi_e].
  Eigen::MatrixXd first(s, n);
  std::vector<Eigen::MatrixXd> second(static_cast<std::size_t>(n), Eigen::MatrixXd(s, s));
  if (model_.kind == ModelKind::Softmax) {
    std::vector<GaussianMoment> g(acts);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < acts; ++a) g[a] = {act_mean[a](i), act_var[a](i)};
      softmax_gate_moments(g, options_.mc, static_cast<std::uint64_t>(i), first.col(i),
                           second[static_cast<std::size_t>(i)]);
    }
  } else {
    Eigen::MatrixXd e2(s, n);
    for (std::size_t d = 0; d < sources; ++d) {
      const std::size_t a = model_.activation_index(d);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto sm = sigmoid_moments(act_mean[a](i), act_var[a](i), rule_);
        first(static_cast<Eigen::Index>(d), i) = sm.e1;
        e2(static_cast<Eigen::Index>(d), i) = sm.e2;
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& sec = second[static_cast<std::size_t>(i)];
      sec.noalias() = first.col(i) * first.col(i).transpose();
      sec.diagonal() = e2.col(i);
    }
  }

  const Eigen::Map<const Eigen::VectorXd> y(data_.values.data(), n);
  const double inv_nu = 1.0 / options_.noise_var;
  // Covariances decouple by source: P_d = I + A_d^T D_d A_d / nu. The means
  // couple through E[phi_d phi_e] and are solved jointly:
  //   P_d m_d + sum_{e != d} A_d^T C_de A_e m_e / nu = A_d^T (y E[phi_d]) / nu.
  Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(s * m, s * m);
  Eigen::VectorXd rhs(s * m);
  std::vector<Eigen::MatrixXd> factors(sources);
  for (Eigen::Index d = 0; d < s; ++d) {
    const auto& a = projections_[static_cast<std::size_t>(d)].proj;
    Eigen::VectorXd diag(n), c(n);
    for (Eigen::Index i = 0; i < n; ++i) diag(i) = second[static_cast<std::size_t>(i)](d, d);
    // Reversed index order: the lower factor R of J P J gives the lower
    // factor J R^-T J of P^-1.
    const Eigen::MatrixXd ar = a.rowwise().reverse();
    Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(m, m);
    prec.selfadjointView<Eigen::Lower>().rankUpdate(ar.transpose() * (inv_nu * diag).cwiseSqrt().asDiagonal());
    const Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success) throw NumericalFailure("component update: precision is not positive definite");
    factors[static_cast<std::size_t>(d)] = llt.matrixL();
    joint.block(d * m, d * m, m, m) = prec.selfadjointView<Eigen::Lower>();
    joint.block(d * m, d * m, m, m) = joint.block(d * m, d * m, m, m).reverse().eval();
    rhs.segment(d * m, m) = inv_nu * (a.transpose() * y.cwiseProduct(first.row(d).transpose()));
    for (Eigen::Index e = 0; e < d; ++e) {
      for (Eigen::Index i = 0; i < n; ++i) c(i) = inv_nu * second[static_cast<std::size_t>(i)](d, e);
      const auto& ae = projections_[static_cast<std::size_t>(e)].proj;
      joint.block(d * m, e * m, m, m).noalias() = a.transpose() * c.asDiagonal() * ae;
    }
  }
  const Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> joint_llt(joint);
  if (joint_llt.info() != Eigen::Success) throw NumericalFailure("component update: joint precision is not positive definite");
  const Eigen::VectorXd means = joint_llt.solve(rhs);

  for (Eigen::Index d = 0; d < s; ++d) {
    const auto& proj = projections_[static_cast<std::size_t>(d)];
    const Eigen::MatrixXd& r = factors[static_cast<std::size_t>(d)];
    ProcessView v;
    v.mean = means.segment(d * m, m);
    Eigen::MatrixXd rinv_t = Eigen::MatrixXd::Identity(m, m);
    r.triangularView<Eigen::Lower>().transpose().solveInPlace(rinv_t);
    v.chol = rinv_t.reverse();
    pack(v, params, block_offset(static_cast<std::size_t>(d)));
    if (out) {
      // Marginal variance a_i^T P^-1 a_i = |R^-1 J a_i|^2.
      Eigen::MatrixXd w = proj.proj.rowwise().reverse().transpose();
      r.triangularView<Eigen::Lower>().solveInPlace(w);
      out->means.push_back(proj.proj * v.mean);
      out->vars.push_back((proj.residual_var + w.colwise().squaredNorm().transpose()).cwiseMax(kMinMarginalVariance));
    }
  }
}

ElboBreakdown elbo(const ModelSpec& model, const VariationalState& state, const Dataset& data,
                   const GaussHermiteRule& rule, double noise_var, const MonteCarloConfig& mc,
                   double jitter_relative) {
  ElboOptions opts;
  opts.noise_var = noise_var;
  opts.quad_order = rule.order();
  opts.mc = mc;
  opts.jitter_relative = jitter_relative;
  const ElboProblem problem(model, state.inducing, data, opts, state.activation_inducing);
  return problem.evaluate(problem.from_state(state));
}

std::size_t default_inducing_count(std::size_t n_data) {
  return std::max<std::size_t>(1, std::min<std::size_t>(200, n_data / 16));
}

FitResult fit(const ModelSpec& model, const Dataset& data, const FitConfig& config) {
  if (data.size() == 0) throw InvalidInput("fit: data is empty");
  if (config.max_iters < 0) throw InvalidParameter("fit: max_iters must be non-negative");
  if (!(config.learning_rate > 0.0)) throw InvalidParameter("fit: learning rate must be positive");
  const auto [lo, hi] = std::minmax_element(data.times.begin(), data.times.end());
  const std::size_t count = config.n_inducing > 0 ? config.n_inducing : default_inducing_count(data.size());
  ElboOptions opts;
  opts.noise_var = config.noise_var;
  opts.quad_order = config.quad_order;
  opts.mc = MonteCarloConfig{config.mc_samples, config.seed};
  opts.jitter_relative = config.jitter_relative;
  std::optional<InducingSet> act_z;
  if (config.n_activation_inducing > 0) act_z = InducingSet::uniform(*lo, *hi, config.n_activation_inducing);
  const ElboProblem problem(model, InducingSet::uniform(*lo, *hi, count), data, opts, std::move(act_z));

  Eigen::VectorXd params = problem.initial_parameters();
  Eigen::VectorXd grad;
  FitResult result;
  result.trace.reserve(static_cast<std::size_t>(config.max_iters) + 1);

  auto evaluate = [&](Eigen::VectorXd& p, Eigen::VectorXd& g) {
    return config.closed_form_components ? problem.update_components_then_evaluate(p, g) : problem.evaluate(p, g);
  };
  auto check = [&](const ElboBreakdown& value, const Eigen::VectorXd& g, int it) {
    if (!std::isfinite(value.elbo)) {
      throw NumericalFailure("ELBO became non-finite at iteration " + std::to_string(it));
    }
    for (std::size_t p = 0; p < problem.num_processes(); ++p) {
      const auto block = g.segment(static_cast<Eigen::Index>(problem.block_offset(p)),
                                   static_cast<Eigen::Index>(problem.block_size(p)));
      if (!block.allFinite()) {
        throw NumericalFailure("non-finite ELBO gradient in " + problem.process_name(p) + " at iteration " +
                               std::to_string(it));
      }
    }
  };

  if (config.optimizer == Optimizer::Lbfgs) {
    fit_lbfgs(problem, config, params, grad, result.trace, evaluate, check);
    result.state = problem.to_state(params);
    return result;
  }

  Eigen::VectorXd adam_m = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd adam_v = Eigen::VectorXd::Zero(params.size());
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  for (int it = 0;; ++it) {
    const bool last = it == config.max_iters;
    const ElboBreakdown value = evaluate(params, grad);
    check(value, grad, it);
    result.trace.push_back(value);
    if (last) break;
    const double norm = grad.norm();
    if (norm > config.clip_norm) grad *= config.clip_norm / norm;
    if (config.optimizer == Optimizer::GradientAscent) {
      params += config.learning_rate * grad;
    } else {
      const double t = static_cast<double>(it + 1);
      adam_m = beta1 * adam_m + (1.0 - beta1) * grad;
      adam_v = beta2 * adam_v + (1.0 - beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1, t);
      const double c2 = 1.0 - std::pow(beta2, t);
      params.array() += config.learning_rate * (adam_m.array() / c1) / ((adam_v.array() / c2).sqrt() + eps);
    }
  }
  result.state = problem.to_state(params);
  return result;
}

}  // namespace msmgp
