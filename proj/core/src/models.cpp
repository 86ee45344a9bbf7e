#include "msmgp/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "msmgp/error.hpp"
#include "msmgp/random.hpp"

namespace msmgp {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double gaussian_log_norm(double noise_var) { return -0.5 * (kLog2Pi + std::log(noise_var)); }

void check_noise(double noise_var) {
  if (!(noise_var > 0.0)) throw InvalidParameter("noise variance must be positive");
}

}  // namespace

const char* to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::Sigmoid: return "sig";
    case ModelKind::Softmax: return "sof";
    case ModelKind::SigmoidLoo: return "sig-loo";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "sig" || name == "sigmoid") return ModelKind::Sigmoid;
  if (name == "sof" || name == "softmax") return ModelKind::Softmax;
  if (name == "sig-loo" || name == "loo") return ModelKind::SigmoidLoo;
  throw InvalidParameter("unknown model kind '" + std::string(name) + "' (expected sig, sof or sig-loo)");
}

MsmKernel default_activation_kernel(double variance, double lengthscale_s) {
  return MsmKernel({LorentzianComponent::from_hz(variance, lengthscale_s, 0.0)});
}

void ModelSpec::validate() const {
  if (component_kernels.empty()) throw InvalidParameter("model needs at least one source");
  if (component_kernels.size() != activation_kernels.size()) {
    throw InvalidParameter("component and activation kernel lists differ in length");
  }
  if (!pitch_labels.empty() && pitch_labels.size() != component_kernels.size()) {
    throw InvalidParameter("pitch label count does not match source count");
  }
  if (kind == ModelKind::SigmoidLoo && component_kernels.size() != 2) {
    throw InvalidParameter("leave-one-out model has exactly two sources");
  }
}

std::size_t ModelSpec::num_activation_processes() const noexcept {
  return num_sources() + (kind == ModelKind::Softmax ? 1 : 0);
}

const MsmKernel& ModelSpec::activation_process_kernel(std::size_t p) const {
  if (kind == ModelKind::Softmax) {
    if (p == 0) {
      if (!silence_kernel) throw InvalidParameter("softmax model has no silence kernel set");
      return *silence_kernel;
    }
    return activation_kernels.at(p - 1);
  }
  return activation_kernels.at(p);
}

std::size_t ModelSpec::activation_index(std::size_t source) const noexcept {
  return kind == ModelKind::Softmax ? source + 1 : source;
}

double sigmoid_point_loglik(double y, double mf, double vf, double mg, double vg, double noise_var,
                            const GaussHermiteRule& rule) {
  return expect_loglik_1d_decomp(y, mf, vf, mg, vg, noise_var, rule);
}

double sigmoid_multi_point_loglik(double y, std::span<const SourceMoments> sources, double noise_var,
                                  const GaussHermiteRule& rule) {
  check_noise(noise_var);
  if (sources.empty()) throw InvalidParameter("sigmoid likelihood needs at least one source");
  double weighted = 0.0;  // sum_d mf_d E[s_d]
  double diag = 0.0;      // sum_d (vf_d + mf_d^2) E[s_d^2]
  double self_cross = 0.0;
  for (const auto& s : sources) {
    if (!(s.f.var >= 0.0) || !(s.g.var >= 0.0)) throw InvalidParameter("negative marginal variance");
    const double e1 = expect_sigmoid(s.g.mean, s.g.var, rule);
    const double e2 = expect_sigmoid_sq(s.g.mean, s.g.var, rule);
    const double a = s.f.mean * e1;
    weighted += a;
    self_cross += a * a;
    diag += (s.f.var + s.f.mean * s.f.mean) * e2;
  }
  const double quad = y * y - 2.0 * y * weighted + diag + (weighted * weighted - self_cross);
  return -0.5 * quad / noise_var + gaussian_log_norm(noise_var);
}

double sigmoid_multi_point_loglik_grad(double y, std::span<const SourceMoments> sources, double noise_var,
                                       const GaussHermiteRule& rule, std::span<SourceMomentGrad> grad) {
  check_noise(noise_var);
  const std::size_t n = sources.size();
  if (grad.size() != n) throw InvalidParameter("gradient buffer size mismatch");
  // Small fixed-size scratch; models with more than 16 sources fall back to the heap.
  SigmoidMoments local[16];
  std::vector<SigmoidMoments> heap;
  SigmoidMoments* mom = local;
  if (n > 16) {
    heap.resize(n);
    mom = heap.data();
  }
  double weighted = 0.0;
  double diag = 0.0;
  double self_cross = 0.0;
  for (std::size_t d = 0; d < n; ++d) {
    const auto& s = sources[d];
    mom[d] = sigmoid_moments(s.g.mean, s.g.var, rule);
    const double a = s.f.mean * mom[d].e1;
    weighted += a;
    self_cross += a * a;
    diag += (s.f.var + s.f.mean * s.f.mean) * mom[d].e2;
  }
  const double quad = y * y - 2.0 * y * weighted + diag + (weighted * weighted - self_cross);
  const double c = -0.5 / noise_var;
  for (std::size_t d = 0; d < n; ++d) {
    const auto& s = sources[d];
    const double e1 = mom[d].e1;
    const double e2 = mom[d].e2;
    const double others = weighted - s.f.mean * e1;  // sum_{e != d} mf_e E[s_e]
    const double dq_dmf = -2.0 * y * e1 + 2.0 * s.f.mean * e2 + 2.0 * e1 * others;
    const double dq_dvf = e2;
    const double dq_de1 = -2.0 * y * s.f.mean + 2.0 * s.f.mean * others;
    const double dq_de2 = s.f.var + s.f.mean * s.f.mean;
    grad[d].f.d_mean += c * dq_dmf;
    grad[d].f.d_var += c * dq_dvf;
    grad[d].g.d_mean += c * (dq_de1 * mom[d].de1_dmean + dq_de2 * mom[d].de2_dmean);
    grad[d].g.d_var += c * (dq_de1 * mom[d].de1_dvar + dq_de2 * mom[d].de2_dvar);
  }
  return c * quad + gaussian_log_norm(noise_var);
}

void softmax(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= z;
}

namespace {

void check_softmax_inputs(std::span<const GaussianMoment> activations, std::span<const GaussianMoment> components,
                          double noise_var, const MonteCarloConfig& mc) {
  check_noise(noise_var);
  if (activations.size() != components.size() + 1) {
    throw InvalidParameter("softmax likelihood needs one more activation than components (silence)");
  }
  if (mc.samples == 0) throw InvalidParameter("Monte Carlo sample count must be positive");
}

// One pass over the samples; gradients are accumulated only when buffers are given.
MonteCarloEstimate softmax_sweep(double y, std::span<const GaussianMoment> activations,
                                 std::span<const GaussianMoment> components, double noise_var,
                                 const MonteCarloConfig& mc, std::uint64_t point_index,
                                 std::span<MomentGrad> d_act, std::span<MomentGrad> d_comp) {
  check_softmax_inputs(activations, components, noise_var, mc);
  const std::size_t k = activations.size();
  const bool want_grad = !d_act.empty();
  const CounterRng rng(mc.seed);
  std::vector<double> sd(k), eps(k), g(k), phi(k), dphi(k);
  for (std::size_t j = 0; j < k; ++j) sd[j] = std::sqrt(std::max(activations[j].var, 0.0));
  const double log_norm = gaussian_log_norm(noise_var);
  const double inv_nu = 1.0 / noise_var;

  double sum = 0.0;
  double sum_sq = 0.0;
  std::vector<MomentGrad> acc_act(want_grad ? k : 0), acc_comp(want_grad ? k - 1 : 0);
  for (std::size_t s = 0; s < mc.samples; ++s) {
    for (std::size_t j = 0; j < k; ++j) {
      eps[j] = rng.normal(point_index, s * k + j);
      g[j] = activations[j].mean + sd[j] * eps[j];
    }
    softmax(g, phi);
    double pm = 0.0;
    double pv = 0.0;
    for (std::size_t m = 1; m < k; ++m) {
      pm += phi[m] * components[m - 1].mean;
      pv += phi[m] * phi[m] * components[m - 1].var;
    }
    const double r = y - pm;
    const double ll = log_norm - 0.5 * (r * r + pv) * inv_nu;
    sum += ll;
    sum_sq += ll * ll;
    if (!want_grad) continue;
    dphi[0] = 0.0;
    double avg = 0.0;
    for (std::size_t m = 1; m < k; ++m) {
      const auto& c = components[m - 1];
      acc_comp[m - 1].d_mean += r * phi[m] * inv_nu;
      acc_comp[m - 1].d_var += -0.5 * phi[m] * phi[m] * inv_nu;
      dphi[m] = (r * c.mean - phi[m] * c.var) * inv_nu;
      avg += phi[m] * dphi[m];
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double dg = phi[j] * (dphi[j] - avg);
      acc_act[j].d_mean += dg;
      if (sd[j] > 0.0) acc_act[j].d_var += dg * eps[j] / (2.0 * sd[j]);
    }
  }
  const double n = static_cast<double>(mc.samples);
  MonteCarloEstimate est;
  est.value = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * est.value * est.value) / (n - 1.0)) : 0.0;
  est.std_error = std::sqrt(var / n);
  if (want_grad) {
    for (std::size_t j = 0; j < k; ++j) {
      d_act[j].d_mean += acc_act[j].d_mean / n;
      d_act[j].d_var += acc_act[j].d_var / n;
    }
    for (std::size_t m = 0; m + 1 < k; ++m) {
      d_comp[m].d_mean += acc_comp[m].d_mean / n;
      d_comp[m].d_var += acc_comp[m].d_var / n;
    }
  }
  return est;
}

}  // namespace

MonteCarloEstimate softmax_point_loglik_estimate(double y, std::span<const GaussianMoment> activations,
                                                 std::span<const GaussianMoment> components, double noise_var,
                                                 const MonteCarloConfig& mc, std::uint64_t point_index) {
  return softmax_sweep(y, activations, components, noise_var, mc, point_index, {}, {});
}

double softmax_point_loglik(double y, std::span<const GaussianMoment> activations,
                            std::span<const GaussianMoment> components, double noise_var,
                            const MonteCarloConfig& mc, std::uint64_t point_index) {
  return softmax_sweep(y, activations, components, noise_var, mc, point_index, {}, {}).value;
}

void softmax_gate_moments(std::span<const GaussianMoment> activations, const MonteCarloConfig& mc,
                          std::uint64_t point_index, Eigen::Ref<Eigen::VectorXd> mean,
                          Eigen::Ref<Eigen::MatrixXd> second) {
  const std::size_t k = activations.size();
  if (k < 2) throw InvalidParameter("softmax needs silence plus at least one source");
  if (mc.samples == 0) throw InvalidParameter("Monte Carlo sample count must be positive");
  const auto m = static_cast<Eigen::Index>(k - 1);
  if (mean.size() != m || second.rows() != m || second.cols() != m) {
    throw InvalidParameter("gate moment buffers have the wrong size");
  }
  const CounterRng rng(mc.seed);
  std::vector<double> sd(k), g(k), phi(k);
  for (std::size_t j = 0; j < k; ++j) sd[j] = std::sqrt(std::max(activations[j].var, 0.0));
  mean.setZero();
  second.setZero();
  for (std::size_t s = 0; s < mc.samples; ++s) {
    for (std::size_t j = 0; j < k; ++j) g[j] = activations[j].mean + sd[j] * rng.normal(point_index, s * k + j);
    softmax(g, phi);
    for (Eigen::Index a = 0; a < m; ++a) {
      mean(a) += phi[static_cast<std::size_t>(a) + 1];
      for (Eigen::Index b = 0; b <= a; ++b) {
        second(a, b) += phi[static_cast<std::size_t>(a) + 1] * phi[static_cast<std::size_t>(b) + 1];
      }
    }
  }
  const double n = static_cast<double>(mc.samples);
  mean /= n;
  second /= n;
  second.triangularView<Eigen::StrictlyUpper>() = second.transpose();
}

double softmax_point_loglik_grad(double y, std::span<const GaussianMoment> activations,
                                 std::span<const GaussianMoment> components, double noise_var,
                                 const MonteCarloConfig& mc, std::uint64_t point_index,
                                 std::span<MomentGrad> d_activations, std::span<MomentGrad> d_components) {
  if (d_activations.size() != activations.size() || d_components.size() != components.size()) {
    throw InvalidParameter("gradient buffer size mismatch");
  }
  return softmax_sweep(y, activations, components, noise_var, mc, point_index, d_activations, d_components)
      .value;
}

void SourceDecomposition::append(const SourceDecomposition& later) {
  if (times.empty()) {
    *this = later;
    return;
  }
  if (later.activations.rows() != activations.rows() || later.labels != labels ||
      later.activation_moments.size() != activation_moments.size() ||
      later.component_moments.size() != component_moments.size()) {
    throw InvalidParameter("cannot append decompositions of different models");
  }
  times.insert(times.end(), later.times.begin(), later.times.end());
  auto cat_cols = [](Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
    out << a, b;
    a = std::move(out);
  };
  auto cat_vec = [](Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd out(a.size() + b.size());
    out << a, b;
    a = std::move(out);
  };
  cat_cols(activations, later.activations);
  if (silence.size() > 0 || later.silence.size() > 0) cat_vec(silence, later.silence);
  auto cat_moments = [&](std::vector<MarginalMoments>& a, const std::vector<MarginalMoments>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      cat_vec(a[i].means, b[i].means);
      cat_vec(a[i].vars, b[i].vars);
      a[i].clipped += b[i].clipped;
    }
  };
  cat_moments(activation_moments, later.activation_moments);
  cat_moments(component_moments, later.component_moments);
}

SourceDecomposition decompose(const ModelSpec& model, const VariationalState& state, std::span<const double> times,
                              double jitter_relative) {
  model.validate();
  const std::size_t sources = model.num_sources();
  const std::size_t procs = model.num_activation_processes();
  if (state.components.size() != sources || state.activations.size() != procs) {
    throw InvalidParameter("variational state does not match the model's process count");
  }
  SourceDecomposition out;
  out.times.assign(times.begin(), times.end());
  out.labels = model.pitch_labels;
  if (out.labels.empty()) {
    for (std::size_t m = 0; m < sources; ++m) out.labels.push_back("source" + std::to_string(m));
  }
  for (std::size_t m = 0; m < sources; ++m) {
    const auto& k = model.component_kernels[m];
    out.component_moments.push_back(
        predict_marginals(k, state.inducing, state.components[m], times, default_jitter(k, jitter_relative)));
  }
  for (std::size_t p = 0; p < procs; ++p) {
    const auto& k = model.activation_process_kernel(p);
    out.activation_moments.push_back(
        predict_marginals(k, state.activation_points(), state.activations[p], times, default_jitter(k, jitter_relative)));
  }
  const auto n = static_cast<Eigen::Index>(times.size());
  out.activations.resize(static_cast<Eigen::Index>(sources), n);
  if (model.kind == ModelKind::Softmax) {
    out.silence.resize(n);
    std::vector<double> logits(procs), phi(procs);
    for (Eigen::Index t = 0; t < n; ++t) {
      for (std::size_t p = 0; p < procs; ++p) logits[p] = out.activation_moments[p].means(t);
      softmax(logits, phi);
      out.silence(t) = phi[0];
      for (std::size_t m = 0; m < sources; ++m) out.activations(static_cast<Eigen::Index>(m), t) = phi[m + 1];
    }
  } else {
    for (std::size_t m = 0; m < sources; ++m) {
      const auto& g = out.activation_moments[m].means;
      for (Eigen::Index t = 0; t < n; ++t) out.activations(static_cast<Eigen::Index>(m), t) = sigmoid(g(t));
    }
  }
  return out;
}

ModelSpec build_loo_spec(const MsmKernel& target, std::span<const MsmKernel> others,
                         const MsmKernel& activation_kernel, std::string target_label, std::string others_label) {
  if (others.empty()) throw InvalidParameter("leave-one-out needs at least one other pitch kernel");
  ModelSpec spec;
  spec.kind = ModelKind::SigmoidLoo;
  spec.component_kernels = {target, MsmKernel::merge(others)};
  spec.activation_kernels = {activation_kernel, activation_kernel};
  spec.pitch_labels = {std::move(target_label), std::move(others_label)};
  return spec;
}

}  // namespace msmgp
