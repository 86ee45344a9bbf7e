#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "msmgp/kernels.hpp"
#include "msmgp/quadrature.hpp"
#include "msmgp/vgp.hpp"

namespace msmgp {

enum class ModelKind { Sigmoid, Softmax, SigmoidLoo };

const char* to_string(ModelKind kind) noexcept;
ModelKind model_kind_from_string(std::string_view name);

/// Default prior for activation processes g_m: a single Matérn-1/2 term with
/// no oscillation (center 0).
MsmKernel default_activation_kernel(double variance = 1.0, double lengthscale_s = 0.5);

/// y(t) = sum_m phi_m(t) w_m(t) + noise. One component and one activation
/// kernel per source. Softmax models add an implicit silence activation g_0
/// whose component is identically zero; it is never stored as a kernel pair.
struct ModelSpec {
  ModelKind kind = ModelKind::Sigmoid;
  std::vector<MsmKernel> component_kernels;
  std::vector<MsmKernel> activation_kernels;
  std::vector<std::string> pitch_labels;
  std::optional<MsmKernel> silence_kernel;  ///< softmax only; defaults to default_activation_kernel()

  void validate() const;

  std::size_t num_sources() const noexcept { return component_kernels.size(); }
  /// M for sigmoid models, M + 1 for softmax.
  std::size_t num_activation_processes() const noexcept;
  /// Prior of activation process p (softmax: p = 0 is silence).
  const MsmKernel& activation_process_kernel(std::size_t p) const;
  /// Index of the activation process gating source m.
  std::size_t activation_index(std::size_t source) const noexcept;
};

struct GaussianMoment {
  double mean = 0.0;
  double var = 0.0;
};

struct MomentGrad {
  double d_mean = 0.0;
  double d_var = 0.0;
};

/// Marginal moments of the component f and activation g of one source at one time.
struct SourceMoments {
  GaussianMoment f;
  GaussianMoment g;
};

struct SourceMomentGrad {
  MomentGrad f;
  MomentGrad g;
};

/// E[log N(y | sigma(g) f, noise_var)] for one source.
double sigmoid_point_loglik(double y, double mf, double vf, double mg, double vg, double noise_var,
                            const GaussHermiteRule& rule);

/// Multi-source sigmoid expected log-likelihood via the independence expansion
///   E[(y - sum_d s_d f_d)^2] = y^2 - 2 y sum_d mf_d E[s_d] + sum_d (vf_d + mf_d^2) E[s_d^2]
///                             + sum_{d != e} mf_d mf_e E[s_d] E[s_e].
double sigmoid_multi_point_loglik(double y, std::span<const SourceMoments> sources, double noise_var,
                                  const GaussHermiteRule& rule);

/// As above and accumulates d/d(moments) into grad (same length as sources).
double sigmoid_multi_point_loglik_grad(double y, std::span<const SourceMoments> sources, double noise_var,
                                       const GaussHermiteRule& rule, std::span<SourceMomentGrad> grad);

struct MonteCarloConfig {
  std::size_t samples = 2000;
  std::uint64_t seed = 0;
};

struct MonteCarloEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Softmax model, one observation. activations holds M + 1 moments with the
/// silence process first; components holds the M non-silent f moments.
/// f is integrated in closed form given g; the coupled activations are
/// sampled with a counter-based generator keyed on (seed, point_index).
MonteCarloEstimate softmax_point_loglik_estimate(double y, std::span<const GaussianMoment> activations,
                                                 std::span<const GaussianMoment> components, double noise_var,
                                                 const MonteCarloConfig& mc, std::uint64_t point_index = 0);

double softmax_point_loglik(double y, std::span<const GaussianMoment> activations,
                            std::span<const GaussianMoment> components, double noise_var,
                            const MonteCarloConfig& mc, std::uint64_t point_index = 0);

/// Reparameterisation gradient of the same estimate (common random numbers).
double softmax_point_loglik_grad(double y, std::span<const GaussianMoment> activations,
                                 std::span<const GaussianMoment> components, double noise_var,
                                 const MonteCarloConfig& mc, std::uint64_t point_index,
                                 std::span<MomentGrad> d_activations, std::span<MomentGrad> d_components);

/// Monte Carlo moments of the non-silent softmax gates with the same draws as
/// softmax_point_loglik: mean(m) = E[phi_m], second(m, k) = E[phi_m phi_k].
void softmax_gate_moments(std::span<const GaussianMoment> activations, const MonteCarloConfig& mc,
                          std::uint64_t point_index, Eigen::Ref<Eigen::VectorXd> mean,
                          Eigen::Ref<Eigen::MatrixXd> second);

/// Softmax of point estimates; out[0] is silence.
void softmax(std::span<const double> logits, std::span<double> out);

/// Per-source activation curves phi^_m(t) plus the marginals they came from.
struct SourceDecomposition {
  std::vector<std::string> labels;
  std::vector<double> times;
  Eigen::MatrixXd activations;  ///< sources x times, in [0, 1]
  Eigen::VectorXd silence;      ///< softmax only, empty otherwise
  std::vector<MarginalMoments> activation_moments;  ///< per activation process
  std::vector<MarginalMoments> component_moments;   ///< per source

  /// Appends another decomposition covering later times (same labels/shape).
  void append(const SourceDecomposition& later);
};

/// phi^: sigmoid -> sigma(E[g_m(t)]); softmax -> softmax over all E[g_j(t)].
SourceDecomposition decompose(const ModelSpec& model, const VariationalState& state, std::span<const double> times,
                              double jitter_relative = 1e-6);

/// Two-source sigmoid spec: source 0 carries target, source 1 the merged
/// components of every other pitch.
ModelSpec build_loo_spec(const MsmKernel& target, std::span<const MsmKernel> others,
                         const MsmKernel& activation_kernel = default_activation_kernel(),
                         std::string target_label = "target", std::string others_label = "others");

}  // namespace msmgp
