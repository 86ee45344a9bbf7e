#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "msmgp/models.hpp"
#include "msmgp/quadrature.hpp"
#include "msmgp/vgp.hpp"

namespace msmgp {

struct Dataset {
  std::vector<double> times;
  std::vector<double> values;

  std::size_t size() const noexcept { return times.size(); }
};

struct ElboBreakdown {
  double expected_loglik = 0.0;
  double kl_f_total = 0.0;
  double kl_g_total = 0.0;
  double elbo = 0.0;
};

struct ElboOptions {
  double noise_var = 1e-3;
  int quad_order = kTrainingQuadratureOrder;
  MonteCarloConfig mc{};            ///< softmax models only
  double jitter_relative = 1e-6;    ///< relative to each kernel's k(0)
};

/// ELBO as a function of the flattened whitened variational parameters.
/// For every process (components first, then activation processes) the
/// parameter block is [m~ (M), lower triangle of L~ column by column with the
/// diagonal stored as log]. q(u) = N(Lzz m~, Lzz L~ L~^T Lzz^T).
/// Activation processes use activation_inducing when given, else `inducing`.
class ElboProblem {
 public:
  ElboProblem(ModelSpec model, InducingSet inducing, Dataset data, ElboOptions options,
              std::optional<InducingSet> activation_inducing = std::nullopt);

  std::size_t num_processes() const noexcept { return projections_.size(); }
  std::size_t num_parameters() const noexcept { return offsets_.back(); }
  /// Size and start of a process's parameter block.
  std::size_t block_size(std::size_t process) const noexcept { return offsets_[process + 1] - offsets_[process]; }
  std::size_t block_offset(std::size_t process) const noexcept { return offsets_[process]; }
  /// Number of inducing points of a process.
  std::size_t inducing_size(std::size_t process) const noexcept;
  /// "component[i] (label)" or "activation[j]" for diagnostics.
  std::string process_name(std::size_t process) const;

  /// m = 0 everywhere; L~ = I for components, 0.1 I for activations.
  Eigen::VectorXd initial_parameters() const;

  ElboBreakdown evaluate(const Eigen::VectorXd& params) const;
  ElboBreakdown evaluate(const Eigen::VectorXd& params, Eigen::VectorXd& grad) const;

  /// Replaces each component block, source by source, with its optimum given
  /// the activations and the other components. The expected log-likelihood
  /// is quadratic in f, so each update is exact (Monte Carlo gate moments for
  /// softmax models).
  void update_components(Eigen::VectorXd& params) const;

  /// update_components, then the ELBO at the new point and its gradient with
  /// the component blocks zeroed.
  ElboBreakdown update_components_then_evaluate(Eigen::VectorXd& params, Eigen::VectorXd& grad) const;

  VariationalState to_state(const Eigen::VectorXd& params) const;
  Eigen::VectorXd from_state(const VariationalState& state) const;

  const ModelSpec& model() const noexcept { return model_; }
  const InducingSet& inducing() const noexcept { return inducing_; }
  const InducingSet& activation_inducing() const noexcept {
    return activation_inducing_ ? *activation_inducing_ : inducing_;
  }
  const Dataset& data() const noexcept { return data_; }
  const ElboOptions& options() const noexcept { return options_; }

 private:
  struct Marginals {
    std::vector<Eigen::VectorXd> means, vars;
  };
  // fixed: component marginals already known (their gradient is then skipped).
  ElboBreakdown run(const Eigen::VectorXd& params, Eigen::VectorXd* grad, const Marginals* fixed = nullptr) const;
  void update(Eigen::VectorXd& params, Marginals* out) const;
  const MsmKernel& process_kernel(std::size_t process) const;

  ModelSpec model_;
  InducingSet inducing_;
  std::optional<InducingSet> activation_inducing_;
  Dataset data_;
  ElboOptions options_;
  GaussHermiteRule rule_;
  std::vector<WhitenedProjection> projections_;
  std::vector<std::size_t> offsets_;
};

/// Sum of per-point expected log-likelihoods minus every process KL.
ElboBreakdown elbo(const ModelSpec& model, const VariationalState& state, const Dataset& data,
                   const GaussHermiteRule& rule, double noise_var, const MonteCarloConfig& mc = {},
                   double jitter_relative = 1e-6);

/// GradientAscent: fixed step. Adam: per-coordinate adaptive step.
/// Lbfgs: limited-memory quasi-Newton with backtracking; stops early once an
/// accepted step gains less than tolerance * (1 + |ELBO|).
enum class Optimizer { GradientAscent, Adam, Lbfgs };

struct FitConfig {
  int max_iters = 300;
  double learning_rate = 0.02;
  int quad_order = kTrainingQuadratureOrder;
  std::size_t n_inducing = 0;  ///< 0 -> min(200, N / 16), at least 1
  std::size_t n_activation_inducing = 0;  ///< 0 -> activations share the component grid
  std::uint64_t seed = 0;      ///< Monte Carlo stream for softmax models
  std::size_t mc_samples = 2000;
  double noise_var = 1e-3;
  double jitter_relative = 1e-6;
  double clip_norm = 100.0;
  Optimizer optimizer = Optimizer::Lbfgs;
  double tolerance = 1e-7;  ///< Lbfgs only
  /// Closed-form component updates before every step; the optimiser then
  /// only moves the activation blocks. false runs plain joint ascent.
  bool closed_form_components = true;
};

std::size_t default_inducing_count(std::size_t n_data);

struct FitResult {
  VariationalState state;
  /// First entry at the initial state. max_iters + 1 entries for the
  /// fixed-length optimisers; Lbfgs records accepted steps and may stop early.
  std::vector<ElboBreakdown> trace;
};

/// Gradient ascent on the ELBO over every q(u); kernels stay fixed.
/// Throws NumericalFailure naming the process when a gradient turns non-finite.
FitResult fit(const ModelSpec& model, const Dataset& data, const FitConfig& config);

}  // namespace msmgp
