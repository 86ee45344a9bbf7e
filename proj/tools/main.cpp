// msmgp command line: learn, transcribe, eval, synth.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "msmgp/audio.hpp"
#include "msmgp/error.hpp"
#include "msmgp/io.hpp"
#include "msmgp/pipeline.hpp"
#include "plot.hpp"

namespace fs = std::filesystem;
using namespace msmgp;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct LearnArgs {
  fs::path input, out, plot;
  std::string label, mode = "fl", residual = "abs", window = "none";
  std::size_t n_harmonics = 10;
  double peak_window_hz = 40.0;
  double f0_hz = 0.0;
};

struct TranscribeArgs {
  fs::path input, kernels, out, trace, plot;
  std::string mode = "sig", target, optimizer = "lbfgs";
  double threshold = 0.5;
  std::uint64_t seed = 0;
  TranscribeConfig config;
};

int run_learn(const LearnArgs& a) {
  const auto clip = load_wav(a.input);
  LearnConfig cfg;
  cfg.mode = learning_mode_from_string(a.mode);
  cfg.n_harmonics = a.n_harmonics;
  cfg.peak_window_hz = a.peak_window_hz;
  cfg.f0_hz = a.f0_hz;
  if (a.residual == "rectified") {
    cfg.residual = ResidualRule::Rectified;
  } else if (a.residual != "abs") {
    throw ConfigError("--residual must be abs or rectified");
  }
  if (a.window == "hann") {
    cfg.window = SpectrumWindow::Hann;
  } else if (a.window != "none") {
    throw ConfigError("--window must be none or hann");
  }
  const auto result = learn_kernel(clip, a.label, cfg);
  save_kernel(a.out, result.kernel);
  if (result.fit_report) {
    const auto& r = *result.fit_report;
    if (r.stopped_early()) {
      std::cerr << "warning: residual fell below the noise floor after " << r.components.size() << " of "
                << r.requested << " components\n";
    }
    for (std::size_t i = 0; i < r.fallback.size(); ++i) {
      if (r.fallback[i]) std::cerr << "warning: local fit near " << r.peak_freqs_hz[i] << " Hz kept its initial guess\n";
    }
  }
  if (result.ml_report && result.ml_report->failed) {
    std::cerr << "warning: marginal likelihood refinement stopped: " << result.ml_report->failure << '\n';
  }
  if (!a.plot.empty()) {
    const auto fitted = spectrum_of(result.kernel.kernel, result.spectrum);
    plot::line_chart(a.plot, {{result.spectrum.freqs, result.spectrum.mags}, {fitted.freqs, fitted.mags}}, true);
  }
  std::cout << "wrote " << a.out.string() << " (" << result.kernel.kernel.size() << " components)\n";
  return 0;
}

int run_transcribe(TranscribeArgs a) {
  const auto clip = load_wav(a.input);
  std::vector<LabeledKernel> kernels;
  if (fs::is_regular_file(a.kernels)) {
    const auto spec = load_model_spec_file(a.kernels);
    for (const auto& p : spec.kernel_paths) kernels.push_back(load_kernel(p));
    a.config.activation_variance = spec.activation_variance;
    a.config.activation_lengthscale_s = spec.activation_lengthscale_s;
  } else {
    kernels = load_kernel_dir(a.kernels);
  }
  try {
    a.config.mode = model_kind_from_string(a.mode);
  } catch (const InvalidParameter& e) {
    throw ConfigError(e.what());
  }
  if (!a.target.empty()) {
    if (a.config.mode != ModelKind::SigmoidLoo) throw ConfigError("--target-pitch only applies to --mode sig-loo");
    a.config.target_pitch = a.target;
  }
  if (a.optimizer == "lbfgs") {
    a.config.fit.optimizer = Optimizer::Lbfgs;
  } else if (a.optimizer == "adam") {
    a.config.fit.optimizer = Optimizer::Adam;
  } else if (a.optimizer == "ga") {
    a.config.fit.optimizer = Optimizer::GradientAscent;
  } else {
    throw ConfigError("--optimizer must be lbfgs, adam or ga");
  }
  if (!(a.threshold > 0.0 && a.threshold < 1.0)) throw ConfigError("--threshold must lie in (0, 1)");
  a.config.threshold = a.threshold;
  a.config.fit.seed = a.seed;

  const auto result = transcribe(clip, kernels, a.config);
  save_roll_csv(a.out, result.roll);
  if (!a.trace.empty()) save_trace_csv(a.trace, result.trace);
  if (!a.plot.empty()) {
    const auto& dec = result.decomposition;
    std::vector<plot::Series> acts;
    for (Eigen::Index p = 0; p < dec.activations.rows(); ++p) {
      plot::Series s;
      // Thin the trace; plotting every sample is pointless at this resolution.
      const std::size_t stride = std::max<std::size_t>(1, dec.times.size() / 2000);
      for (std::size_t i = 0; i < dec.times.size(); i += stride) {
        s.x.push_back(dec.times[i]);
        s.y.push_back(dec.activations(p, static_cast<Eigen::Index>(i)));
      }
      acts.push_back(std::move(s));
    }
    plot::line_chart(a.plot / "activations.png", acts);
    Eigen::MatrixXd roll(result.roll.num_pitches(), result.roll.num_frames());
    for (std::size_t p = 0; p < result.roll.num_pitches(); ++p) {
      for (std::size_t k = 0; k < result.roll.num_frames(); ++k) {
        roll(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) = result.roll.active(p, k) ? 1.0 : 0.0;
      }
    }
    plot::heatmap(a.plot / "roll.png", roll);
    for (const auto& k : kernels) {
      const auto spec = magnitude_ft(clip.samples, clip.sample_rate);
      plot::line_chart(a.plot / ("spectrum_" + k.label + ".png"),
                       {{spec.freqs, spec.mags}, {spec.freqs, spectrum_of(k.kernel, spec).mags}}, true);
    }
  }
  std::cout << "wrote " << a.out.string() << " (" << result.roll.num_pitches() << " pitches x "
            << result.roll.num_frames() << " frames)\n";
  return 0;
}

int run_eval(const fs::path& pred_path, const fs::path& truth_path) {
  const auto pred = load_roll_csv(pred_path);
  const auto truth = load_truth_csv(truth_path);
  const auto r = frame_f_measure(pred, truth);
  std::printf("precision %.6f recall %.6f f_measure %.6f (tp %zu fp %zu fn %zu)\n", r.precision, r.recall,
              r.f_measure, r.tp, r.fp, r.fn);
  for (const auto& p : r.per_pitch) {
    std::printf("  %-4s precision %.6f recall %.6f f_measure %.6f\n", p.label.c_str(), p.precision, p.recall,
                p.f_measure);
  }
  return 0;
}

int run_synth(const fs::path& spec_path, const fs::path& out) {
  const auto spec = load_fixture_spec(spec_path);
  for (const auto& p : write_fixture(spec, out)) std::cout << "wrote " << p.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matérn spectral mixture kernels and GP-based pitch transcription"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value file; options go under a [transcribe] or [learn] section");

  LearnArgs la;
  auto* learn = app.add_subcommand("learn", "Learn a pitch kernel from an isolated note");
  learn->fallthrough();
  learn->add_option("--input", la.input, "Note recording (WAV)")->required()->check(CLI::ExistingFile);
  learn->add_option("--pitch-label", la.label, "Pitch label, e.g. C4")->required();
  learn->add_option("--n-harmonics", la.n_harmonics, "Components to extract")->capture_default_str()
      ->check(CLI::PositiveNumber);
  learn->add_option("--mode", la.mode, "fl, tm or ml")->capture_default_str()
      ->check(CLI::IsMember({"fl", "tm", "ml"}));
  learn->add_option("--out", la.out, "Kernel JSON path")->required();
  learn->add_option("--peak-window-hz", la.peak_window_hz, "Half width of each local fit")->capture_default_str()
      ->check(CLI::PositiveNumber);
  learn->add_option("--plot", la.plot, "PNG with the spectrum and the fitted density");
  learn->add_option("--residual", la.residual, "abs or rectified")->capture_default_str();
  learn->add_option("--window", la.window, "Spectrum taper: none or hann")->capture_default_str();
  learn->add_option("--f0-hz", la.f0_hz, "Initial fundamental for tm/ml (default: from the label)");

  TranscribeArgs ta;
  auto& fc = ta.config.fit;
  auto* tr = app.add_subcommand("transcribe", "Transcribe a polyphonic mixture");
  tr->fallthrough();
  tr->add_option("--input", ta.input, "Mixture (WAV)")->required()->check(CLI::ExistingFile);
  tr->add_option("--kernels", ta.kernels, "Directory of kernel JSON files, or a model spec JSON")->required()
      ->check(CLI::ExistingPath);
  tr->add_option("--mode", ta.mode, "sig, sof or sig-loo")->capture_default_str();
  tr->add_option("--target-pitch", ta.target, "sig-loo target (default: every pitch in turn)");
  tr->add_option("--out", ta.out, "Piano-roll CSV")->required();
  tr->add_option("--trace", ta.trace, "ELBO trace CSV");
  tr->add_option("--plot", ta.plot, "Directory for PNG plots");
  tr->add_option("--threshold", ta.threshold)->capture_default_str();
  tr->add_option("--seed", ta.seed)->capture_default_str();
  tr->add_option("--frame-hop-s", ta.config.frame_hop_s)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--window-s", ta.config.window_s, "Length of each independently fitted window")
      ->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--noise-ratio", ta.config.noise_ratio, "Noise variance over window power")->capture_default_str()
      ->check(CLI::PositiveNumber);
  tr->add_option("--prior-power-ratio", ta.config.prior_power_ratio, "Component prior variance over window power")
      ->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--inducing-per-sample", ta.config.inducing_per_sample, "Component inducing density")
      ->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--activation-inducing", ta.config.activation_inducing, "Activation inducing points per window")
      ->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--activation-variance", ta.config.activation_variance)->capture_default_str();
  tr->add_option("--activation-lengthscale-s", ta.config.activation_lengthscale_s)->capture_default_str();
  tr->add_option("--sample-rate", ta.config.expected_sample_rate, "Expected input rate (0: any)")
      ->capture_default_str();
  tr->add_option("--max-iters", fc.max_iters)->capture_default_str()->check(CLI::NonNegativeNumber);
  tr->add_option("--learning-rate", fc.learning_rate)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--quad-order", fc.quad_order)->capture_default_str()->check(CLI::Range(1, 100));
  tr->add_option("--n-inducing", fc.n_inducing, "Per window; 0 uses --inducing-per-sample")->capture_default_str();
  tr->add_option("--mc-samples", fc.mc_samples, "Softmax Monte Carlo draws")->capture_default_str()
      ->check(CLI::PositiveNumber);
  tr->add_option("--optimizer", ta.optimizer, "lbfgs, adam or ga")->capture_default_str();

  fs::path pred, truth;
  auto* ev = app.add_subcommand("eval", "Frame-level precision, recall and F-measure");
  ev->add_option("--pred", pred, "Predicted roll CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--truth", truth, "Ground truth CSV")->required()->check(CLI::ExistingFile);

  fs::path spec, out;
  auto* sy = app.add_subcommand("synth", "Render a synthetic fixture");
  sy->add_option("--spec", spec, "Fixture JSON")->required()->check(CLI::ExistingFile);
  sy->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*learn) return run_learn(la);
    if (*tr) return run_transcribe(ta);
    if (*ev) return run_eval(pred, truth);
    if (*sy) return run_synth(spec, out);
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
