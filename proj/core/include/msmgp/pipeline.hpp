#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msmgp/audio.hpp"
#include "msmgp/elbo.hpp"
#include "msmgp/kernels.hpp"
#include "msmgp/models.hpp"
#include "msmgp/spectral_fit.hpp"

namespace msmgp {

struct LabeledKernel {
  std::string label;
  MsmKernel kernel;
};

/// Boolean pitch x frame matrix. Frame k covers [k hop, (k + 1) hop).
class PianoRoll {
 public:
  PianoRoll(std::vector<std::string> pitch_labels, double frame_hop_s, std::size_t num_frames);

  const std::vector<std::string>& pitch_labels() const noexcept { return labels_; }
  double frame_hop_s() const noexcept { return hop_; }
  std::size_t num_frames() const noexcept { return frames_; }
  std::size_t num_pitches() const noexcept { return labels_.size(); }

  bool active(std::size_t pitch, std::size_t frame) const { return cells_.at(pitch * frames_ + frame) != 0; }
  void set(std::size_t pitch, std::size_t frame, bool on) { cells_.at(pitch * frames_ + frame) = on ? 1 : 0; }
  std::size_t active_count() const noexcept;

  /// Row index of a label, or nullopt.
  std::optional<std::size_t> find(std::string_view label) const noexcept;

  bool operator==(const PianoRoll& other) const = default;

 private:
  std::vector<std::string> labels_;
  double hop_;
  std::size_t frames_;
  std::vector<std::uint8_t> cells_;
};

std::size_t frame_count(double duration_s, double frame_hop_s);

/// A frame is active when its centre lies inside one of the pitch's intervals.
PianoRoll discretize(const GroundTruthRoll& truth, double frame_hop_s, std::span<const std::string> labels,
                     std::size_t num_frames);

/// Pitch active in a frame iff the mean of phi^ over the frame's samples is
/// strictly greater than threshold. The softmax silence row is never included.
/// duration_s <= 0 infers the duration from the sample spacing of dec.times.
PianoRoll extract_roll(const SourceDecomposition& dec, double threshold, double frame_hop_s,
                       double duration_s = 0.0);

struct PitchScore {
  std::string label;
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f_measure = 0.0;
};

struct EvalResult {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f_measure = 0.0;
  std::vector<PitchScore> per_pitch;
};

/// Frame-level precision, recall and F over every (pitch, frame) cell; truth
/// is discretised at pred's hop and frame count. Pitches absent from the
/// reference count as silent; reference pitches absent from pred throw.
EvalResult frame_f_measure(const PianoRoll& pred, const GroundTruthRoll& truth);
EvalResult frame_f_measure(const PianoRoll& pred, const PianoRoll& truth);

enum class LearningMode { Tm, Ml, Fl };

const char* to_string(LearningMode mode) noexcept;
LearningMode learning_mode_from_string(std::string_view name);

struct LearnConfig {
  LearningMode mode = LearningMode::Fl;
  std::size_t n_harmonics = 10;
  double peak_window_hz = 40.0;
  ResidualRule residual = ResidualRule::AbsoluteDifference;
  SpectrumWindow window = SpectrumWindow::None;
  double f0_hz = 0.0;             ///< TM/ML initial fundamental; 0 -> from the pitch label
  double tm_variance = 0.0;       ///< 0 -> 1 / n_harmonics
  double tm_lengthscale_s = 0.5;
  std::size_t ml_snippet = 1024;  ///< <= 4096
  double ml_snippet_start_s = 0.05;
  int ml_iters = 40;
};

struct LearnResult {
  LabeledKernel kernel;
  MagnitudeSpectrum spectrum;
  std::optional<FitReport> fit_report;     ///< FL
  std::optional<MlRefineResult> ml_report; ///< ML
};

/// Learns one pitch's kernel from an isolated note recording.
LearnResult learn_kernel(const AudioClip& note, const std::string& pitch_label, const LearnConfig& config);

struct TranscribeConfig {
  ModelKind mode = ModelKind::Sigmoid;
  std::optional<std::string> target_pitch;  ///< sig-loo: one target; unset -> every pitch in turn
  double threshold = 0.5;
  double frame_hop_s = 0.01;
  double window_s = 0.01;           ///< independent variational fits over consecutive windows
  double noise_ratio = 1e-3;        ///< noise variance relative to window power
  double prior_power_ratio = 0.25;  ///< component prior variance relative to window power
  double inducing_per_sample = 0.5; ///< component inducing density when fit.n_inducing is 0
  std::size_t activation_inducing = 2;  ///< per window, when fit.n_activation_inducing is 0
  double activation_variance = 1.0;
  double activation_lengthscale_s = 0.5;
  double expected_sample_rate = 16000.0;  ///< 0 accepts any rate
  FitConfig fit = default_fit();  ///< n_inducing 0 -> default per window; noise_var is overwritten

  static FitConfig default_fit() {
    FitConfig f;
    f.max_iters = 100;
    f.mc_samples = 100;
    return f;
  }
};

struct TranscriptionResult {
  PianoRoll roll;
  SourceDecomposition decomposition;     ///< one activation row per roll pitch
  std::vector<ElboBreakdown> trace;      ///< summed over windows (and LOO targets)
};

/// Fits the chosen model window by window, decomposes and thresholds. Each
/// window is fitted at its own level P (mean square, floored at 1e-4 of the
/// mixture's): component kernels are rescaled to total variance
/// prior_power_ratio * P and the noise variance is noise_ratio * P.
TranscriptionResult transcribe(const AudioClip& mixture, std::span<const LabeledKernel> kernels,
                               const TranscribeConfig& config);

}  // namespace msmgp
