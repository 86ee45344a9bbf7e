#include "msmgp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "msmgp/error.hpp"

namespace msmgp {

PianoRoll::PianoRoll(std::vector<std::string> pitch_labels, double frame_hop_s, std::size_t num_frames)
    : labels_(std::move(pitch_labels)), hop_(frame_hop_s), frames_(num_frames), cells_(labels_.size() * num_frames, 0) {
  if (!(frame_hop_s > 0.0)) throw InvalidParameter("frame hop must be positive");
}

std::size_t PianoRoll::active_count() const noexcept {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

std::optional<std::size_t> PianoRoll::find(std::string_view label) const noexcept {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return i;
  }
  return std::nullopt;
}

std::size_t frame_count(double duration_s, double frame_hop_s) {
  if (!(frame_hop_s > 0.0)) throw InvalidParameter("frame hop must be positive");
  if (!(duration_s > 0.0)) return 0;
  // Tolerate round-off so that e.g. 3.0 / 0.01 gives 300, not 301.
  return static_cast<std::size_t>(std::ceil(duration_s / frame_hop_s - 1e-9));
}

PianoRoll discretize(const GroundTruthRoll& truth, double frame_hop_s, std::span<const std::string> labels,
                     std::size_t num_frames) {
  PianoRoll roll(std::vector<std::string>(labels.begin(), labels.end()), frame_hop_s, num_frames);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const auto* pitch = truth.find(labels[p]);
    if (!pitch) continue;
    for (std::size_t k = 0; k < num_frames; ++k) {
      const double centre = (static_cast<double>(k) + 0.5) * frame_hop_s;
      for (const auto& iv : pitch->intervals) {
        if (centre >= iv.onset_s && centre < iv.offset_s) {
          roll.set(p, k, true);
          break;
        }
      }
    }
  }
  return roll;
}

PianoRoll extract_roll(const SourceDecomposition& dec, double threshold, double frame_hop_s, double duration_s) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidParameter("threshold must lie in (0, 1)");
  if (!(frame_hop_s > 0.0)) throw InvalidParameter("frame hop must be positive");
  const auto& t = dec.times;
  double duration = duration_s;
  if (!(duration > 0.0) && !t.empty()) {
    const double dt = t.size() > 1 ? t[1] - t[0] : frame_hop_s;
    duration = t.back() + dt;
  }
  const std::size_t frames = frame_count(duration, frame_hop_s);
  const auto rows = static_cast<std::size_t>(dec.activations.rows());
  std::vector<std::string> labels = dec.labels;
  labels.resize(rows);
  PianoRoll roll(labels, frame_hop_s, frames);

  std::vector<double> sum(frames);
  std::vector<std::size_t> count(frames);
  for (std::size_t p = 0; p < rows; ++p) {
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto k = static_cast<std::size_t>(std::floor(t[i] / frame_hop_s + 1e-9));
      if (k >= frames) continue;
      sum[k] += dec.activations(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i));
      ++count[k];
    }
    for (std::size_t k = 0; k < frames; ++k) {
      if (count[k] > 0 && sum[k] / static_cast<double>(count[k]) > threshold) roll.set(p, k, true);
    }
  }
  return roll;
}

namespace {

void finish(std::size_t tp, std::size_t fp, std::size_t fn, double& p, double& r, double& f) {
  p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

}  // namespace

EvalResult frame_f_measure(const PianoRoll& pred, const PianoRoll& truth) {
  const std::set<std::string> a(pred.pitch_labels().begin(), pred.pitch_labels().end());
  const std::set<std::string> b(truth.pitch_labels().begin(), truth.pitch_labels().end());
  if (a != b || a.size() != pred.num_pitches()) {
    throw InvalidInput("predicted and reference rolls have different pitch label sets");
  }
  if (pred.num_frames() != truth.num_frames()) throw InvalidInput("rolls have different frame counts");
  EvalResult out;
  for (std::size_t p = 0; p < pred.num_pitches(); ++p) {
    const auto q = *truth.find(pred.pitch_labels()[p]);
    PitchScore s;
    s.label = pred.pitch_labels()[p];
    for (std::size_t k = 0; k < pred.num_frames(); ++k) {
      const bool x = pred.active(p, k);
      const bool y = truth.active(q, k);
      s.tp += x && y;
      s.fp += x && !y;
      s.fn += !x && y;
    }
    finish(s.tp, s.fp, s.fn, s.precision, s.recall, s.f_measure);
    out.tp += s.tp;
    out.fp += s.fp;
    out.fn += s.fn;
    out.per_pitch.push_back(std::move(s));
  }
  finish(out.tp, out.fp, out.fn, out.precision, out.recall, out.f_measure);
  return out;
}

EvalResult frame_f_measure(const PianoRoll& pred, const GroundTruthRoll& truth) {
  for (const auto& p : truth.pitches) {
    if (!pred.find(p.label)) throw InvalidInput("reference pitch " + p.label + " is missing from the predicted roll");
  }
  const auto ref = discretize(truth, pred.frame_hop_s(), pred.pitch_labels(), pred.num_frames());
  return frame_f_measure(pred, ref);
}

const char* to_string(LearningMode mode) noexcept {
  switch (mode) {
    case LearningMode::Tm: return "tm";
    case LearningMode::Ml: return "ml";
    case LearningMode::Fl: return "fl";
  }
  return "?";
}

LearningMode learning_mode_from_string(std::string_view name) {
  if (name == "tm") return LearningMode::Tm;
  if (name == "ml") return LearningMode::Ml;
  if (name == "fl") return LearningMode::Fl;
  throw InvalidParameter("unknown learning mode '" + std::string(name) + "' (expected fl, tm or ml)");
}

LearnResult learn_kernel(const AudioClip& note, const std::string& pitch_label, const LearnConfig& config) {
  if (note.samples.size() < 2) throw InvalidInput("training note is empty");
  LearnResult out{LabeledKernel{pitch_label, MsmKernel({LorentzianComponent{}})},
                  magnitude_ft(note.samples, note.sample_rate, config.window), std::nullopt, std::nullopt};
  if (config.mode == LearningMode::Fl) {
    SpectralFitOptions opts;
    opts.peak_window_hz = config.peak_window_hz;
    opts.residual = config.residual;
    out.fit_report = fit_msm_frequency_domain(out.spectrum, config.n_harmonics, opts);
    out.kernel.kernel = out.fit_report->kernel();
    return out;
  }
  const double f0 = config.f0_hz > 0.0 ? config.f0_hz : pitch_to_hz(pitch_label);
  const double var = config.tm_variance > 0.0 ? config.tm_variance : 1.0 / static_cast<double>(config.n_harmonics);
  const auto tm = init_manual(f0, config.n_harmonics, var, config.tm_lengthscale_s);
  if (config.mode == LearningMode::Tm) {
    out.kernel.kernel = tm;
    return out;
  }
  if (config.ml_snippet == 0 || config.ml_snippet > 4096) throw InvalidParameter("ML snippet must be in [1, 4096]");
  const auto start = std::min(static_cast<std::size_t>(std::llround(config.ml_snippet_start_s * note.sample_rate)),
                              note.samples.size() - 1);
  const std::size_t len = std::min(config.ml_snippet, note.samples.size() - start);
  std::vector<double> y(note.samples.begin() + static_cast<std::ptrdiff_t>(start),
                        note.samples.begin() + static_cast<std::ptrdiff_t>(start + len));
  std::vector<double> t(len);
  for (std::size_t i = 0; i < len; ++i) t[i] = note.time_of(start + i);
  // Match the prior scale to the snippet so the starting point is sensible.
  double power = 0.0;
  for (double v : y) power += v * v;
  power = std::max(power / static_cast<double>(len), 1e-12);
  out.ml_report = refine_marginal_likelihood(tm.scaled(power / tm.total_variance()), y, t, config.ml_iters);
  out.kernel.kernel = out.ml_report->kernel;
  return out;
}

namespace {

ElboBreakdown& operator+=(ElboBreakdown& a, const ElboBreakdown& b) {
  a.expected_loglik += b.expected_loglik;
  a.kl_f_total += b.kl_f_total;
  a.kl_g_total += b.kl_g_total;
  a.elbo += b.elbo;
  return a;
}

void accumulate_trace(std::vector<ElboBreakdown>& total, const std::vector<ElboBreakdown>& part) {
  if (total.size() < part.size()) total.resize(part.size());
  for (std::size_t i = 0; i < part.size(); ++i) total[i] += part[i];
}

struct WindowBounds {
  std::size_t begin;
  std::size_t end;
};

std::vector<WindowBounds> split_windows(std::size_t n, std::size_t window) {
  std::vector<WindowBounds> out;
  for (std::size_t b = 0; b < n; b += window) out.push_back({b, std::min(n, b + window)});
  // Fold a short tail into the previous window.
  if (out.size() > 1 && out.back().end - out.back().begin < window / 2) {
    out[out.size() - 2].end = out.back().end;
    out.pop_back();
  }
  return out;
}

// Runs one model over every window and stitches the decompositions together.
SourceDecomposition run_windows(const ModelSpec& model, const AudioClip& clip, const TranscribeConfig& config,
                                double floor_power, std::uint64_t seed_base, std::vector<ElboBreakdown>& trace) {
  const auto window = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::llround(config.window_s * clip.sample_rate)));
  SourceDecomposition all;
  std::uint64_t w = 0;
  for (const auto& bounds : split_windows(clip.samples.size(), window)) {
    Dataset data;
    for (std::size_t i = bounds.begin; i < bounds.end; ++i) {
      data.times.push_back(clip.time_of(i));
      data.values.push_back(clip.samples[i]);
    }
    double level = 0.0;
    for (double v : data.values) level += v * v;
    level = std::max(level / static_cast<double>(data.size()), floor_power);
    // Components arrive with unit total variance; each window is fitted at its own scale.
    ModelSpec local = model;
    for (auto& k : local.component_kernels) k = k.scaled(config.prior_power_ratio * level);
    FitConfig fc = config.fit;
    fc.noise_var = config.noise_ratio * level;
    if (fc.n_inducing == 0) {
      fc.n_inducing = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(config.inducing_per_sample *
                                                                                     static_cast<double>(data.size()))));
    }
    if (fc.n_activation_inducing == 0) fc.n_activation_inducing = config.activation_inducing;
    fc.seed = seed_base + 0x9E3779B97F4A7C15ULL * (w++ + 1);
    const auto result = fit(local, data, fc);
    accumulate_trace(trace, result.trace);
    all.append(decompose(local, result.state, data.times, fc.jitter_relative));
  }
  return all;
}

}  // namespace

TranscriptionResult transcribe(const AudioClip& mixture, std::span<const LabeledKernel> kernels,
                               const TranscribeConfig& config) {
  if (kernels.empty()) throw ConfigError("transcribe needs at least one pitch kernel");
  if (mixture.samples.empty()) throw InvalidInput("mixture is empty");
  if (config.expected_sample_rate > 0.0 && std::abs(mixture.sample_rate - config.expected_sample_rate) > 1e-6) {
    throw ConfigError("mixture sample rate " + std::to_string(mixture.sample_rate) + " Hz does not match the run's " +
                      std::to_string(config.expected_sample_rate) + " Hz");
  }
  double power = 0.0;
  for (double v : mixture.samples) power += v * v;
  power /= static_cast<double>(mixture.samples.size());
  // Near-silent windows are fitted at this level rather than their own.
  const double floor_power = std::max(1e-4 * power, 1e-12);

  std::vector<MsmKernel> scaled;
  std::vector<std::string> labels;
  for (const auto& lk : kernels) {
    scaled.push_back(lk.kernel.scaled(1.0 / lk.kernel.total_variance()));
    labels.push_back(lk.label);
  }
  const auto act = default_activation_kernel(config.activation_variance, config.activation_lengthscale_s);

  std::vector<ElboBreakdown> trace;
  SourceDecomposition dec;
  if (config.mode == ModelKind::SigmoidLoo) {
    if (kernels.size() < 2) throw ConfigError("sig-loo needs kernels for at least two pitches");
    std::vector<std::size_t> targets;
    if (config.target_pitch) {
      const auto it = std::find(labels.begin(), labels.end(), *config.target_pitch);
      if (it == labels.end()) throw ConfigError("target pitch " + *config.target_pitch + " has no kernel");
      targets.push_back(static_cast<std::size_t>(it - labels.begin()));
    } else {
      targets.resize(labels.size());
      std::iota(targets.begin(), targets.end(), std::size_t{0});
    }
    for (const auto t : targets) {
      // Every other pitch keeps the target's unit variance, so the merged
      // density is the plain sum of theirs.
      std::vector<MsmKernel> others;
      for (std::size_t j = 0; j < scaled.size(); ++j) {
        if (j != t) others.push_back(scaled[j]);
      }
      const auto spec = build_loo_spec(scaled[t], others, act, labels[t], "others");
      auto part = run_windows(spec, mixture, config, floor_power, config.fit.seed + 1000 * t, trace);
      // Keep only the target row.
      SourceDecomposition row;
      row.labels = {labels[t]};
      row.times = part.times;
      row.activations = part.activations.topRows(1);
      row.activation_moments = {part.activation_moments[0]};
      row.component_moments = {part.component_moments[0]};
      if (dec.times.empty()) {
        dec = std::move(row);
      } else {
        dec.labels.push_back(row.labels[0]);
        Eigen::MatrixXd stacked(dec.activations.rows() + 1, dec.activations.cols());
        stacked << dec.activations, row.activations;
        dec.activations = std::move(stacked);
        dec.activation_moments.push_back(row.activation_moments[0]);
        dec.component_moments.push_back(row.component_moments[0]);
      }
    }
  } else {
    ModelSpec spec;
    spec.kind = config.mode;
    spec.component_kernels = scaled;
    spec.activation_kernels.assign(scaled.size(), act);
    spec.pitch_labels = labels;
    if (spec.kind == ModelKind::Softmax) spec.silence_kernel = act;
    dec = run_windows(spec, mixture, config, floor_power, config.fit.seed, trace);
  }
  auto roll = extract_roll(dec, config.threshold, config.frame_hop_s, mixture.duration_s());
  return TranscriptionResult{std::move(roll), std::move(dec), std::move(trace)};
}

}  // namespace msmgp
