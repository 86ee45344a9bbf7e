#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace msmgp {

struct AudioClip {
  std::vector<double> samples;
  double sample_rate = 16000.0;
  std::string label;

  double duration_s() const noexcept { return static_cast<double>(samples.size()) / sample_rate; }
  double time_of(std::size_t n) const noexcept { return static_cast<double>(n) / sample_rate; }
};

struct NoteInterval {
  double onset_s = 0.0;
  double offset_s = 0.0;
};

struct GroundTruthPitch {
  std::string label;
  double f0_hz = 0.0;
  std::vector<NoteInterval> intervals;
};

/// Reference piano-roll as per-pitch lists of sounding intervals.
struct GroundTruthRoll {
  std::vector<GroundTruthPitch> pitches;
  double duration_s = 0.0;

  /// Non-overlapping, ordered intervals inside [0, duration_s].
  void validate() const;
  const GroundTruthPitch* find(std::string_view label) const noexcept;
};

/// Scientific pitch notation ("C4", "F#3", "Eb5") to Hz, A4 = 440 Hz.
double pitch_to_hz(std::string_view name);

/// Reads RIFF/WAVE PCM16 or IEEE float32. Multichannel files keep channel 0
/// (a warning goes to stderr). PCM16 maps v to v / 32768.
AudioClip load_wav(const std::filesystem::path& path);

/// Writes mono PCM16: round(x * 32768) clamped to [-32768, 32767].
void save_wav(const std::filesystem::path& path, const AudioClip& clip);

struct NoteSpec {
  double f0_hz = 261.63;
  std::size_t n_harmonics = 10;
  std::vector<double> harmonic_amps;     ///< empty -> 1/j
  std::vector<double> harmonic_decays_s; ///< empty -> 0.5 s each; <= 0 or inf means no decay
  double attack_s = 0.0;
  double release_s = 0.0;  ///< linear fade at the end of the note
  double inharmonicity = 0.0;  ///< partial j sits at j f0 sqrt(1 + B j^2)
};

/// sum_j a_j exp(-t / tau_j) sin(2 pi f_j t) with a linear attack ramp, peak
/// normalised to 0.9. Partials at or above Nyquist are dropped with a warning.
AudioClip synth_note(const NoteSpec& note, double duration_s, double sample_rate, std::string label = {});

/// Raw (un-normalised) rendering used by synth_note and synth_mixture.
std::vector<double> render_note(const NoteSpec& note, double duration_s, double sample_rate);

struct MixtureNote {
  std::string label;
  NoteSpec spec;
  double onset_s = 0.0;
  double offset_s = 0.0;
};

/// Places each note's render_note at its onset (sample accurate), sums,
/// and renormalises the peak to 0.9. duration_s <= 0 uses the last offset.
std::pair<AudioClip, GroundTruthRoll> synth_mixture(const std::vector<MixtureNote>& notes, double sample_rate,
                                                    double duration_s = 0.0);

/// Samples [begin_s, end_s) of a clip.
AudioClip slice(const AudioClip& clip, double begin_s, double end_s);

}  // namespace msmgp
