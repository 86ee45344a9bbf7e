#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "msmgp/audio.hpp"
#include "msmgp/elbo.hpp"
#include "msmgp/models.hpp"
#include "msmgp/pipeline.hpp"

namespace msmgp {

// Kernel files: {"pitch_label": ..., "components": [{"variance", "lengthscale_s", "freq_hz"}]}.
std::string kernel_to_json(const LabeledKernel& kernel);
LabeledKernel kernel_from_json(const std::string& text);
void save_kernel(const std::filesystem::path& path, const LabeledKernel& kernel);
LabeledKernel load_kernel(const std::filesystem::path& path);

/// Every *.json kernel in dir, ordered by ascending fundamental (labels that
/// are not pitch names sort after, alphabetically). Duplicate labels throw.
std::vector<LabeledKernel> load_kernel_dir(const std::filesystem::path& dir);

/// Header "time_s,<labels...>", then one 0/1 row per frame.
void save_roll_csv(const std::filesystem::path& path, const PianoRoll& roll);
/// Hop is taken from the first two time stamps (one frame: 0.01 s).
PianoRoll load_roll_csv(const std::filesystem::path& path);

/// Rows pitch_label,f0_hz,onset_s,offset_s with an optional header line.
/// duration_s becomes the latest offset.
GroundTruthRoll load_truth_csv(const std::filesystem::path& path);
void save_truth_csv(const std::filesystem::path& path, const GroundTruthRoll& truth);

void save_trace_csv(const std::filesystem::path& path, const std::vector<ElboBreakdown>& trace);

/// Model description on disk. Kernel paths are stored as given; relative
/// paths are resolved against the spec file's directory on load.
struct ModelSpecFile {
  ModelKind kind = ModelKind::Sigmoid;
  std::vector<std::filesystem::path> kernel_paths;
  double activation_variance = 1.0;
  double activation_lengthscale_s = 0.5;
};

void save_model_spec(const std::filesystem::path& path, const ModelSpecFile& spec);
ModelSpecFile load_model_spec_file(const std::filesystem::path& path);
/// Loads the referenced kernels and builds the ModelSpec.
ModelSpec load_model_spec(const std::filesystem::path& path);

/// Synthetic fixture description:
/// {"sample_rate": 16000,
///  "notes": {"C4": {"f0_hz": 261.63, "n_harmonics": 10, "amps": [...], "decays_s": [...],
///                   "attack_s": 0.005, "release_s": 0.02, "inharmonicity": 0}},
///  "training": {"duration_s": 2.0},
///  "mixtures": [{"name": "two_pitch", "duration_s": 3,
///                "events": [{"pitches": ["C4", "E4"], "onset_s": 0, "offset_s": 1}]}]}
struct FixtureEvent {
  std::vector<std::string> pitches;
  double onset_s = 0.0;
  double offset_s = 0.0;
};

struct FixtureMixture {
  std::string name;
  double duration_s = 0.0;  ///< 0 -> last offset
  std::vector<FixtureEvent> events;
};

struct FixtureSpec {
  double sample_rate = 16000.0;
  std::vector<std::pair<std::string, NoteSpec>> notes;
  double training_duration_s = 2.0;
  std::vector<FixtureMixture> mixtures;

  const NoteSpec& note(const std::string& label) const;
};

FixtureSpec load_fixture_spec(const std::filesystem::path& path);
FixtureSpec fixture_spec_from_json(const std::string& text);

struct RenderedMixture {
  std::string name;
  AudioClip audio;
  GroundTruthRoll truth;
};

AudioClip render_training_note(const FixtureSpec& spec, const std::string& label);
RenderedMixture render_mixture(const FixtureSpec& spec, const FixtureMixture& mixture);

/// Writes <label>.wav for every note plus <name>.wav and <name>_truth.csv for
/// every mixture. Returns the written paths.
std::vector<std::filesystem::path> write_fixture(const FixtureSpec& spec, const std::filesystem::path& out_dir);

}  // namespace msmgp
