#include "msmgp/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "msmgp/error.hpp"

namespace msmgp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(what + ": " + e.what());
  }
}

template <class T>
T get_field(const json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(what + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(what + ": field '" + key + "' has the wrong type");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& what) {
  if (!j.contains(key)) return fallback;
  return get_field<T>(j, key, what);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": '" + s + "' is not a number");
  }
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

double pitch_key(const std::string& label) {
  try {
    return pitch_to_hz(label);
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

std::string kernel_to_json(const LabeledKernel& kernel) {
  json j;
  j["pitch_label"] = kernel.label;
  j["components"] = json::array();
  for (const auto& c : kernel.kernel.components()) {
    j["components"].push_back({{"variance", c.variance}, {"lengthscale_s", c.lengthscale_s()}, {"freq_hz", c.freq_hz()}});
  }
  return j.dump(2);
}

LabeledKernel kernel_from_json(const std::string& text) {
  const std::string what = "kernel file";
  const auto j = parse_json(text, what);
  const auto label = get_field<std::string>(j, "pitch_label", what);
  if (!j.contains("components") || !j["components"].is_array() || j["components"].empty()) {
    throw FormatError(what + ": 'components' must be a non-empty array");
  }
  std::vector<LorentzianComponent> comps;
  for (const auto& c : j["components"]) {
    comps.push_back(LorentzianComponent::from_hz(get_field<double>(c, "variance", what),
                                                 get_field<double>(c, "lengthscale_s", what),
                                                 get_field<double>(c, "freq_hz", what)));
  }
  return LabeledKernel{label, MsmKernel(std::move(comps))};
}

void save_kernel(const fs::path& path, const LabeledKernel& kernel) {
  auto out = open_out(path);
  out << kernel_to_json(kernel) << '\n';
}

LabeledKernel load_kernel(const fs::path& path) {
  try {
    return kernel_from_json(read_text(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<LabeledKernel> load_kernel_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("kernel directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<LabeledKernel> out;
  std::set<std::string> seen;
  for (const auto& f : files) {
    auto k = load_kernel(f);
    if (!seen.insert(k.label).second) throw ConfigError("duplicate kernel for pitch " + k.label + " in " + dir.string());
    out.push_back(std::move(k));
  }
  if (out.empty()) throw ConfigError("no kernel files in " + dir.string());
  std::stable_sort(out.begin(), out.end(), [](const LabeledKernel& a, const LabeledKernel& b) {
    const double ka = pitch_key(a.label), kb = pitch_key(b.label);
    if (ka != kb) return ka < kb;
    return a.label < b.label;
  });
  return out;
}

void save_roll_csv(const fs::path& path, const PianoRoll& roll) {
  auto out = open_out(path);
  out << "time_s";
  for (const auto& l : roll.pitch_labels()) out << ',' << l;
  out << '\n';
  out << std::setprecision(10);
  for (std::size_t k = 0; k < roll.num_frames(); ++k) {
    out << static_cast<double>(k) * roll.frame_hop_s();
    for (std::size_t p = 0; p < roll.num_pitches(); ++p) out << ',' << (roll.active(p, k) ? 1 : 0);
    out << '\n';
  }
}

PianoRoll load_roll_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line)) throw FormatError(where + ": empty roll file");
  auto header = split_csv(line);
  if (header.size() < 2) throw FormatError(where + ": roll header needs a time column and at least one pitch");
  std::vector<std::string> labels(header.begin() + 1, header.end());
  std::vector<double> times;
  std::vector<std::vector<bool>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto cells = split_csv(line);
    const std::string at = where + ":" + std::to_string(lineno);
    if (cells.size() != header.size()) throw FormatError(at + ": expected " + std::to_string(header.size()) + " columns");
    times.push_back(to_double(cells[0], at));
    std::vector<bool> row;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      if (cells[i] != "0" && cells[i] != "1") throw FormatError(at + ": roll cells must be 0 or 1");
      row.push_back(cells[i] == "1");
    }
    rows.push_back(std::move(row));
  }
  const double hop = times.size() > 1 ? times[1] - times[0] : 0.01;
  if (!(hop > 0.0)) throw FormatError(where + ": frame times must increase");
  PianoRoll roll(labels, hop, rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t p = 0; p < labels.size(); ++p) roll.set(p, k, rows[k][p]);
  }
  return roll;
}

GroundTruthRoll load_truth_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  const std::string where = path.string();
  GroundTruthRoll truth;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto cells = split_csv(line);
    const std::string at = where + ":" + std::to_string(lineno);
    if (cells.size() != 4) throw FormatError(at + ": expected pitch_label,f0_hz,onset_s,offset_s");
    if (cells[0] == "pitch_label") continue;
    const double f0 = to_double(cells[1], at);
    const NoteInterval iv{to_double(cells[2], at), to_double(cells[3], at)};
    auto it = std::find_if(truth.pitches.begin(), truth.pitches.end(),
                           [&](const GroundTruthPitch& p) { return p.label == cells[0]; });
    if (it == truth.pitches.end()) {
      truth.pitches.push_back(GroundTruthPitch{cells[0], f0, {}});
      it = truth.pitches.end() - 1;
    }
    it->intervals.push_back(iv);
    truth.duration_s = std::max(truth.duration_s, iv.offset_s);
  }
  for (auto& p : truth.pitches) {
    std::sort(p.intervals.begin(), p.intervals.end(),
              [](const NoteInterval& a, const NoteInterval& b) { return a.onset_s < b.onset_s; });
  }
  truth.validate();
  return truth;
}

void save_truth_csv(const fs::path& path, const GroundTruthRoll& truth) {
  auto out = open_out(path);
  out << "pitch_label,f0_hz,onset_s,offset_s\n";
  for (const auto& p : truth.pitches) {
    for (const auto& iv : p.intervals) out << p.label << ',' << p.f0_hz << ',' << iv.onset_s << ',' << iv.offset_s << '\n';
  }
}

void save_trace_csv(const fs::path& path, const std::vector<ElboBreakdown>& trace) {
  auto out = open_out(path);
  out << "iteration,expected_loglik,kl_f_total,kl_g_total,elbo\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& t = trace[i];
    out << i << ',' << t.expected_loglik << ',' << t.kl_f_total << ',' << t.kl_g_total << ',' << t.elbo << '\n';
  }
}

void save_model_spec(const fs::path& path, const ModelSpecFile& spec) {
  json j;
  j["model"] = to_string(spec.kind);
  j["kernels"] = json::array();
  for (const auto& p : spec.kernel_paths) j["kernels"].push_back(p.generic_string());
  j["activation"] = {{"variance", spec.activation_variance}, {"lengthscale_s", spec.activation_lengthscale_s}};
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

ModelSpecFile load_model_spec_file(const fs::path& path) {
  const std::string what = path.string();
  const auto j = parse_json(read_text(path), what);
  ModelSpecFile spec;
  try {
    spec.kind = model_kind_from_string(get_field<std::string>(j, "model", what));
  } catch (const InvalidParameter& e) {
    throw ConfigError(what + ": " + e.what());
  }
  for (const auto& p : get_field<std::vector<std::string>>(j, "kernels", what)) {
    fs::path kp(p);
    if (kp.is_relative()) kp = path.parent_path() / kp;
    spec.kernel_paths.push_back(kp);
  }
  if (j.contains("activation")) {
    spec.activation_variance = get_or(j["activation"], "variance", spec.activation_variance, what);
    spec.activation_lengthscale_s = get_or(j["activation"], "lengthscale_s", spec.activation_lengthscale_s, what);
  }
  return spec;
}

ModelSpec load_model_spec(const fs::path& path) {
  const auto file = load_model_spec_file(path);
  ModelSpec spec;
  spec.kind = file.kind;
  const auto act = default_activation_kernel(file.activation_variance, file.activation_lengthscale_s);
  for (const auto& kp : file.kernel_paths) {
    auto k = load_kernel(kp);
    spec.pitch_labels.push_back(k.label);
    spec.component_kernels.push_back(std::move(k.kernel));
    spec.activation_kernels.push_back(act);
  }
  if (spec.kind == ModelKind::Softmax) spec.silence_kernel = act;
  spec.validate();
  return spec;
}

const NoteSpec& FixtureSpec::note(const std::string& label) const {
  for (const auto& [l, n] : notes) {
    if (l == label) return n;
  }
  throw ConfigError("fixture has no note '" + label + "'");
}

FixtureSpec fixture_spec_from_json(const std::string& text) {
  const std::string what = "fixture spec";
  const auto j = parse_json(text, what);
  FixtureSpec spec;
  spec.sample_rate = get_or(j, "sample_rate", spec.sample_rate, what);
  if (!(spec.sample_rate > 0.0)) throw ConfigError(what + ": sample_rate must be positive");
  if (!j.contains("notes") || !j["notes"].is_object()) throw FormatError(what + ": 'notes' must be an object");
  for (const auto& [label, n] : j["notes"].items()) {
    NoteSpec ns;
    ns.f0_hz = n.contains("f0_hz") ? n["f0_hz"].get<double>() : pitch_to_hz(label);
    ns.n_harmonics = get_or<std::size_t>(n, "n_harmonics", ns.n_harmonics, what);
    ns.harmonic_amps = get_or(n, "amps", ns.harmonic_amps, what);
    ns.harmonic_decays_s = get_or(n, "decays_s", ns.harmonic_decays_s, what);
    ns.attack_s = get_or(n, "attack_s", ns.attack_s, what);
    ns.release_s = get_or(n, "release_s", ns.release_s, what);
    ns.inharmonicity = get_or(n, "inharmonicity", ns.inharmonicity, what);
    spec.notes.emplace_back(label, std::move(ns));
  }
  if (j.contains("training")) spec.training_duration_s = get_or(j["training"], "duration_s", spec.training_duration_s, what);
  if (j.contains("mixtures")) {
    for (const auto& m : j["mixtures"]) {
      FixtureMixture mix;
      mix.name = get_field<std::string>(m, "name", what);
      mix.duration_s = get_or(m, "duration_s", 0.0, what);
      for (const auto& e : get_field<json>(m, "events", what)) {
        FixtureEvent ev;
        ev.pitches = get_field<std::vector<std::string>>(e, "pitches", what);
        ev.onset_s = get_field<double>(e, "onset_s", what);
        ev.offset_s = get_field<double>(e, "offset_s", what);
        if (!(ev.offset_s > ev.onset_s)) throw ConfigError(what + ": event offset must follow onset in " + mix.name);
        for (const auto& p : ev.pitches) (void)spec.note(p);
        mix.events.push_back(std::move(ev));
      }
      spec.mixtures.push_back(std::move(mix));
    }
  }
  return spec;
}

FixtureSpec load_fixture_spec(const fs::path& path) {
  try {
    return fixture_spec_from_json(read_text(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

AudioClip render_training_note(const FixtureSpec& spec, const std::string& label) {
  return synth_note(spec.note(label), spec.training_duration_s, spec.sample_rate, label);
}

RenderedMixture render_mixture(const FixtureSpec& spec, const FixtureMixture& mixture) {
  std::vector<MixtureNote> notes;
  for (const auto& ev : mixture.events) {
    for (const auto& p : ev.pitches) notes.push_back(MixtureNote{p, spec.note(p), ev.onset_s, ev.offset_s});
  }
  auto [audio, truth] = synth_mixture(notes, spec.sample_rate, mixture.duration_s);
  audio.label = mixture.name;
  return RenderedMixture{mixture.name, std::move(audio), std::move(truth)};
}

std::vector<fs::path> write_fixture(const FixtureSpec& spec, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const auto& [label, note] : spec.notes) {
    const auto p = out_dir / (label + ".wav");
    save_wav(p, render_training_note(spec, label));
    written.push_back(p);
  }
  for (const auto& m : spec.mixtures) {
    const auto r = render_mixture(spec, m);
    const auto w = out_dir / (m.name + ".wav");
    const auto t = out_dir / (m.name + "_truth.csv");
    save_wav(w, r.audio);
    save_truth_csv(t, r.truth);
    written.push_back(w);
    written.push_back(t);
  }
  return written;
}

}  // namespace msmgp
