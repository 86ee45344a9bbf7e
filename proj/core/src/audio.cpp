#include "msmgp/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>

#include "msmgp/error.hpp"

namespace msmgp {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

constexpr double kPeak = 0.9;

std::uint32_t read_u32(const std::uint8_t* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}
std::uint16_t read_u16(const std::uint8_t* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 2);
}

void normalise_peak(std::vector<double>& x, double target) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    const double g = target / peak;
    for (double& v : x) v *= g;
  }
}

}  // namespace

void GroundTruthRoll::validate() const {
  for (const auto& p : pitches) {
    double last = -INFINITY;
    for (const auto& iv : p.intervals) {
      if (!(iv.offset_s > iv.onset_s)) throw InvalidInput("interval for " + p.label + " has offset <= onset");
      if (iv.onset_s < last) throw InvalidInput("intervals for " + p.label + " overlap or are unordered");
      if (iv.onset_s < 0.0 || (duration_s > 0.0 && iv.offset_s > duration_s + 1e-9)) {
        throw InvalidInput("interval for " + p.label + " lies outside the clip");
      }
      last = iv.offset_s;
    }
  }
}

const GroundTruthPitch* GroundTruthRoll::find(std::string_view label) const noexcept {
  for (const auto& p : pitches) {
    if (p.label == label) return &p;
  }
  return nullptr;
}

double pitch_to_hz(std::string_view name) {
  static const std::map<char, int> steps{{'C', -9}, {'D', -7}, {'E', -5}, {'F', -4},
                                         {'G', -2}, {'A', 0},  {'B', 2}};
  if (name.size() < 2) throw InvalidParameter("pitch name too short: '" + std::string(name) + "'");
  const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
  const auto it = steps.find(letter);
  if (it == steps.end()) throw InvalidParameter("unknown pitch letter in '" + std::string(name) + "'");
  int semis = it->second;
  std::size_t pos = 1;
  while (pos < name.size() && (name[pos] == '#' || name[pos] == 'b')) {
    semis += name[pos] == '#' ? 1 : -1;
    ++pos;
  }
  int octave = 0;
  try {
    std::size_t used = 0;
    octave = std::stoi(std::string(name.substr(pos)), &used);
    if (used != name.size() - pos) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw InvalidParameter("bad octave in pitch name '" + std::string(name) + "'");
  }
  semis += 12 * (octave - 4);
  return 440.0 * std::pow(2.0, static_cast<double>(semis) / 12.0);
}

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open WAV file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("RIFF: missing RIFF/WAVE header in " + path.string());
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(reinterpret_cast<const char*>(bytes.data() + pos), 4);
    const std::uint32_t len = read_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size() && id != "data") throw FormatError(id + ": chunk runs past end of file");
    if (id == "fmt ") {
      if (len < 16) throw FormatError("fmt : chunk too short");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == 0xFFFE && len >= 26) format = read_u16(bytes.data() + body + 24);  // extensible
      have_fmt = true;
    } else if (id == "data") {
      data = bytes.data() + body;
      data_len = std::min<std::size_t>(len, bytes.size() - body);
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt) throw FormatError("fmt : chunk missing");
  if (!data) throw FormatError("data: chunk missing");
  if (channels == 0) throw FormatError("fmt : zero channels");
  if (rate == 0) throw FormatError("fmt : zero sample rate");

  AudioClip clip;
  clip.sample_rate = rate;
  clip.label = path.stem().string();
  if (channels > 1) {
    std::cerr << "warning: " << path.string() << " has " << channels << " channels; using channel 0\n";
  }
  if (format == 1 && bits == 16) {
    const std::size_t frame = 2u * channels;
    const std::size_t n = data_len / frame;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::int16_t v;
      std::memcpy(&v, data + i * frame, 2);
      clip.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t frame = 4u * channels;
    const std::size_t n = data_len / frame;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, data + i * frame, 4);
      if (!std::isfinite(v)) throw FormatError("data: non-finite float sample");
      clip.samples[i] = std::clamp(static_cast<double>(v), -1.0, 1.0);
    }
  } else {
    throw FormatError("fmt : unsupported codec (format " + std::to_string(format) + ", " + std::to_string(bits) +
                      " bits); expected PCM16 or float32");
  }
  return clip;
}

void save_wav(const std::filesystem::path& path, const AudioClip& clip) {
  if (!(clip.sample_rate > 0.0)) throw InvalidParameter("save_wav: sample rate must be positive");
  const auto rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, 2 * n);
  for (double x : clip.samples) {
    const double q = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write WAV file " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

std::vector<double> render_note(const NoteSpec& note, double duration_s, double sample_rate) {
  if (!(note.f0_hz > 0.0)) throw InvalidParameter("synth_note: f0 must be positive");
  if (!(sample_rate > 0.0)) throw InvalidParameter("synth_note: sample rate must be positive");
  if (!(duration_s > 0.0)) throw InvalidInput("synth_note: duration must be positive (empty clip)");
  if (note.n_harmonics == 0) throw InvalidParameter("synth_note: need at least one harmonic");
  if (!note.harmonic_amps.empty() && note.harmonic_amps.size() != note.n_harmonics) {
    throw InvalidParameter("synth_note: harmonic_amps length differs from n_harmonics");
  }
  if (!note.harmonic_decays_s.empty() && note.harmonic_decays_s.size() != note.n_harmonics) {
    throw InvalidParameter("synth_note: harmonic_decays_s length differs from n_harmonics");
  }
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  if (n == 0) throw InvalidInput("synth_note: duration shorter than one sample");
  std::vector<double> x(n, 0.0);
  const double nyquist = 0.5 * sample_rate;
  std::size_t dropped = 0;
  for (std::size_t j = 1; j <= note.n_harmonics; ++j) {
    const double jd = static_cast<double>(j);
    const double f = jd * note.f0_hz * std::sqrt(1.0 + note.inharmonicity * jd * jd);
    if (f >= nyquist) {
      ++dropped;
      continue;
    }
    const double a = note.harmonic_amps.empty() ? 1.0 / jd : note.harmonic_amps[j - 1];
    const double tau = note.harmonic_decays_s.empty() ? 0.5 : note.harmonic_decays_s[j - 1];
    const double rate = (tau > 0.0 && std::isfinite(tau)) ? 1.0 / tau : 0.0;
    const double w = 2.0 * std::numbers::pi * f;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      x[i] += a * std::exp(-rate * t) * std::sin(w * t);
    }
  }
  if (dropped > 0) {
    std::cerr << "warning: dropped " << dropped << " partial(s) of " << note.f0_hz << " Hz at or above Nyquist\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double g = 1.0;
    if (note.attack_s > 0.0 && t < note.attack_s) g *= t / note.attack_s;
    const double to_end = duration_s - t;
    if (note.release_s > 0.0 && to_end < note.release_s) g *= std::max(to_end, 0.0) / note.release_s;
    x[i] *= g;
  }
  return x;
}

AudioClip synth_note(const NoteSpec& note, double duration_s, double sample_rate, std::string label) {
  AudioClip clip;
  clip.samples = render_note(note, duration_s, sample_rate);
  clip.sample_rate = sample_rate;
  clip.label = std::move(label);
  normalise_peak(clip.samples, kPeak);
  return clip;
}

std::pair<AudioClip, GroundTruthRoll> synth_mixture(const std::vector<MixtureNote>& notes, double sample_rate,
                                                    double duration_s) {
  if (!(sample_rate > 0.0)) throw InvalidParameter("synth_mixture: sample rate must be positive");
  double end = duration_s;
  if (!(end > 0.0)) {
    end = 0.0;
    for (const auto& n : notes) end = std::max(end, n.offset_s);
  }
  if (!(end > 0.0)) throw InvalidInput("synth_mixture: empty mixture");
  const auto total = static_cast<std::size_t>(std::llround(end * sample_rate));

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.label = "mixture";
  clip.samples.assign(total, 0.0);
  GroundTruthRoll truth;
  truth.duration_s = end;

  for (const auto& n : notes) {
    if (!(n.offset_s > n.onset_s) || n.onset_s < 0.0 || n.offset_s > end + 1e-9) {
      throw InvalidInput("synth_mixture: note " + n.label + " has an invalid interval");
    }
    const auto start = static_cast<std::size_t>(std::llround(n.onset_s * sample_rate));
    const auto rendered = render_note(n.spec, n.offset_s - n.onset_s, sample_rate);
    for (std::size_t i = 0; i < rendered.size() && start + i < total; ++i) clip.samples[start + i] += rendered[i];

    auto it = std::find_if(truth.pitches.begin(), truth.pitches.end(),
                           [&](const GroundTruthPitch& p) { return p.label == n.label; });
    if (it == truth.pitches.end()) {
      truth.pitches.push_back({n.label, n.spec.f0_hz, {}});
      it = std::prev(truth.pitches.end());
    }
    it->intervals.push_back({n.onset_s, n.offset_s});
  }
  for (auto& p : truth.pitches) {
    std::sort(p.intervals.begin(), p.intervals.end(),
              [](const NoteInterval& a, const NoteInterval& b) { return a.onset_s < b.onset_s; });
    // Back-to-back notes of the same pitch merge into one interval.
    std::vector<NoteInterval> merged;
    for (const auto& iv : p.intervals) {
      if (!merged.empty() && iv.onset_s <= merged.back().offset_s + 1e-12) {
        merged.back().offset_s = std::max(merged.back().offset_s, iv.offset_s);
      } else {
        merged.push_back(iv);
      }
    }
    p.intervals = std::move(merged);
  }
  truth.validate();
  normalise_peak(clip.samples, kPeak);
  return {std::move(clip), std::move(truth)};
}

AudioClip slice(const AudioClip& clip, double begin_s, double end_s) {
  const auto b = static_cast<std::size_t>(std::clamp(std::llround(begin_s * clip.sample_rate), 0LL,
                                                     static_cast<long long>(clip.samples.size())));
  const auto e = static_cast<std::size_t>(std::clamp(std::llround(end_s * clip.sample_rate), static_cast<long long>(b),
                                                     static_cast<long long>(clip.samples.size())));
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.label = clip.label;
  out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(b),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(e));
  return out;
}

}  // namespace msmgp
