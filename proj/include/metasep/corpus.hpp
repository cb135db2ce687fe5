// metasep/corpus.hpp

// Copyright 2026  The metasep authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef METASEP_CORPUS_HPP_
#define METASEP_CORPUS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "metasep/errors.hpp"
#include "metasep/rng.hpp"
#include "metasep/signal.hpp"
#include "metasep/wav.hpp"

namespace metasep {

constexpr double kCorpusPeak = 0.9;

struct Utterance {
  Waveform audio;
  std::string speaker_id;
  std::string domain_label;
};

// An immutable speaker corpus. std::map keys keep every iteration order
// deterministic.
struct SpeakerCorpus {
  std::map<std::string, Utterance> utterances;  // utt_id -> utterance
  int sample_rate_hz = 0;
  int dropped_speakers = 0;  // speakers removed for having < 3 utterances

  // speaker -> sorted utt ids, and speaker -> domain.
  std::map<std::string, std::vector<std::string>> by_speaker() const {
    std::map<std::string, std::vector<std::string>> m;
    for (const auto &[utt_id, utt] : utterances)
      m[utt.speaker_id].push_back(utt_id);
    return m;
  }

  std::map<std::string, std::vector<std::string>> speakers_by_domain() const {
    std::map<std::string, std::set<std::string>> sets;
    for (const auto &[utt_id, utt] : utterances)
      sets[utt.domain_label].insert(utt.speaker_id);
    std::map<std::string, std::vector<std::string>> m;
    for (const auto &[dom, s] : sets) m[dom] = {s.begin(), s.end()};
    return m;
  }

  void validate() const {
    std::map<std::string, std::string> speaker_domain;
    for (const auto &[utt_id, utt] : utterances) {
      if (utt.audio.sample_rate_hz != sample_rate_hz)
        throw FormatError("corpus: utterance '" + utt_id +
                          "' sample rate mismatch");
      auto it = speaker_domain.find(utt.speaker_id);
      if (it == speaker_domain.end()) {
        speaker_domain[utt.speaker_id] = utt.domain_label;
      } else if (it->second != utt.domain_label) {
        throw FormatError("corpus: speaker '" + utt.speaker_id +
                          "' appears in more than one domain");
      }
    }
  }
};

// Deterministic synthetic corpus: each speaker is a harmonic-series
// generator (fundamental, per-harmonic timbre, amplitude modulation), each
// domain applies a spectral tilt and a formant-band shift whose strength is
// the domain's shift value. shift = 0 makes all domains draw from the same
// generator family.
struct SynthSpec {
  int num_domains = 1;
  int speakers_per_domain = 8;
  int utterances_per_speaker = 4;
  double utterance_len_s = 1.0;
  int sample_rate_hz = 8000;
  double domain_shift = 0.0;           // applied to every domain...
  std::vector<double> domain_shifts;   // ...unless overridden per domain
  uint64_t seed = 0;

  double shift_of(int domain) const {
    if (!domain_shifts.empty()) return domain_shifts[domain];
    return domain_shift;
  }

  void validate() const {
    if (num_domains <= 0 || speakers_per_domain <= 0)
      throw ConfigError("SynthSpec: domain/speaker counts must be positive");
    if (utterances_per_speaker < 3)
      throw ConfigError("SynthSpec: need >= 3 utterances per speaker");
    if (utterance_len_s <= 0.0 || sample_rate_hz <= 0)
      throw ConfigError("SynthSpec: length and rate must be positive");
    if (speakers_per_domain > 16)
      throw ConfigError(
          "SynthSpec: at most 16 speakers per domain (f0 spacing)");
    if (!domain_shifts.empty() &&
        domain_shifts.size() != static_cast<size_t>(num_domains))
      throw ConfigError("SynthSpec: domain_shifts length mismatch");
    auto check_shift = [](double s) {
      if (s < 0.0 || s > 1.0)
        throw ConfigError("SynthSpec: domain shift must lie in [0, 1]");
    };
    check_shift(domain_shift);
    for (double s : domain_shifts) check_shift(s);
  }
};

namespace detail {

// Ingestion arithmetic shared by the loader and the synthesizer: samples are
// int16 counts scaled so the peak magnitude lands exactly on kCorpusPeak.
// Synthesis quantizes through the same grid, so a write/load round trip is
// bit-exact.
inline std::vector<double> normalize_pcm(const std::vector<int16_t> &pcm,
                                         const std::string &what) {
  int max_abs = 0;
  for (int16_t s : pcm) max_abs = std::max(max_abs, std::abs(static_cast<int>(s)));
  if (max_abs == 0) throw FormatError(what + ": silent audio");
  double scale = kCorpusPeak / static_cast<double>(max_abs);
  std::vector<double> out(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i)
    out[i] = static_cast<double>(pcm[i]) * scale;
  return out;
}

inline std::vector<int16_t> quantize_peak(const std::vector<double> &x) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak <= 0.0) throw InvalidInput("quantize_peak: silent waveform");
  double scale = 32767.0 / peak;
  std::vector<int16_t> out(x.size());
  for (size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<int16_t>(std::llround(x[i] * scale));
  return out;
}

struct DomainParams {
  double tilt_offset = 0.0;    // added to every speaker's rolloff exponent
  double formant_scale = 1.0;  // multiplies every speaker's resonance center
};

inline DomainParams domain_params(const SynthSpec &spec, int domain) {
  Rng rng(substream_seed(spec.seed, "synth-domain", domain));
  double u = rng.uniform(-1.0, 1.0);
  double v = rng.uniform(-1.0, 1.0);
  double s = spec.shift_of(domain);
  DomainParams dp;
  // shift = 0 collapses every domain onto the same acoustic family; a
  // shifted domain displaces the whole family systematically.
  dp.tilt_offset = 1.0 * s * u;
  dp.formant_scale = 1.0 + 0.3 * s * v;
  return dp;
}

struct SpeakerParams {
  double f0_hz = 0.0;
  double formant_hz = 0.0;  // speaker resonance center, pre domain scaling
  double tilt = 0.0;        // speaker rolloff exponent, pre domain offset
  double am_rate_hz = 0.0;
  double am_depth = 0.0;
  std::vector<double> timbre;  // per-harmonic multipliers
};

constexpr int kMaxHarmonics = 32;
constexpr double kF0BaseHz = 100.0;
constexpr double kF0StepHz = 14.0;

inline SpeakerParams speaker_params(const SynthSpec &spec, int domain,
                                    int speaker) {
  Rng rng(substream_seed(spec.seed, "synth-speaker",
                         static_cast<uint64_t>(domain) * 4096 + speaker));
  SpeakerParams sp;
  // Spacing 14 Hz with +-1 Hz jitter keeps fundamentals >= 12 Hz apart
  // within a domain; the resonance grid spreads speakers across the band.
  sp.f0_hz = kF0BaseHz + kF0StepHz * speaker + rng.uniform(-1.0, 1.0);
  sp.formant_hz = 500.0 + 300.0 * (speaker % 8) + rng.uniform(-50.0, 50.0);
  sp.tilt = rng.uniform(0.45, 1.15);
  sp.am_rate_hz = rng.uniform(1.5, 4.0);
  sp.am_depth = rng.uniform(0.25, 0.5);
  sp.timbre.resize(kMaxHarmonics);
  for (double &t : sp.timbre) t = rng.uniform(0.85, 1.15);
  return sp;
}

inline std::vector<double> render_utterance(const SynthSpec &spec,
                                            const DomainParams &dp,
                                            const SpeakerParams &sp,
                                            Rng *rng) {
  const int n = static_cast<int>(std::lround(spec.utterance_len_s *
                                             spec.sample_rate_hz));
  const double nyquist_guard = 0.45 * spec.sample_rate_hz;
  int h_max = std::min(kMaxHarmonics,
                       static_cast<int>(nyquist_guard / sp.f0_hz));
  const double formant = sp.formant_hz * dp.formant_scale;
  const double tilt = sp.tilt + dp.tilt_offset;
  std::vector<double> phase(h_max), amp(h_max);
  for (int h = 0; h < h_max; ++h) {
    phase[h] = rng->uniform(0.0, 2.0 * M_PI);
    double freq = sp.f0_hz * (h + 1);
    double band = (freq - formant) / 350.0;
    amp[h] = std::pow(h + 1.0, -tilt) * sp.timbre[h] *
             (0.25 + 1.5 * std::exp(-band * band));
  }
  double am_phase = rng->uniform(0.0, 2.0 * M_PI);

  std::vector<double> x(n, 0.0);
  const double dt = 1.0 / spec.sample_rate_hz;
  for (int t = 0; t < n; ++t) {
    double tt = t * dt;
    double env = 1.0 + sp.am_depth * std::sin(2.0 * M_PI * sp.am_rate_hz * tt +
                                              am_phase);
    double acc = 0.0;
    for (int h = 0; h < h_max; ++h)
      acc += amp[h] * std::sin(2.0 * M_PI * sp.f0_hz * (h + 1) * tt + phase[h]);
    x[t] = env * acc;
  }
  return x;
}

inline std::string id2(const char *prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%02d", prefix, i);
  return buf;
}

}  // namespace detail

inline SpeakerCorpus synth_corpus(const SynthSpec &spec) {
  spec.validate();
  SpeakerCorpus corpus;
  corpus.sample_rate_hz = spec.sample_rate_hz;
  for (int d = 0; d < spec.num_domains; ++d) {
    std::string domain = detail::id2("d", d);
    detail::DomainParams dp = detail::domain_params(spec, d);
    for (int s = 0; s < spec.speakers_per_domain; ++s) {
      detail::SpeakerParams sp = detail::speaker_params(spec, d, s);
      std::string speaker = domain + "_" + detail::id2("s", s);
      Rng utt_rng(substream_seed(spec.seed, "synth-utt",
                                 (static_cast<uint64_t>(d) * 4096 + s)));
      for (int u = 0; u < spec.utterances_per_speaker; ++u) {
        std::vector<double> raw = detail::render_utterance(spec, dp, sp,
                                                           &utt_rng);
        std::vector<int16_t> pcm = detail::quantize_peak(raw);
        std::string utt_id = speaker + "_" + detail::id2("u", u);
        Utterance utt;
        utt.audio.sample_rate_hz = spec.sample_rate_hz;
        utt.audio.samples = detail::normalize_pcm(pcm, utt_id);
        utt.speaker_id = speaker;
        utt.domain_label = domain;
        corpus.utterances.emplace(utt_id, std::move(utt));
      }
    }
  }
  corpus.validate();
  return corpus;
}

// Writes every utterance as a WAV file plus a manifest
// (utt_id,speaker_id,domain_label,relative_path with a header row).
inline std::string save_corpus(const SpeakerCorpus &corpus,
                               const std::string &dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string manifest_path = (fs::path(dir) / "manifest.csv").string();
  std::ofstream manifest(manifest_path, std::ios::trunc);
  if (!manifest) throw IoError("cannot open '" + manifest_path + "'");
  manifest << "utt_id,speaker_id,domain_label,relative_path\n";
  for (const auto &[utt_id, utt] : corpus.utterances) {
    std::string rel = utt_id + ".wav";
    PcmAudio pcm;
    pcm.sample_rate_hz = utt.audio.sample_rate_hz;
    // Normalized samples are exact multiples of (peak / max_count), so
    // re-quantizing recovers the original int16 counts and a save/load
    // round trip is bit-exact.
    pcm.samples = detail::quantize_peak(utt.audio.samples);
    write_wav_pcm16((fs::path(dir) / rel).string(), pcm);
    manifest << utt_id << ',' << utt.speaker_id << ',' << utt.domain_label
             << ',' << rel << '\n';
  }
  if (!manifest) throw IoError("short write to '" + manifest_path + "'");
  return manifest_path;
}

// Loads a manifest-described corpus. Utterances are peak-normalized to 0.9;
// speakers with fewer than 3 utterances are dropped (counted in
// dropped_speakers).
inline SpeakerCorpus load_corpus(const std::string &manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest '" + manifest_path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw FormatError("manifest '" + manifest_path + "' is empty");
  if (line != "utt_id,speaker_id,domain_label,relative_path")
    throw FormatError("manifest '" + manifest_path + "': bad header row");

  fs::path base = fs::path(manifest_path).parent_path();
  SpeakerCorpus corpus;
  corpus.sample_rate_hz = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4)
      throw FormatError("manifest '" + manifest_path + "' line " +
                        std::to_string(line_no) + ": expected 4 fields");
    std::string path = (base / fields[3]).string();
    if (!fs::exists(path)) throw IoError("audio file missing: '" + path + "'");
    PcmAudio pcm = read_wav_pcm16(path);
    if (corpus.sample_rate_hz == 0) {
      corpus.sample_rate_hz = pcm.sample_rate_hz;
    } else if (pcm.sample_rate_hz != corpus.sample_rate_hz) {
      throw FormatError("'" + path + "': sample rate " +
                        std::to_string(pcm.sample_rate_hz) +
                        " differs from corpus rate " +
                        std::to_string(corpus.sample_rate_hz));
    }
    Utterance utt;
    utt.audio.sample_rate_hz = pcm.sample_rate_hz;
    utt.audio.samples = detail::normalize_pcm(pcm.samples, path);
    utt.speaker_id = fields[1];
    utt.domain_label = fields[2];
    if (!corpus.utterances.emplace(fields[0], std::move(utt)).second)
      throw FormatError("manifest '" + manifest_path + "': duplicate utt_id '" +
                        fields[0] + "'");
  }

  // Enforce the >= 3 utterances selection rule.
  auto per_speaker = corpus.by_speaker();
  for (const auto &[speaker, utts] : per_speaker) {
    if (utts.size() < 3) {
      for (const auto &utt_id : utts) corpus.utterances.erase(utt_id);
      corpus.dropped_speakers++;
    }
  }
  corpus.validate();
  return corpus;
}

// Ratings file: "domain_label,rating" per line, header optional.
inline std::map<std::string, double> load_ratings(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ratings file '" + path + "'");
  std::map<std::string, double> ratings;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw FormatError("ratings '" + path + "' line " +
                        std::to_string(line_no) + ": expected 'domain,rating'");
    std::string label = line.substr(0, comma);
    std::string value = line.substr(comma + 1);
    if (line_no == 1 && label == "domain_label") continue;  // header
    try {
      size_t used = 0;
      double r = std::stod(value, &used);
      ratings[label] = r;
    } catch (const std::exception &) {
      throw FormatError("ratings '" + path + "' line " +
                        std::to_string(line_no) + ": bad rating '" + value +
                        "'");
    }
  }
  return ratings;
}

}  // namespace metasep

#endif  // METASEP_CORPUS_HPP_
