// metasep/tasks.hpp

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

#ifndef METASEP_TASKS_HPP_
#define METASEP_TASKS_HPP_

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "metasep/corpus.hpp"
#include "metasep/errors.hpp"
#include "metasep/rng.hpp"
#include "metasep/signal.hpp"

namespace metasep {

// SNR offsets for non-reference sources in training mixtures.
constexpr double kSnrOffsetRangeDb = 5.0;
// Shortest admissible mixture after trimming to the common length.
constexpr double kMinMixtureSeconds = 0.5;
// Utterances sampled per speaker when building a task.
constexpr int kUttsPerSpeaker = 3;

// One meta task: C same-domain speakers, a single support mixture, and the
// (kUttsPerSpeaker - 1)^C query mixtures that share no utterance with it.
struct MetaTask {
  std::string task_id;
  std::string domain_label;
  int num_sources = 0;
  std::vector<MixtureExample> support;  // length 1
  std::vector<MixtureExample> query;    // length (kUttsPerSpeaker - 1)^C
  std::vector<std::string> speaker_ids;
};

namespace detail {

inline MixtureExample materialize_mixture(
    const SpeakerCorpus &corpus, const std::vector<std::string> &utt_ids,
    Rng *rng) {
  size_t min_len = SIZE_MAX;
  for (const auto &id : utt_ids)
    min_len = std::min(min_len, corpus.utterances.at(id).audio.size());
  size_t floor_len = static_cast<size_t>(
      std::lround(kMinMixtureSeconds * corpus.sample_rate_hz));
  if (min_len < floor_len)
    throw InsufficientData("build_task: mixture shorter than " +
                           std::to_string(kMinMixtureSeconds) + " s");

  std::vector<Waveform> sources(utt_ids.size());
  std::vector<double> offsets(utt_ids.size(), 0.0);
  for (size_t c = 0; c < utt_ids.size(); ++c) {
    const Waveform &full = corpus.utterances.at(utt_ids[c]).audio;
    sources[c].sample_rate_hz = full.sample_rate_hz;
    sources[c].samples.assign(full.samples.begin(),
                              full.samples.begin() + min_len);
    if (c > 0)
      offsets[c] = rng->uniform(-kSnrOffsetRangeDb, kSnrOffsetRangeDb);
  }
  return mix_at_snr(sources, offsets, utt_ids);
}

// Decodes a base-kUttsPerSpeaker index into one utterance choice per speaker.
inline std::vector<int> combo_digits(int index, int c_count) {
  std::vector<int> digits(c_count);
  for (int c = c_count - 1; c >= 0; --c) {
    digits[c] = index % kUttsPerSpeaker;
    index /= kUttsPerSpeaker;
  }
  return digits;
}

}  // namespace detail

// Builds one meta task from C distinct same-domain speakers: three sampled
// utterances per speaker, one of the 3^C cross mixtures as support, and the
// 2^C mixtures disjoint from it as the query set.
inline MetaTask build_task(const SpeakerCorpus &corpus,
                           const std::vector<std::string> &speaker_ids,
                           Rng *rng, const std::string &task_id = "") {
  const int c_count = static_cast<int>(speaker_ids.size());
  if (c_count < 2) throw InvalidInput("build_task: need at least 2 speakers");
  for (int a = 0; a < c_count; ++a)
    for (int b = a + 1; b < c_count; ++b)
      if (speaker_ids[a] == speaker_ids[b])
        throw InvalidInput("build_task: duplicate speaker '" + speaker_ids[a] +
                           "'");

  auto per_speaker = corpus.by_speaker();
  std::string domain;
  std::vector<std::vector<std::string>> chosen(c_count);
  for (int c = 0; c < c_count; ++c) {
    auto it = per_speaker.find(speaker_ids[c]);
    if (it == per_speaker.end() ||
        it->second.size() < static_cast<size_t>(kUttsPerSpeaker))
      throw InsufficientData("build_task: speaker '" + speaker_ids[c] +
                             "' has fewer than " +
                             std::to_string(kUttsPerSpeaker) + " utterances");
    const std::string &dom =
        corpus.utterances.at(it->second[0]).domain_label;
    if (c == 0) {
      domain = dom;
    } else if (dom != domain) {
      throw InvalidInput("build_task: speakers span domains '" + domain +
                         "' and '" + dom + "'");
    }
    std::vector<std::string> pool = it->second;  // sorted utt ids
    rng->shuffle(&pool);
    chosen[c].assign(pool.begin(), pool.begin() + kUttsPerSpeaker);
  }

  MetaTask task;
  task.task_id = task_id;
  task.domain_label = domain;
  task.num_sources = c_count;
  task.speaker_ids = speaker_ids;

  int total = 1;
  for (int c = 0; c < c_count; ++c) total *= kUttsPerSpeaker;
  int support_index = static_cast<int>(rng->uniform_int(total));
  std::vector<int> support_digits = detail::combo_digits(support_index,
                                                         c_count);

  auto utts_for = [&](const std::vector<int> &digits) {
    std::vector<std::string> ids(c_count);
    for (int c = 0; c < c_count; ++c) ids[c] = chosen[c][digits[c]];
    return ids;
  };
  task.support.push_back(
      detail::materialize_mixture(corpus, utts_for(support_digits), rng));
  for (int index = 0; index < total; ++index) {
    std::vector<int> digits = detail::combo_digits(index, c_count);
    bool disjoint = true;
    for (int c = 0; c < c_count; ++c)
      if (digits[c] == support_digits[c]) disjoint = false;
    if (!disjoint) continue;
    task.query.push_back(
        detail::materialize_mixture(corpus, utts_for(digits), rng));
  }
  return task;
}

// Enumerates same-domain speaker combinations, shuffles them, and emits up to
// max_tasks tasks. Combinations are reused with fresh utterance draws when
// max_tasks exceeds the combination count; no two tasks share the same
// (speakers, selected utterances, support choice).
inline std::vector<MetaTask> build_task_set(const SpeakerCorpus &corpus,
                                            int num_sources, int max_tasks,
                                            Rng *rng) {
  if (num_sources < 2) throw InvalidInput("build_task_set: num_sources < 2");
  if (max_tasks < 0) throw InvalidInput("build_task_set: negative max_tasks");
  if (max_tasks == 0) return {};

  auto per_speaker = corpus.by_speaker();
  std::vector<std::pair<std::string, std::vector<std::string>>> combos;
  for (const auto &[domain, speakers] : corpus.speakers_by_domain()) {
    std::vector<std::string> eligible;
    for (const auto &s : speakers)
      if (per_speaker.at(s).size() >= static_cast<size_t>(kUttsPerSpeaker))
        eligible.push_back(s);
    if (eligible.size() < static_cast<size_t>(num_sources)) continue;
    // All C-combinations in lexicographic order.
    std::vector<int> idx(num_sources);
    for (int i = 0; i < num_sources; ++i) idx[i] = i;
    for (;;) {
      std::vector<std::string> combo(num_sources);
      for (int i = 0; i < num_sources; ++i) combo[i] = eligible[idx[i]];
      combos.emplace_back(domain, std::move(combo));
      int pos = num_sources - 1;
      while (pos >= 0 &&
             idx[pos] == static_cast<int>(eligible.size()) - num_sources + pos)
        --pos;
      if (pos < 0) break;
      ++idx[pos];
      for (int i = pos + 1; i < num_sources; ++i) idx[i] = idx[i - 1] + 1;
    }
  }
  if (combos.empty())
    throw EmptyTaskSet("build_task_set: no eligible speaker combination");

  rng->shuffle(&combos);
  uint64_t stream_base = rng->next_u64();

  std::vector<MetaTask> tasks;
  std::set<std::string> seen;
  const int attempt_cap = max_tasks * 20;
  int attempt = 0;
  while (static_cast<int>(tasks.size()) < max_tasks && attempt < attempt_cap) {
    const auto &[domain, speakers] = combos[attempt % combos.size()];
    Rng task_rng(substream_seed(stream_base, "task",
                                static_cast<uint64_t>(attempt)));
    ++attempt;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "t%05d", static_cast<int>(tasks.size()));
    MetaTask task = build_task(corpus, speakers, &task_rng, idbuf);

    // Dedupe on speakers + drawn utterances + support selection.
    std::string key = domain;
    for (const auto &s : task.speaker_ids) key += "|" + s;
    std::vector<std::string> utt_key;
    for (const auto &ex : task.support)
      for (const auto &u : ex.source_utt_ids) utt_key.push_back("S" + u);
    for (const auto &ex : task.query)
      for (const auto &u : ex.source_utt_ids) utt_key.push_back(u);
    std::sort(utt_key.begin(), utt_key.end());
    for (const auto &u : utt_key) key += "|" + u;
    if (!seen.insert(key).second) continue;
    tasks.push_back(std::move(task));
  }
  return tasks;
}

// Uniform sample of B tasks without replacement; deterministic given rng.
inline std::vector<const MetaTask *> sample_meta_batch(
    const std::vector<MetaTask> &task_set, int batch_size, Rng *rng) {
  if (batch_size < 1) throw InvalidInput("sample_meta_batch: B must be >= 1");
  if (static_cast<size_t>(batch_size) > task_set.size())
    throw InvalidInput("sample_meta_batch: B exceeds task set size");
  std::vector<size_t> idx(task_set.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Partial Fisher-Yates: the first B slots are the draw.
  for (int i = 0; i < batch_size; ++i) {
    size_t j = i + static_cast<size_t>(rng->uniform_int(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<const MetaTask *> batch(batch_size);
  for (int i = 0; i < batch_size; ++i) batch[i] = &task_set[idx[i]];
  return batch;
}

// Line-delimited task manifest, one record per mixture:
// task_id, domain_label, role, utt_ids (semicolon-joined), snr_offsets_db.
inline void write_task_manifest(const std::vector<MetaTask> &tasks,
                                std::ostream &os) {
  os << "task_id\tdomain_label\trole\tutt_ids\tsnr_offsets_db\n";
  auto emit = [&os](const MetaTask &task, const MixtureExample &ex,
                    const char *role) {
    os << task.task_id << '\t' << task.domain_label << '\t' << role << '\t';
    for (size_t c = 0; c < ex.source_utt_ids.size(); ++c)
      os << (c ? ";" : "") << ex.source_utt_ids[c];
    os << '\t';
    char buf[32];
    for (size_t c = 0; c < ex.snr_offsets_db.size(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.6f", ex.snr_offsets_db[c]);
      os << (c ? ";" : "") << buf;
    }
    os << '\n';
  };
  for (const auto &task : tasks) {
    for (const auto &ex : task.support) emit(task, ex, "support");
    for (const auto &ex : task.query) emit(task, ex, "query");
  }
}

}  // namespace metasep

#endif  // METASEP_TASKS_HPP_
