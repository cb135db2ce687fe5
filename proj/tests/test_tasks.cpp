// tests/test_tasks.cpp

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

#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "metasep/corpus.hpp"
#include "metasep/tasks.hpp"

using namespace metasep;

namespace {

SpeakerCorpus corpus_with(int domains, int speakers, int utts,
                          uint64_t seed = 77) {
  SynthSpec spec;
  spec.num_domains = domains;
  spec.speakers_per_domain = speakers;
  spec.utterances_per_speaker = utts;
  spec.utterance_len_s = 0.6;
  spec.seed = seed;
  return synth_corpus(spec);
}

void check_task_shape(const MetaTask &task, int c_count) {
  REQUIRE(task.num_sources == c_count);
  REQUIRE(task.support.size() == 1);
  int expect_query = 1;
  for (int c = 0; c < c_count; ++c) expect_query *= kUttsPerSpeaker - 1;
  REQUIRE(task.query.size() == static_cast<size_t>(expect_query));

  std::set<std::string> support_utts(task.support[0].source_utt_ids.begin(),
                                     task.support[0].source_utt_ids.end());
  for (const auto &ex : task.query) {
    REQUIRE(ex.source_utt_ids.size() == static_cast<size_t>(c_count));
    for (const auto &id : ex.source_utt_ids)
      REQUIRE(support_utts.count(id) == 0);
  }
  // Every mixture uses one utterance from each of the task's speakers.
  auto uses_all_speakers = [&](const MixtureExample &ex) {
    std::set<std::string> seen;
    for (const auto &id : ex.source_utt_ids)
      seen.insert(id.substr(0, id.rfind('_')));
    return seen.size() == static_cast<size_t>(c_count);
  };
  REQUIRE(uses_all_speakers(task.support[0]));
  for (const auto &ex : task.query) REQUIRE(uses_all_speakers(ex));
}

}  // namespace

TEST_CASE("build_task: 2-speaker counts (1 support + 4 query)") {
  SpeakerCorpus corpus = corpus_with(1, 3, 3);
  Rng rng(1);
  MetaTask task = build_task(corpus, {"d00_s00", "d00_s01"}, &rng, "t0");
  check_task_shape(task, 2);
  REQUIRE(task.domain_label == "d00");
  for (const auto &ex : task.query) {
    REQUIRE(ex.snr_offsets_db[0] == 0.0);
    REQUIRE(std::abs(ex.snr_offsets_db[1]) <= kSnrOffsetRangeDb);
  }
}

TEST_CASE("build_task: 3-speaker counts (1 support + 8 query)") {
  SpeakerCorpus corpus = corpus_with(1, 4, 4);
  Rng rng(2);
  MetaTask task =
      build_task(corpus, {"d00_s00", "d00_s01", "d00_s02"}, &rng, "t0");
  check_task_shape(task, 3);
}

TEST_CASE("build_task: error paths") {
  SpeakerCorpus corpus = corpus_with(2, 2, 3);
  Rng rng(3);
  // Drop one utterance from d00_s00 so it has only 2 left.
  corpus.utterances.erase("d00_s00_u00");
  REQUIRE_THROWS_AS(build_task(corpus, {"d00_s00", "d00_s01"}, &rng),
                    InsufficientData);
  REQUIRE_THROWS_AS(build_task(corpus, {"d00_s01", "d00_s01"}, &rng),
                    InvalidInput);
  REQUIRE_THROWS_AS(build_task(corpus, {"d00_s01", "d01_s00"}, &rng),
                    InvalidInput);
  REQUIRE_THROWS_AS(build_task(corpus, {"d00_s01", "nobody"}, &rng),
                    InsufficientData);
}

TEST_CASE("build_task: deterministic under a fixed rng seed") {
  SpeakerCorpus corpus = corpus_with(1, 3, 4);
  Rng rng_a(9), rng_b(9);
  MetaTask a = build_task(corpus, {"d00_s00", "d00_s02"}, &rng_a, "t");
  MetaTask b = build_task(corpus, {"d00_s00", "d00_s02"}, &rng_b, "t");
  REQUIRE(a.support[0].source_utt_ids == b.support[0].source_utt_ids);
  REQUIRE(a.support[0].snr_offsets_db == b.support[0].snr_offsets_db);
  for (size_t i = 0; i < a.query.size(); ++i) {
    REQUIRE(a.query[i].source_utt_ids == b.query[i].source_utt_ids);
    REQUIRE(a.query[i].mixture.samples == b.query[i].mixture.samples);
  }
}

TEST_CASE("build_task_set: pair counting and caps") {
  SpeakerCorpus two = corpus_with(1, 2, 3);
  Rng rng(5);
  std::vector<MetaTask> tasks = build_task_set(two, 2, 5, &rng);
  REQUIRE(!tasks.empty());
  REQUIRE(tasks.size() <= 5);
  for (const auto &t : tasks) {
    REQUIRE(t.speaker_ids.size() == 2);
    check_task_shape(t, 2);
  }

  SpeakerCorpus four = corpus_with(1, 4, 3, 78);
  Rng rng2(6);
  std::vector<MetaTask> ten = build_task_set(four, 2, 10, &rng2);
  std::set<std::vector<std::string>> pairs;
  for (const auto &t : ten) pairs.insert(t.speaker_ids);
  REQUIRE(pairs.size() <= 6);  // C(4,2)

  Rng rng3(7);
  REQUIRE(build_task_set(four, 2, 0, &rng3).empty());
  SpeakerCorpus lone = corpus_with(2, 1, 3, 79);
  REQUIRE_THROWS_AS(build_task_set(lone, 2, 4, &rng3), EmptyTaskSet);
}

TEST_CASE("build_task_set: no duplicated draws, all shapes valid") {
  SpeakerCorpus corpus = corpus_with(2, 3, 4, 80);
  Rng rng(8);
  std::vector<MetaTask> tasks = build_task_set(corpus, 2, 40, &rng);
  REQUIRE(tasks.size() > 6);  // combinations are reused with fresh draws
  std::set<std::string> keys;
  for (const auto &t : tasks) {
    check_task_shape(t, 2);
    std::string key = t.speaker_ids[0] + t.speaker_ids[1];
    for (const auto &u : t.support[0].source_utt_ids) key += "S" + u;
    std::vector<std::string> q;
    for (const auto &ex : t.query)
      for (const auto &u : ex.source_utt_ids) q.push_back(u);
    std::sort(q.begin(), q.end());
    for (const auto &u : q) key += u;
    REQUIRE(keys.insert(key).second);
  }
  // Same seed, same tasks.
  Rng rng_b(8);
  std::vector<MetaTask> again = build_task_set(corpus, 2, 40, &rng_b);
  REQUIRE(again.size() == tasks.size());
  for (size_t i = 0; i < tasks.size(); ++i) {
    REQUIRE(again[i].speaker_ids == tasks[i].speaker_ids);
    REQUIRE(again[i].support[0].source_utt_ids ==
            tasks[i].support[0].source_utt_ids);
  }
}

TEST_CASE("sample_meta_batch: permutation, determinism, bounds") {
  SpeakerCorpus corpus = corpus_with(1, 4, 3, 81);
  Rng rng(9);
  std::vector<MetaTask> tasks = build_task_set(corpus, 2, 6, &rng);
  REQUIRE(tasks.size() >= 3);

  Rng s1(4);
  auto full = sample_meta_batch(tasks, static_cast<int>(tasks.size()), &s1);
  std::set<const MetaTask *> unique(full.begin(), full.end());
  REQUIRE(unique.size() == tasks.size());

  Rng s2(4), s3(4);
  auto b1 = sample_meta_batch(tasks, 3, &s2);
  auto b2 = sample_meta_batch(tasks, 3, &s3);
  for (int i = 0; i < 3; ++i) REQUIRE(b1[i] == b2[i]);

  REQUIRE_THROWS_AS(
      sample_meta_batch(tasks, static_cast<int>(tasks.size()) + 1, &s1),
      InvalidInput);
  REQUIRE_THROWS_AS(sample_meta_batch(tasks, 0, &s1), InvalidInput);
}

TEST_CASE("write_task_manifest: stable field order, one row per mixture") {
  SpeakerCorpus corpus = corpus_with(1, 2, 3, 82);
  Rng rng(10);
  std::vector<MetaTask> tasks = build_task_set(corpus, 2, 2, &rng);
  std::ostringstream os;
  write_task_manifest(tasks, os);
  std::istringstream is(os.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  REQUIRE(line == "task_id\tdomain_label\trole\tutt_ids\tsnr_offsets_db");
  size_t rows = 0, supports = 0;
  while (std::getline(is, line)) {
    ++rows;
    if (line.find("\tsupport\t") != std::string::npos) ++supports;
  }
  size_t expect = 0;
  for (const auto &t : tasks) expect += t.support.size() + t.query.size();
  REQUIRE(rows == expect);
  REQUIRE(supports == tasks.size());
}
