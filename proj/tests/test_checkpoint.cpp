// tests/test_checkpoint.cpp

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

#include <filesystem>
#include <fstream>

#include "metasep/checkpoint.hpp"
#include "metasep/corpus.hpp"

using namespace metasep;
namespace fs = std::filesystem;

namespace {

ModelConfig ckpt_model(uint64_t seed = 3) {
  ModelConfig cfg;
  cfg.window_len = 16;
  cfg.hop_len = 8;
  cfg.basis_dim = 8;
  cfg.separator_hidden = 8;
  cfg.separator_layers = 2;
  cfg.seed = seed;
  return cfg;
}

std::string temp_file(const std::string &name) {
  return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("checkpoint: bit-exact round trip, awkward values included") {
  ModelConfig cfg = ckpt_model();
  ParamVector p = init_params(cfg);
  p.values[0] = -0.0;
  p.values[1] = 5e-324;              // smallest denormal
  p.values[2] = 0x1.fffffffffffffp1023;  // largest finite
  p.values[3] = 1.0 / 3.0;

  std::string path = temp_file("metasep_ckpt_roundtrip.json");
  save_checkpoint(path, cfg, p);
  Checkpoint ck = load_checkpoint(path);
  REQUIRE(ck.model == cfg);
  REQUIRE(ck.params.layout == p.layout);
  REQUIRE(ck.params.values.size() == p.values.size());
  for (size_t i = 0; i < p.values.size(); ++i) {
    REQUIRE(std::memcmp(&ck.params.values[i], &p.values[i], sizeof(double)) ==
            0);
  }
  REQUIRE(!ck.train.has_value());
  fs::remove(path);
}

TEST_CASE("checkpoint: version field and malformed input handling") {
  ModelConfig cfg = ckpt_model();
  ParamVector p = init_params(cfg);
  std::string path = temp_file("metasep_ckpt_version.json");
  save_checkpoint(path, cfg, p);
  {
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    REQUIRE(j.at("format_version").get<int>() == kCheckpointVersion);
    REQUIRE(j.at("format").get<std::string>() == "metasep-checkpoint");
  }
  {
    std::ofstream bad(path, std::ios::trunc);
    bad << "{not json";
  }
  REQUIRE_THROWS_AS(load_checkpoint(path), FormatError);
  REQUIRE_THROWS_AS(load_checkpoint(temp_file("no_such_ckpt.json")), IoError);
  fs::remove(path);
}

TEST_CASE("checkpoint: value/layout mismatch is a config error") {
  ModelConfig cfg = ckpt_model();
  ParamVector p = init_params(cfg);
  std::string path = temp_file("metasep_ckpt_mismatch.json");
  save_checkpoint(path, cfg, p);
  nlohmann::json j;
  {
    std::ifstream in(path);
    in >> j;
  }
  j["values"].erase(j["values"].size() - 1);
  {
    std::ofstream out(path, std::ios::trunc);
    out << j.dump();
  }
  REQUIRE_THROWS_AS(load_checkpoint(path), ConfigError);
  fs::remove(path);
}

TEST_CASE("checkpoint: training state round trip enables exact resumption") {
  ModelConfig model_cfg = ckpt_model(5);
  TrainConfig cfg;
  cfg.method = TrainMethod::kFomaml;
  cfg.alpha = 0.01;
  cfg.meta_batch = 2;
  cfg.epochs = 4;
  cfg.seed = 41;

  SynthSpec spec;
  spec.num_domains = 1;
  spec.speakers_per_domain = 3;
  spec.utterances_per_speaker = 3;
  spec.utterance_len_s = 0.5;
  spec.seed = 71;
  SpeakerCorpus corpus = synth_corpus(spec);
  Rng task_rng(72);
  std::vector<MetaTask> tasks = build_task_set(corpus, 2, 4, &task_rng);
  Rng val_rng(73);
  std::vector<MetaTask> val = build_task_set(corpus, 2, 2, &val_rng);

  // Uninterrupted: 4 epochs.
  TrainState full = init_train_state(model_cfg, cfg);
  run_meta_epochs(&full, tasks, val, cfg, model_cfg, 4);

  // Interrupted: 2 epochs, save, load, 2 more epochs.
  TrainState half = init_train_state(model_cfg, cfg);
  run_meta_epochs(&half, tasks, val, cfg, model_cfg, 2);
  std::string path = temp_file("metasep_ckpt_resume.json");
  save_checkpoint(path, model_cfg, half.params, &half);
  Checkpoint ck = load_checkpoint(path);
  REQUIRE(ck.train.has_value());
  TrainState resumed = *ck.train;
  run_meta_epochs(&resumed, tasks, val, cfg, model_cfg, 2);

  REQUIRE(resumed.params.values == full.params.values);
  REQUIRE(resumed.best_params.values == full.best_params.values);
  REQUIRE(resumed.opt.m == full.opt.m);
  REQUIRE(resumed.opt.v == full.opt.v);
  REQUIRE(resumed.best_validation_loss == full.best_validation_loss);
  REQUIRE(resumed.current_lr == full.current_lr);
  REQUIRE(resumed.epoch == full.epoch);
  fs::remove(path);

  // Same story for the joint trainer (its epoch shuffles come from the
  // serialized rng).
  TrainConfig jcfg = cfg;
  jcfg.method = TrainMethod::kJoint;
  TrainState jfull = init_train_state(model_cfg, jcfg);
  run_joint_epochs(&jfull, tasks, val, jcfg, model_cfg, 4);
  TrainState jhalf = init_train_state(model_cfg, jcfg);
  run_joint_epochs(&jhalf, tasks, val, jcfg, model_cfg, 2);
  std::string jpath = temp_file("metasep_ckpt_resume_joint.json");
  save_checkpoint(jpath, model_cfg, jhalf.params, &jhalf);
  TrainState jresumed = *load_checkpoint(jpath).train;
  run_joint_epochs(&jresumed, tasks, val, jcfg, model_cfg, 2);
  REQUIRE(jresumed.params.values == jfull.params.values);
  REQUIRE(jresumed.best_params.values == jfull.best_params.values);
  fs::remove(jpath);
}
