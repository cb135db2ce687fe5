// metasep/experiment.hpp

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

#ifndef METASEP_EXPERIMENT_HPP_
#define METASEP_EXPERIMENT_HPP_

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "metasep/corpus.hpp"
#include "metasep/errors.hpp"
#include "metasep/metatrain.hpp"
#include "metasep/rng.hpp"
#include "metasep/sepmodel.hpp"
#include "metasep/tasks.hpp"

namespace metasep {

// The serialized experiment description: corpus source, task construction,
// model, training, and evaluation settings, all hanging off one global seed.
// Seeds left at 0 are resolved to named substreams of the global seed when
// the config is loaded, so the stored config always reproduces the run.
struct ExperimentConfig {
  uint64_t seed = 1;

  // Training corpus: synthetic spec or an on-disk manifest (exactly one).
  std::optional<SynthSpec> synth;
  std::string corpus_manifest;

  // Target corpus for evaluation; falls back to the training corpus.
  std::optional<SynthSpec> eval_synth;
  std::string eval_manifest;

  // Task construction.
  int num_speakers = 2;
  int max_train_tasks = 96;
  double val_fraction = 0.1;
  int max_eval_tasks = 32;

  ModelConfig model;
  bool has_model_section = false;  // whether the source JSON spelled it out
  TrainConfig train;

  // Evaluation settings.
  bool eval_adapt = true;
  double eval_alpha = 0.01;
  int eval_steps = 1;
  std::optional<double> noise_snr_db;
  std::string ratings_path;

  void validate() const {
    if (synth && !corpus_manifest.empty())
      throw ConfigError("config: give either corpus.synth or corpus.manifest");
    if (!synth && corpus_manifest.empty())
      throw ConfigError("config: corpus.synth or corpus.manifest required");
    if (eval_synth && !eval_manifest.empty())
      throw ConfigError("config: eval_corpus has both synth and manifest");
    if (num_speakers < 2 || num_speakers > 3)
      throw ConfigError("config: num_speakers must be 2 or 3");
    if (max_train_tasks < 0 || max_eval_tasks < 0)
      throw ConfigError("config: task counts must be >= 0");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
      throw ConfigError("config: val_fraction must lie in [0, 1)");
    if (synth) synth->validate();
    if (eval_synth) eval_synth->validate();
    if (eval_alpha < 0.0) throw ConfigError("config: eval alpha must be >= 0");
    if (eval_steps < 1) throw ConfigError("config: eval steps must be >= 1");
    model.validate();
    train.validate();
    if (model.num_sources != num_speakers)
      throw ConfigError("config: model.num_sources must equal num_speakers");
  }

  // Fills derived seeds from the global one.
  void resolve_seeds() {
    if (synth && synth->seed == 0)
      synth->seed = substream_seed(seed, "corpus");
    if (eval_synth && eval_synth->seed == 0)
      eval_synth->seed = substream_seed(seed, "eval-corpus");
    if (model.seed == 0) model.seed = substream_seed(seed, "model");
    if (train.seed == 0) train.seed = seed;
  }

  bool operator==(const ExperimentConfig &o) const;
};

namespace detail {

inline nlohmann::ordered_json synth_to_json(const SynthSpec &s) {
  nlohmann::ordered_json j;
  j["num_domains"] = s.num_domains;
  j["speakers_per_domain"] = s.speakers_per_domain;
  j["utterances_per_speaker"] = s.utterances_per_speaker;
  j["utterance_len_s"] = s.utterance_len_s;
  j["sample_rate_hz"] = s.sample_rate_hz;
  j["domain_shift"] = s.domain_shift;
  if (!s.domain_shifts.empty()) j["domain_shifts"] = s.domain_shifts;
  j["seed"] = s.seed;
  return j;
}

inline SynthSpec synth_from_json(const nlohmann::json &j) {
  SynthSpec s;
  s.num_domains = j.value("num_domains", s.num_domains);
  s.speakers_per_domain = j.value("speakers_per_domain", s.speakers_per_domain);
  s.utterances_per_speaker =
      j.value("utterances_per_speaker", s.utterances_per_speaker);
  s.utterance_len_s = j.value("utterance_len_s", s.utterance_len_s);
  s.sample_rate_hz = j.value("sample_rate_hz", s.sample_rate_hz);
  s.domain_shift = j.value("domain_shift", s.domain_shift);
  if (j.contains("domain_shifts"))
    s.domain_shifts = j.at("domain_shifts").get<std::vector<double>>();
  s.seed = j.value("seed", static_cast<uint64_t>(0));
  return s;
}

inline nlohmann::ordered_json train_to_json(const TrainConfig &t) {
  nlohmann::ordered_json j;
  j["method"] = to_string(t.method);
  j["alpha"] = t.alpha;
  j["beta"] = t.beta;
  j["inner_steps"] = t.inner_steps;
  j["meta_batch"] = t.meta_batch;
  j["epochs"] = t.epochs;
  j["patience"] = t.patience;
  j["seed"] = t.seed;
  j["joint_batch"] = t.joint_batch;
  j["grad_clip"] = t.grad_clip;
  return j;
}

inline TrainConfig train_from_json(const nlohmann::json &j) {
  TrainConfig t;
  if (j.contains("method"))
    t.method = train_method_from_string(j.at("method").get<std::string>());
  t.alpha = j.value("alpha", t.alpha);
  t.beta = j.value("beta", t.beta);
  t.inner_steps = j.value("inner_steps", t.inner_steps);
  t.meta_batch = j.value("meta_batch", t.meta_batch);
  t.epochs = j.value("epochs", t.epochs);
  t.patience = j.value("patience", t.patience);
  t.seed = j.value("seed", static_cast<uint64_t>(0));
  t.joint_batch = j.value("joint_batch", t.joint_batch);
  t.grad_clip = j.value("grad_clip", t.grad_clip);
  return t;
}

inline nlohmann::ordered_json model_cfg_to_json(const ModelConfig &m) {
  nlohmann::ordered_json j;
  j["num_sources"] = m.num_sources;
  j["window_len"] = m.window_len;
  j["hop_len"] = m.hop_len;
  j["basis_dim"] = m.basis_dim;
  j["separator_hidden"] = m.separator_hidden;
  j["separator_layers"] = m.separator_layers;
  j["mask_activation"] = to_string(m.mask_activation);
  j["seed"] = m.seed;
  return j;
}

inline ModelConfig model_cfg_from_json(const nlohmann::json &j) {
  ModelConfig m;
  m.num_sources = j.value("num_sources", m.num_sources);
  m.window_len = j.value("window_len", m.window_len);
  m.hop_len = j.value("hop_len", m.hop_len);
  m.basis_dim = j.value("basis_dim", m.basis_dim);
  m.separator_hidden = j.value("separator_hidden", m.separator_hidden);
  m.separator_layers = j.value("separator_layers", m.separator_layers);
  if (j.contains("mask_activation"))
    m.mask_activation =
        mask_activation_from_string(j.at("mask_activation").get<std::string>());
  m.seed = j.value("seed", static_cast<uint64_t>(0));
  return m;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ExperimentConfig &c) {
  nlohmann::ordered_json j;
  j["format"] = "metasep-config";
  j["format_version"] = 1;
  j["seed"] = c.seed;
  nlohmann::ordered_json corpus;
  if (c.synth) corpus["synth"] = detail::synth_to_json(*c.synth);
  if (!c.corpus_manifest.empty()) corpus["manifest"] = c.corpus_manifest;
  j["corpus"] = corpus;
  if (c.eval_synth || !c.eval_manifest.empty()) {
    nlohmann::ordered_json ec;
    if (c.eval_synth) ec["synth"] = detail::synth_to_json(*c.eval_synth);
    if (!c.eval_manifest.empty()) ec["manifest"] = c.eval_manifest;
    j["eval_corpus"] = ec;
  }
  nlohmann::ordered_json tasks;
  tasks["num_speakers"] = c.num_speakers;
  tasks["max_train_tasks"] = c.max_train_tasks;
  tasks["val_fraction"] = c.val_fraction;
  tasks["max_eval_tasks"] = c.max_eval_tasks;
  j["tasks"] = tasks;
  j["model"] = detail::model_cfg_to_json(c.model);
  j["train"] = detail::train_to_json(c.train);
  nlohmann::ordered_json ev;
  ev["adapt"] = c.eval_adapt;
  ev["alpha"] = c.eval_alpha;
  ev["steps"] = c.eval_steps;
  if (c.noise_snr_db)
    ev["noise_snr_db"] = *c.noise_snr_db;
  else
    ev["noise_snr_db"] = nullptr;
  ev["ratings"] = c.ratings_path;
  j["eval"] = ev;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json &j) {
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", static_cast<uint64_t>(1));
    if (j.contains("corpus")) {
      const auto &corpus = j.at("corpus");
      if (corpus.contains("synth"))
        c.synth = detail::synth_from_json(corpus.at("synth"));
      c.corpus_manifest = corpus.value("manifest", std::string());
    }
    if (j.contains("eval_corpus")) {
      const auto &ec = j.at("eval_corpus");
      if (ec.contains("synth"))
        c.eval_synth = detail::synth_from_json(ec.at("synth"));
      c.eval_manifest = ec.value("manifest", std::string());
    }
    if (j.contains("tasks")) {
      const auto &t = j.at("tasks");
      c.num_speakers = t.value("num_speakers", c.num_speakers);
      c.max_train_tasks = t.value("max_train_tasks", c.max_train_tasks);
      c.val_fraction = t.value("val_fraction", c.val_fraction);
      c.max_eval_tasks = t.value("max_eval_tasks", c.max_eval_tasks);
    }
    if (j.contains("model")) {
      c.model = detail::model_cfg_from_json(j.at("model"));
      c.has_model_section = true;
    }
    if (j.contains("train")) c.train = detail::train_from_json(j.at("train"));
    c.model.num_sources = c.num_speakers;
    if (j.contains("eval")) {
      const auto &ev = j.at("eval");
      c.eval_adapt = ev.value("adapt", c.eval_adapt);
      c.eval_alpha = ev.value("alpha", c.eval_alpha);
      c.eval_steps = ev.value("steps", c.eval_steps);
      if (ev.contains("noise_snr_db") && !ev.at("noise_snr_db").is_null())
        c.noise_snr_db = ev.at("noise_snr_db").get<double>();
      c.ratings_path = ev.value("ratings", std::string());
    }
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline bool ExperimentConfig::operator==(const ExperimentConfig &o) const {
  return to_json(*this) == to_json(o);
}

inline ExperimentConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const ExperimentConfig &cfg, const std::string &path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << to_json(cfg).dump(1) << '\n';
  if (!out) throw IoError("short write to '" + path + "'");
}

// Task split used by training: a deterministic fraction of the constructed
// tasks is held out for validation.
struct TaskSplit {
  std::vector<MetaTask> train;
  std::vector<MetaTask> val;
};

inline SpeakerCorpus resolve_corpus(const std::optional<SynthSpec> &synth,
                                    const std::string &manifest) {
  if (synth) return synth_corpus(*synth);
  if (manifest.empty()) throw ConfigError("no corpus source configured");
  return load_corpus(manifest);
}

inline TaskSplit build_training_tasks(const SpeakerCorpus &corpus,
                                      const ExperimentConfig &cfg) {
  Rng rng(substream_seed(cfg.seed, "tasks"));
  std::vector<MetaTask> all =
      build_task_set(corpus, cfg.num_speakers, cfg.max_train_tasks, &rng);
  size_t n_val = static_cast<size_t>(
      std::lround(cfg.val_fraction * static_cast<double>(all.size())));
  if (cfg.val_fraction > 0.0 && n_val == 0 && all.size() > 1) n_val = 1;
  TaskSplit split;
  for (size_t i = 0; i < all.size(); ++i) {
    if (i + n_val >= all.size())
      split.val.push_back(std::move(all[i]));
    else
      split.train.push_back(std::move(all[i]));
  }
  return split;
}

inline std::vector<MetaTask> build_eval_tasks(const SpeakerCorpus &corpus,
                                              const ExperimentConfig &cfg) {
  Rng rng(substream_seed(cfg.seed, "eval-tasks"));
  return build_task_set(corpus, cfg.num_speakers, cfg.max_eval_tasks, &rng);
}

}  // namespace metasep

#endif  // METASEP_EXPERIMENT_HPP_
