// metasep/checkpoint.hpp

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

#ifndef METASEP_CHECKPOINT_HPP_
#define METASEP_CHECKPOINT_HPP_

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "metasep/errors.hpp"
#include "metasep/metatrain.hpp"
#include "metasep/params.hpp"
#include "metasep/sepmodel.hpp"

namespace metasep {

// Checkpoints are JSON with every floating value encoded as a C hexfloat, so
// save -> load round-trips bit-exactly.

constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::string double_to_hex(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline double hex_to_double(const std::string &s) {
  const char *c = s.c_str();
  char *end = nullptr;
  double v = std::strtod(c, &end);
  if (end != c + s.size())
    throw FormatError("checkpoint: bad hexfloat '" + s + "'");
  return v;
}

inline nlohmann::ordered_json doubles_to_json(const std::vector<double> &v) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (double x : v) arr.push_back(double_to_hex(x));
  return arr;
}

inline std::vector<double> doubles_from_json(const nlohmann::json &arr) {
  std::vector<double> v;
  v.reserve(arr.size());
  for (const auto &x : arr) v.push_back(hex_to_double(x.get<std::string>()));
  return v;
}

inline nlohmann::ordered_json model_to_json(const ModelConfig &cfg) {
  nlohmann::ordered_json j;
  j["num_sources"] = cfg.num_sources;
  j["window_len"] = cfg.window_len;
  j["hop_len"] = cfg.hop_len;
  j["basis_dim"] = cfg.basis_dim;
  j["separator_hidden"] = cfg.separator_hidden;
  j["separator_layers"] = cfg.separator_layers;
  j["mask_activation"] = to_string(cfg.mask_activation);
  j["seed"] = cfg.seed;
  return j;
}

inline ModelConfig model_from_json(const nlohmann::json &j) {
  ModelConfig cfg;
  cfg.num_sources = j.at("num_sources").get<int>();
  cfg.window_len = j.at("window_len").get<int>();
  cfg.hop_len = j.at("hop_len").get<int>();
  cfg.basis_dim = j.at("basis_dim").get<int>();
  cfg.separator_hidden = j.at("separator_hidden").get<int>();
  cfg.separator_layers = j.at("separator_layers").get<int>();
  cfg.mask_activation =
      mask_activation_from_string(j.at("mask_activation").get<std::string>());
  cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

}  // namespace detail

struct Checkpoint {
  ModelConfig model;
  ParamVector params;
  // Populated when the checkpoint carries resumable training state.
  std::optional<TrainState> train;
};

inline void save_checkpoint(const std::string &path, const ModelConfig &cfg,
                            const ParamVector &params,
                            const TrainState *train = nullptr) {
  nlohmann::ordered_json j;
  j["format"] = "metasep-checkpoint";
  j["format_version"] = kCheckpointVersion;
  j["model"] = detail::model_to_json(cfg);
  nlohmann::ordered_json layout = nlohmann::ordered_json::array();
  for (const auto &b : params.layout.blocks) {
    nlohmann::ordered_json jb;
    jb["name"] = b.name;
    jb["offset"] = b.offset;
    jb["size"] = b.size;
    jb["shape"] = b.shape;
    layout.push_back(jb);
  }
  j["layout"] = layout;
  j["values"] = detail::doubles_to_json(params.values);
  if (train != nullptr) {
    nlohmann::ordered_json t;
    t["adam_m"] = detail::doubles_to_json(train->opt.m);
    t["adam_v"] = detail::doubles_to_json(train->opt.v);
    t["adam_step"] = train->opt.step;
    t["current_lr"] = detail::double_to_hex(train->current_lr);
    t["best_validation_loss"] =
        detail::double_to_hex(train->best_validation_loss);
    t["non_improve_count"] = train->non_improve_count;
    t["epoch"] = train->epoch;
    t["iteration"] = train->iteration;
    t["clip_events"] = train->clip_events;
    t["rng"] = train->rng.serialize();
    t["best_values"] = detail::doubles_to_json(train->best_params.values);
    j["train"] = t;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint '" + path + "' for writing");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("short write to checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw FormatError("checkpoint '" + path + "': " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "metasep-checkpoint")
      throw FormatError("checkpoint '" + path + "': unknown format tag");
    if (j.at("format_version").get<int>() != kCheckpointVersion)
      throw FormatError("checkpoint '" + path + "': unsupported version");

    Checkpoint ck;
    ck.model = detail::model_from_json(j.at("model"));
    ck.params.layout = make_layout(ck.model);
    ck.params.values = detail::doubles_from_json(j.at("values"));
    if (ck.params.values.size() != ck.params.layout.total)
      throw ConfigError("checkpoint '" + path +
                        "': value count does not match model layout");
    // The stored layout must agree with the one the config derives.
    const auto &stored = j.at("layout");
    if (stored.size() != ck.params.layout.blocks.size())
      throw ConfigError("checkpoint '" + path + "': layout mismatch");
    for (size_t i = 0; i < stored.size(); ++i) {
      const auto &b = ck.params.layout.blocks[i];
      if (stored[i].at("name").get<std::string>() != b.name ||
          stored[i].at("offset").get<size_t>() != b.offset ||
          stored[i].at("size").get<size_t>() != b.size)
        throw ConfigError("checkpoint '" + path + "': layout mismatch at '" +
                          b.name + "'");
    }

    if (j.contains("train")) {
      const auto &t = j.at("train");
      TrainState st;
      st.params = ck.params;
      st.best_params.layout = ck.params.layout;
      st.best_params.values = detail::doubles_from_json(t.at("best_values"));
      st.opt.m = detail::doubles_from_json(t.at("adam_m"));
      st.opt.v = detail::doubles_from_json(t.at("adam_v"));
      st.opt.step = t.at("adam_step").get<int64_t>();
      st.current_lr = detail::hex_to_double(t.at("current_lr"));
      st.best_validation_loss =
          detail::hex_to_double(t.at("best_validation_loss"));
      st.non_improve_count = t.at("non_improve_count").get<int>();
      st.epoch = t.at("epoch").get<int>();
      st.iteration = t.at("iteration").get<int64_t>();
      st.clip_events = t.at("clip_events").get<int>();
      st.rng.deserialize(t.at("rng").get<std::string>());
      ck.train = std::move(st);
    }
    return ck;
  } catch (const nlohmann::json::exception &e) {
    throw FormatError("checkpoint '" + path + "': " + e.what());
  }
}

}  // namespace metasep

#endif  // METASEP_CHECKPOINT_HPP_
