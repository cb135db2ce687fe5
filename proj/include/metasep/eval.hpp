// metasep/eval.hpp

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

#ifndef METASEP_EVAL_HPP_
#define METASEP_EVAL_HPP_

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "metasep/errors.hpp"
#include "metasep/metatrain.hpp"
#include "metasep/parallel.hpp"
#include "metasep/rng.hpp"
#include "metasep/scoring.hpp"
#include "metasep/tasks.hpp"

namespace metasep {

// Human-style domain similarity ratings, one mean rating per domain in [1, 7].
struct NativeLikenessTable {
  std::map<std::string, double> ratings;

  void validate() const {
    for (const auto &[label, r] : ratings) {
      if (r < 1.0 || r > 7.0)
        throw InvalidInput("NativeLikenessTable: rating for '" + label +
                           "' outside [1, 7]");
    }
  }
};

struct NoiseConfig {
  double snr_db = 10.0;
  uint64_t seed = 0;
};

struct EvalSettings {
  bool finetuned = false;
  bool noisy = false;
  double noise_snr_db = 0.0;
  double alpha = 0.0;
  int steps = 1;
};

struct EvalReport {
  struct PerTask {
    std::string task_id;
    std::string domain_label;
    double si_snri = 0.0;
  };
  std::vector<PerTask> per_task;
  std::map<std::string, double> per_domain;
  double overall = 0.0;
  std::optional<double> correlation;
  EvalSettings settings;
};

// Seeded colored noise (one-pole low-passed white noise), the desk-scale
// stand-in for recorded background noise.
inline Waveform colored_noise(size_t length, int sample_rate_hz,
                              uint64_t seed) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate_hz = sample_rate_hz;
  w.samples.resize(length);
  double state = 0.0;
  constexpr double pole = 0.85;
  for (size_t t = 0; t < length; ++t) {
    state = pole * state + (1.0 - pole) * rng.normal();
    w.samples[t] = state;
  }
  return w;
}

// Standard sample Pearson correlation coefficient.
inline double pearson(const std::vector<double> &xs,
                      const std::vector<double> &ys) {
  if (xs.size() != ys.size())
    throw InvalidInput("pearson: input lengths differ");
  if (xs.size() < 2) throw DegenerateInput("pearson: need at least 2 points");
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(ys.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    double dx = xs[i] - mx;
    double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw DegenerateInput("pearson: constant input list");
  return sxy / std::sqrt(sxx * syy);
}

namespace detail {

// Applies noise to every mixture of a task (support and query alike),
// deterministically seeded per (task, mixture).
inline MetaTask noisy_copy(const MetaTask &task, size_t task_index,
                           const NoiseConfig &noise) {
  MetaTask out = task;
  size_t mix_index = 0;
  auto apply = [&](MixtureExample *ex) {
    Waveform n =
        colored_noise(ex->mixture.size(), ex->mixture.sample_rate_hz,
                      substream_seed(noise.seed, "noise",
                                     task_index * 4096 + mix_index));
    ex->mixture = add_noise(ex->mixture, n, noise.snr_db);
    ++mix_index;
  };
  for (auto &ex : out.support) apply(&ex);
  for (auto &ex : out.query) apply(&ex);
  return out;
}

}  // namespace detail

// One-shot adaptation evaluation: per task, optionally overlay noise and
// fine-tune on the support set from a fresh copy of the shared parameters,
// then score every query mixture (Si-SNRi under the uPIT-optimal
// assignment). Averages per task, then per domain, then overall (the overall
// value is the mean of the per-task values).
inline EvalReport evaluate(const ParamVector &params,
                           const std::vector<MetaTask> &target_tasks,
                           bool adapt, double alpha, int steps,
                           const std::optional<NoiseConfig> &noise,
                           const ModelConfig &model_cfg, int workers = 1) {
  if (target_tasks.empty()) throw EmptyTaskSet("evaluate: no target tasks");
  EvalReport report;
  report.settings.finetuned = adapt;
  report.settings.noisy = noise.has_value();
  report.settings.noise_snr_db = noise ? noise->snr_db : 0.0;
  report.settings.alpha = adapt ? alpha : 0.0;
  report.settings.steps = adapt ? steps : 0;

  std::vector<double> scores(target_tasks.size(), 0.0);
  parallel_for(target_tasks.size(), workers, [&](size_t i) {
    const MetaTask *task = &target_tasks[i];
    MetaTask local;
    if (noise) {
      local = detail::noisy_copy(*task, i, *noise);
      task = &local;
    }
    if (adapt) {
      if (task->support.empty())
        throw InvalidInput("evaluate: task '" + task->task_id +
                           "' has no support set");
      ParamVector adapted = finetune(params, LossBatch::of(task->support),
                                     alpha, steps, model_cfg);
      scores[i] = task_query_si_snri(adapted, *task, model_cfg);
    } else {
      scores[i] = task_query_si_snri(params, *task, model_cfg);
    }
  });

  std::map<std::string, std::pair<double, int>> domain_acc;
  double overall = 0.0;
  for (size_t i = 0; i < target_tasks.size(); ++i) {
    const MetaTask &task = target_tasks[i];
    report.per_task.push_back({task.task_id, task.domain_label, scores[i]});
    auto &acc = domain_acc[task.domain_label];
    acc.first += scores[i];
    acc.second++;
    overall += scores[i];
  }
  for (const auto &[dom, acc] : domain_acc)
    report.per_domain[dom] = acc.first / acc.second;
  report.overall = overall / static_cast<double>(target_tasks.size());
  return report;
}

// Pearson correlation between per-domain ratings and per-domain Si-SNRi,
// ordered by domain label. Every report domain must be rated.
inline double correlation_report(const EvalReport &report,
                                 const NativeLikenessTable &table) {
  table.validate();
  std::vector<double> ratings, scores;
  for (const auto &[dom, si] : report.per_domain) {
    auto it = table.ratings.find(dom);
    if (it == table.ratings.end())
      throw KeyMissing("correlation_report: no rating for domain '" + dom +
                       "'");
    ratings.push_back(it->second);
    scores.push_back(si);
  }
  return pearson(ratings, scores);
}

// Side-by-side unadapted vs adapted evaluation. Fine-tuning is not
// guaranteed to help; degraded tasks are counted, not hidden.
struct AdaptationComparison {
  EvalReport base;     // adapt = false
  EvalReport adapted;  // adapt = true
  struct Delta {
    std::string task_id;
    std::string domain_label;
    double base_si_snri = 0.0;
    double adapted_si_snri = 0.0;
    double delta = 0.0;
  };
  std::vector<Delta> per_task;
  int degraded_tasks = 0;
  int improved_tasks = 0;
};

inline AdaptationComparison adaptation_comparison(
    const ParamVector &params, const std::vector<MetaTask> &target_tasks,
    double alpha, int steps, const std::optional<NoiseConfig> &noise,
    const ModelConfig &model_cfg, int workers = 1) {
  AdaptationComparison cmp;
  cmp.base = evaluate(params, target_tasks, false, alpha, steps, noise,
                      model_cfg, workers);
  cmp.adapted = evaluate(params, target_tasks, true, alpha, steps, noise,
                         model_cfg, workers);
  for (size_t i = 0; i < cmp.base.per_task.size(); ++i) {
    AdaptationComparison::Delta d;
    d.task_id = cmp.base.per_task[i].task_id;
    d.domain_label = cmp.base.per_task[i].domain_label;
    d.base_si_snri = cmp.base.per_task[i].si_snri;
    d.adapted_si_snri = cmp.adapted.per_task[i].si_snri;
    d.delta = d.adapted_si_snri - d.base_si_snri;
    if (d.delta < 0.0) cmp.degraded_tasks++;
    if (d.delta > 0.0) cmp.improved_tasks++;
    cmp.per_task.push_back(d);
  }
  return cmp;
}

inline nlohmann::ordered_json report_to_json(const EvalReport &report) {
  nlohmann::ordered_json j;
  j["format"] = "metasep-eval-report";
  j["format_version"] = 1;
  nlohmann::ordered_json s;
  s["finetuned"] = report.settings.finetuned;
  s["noisy"] = report.settings.noisy;
  s["noise_snr_db"] = report.settings.noise_snr_db;
  s["alpha"] = report.settings.alpha;
  s["steps"] = report.settings.steps;
  j["settings"] = s;
  j["overall_si_snri_db"] = report.overall;
  if (report.correlation)
    j["correlation"] = *report.correlation;
  else
    j["correlation"] = nullptr;
  nlohmann::ordered_json dom;
  for (const auto &[label, si] : report.per_domain) dom[label] = si;
  j["per_domain_si_snri_db"] = dom;
  nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
  for (const auto &pt : report.per_task) {
    nlohmann::ordered_json t;
    t["task_id"] = pt.task_id;
    t["domain_label"] = pt.domain_label;
    t["si_snri_db"] = pt.si_snri;
    tasks.push_back(t);
  }
  j["per_task"] = tasks;
  return j;
}

inline nlohmann::ordered_json comparison_to_json(
    const AdaptationComparison &cmp) {
  nlohmann::ordered_json j;
  j["degraded_tasks"] = cmp.degraded_tasks;
  j["improved_tasks"] = cmp.improved_tasks;
  j["overall_base_si_snri_db"] = cmp.base.overall;
  j["overall_adapted_si_snri_db"] = cmp.adapted.overall;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto &d : cmp.per_task) {
    nlohmann::ordered_json t;
    t["task_id"] = d.task_id;
    t["domain_label"] = d.domain_label;
    t["base_si_snri_db"] = d.base_si_snri;
    t["adapted_si_snri_db"] = d.adapted_si_snri;
    t["delta_db"] = d.delta;
    arr.push_back(t);
  }
  j["per_task"] = arr;
  return j;
}

// Flat per-domain table for external plotting: label, rating, si_snri.
// Unrated domains get "nan" in the rating column.
inline void write_domain_table(const EvalReport &report,
                               const NativeLikenessTable *table,
                               std::ostream &os) {
  os << "domain_label\trating\tsi_snri_db\n";
  char buf[64];
  for (const auto &[label, si] : report.per_domain) {
    double rating = std::numeric_limits<double>::quiet_NaN();
    if (table) {
      auto it = table->ratings.find(label);
      if (it != table->ratings.end()) rating = it->second;
    }
    std::snprintf(buf, sizeof(buf), "%s\t%.6g\t%.9g\n", label.c_str(), rating,
                  si);
    os << buf;
  }
}

}  // namespace metasep

#endif  // METASEP_EVAL_HPP_
