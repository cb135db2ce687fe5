// metasep/metatrain.hpp

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

#ifndef METASEP_METATRAIN_HPP_
#define METASEP_METATRAIN_HPP_

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "metasep/diffcore.hpp"
#include "metasep/errors.hpp"
#include "metasep/parallel.hpp"
#include "metasep/rng.hpp"
#include "metasep/scoring.hpp"
#include "metasep/sepmodel.hpp"
#include "metasep/tasks.hpp"

namespace metasep {

enum class TrainMethod { kJoint, kMaml, kFomaml };

inline std::string to_string(TrainMethod m) {
  switch (m) {
    case TrainMethod::kJoint: return "joint";
    case TrainMethod::kMaml: return "maml";
    case TrainMethod::kFomaml: return "fomaml";
  }
  return "joint";
}

inline TrainMethod train_method_from_string(const std::string &s) {
  if (s == "joint") return TrainMethod::kJoint;
  if (s == "maml") return TrainMethod::kMaml;
  if (s == "fomaml") return TrainMethod::kFomaml;
  throw ConfigError("unknown training method '" + s + "'");
}

struct TrainConfig {
  TrainMethod method = TrainMethod::kMaml;
  double alpha = 0.01;   // inner / fast-adapt learning rate
  double beta = 0.001;   // outer / joint learning rate
  int inner_steps = 1;
  int meta_batch = 3;
  int epochs = 200;
  int patience = 3;      // validations without improvement before halving
  uint64_t seed = 0;
  int joint_batch = 8;   // minibatch size for joint training
  double grad_clip = 5.0;  // global-norm clip; <= 0 disables

  void validate() const {
    if (alpha < 0.0) throw ConfigError("TrainConfig: alpha must be >= 0");
    if (beta <= 0.0) throw ConfigError("TrainConfig: beta must be > 0");
    if (inner_steps < 1) throw ConfigError("TrainConfig: inner_steps >= 1");
    if (meta_batch < 1) throw ConfigError("TrainConfig: meta_batch >= 1");
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
    if (patience < 1) throw ConfigError("TrainConfig: patience >= 1");
    if (joint_batch < 1) throw ConfigError("TrainConfig: joint_batch >= 1");
    if (method == TrainMethod::kMaml && inner_steps != 1)
      throw ConfigError("TrainConfig: exact MAML supports inner_steps == 1");
  }
};

// Adam with the usual constants; the learning rate is supplied per step so
// the validation-driven halving schedule can act on it.
struct AdamState {
  std::vector<double> m, v;
  int64_t step = 0;

  void init(size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

inline void adam_step(AdamState *opt, std::vector<double> *params,
                      const std::vector<double> &grad, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  opt->step++;
  double bc1 = 1.0 - std::pow(b1, static_cast<double>(opt->step));
  double bc2 = 1.0 - std::pow(b2, static_cast<double>(opt->step));
  for (size_t i = 0; i < params->size(); ++i) {
    double g = grad[i];
    opt->m[i] = b1 * opt->m[i] + (1.0 - b1) * g;
    opt->v[i] = b2 * opt->v[i] + (1.0 - b2) * g * g;
    double mh = opt->m[i] / bc1;
    double vh = opt->v[i] / bc2;
    (*params)[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

// Scales grad to global norm `clip` when it exceeds it; returns true if the
// clip fired.
inline bool clip_global_norm(std::vector<double> *grad, double clip) {
  if (clip <= 0.0) return false;
  double sq = 0.0;
  for (double g : *grad) sq += g * g;
  double norm = std::sqrt(sq);
  if (norm <= clip) return false;
  double scale = clip / norm;
  for (double &g : *grad) g *= scale;
  return true;
}

// Mutable training state; everything needed to resume a run bit-exactly.
struct TrainState {
  ParamVector params;
  ParamVector best_params;
  AdamState opt;
  double current_lr = 0.0;
  double best_validation_loss = std::numeric_limits<double>::infinity();
  int non_improve_count = 0;
  int epoch = 0;
  int64_t iteration = 0;
  int clip_events = 0;
  Rng rng{0};

  // Halving schedule: a validation that fails to improve on the best loss
  // `patience` consecutive times halves the learning rate and restarts the
  // streak. Returns whether this observation improved.
  bool observe_validation(double val_loss, int patience) {
    if (val_loss < best_validation_loss) {
      best_validation_loss = val_loss;
      non_improve_count = 0;
      return true;
    }
    if (++non_improve_count >= patience) {
      current_lr *= 0.5;
      non_improve_count = 0;
    }
    return false;
  }
};

inline TrainState init_train_state(const ModelConfig &model_cfg,
                                   const TrainConfig &cfg) {
  cfg.validate();
  TrainState st;
  st.params = init_params(model_cfg);
  st.best_params = st.params;
  st.opt.init(st.params.size());
  st.current_lr = cfg.beta;
  st.rng = Rng(substream_seed(cfg.seed, "train"));
  return st;
}

namespace detail {

inline int64_t wall_ms_since(
    const std::chrono::steady_clock::time_point &start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now() - start)
      .count();
}

inline void log_line(std::ostream *log, int64_t iter, double support_loss,
                     double query_loss, double lr, int64_t wall_ms) {
  if (!log) return;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%lld\t%.9g\t%.9g\t%.9g\t%lld\n",
                static_cast<long long>(iter), support_loss, query_loss, lr,
                static_cast<long long>(wall_ms));
  (*log) << buf;
}

// Mean loss over the validation tasks' query sets (no adaptation).
inline double joint_validation_loss(const ParamVector &params,
                                    const std::vector<MetaTask> &val_tasks,
                                    const ModelConfig &model_cfg,
                                    int workers) {
  std::vector<double> vals(val_tasks.size(), 0.0);
  parallel_for(val_tasks.size(), workers, [&](size_t i) {
    vals[i] = batch_loss(params, LossBatch::of(val_tasks[i].query), model_cfg);
  });
  double acc = 0.0;
  for (double v : vals) acc += v;
  return acc / static_cast<double>(vals.size());
}

}  // namespace detail

// Plain gradient descent on one task's support set; the deployment-time
// adaptation entry point. Identical to adapted_params.
inline ParamVector finetune(const ParamVector &params, const LossBatch &support,
                            double alpha, int steps,
                            const ModelConfig &model_cfg, int workers = 1) {
  return adapted_params(params, support, alpha, steps, model_cfg, workers);
}

// Post-adaptation validation: one fine-tune step at alpha per task, then the
// mean query loss.
inline double meta_validation_loss(const ParamVector &params,
                                   const std::vector<MetaTask> &val_tasks,
                                   double alpha, const ModelConfig &model_cfg,
                                   int workers) {
  std::vector<double> vals(val_tasks.size(), 0.0);
  parallel_for(val_tasks.size(), workers, [&](size_t i) {
    ParamVector adapted = finetune(params, LossBatch::of(val_tasks[i].support),
                                   alpha, 1, model_cfg);
    vals[i] = batch_loss(adapted, LossBatch::of(val_tasks[i].query), model_cfg);
  });
  double acc = 0.0;
  for (double v : vals) acc += v;
  return acc / static_cast<double>(vals.size());
}

// One meta-iteration: B tasks, per-task meta-gradients in fixed task order,
// mean-aggregated, clipped, then one outer Adam step. Returns
// (mean support loss, mean query loss).
inline std::pair<double, double> meta_train_iteration(
    TrainState *st, const std::vector<MetaTask> &train_tasks,
    const TrainConfig &cfg, const ModelConfig &model_cfg, int workers) {
  auto batch = sample_meta_batch(train_tasks, cfg.meta_batch, &st->rng);
  const size_t b = batch.size();
  std::vector<ParamVector> grads(b);
  std::vector<double> q_losses(b, 0.0), s_losses(b, 0.0);
  parallel_for(b, workers, [&](size_t j) {
    LossBatch support = LossBatch::of(batch[j]->support);
    LossBatch query = LossBatch::of(batch[j]->query);
    s_losses[j] = batch_loss(st->params, support, model_cfg);
    if (cfg.method == TrainMethod::kMaml) {
      auto [ql, g] = meta_grad_maml(st->params, support, query, cfg.alpha,
                                    cfg.inner_steps, model_cfg);
      q_losses[j] = ql;
      grads[j] = std::move(g);
    } else {
      auto [ql, g] = meta_grad_fomaml(st->params, support, query, cfg.alpha,
                                      cfg.inner_steps, model_cfg);
      q_losses[j] = ql;
      grads[j] = std::move(g);
    }
  });

  std::vector<double> agg(st->params.size(), 0.0);
  double inv = 1.0 / static_cast<double>(b);
  double support_loss = 0.0, query_loss = 0.0;
  for (size_t j = 0; j < b; ++j) {
    support_loss += s_losses[j];
    query_loss += q_losses[j];
    for (size_t i = 0; i < agg.size(); ++i) agg[i] += inv * grads[j].values[i];
  }
  support_loss *= inv;
  query_loss *= inv;

  if (clip_global_norm(&agg, cfg.grad_clip)) st->clip_events++;
  adam_step(&st->opt, &st->params.values, agg, st->current_lr);
  check_finite_or_throw(st->params.values, st->params.layout,
                        "meta_train_iteration");
  st->iteration++;
  return {support_loss, query_loss};
}

// Runs `n_epochs` additional meta-training epochs on an existing state.
// One epoch is ceil(|train_tasks| / B) iterations followed by a validation.
inline void run_meta_epochs(TrainState *st,
                            const std::vector<MetaTask> &train_tasks,
                            const std::vector<MetaTask> &val_tasks,
                            const TrainConfig &cfg,
                            const ModelConfig &model_cfg, int n_epochs,
                            int workers = 1, std::ostream *log = nullptr) {
  cfg.validate();
  if (cfg.method == TrainMethod::kJoint)
    throw ConfigError("run_meta_epochs: method must be maml or fomaml");
  if (train_tasks.empty()) throw EmptyTaskSet("run_meta_epochs: no tasks");
  if (static_cast<size_t>(cfg.meta_batch) > train_tasks.size())
    throw InvalidInput("run_meta_epochs: meta_batch exceeds task count");
  const int iters_per_epoch = static_cast<int>(
      (train_tasks.size() + cfg.meta_batch - 1) / cfg.meta_batch);
  auto start = std::chrono::steady_clock::now();
  for (int e = 0; e < n_epochs; ++e) {
    for (int it = 0; it < iters_per_epoch; ++it) {
      auto [sl, ql] =
          meta_train_iteration(st, train_tasks, cfg, model_cfg, workers);
      detail::log_line(log, st->iteration, sl, ql, st->current_lr,
                       detail::wall_ms_since(start));
    }
    st->epoch++;
    if (!val_tasks.empty()) {
      double val = meta_validation_loss(st->params, val_tasks, cfg.alpha,
                                        model_cfg, workers);
      if (st->observe_validation(val, cfg.patience))
        st->best_params = st->params;
    } else {
      st->best_params = st->params;
    }
  }
}

// Meta-training (MAML or FOMAML) with the validation-driven halving
// schedule; returns the best-validation parameters.
inline ParamVector train_meta(const std::vector<MetaTask> &train_tasks,
                              const std::vector<MetaTask> &val_tasks,
                              const TrainConfig &cfg,
                              const ModelConfig &model_cfg, int workers = 1,
                              std::ostream *log = nullptr) {
  TrainState st = init_train_state(model_cfg, cfg);
  run_meta_epochs(&st, train_tasks, val_tasks, cfg, model_cfg, cfg.epochs,
                  workers, log);
  return st.best_params;
}

// Runs `n_epochs` additional joint-training epochs: minibatch Adam over the
// pooled support + query mixtures of all training tasks.
inline void run_joint_epochs(TrainState *st,
                             const std::vector<MetaTask> &train_tasks,
                             const std::vector<MetaTask> &val_tasks,
                             const TrainConfig &cfg,
                             const ModelConfig &model_cfg, int n_epochs,
                             int workers = 1, std::ostream *log = nullptr) {
  cfg.validate();
  std::vector<const MixtureExample *> pool;
  for (const auto &task : train_tasks) {
    for (const auto &ex : task.support) pool.push_back(&ex);
    for (const auto &ex : task.query) pool.push_back(&ex);
  }
  if (pool.empty()) throw EmptyTaskSet("run_joint_epochs: empty example pool");

  auto start = std::chrono::steady_clock::now();
  double last_val = std::numeric_limits<double>::quiet_NaN();
  for (int e = 0; e < n_epochs; ++e) {
    std::vector<size_t> order(pool.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    st->rng.shuffle(&order);
    for (size_t off = 0; off < order.size();
         off += static_cast<size_t>(cfg.joint_batch)) {
      LossBatch batch;
      size_t end = std::min(order.size(),
                            off + static_cast<size_t>(cfg.joint_batch));
      for (size_t i = off; i < end; ++i)
        batch.examples.push_back(pool[order[i]]);
      auto [loss, grad] = loss_and_grad(st->params, batch, model_cfg, workers);
      if (clip_global_norm(&grad.values, cfg.grad_clip)) st->clip_events++;
      adam_step(&st->opt, &st->params.values, grad.values, st->current_lr);
      st->iteration++;
      detail::log_line(log, st->iteration, loss, last_val, st->current_lr,
                       detail::wall_ms_since(start));
    }
    st->epoch++;
    if (!val_tasks.empty()) {
      last_val = detail::joint_validation_loss(st->params, val_tasks,
                                               model_cfg, workers);
      if (st->observe_validation(last_val, cfg.patience))
        st->best_params = st->params;
    } else {
      st->best_params = st->params;
    }
  }
}

// The transfer-learning baseline: pooled training on every mixture of every
// training task; returns the best-validation parameters.
inline ParamVector train_joint(const std::vector<MetaTask> &train_tasks,
                               const std::vector<MetaTask> &val_tasks,
                               const TrainConfig &cfg,
                               const ModelConfig &model_cfg, int workers = 1,
                               std::ostream *log = nullptr) {
  if (cfg.method != TrainMethod::kJoint)
    throw ConfigError("train_joint: cfg.method must be joint");
  TrainState st = init_train_state(model_cfg, cfg);
  run_joint_epochs(&st, train_tasks, val_tasks, cfg, model_cfg, cfg.epochs,
                   workers, log);
  return st.best_params;
}

// Dispatch on cfg.method.
inline ParamVector train(const std::vector<MetaTask> &train_tasks,
                         const std::vector<MetaTask> &val_tasks,
                         const TrainConfig &cfg, const ModelConfig &model_cfg,
                         int workers = 1, std::ostream *log = nullptr) {
  if (cfg.method == TrainMethod::kJoint)
    return train_joint(train_tasks, val_tasks, cfg, model_cfg, workers, log);
  return train_meta(train_tasks, val_tasks, cfg, model_cfg, workers, log);
}

// Default grid for the fine-tune learning-rate sweep.
inline const std::vector<double> &default_alpha_grid() {
  static const std::vector<double> grid = {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  return grid;
}

// Fine-tunes on the task's support set once per candidate rate and returns
// the rate with the best mean query Si-SNRi (ties go to the smaller rate).
// The best score is not guaranteed to beat the unadapted model.
inline std::pair<double, double> lr_sweep_finetune(
    const ParamVector &params, const MetaTask &task,
    const std::vector<double> &alphas, const ModelConfig &model_cfg,
    int steps = 1, int workers = 1) {
  if (alphas.empty()) throw InvalidInput("lr_sweep_finetune: empty alpha grid");
  std::vector<double> sorted = alphas;
  std::sort(sorted.begin(), sorted.end());
  double best_alpha = sorted[0];
  double best_score = -std::numeric_limits<double>::infinity();
  for (double alpha : sorted) {
    ParamVector adapted = finetune(params, LossBatch::of(task.support), alpha,
                                   steps, model_cfg, workers);
    double score = task_query_si_snri(adapted, task, model_cfg);
    if (score > best_score) {
      best_score = score;
      best_alpha = alpha;
    }
  }
  return {best_alpha, best_score};
}

}  // namespace metasep

#endif  // METASEP_METATRAIN_HPP_
