// metasep/diffcore.hpp

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

#ifndef METASEP_DIFFCORE_HPP_
#define METASEP_DIFFCORE_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "metasep/dual.hpp"
#include "metasep/errors.hpp"
#include "metasep/parallel.hpp"
#include "metasep/params.hpp"
#include "metasep/sepmodel.hpp"
#include "metasep/signal.hpp"

namespace metasep {

// Non-owning view over the mixtures fed to one loss evaluation.
struct LossBatch {
  std::vector<const MixtureExample *> examples;

  static LossBatch of(const std::vector<MixtureExample> &v) {
    LossBatch b;
    b.examples.reserve(v.size());
    for (const auto &ex : v) b.examples.push_back(&ex);
    return b;
  }

  static LossBatch one(const MixtureExample &ex) {
    LossBatch b;
    b.examples.push_back(&ex);
    return b;
  }

  void append(const std::vector<MixtureExample> &v) {
    for (const auto &ex : v) examples.push_back(&ex);
  }

  size_t size() const { return examples.size(); }

  void validate() const {
    if (examples.empty()) throw InvalidInput("LossBatch: empty batch");
    int c = examples[0]->num_sources();
    for (const auto *ex : examples) {
      if (ex->num_sources() != c)
        throw InvalidInput("LossBatch: non-uniform source count");
    }
  }
};

namespace detail {

// Forward state of one example's separation loss: the model trace plus the
// pairwise Si-SNR evaluations and the permutation the loss settled on.
template <typename T>
struct ExampleTrace {
  ModelTrace<T> model;
  std::vector<RefStats> refs;
  std::vector<std::vector<SiSnrEval<T>>> pair;
  std::vector<int> perm;
  T loss{};
};

template <typename T>
T example_loss_forward(const T *p, const ModelDims &md,
                       const MixtureExample &ex, ExampleTrace<T> *tr) {
  if (ex.num_sources() != md.c)
    throw ConfigError("batch_loss: example source count does not match model");
  model_forward(p, md, ex.mixture.samples, &tr->model);

  const int c_count = md.c;
  tr->refs.resize(c_count);
  tr->pair.assign(c_count, std::vector<SiSnrEval<T>>(c_count));
  for (int k = 0; k < c_count; ++k) {
    tr->refs[k] = make_ref_stats(ex.sources[k].samples);
    if (tr->refs[k].constant)
      throw DegenerateReference("batch_loss: constant source waveform");
  }
  for (int c = 0; c < c_count; ++c)
    for (int k = 0; k < c_count; ++k)
      tr->pair[c][k] = si_snr_eval(tr->model.estimates[c].data(),
                                   tr->model.estimates[c].size(), tr->refs[k]);

  // The permutation is chosen by value and treated as constant under
  // differentiation; ties keep the lexicographically smallest.
  std::vector<int> perm(c_count);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_loss = std::numeric_limits<double>::infinity();
  do {
    double loss = 0.0;
    for (int c = 0; c < c_count; ++c)
      loss -= value_of(tr->pair[c][perm[c]].value);
    loss /= c_count;
    if (loss < best_loss) {
      best_loss = loss;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  tr->perm = best;

  T loss{};
  for (int c = 0; c < c_count; ++c) loss -= tr->pair[c][best[c]].value;
  loss /= T(static_cast<double>(c_count));
  tr->loss = loss;
  return loss;
}

template <typename T>
void example_loss_backward(const T *p, const ModelDims &md,
                           const ExampleTrace<T> &tr, T dloss, T *grad) {
  const int c_count = md.c;
  T dvalue = T(0.0) - dloss / T(static_cast<double>(c_count));
  std::vector<std::vector<T>> dest(
      c_count, std::vector<T>(tr.model.length, T(0.0)));
  for (int c = 0; c < c_count; ++c) {
    si_snr_backward(tr.model.estimates[c].data(), tr.model.estimates[c].size(),
                    tr.refs[tr.perm[c]], tr.pair[c][tr.perm[c]], dvalue,
                    dest[c].data());
  }
  model_backward(p, md, tr.model, dest, grad);
}

template <typename T>
T batch_loss_t(const T *p, const ModelDims &md, const LossBatch &batch) {
  T acc{};
  for (const auto *ex : batch.examples) {
    ExampleTrace<T> tr;
    acc += example_loss_forward(p, md, *ex, &tr);
  }
  return acc / T(static_cast<double>(batch.size()));
}

// Loss and gradient. Per-example gradients land in their own slots and are
// folded in example order, so the result is independent of worker count.
template <typename T>
T batch_loss_grad_t(const T *p, const ModelDims &md, const LossBatch &batch,
                    T *grad, int workers = 1) {
  const size_t n = batch.size();
  std::vector<T> losses(n, T(0.0));
  std::vector<std::vector<T>> slots(n);
  parallel_for(n, workers, [&](size_t i) {
    slots[i].assign(md.total, T(0.0));
    ExampleTrace<T> tr;
    losses[i] = example_loss_forward(p, md, *batch.examples[i], &tr);
    example_loss_backward(p, md, tr, T(1.0), slots[i].data());
  });
  T inv = T(1.0 / static_cast<double>(n));
  T loss{};
  for (size_t i = 0; i < n; ++i) {
    loss += losses[i];
    for (size_t j = 0; j < md.total; ++j) grad[j] += inv * slots[i][j];
  }
  return loss * inv;
}

inline ModelDims dims_for(const ParamVector &params, const ModelConfig &cfg) {
  cfg.validate();
  ParamLayout expect = make_layout(cfg);
  if (!(params.layout == expect))
    throw ConfigError("parameter layout does not match model config");
  if (params.values.size() != expect.total)
    throw ConfigError("parameter vector length does not match layout");
  return make_dims(cfg, expect);
}

}  // namespace detail

// Mean separation loss of a batch under the given parameters.
inline double batch_loss(const ParamVector &params, const LossBatch &batch,
                         const ModelConfig &cfg) {
  batch.validate();
  detail::ModelDims md = detail::dims_for(params, cfg);
  double loss = detail::batch_loss_t(params.values.data(), md, batch);
  if (!std::isfinite(loss)) throw NumericalError("batch_loss: non-finite loss");
  return loss;
}

// Exact gradient of batch_loss, in the same layout as the parameters.
inline std::pair<double, ParamVector> loss_and_grad(const ParamVector &params,
                                                    const LossBatch &batch,
                                                    const ModelConfig &cfg,
                                                    int workers = 1) {
  batch.validate();
  detail::ModelDims md = detail::dims_for(params, cfg);
  check_finite_or_throw(params.values, params.layout, "loss_and_grad");
  ParamVector grad;
  grad.layout = params.layout;
  grad.values.assign(md.total, 0.0);
  double loss = detail::batch_loss_grad_t(params.values.data(), md, batch,
                                          grad.values.data(), workers);
  if (!std::isfinite(loss))
    throw NumericalError("loss_and_grad: non-finite loss");
  check_finite_or_throw(grad.values, grad.layout, "loss_and_grad");
  return {loss, std::move(grad)};
}

// Plain gradient descent on the support loss: steps repetitions of
// params <- params - alpha * grad.
inline ParamVector adapted_params(const ParamVector &params,
                                  const LossBatch &support, double alpha,
                                  int steps, const ModelConfig &cfg,
                                  int workers = 1) {
  if (alpha < 0.0) throw InvalidInput("adapted_params: alpha must be >= 0");
  if (steps < 1) throw InvalidInput("adapted_params: steps must be >= 1");
  if (alpha == 0.0) return params;
  ParamVector cur = params;
  for (int s = 0; s < steps; ++s) {
    auto [loss, grad] = loss_and_grad(cur, support, cfg, workers);
    (void)loss;
    for (size_t i = 0; i < cur.values.size(); ++i)
      cur.values[i] -= alpha * grad.values[i];
  }
  return cur;
}

// Exact meta-gradient of the composed map
//   theta -> query_loss(theta - alpha * support_grad(theta)),
// i.e. (I - alpha * H_support(theta)) * query_grad(adapted). The
// Hessian-vector product comes from re-running the gradient computation in
// dual arithmetic with the query gradient as the tangent seed. Only one
// inner step is supported on this exact path.
inline std::pair<double, ParamVector> meta_grad_maml(
    const ParamVector &params, const LossBatch &support, const LossBatch &query,
    double alpha, int steps, const ModelConfig &cfg, int workers = 1) {
  if (alpha < 0.0) throw InvalidInput("meta_grad_maml: alpha must be >= 0");
  if (steps != 1)
    throw Unsupported(
        "meta_grad_maml: the exact second-order path supports steps == 1 only");
  if (alpha == 0.0) {
    auto [q_loss, g_que] = loss_and_grad(params, query, cfg, workers);
    return {q_loss, std::move(g_que)};
  }
  support.validate();
  query.validate();
  detail::ModelDims md = detail::dims_for(params, cfg);
  check_finite_or_throw(params.values, params.layout, "meta_grad_maml");

  auto [s_loss, g_sup] = loss_and_grad(params, support, cfg, workers);
  (void)s_loss;
  ParamVector adapted = params;
  for (size_t i = 0; i < adapted.values.size(); ++i)
    adapted.values[i] -= alpha * g_sup.values[i];
  auto [q_loss, g_que] = loss_and_grad(adapted, query, cfg, workers);

  // H_support(theta) * g_que via forward-over-reverse.
  std::vector<Dual> dual_params(md.total);
  for (size_t i = 0; i < md.total; ++i)
    dual_params[i] = Dual(params.values[i], g_que.values[i]);
  std::vector<Dual> dual_grad(md.total, Dual(0.0));
  detail::batch_loss_grad_t(dual_params.data(), md, support, dual_grad.data());

  ParamVector meta;
  meta.layout = params.layout;
  meta.values.resize(md.total);
  for (size_t i = 0; i < md.total; ++i)
    meta.values[i] = g_que.values[i] - alpha * dual_grad[i].t;
  check_finite_or_throw(meta.values, meta.layout, "meta_grad_maml");
  return {q_loss, std::move(meta)};
}

// First-order approximation: the query gradient evaluated at the adapted
// parameters, with the adaptation Jacobian replaced by the identity.
inline std::pair<double, ParamVector> meta_grad_fomaml(
    const ParamVector &params, const LossBatch &support, const LossBatch &query,
    double alpha, int steps, const ModelConfig &cfg, int workers = 1) {
  if (alpha < 0.0) throw InvalidInput("meta_grad_fomaml: alpha must be >= 0");
  if (steps < 1) throw InvalidInput("meta_grad_fomaml: steps must be >= 1");
  if (alpha == 0.0) return meta_grad_maml(params, support, query, 0.0, 1, cfg,
                                          workers);
  ParamVector adapted = adapted_params(params, support, alpha, steps, cfg,
                                       workers);
  return loss_and_grad(adapted, query, cfg, workers);
}

// Central-difference gradient of an arbitrary scalar map; the verification
// oracle for everything above.
inline ParamVector finite_diff_grad(
    const std::function<double(const ParamVector &)> &scalar_map,
    const ParamVector &params, double h) {
  if (h <= 0.0) throw InvalidInput("finite_diff_grad: h must be positive");
  ParamVector grad;
  grad.layout = params.layout;
  grad.values.assign(params.values.size(), 0.0);
  ParamVector probe = params;
  for (size_t i = 0; i < params.values.size(); ++i) {
    double base = params.values[i];
    probe.values[i] = base + h;
    double up = scalar_map(probe);
    probe.values[i] = base - h;
    double down = scalar_map(probe);
    probe.values[i] = base;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericalError("finite_diff_grad: non-finite evaluation");
    grad.values[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace metasep

#endif  // METASEP_DIFFCORE_HPP_
