// metasep/sepmodel.hpp

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

#ifndef METASEP_SEPMODEL_HPP_
#define METASEP_SEPMODEL_HPP_

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "metasep/dual.hpp"
#include "metasep/errors.hpp"
#include "metasep/params.hpp"
#include "metasep/rng.hpp"
#include "metasep/signal.hpp"

namespace metasep {

enum class MaskActivation { kSigmoid, kRelu };

inline std::string to_string(MaskActivation a) {
  return a == MaskActivation::kSigmoid ? "sigmoid" : "relu";
}

inline MaskActivation mask_activation_from_string(const std::string &s) {
  if (s == "sigmoid") return MaskActivation::kSigmoid;
  if (s == "relu") return MaskActivation::kRelu;
  throw ConfigError("unknown mask_activation '" + s + "'");
}

// A small mask-based separator: learned analysis transform over rectangular
// frames, a per-frame feed-forward mask estimator with residual hidden
// layers, element-wise masking, and a learned synthesis transform followed by
// count-normalized overlap-add. Analysis and synthesis carry no bias so
// silence maps to silence.
struct ModelConfig {
  int num_sources = 2;        // C, 2 or 3
  int window_len = 32;        // samples per frame
  int hop_len = 16;           // frame hop
  int basis_dim = 16;         // D
  int separator_hidden = 16;  // width of the mask estimator
  int separator_layers = 2;   // first layer projects D->hidden, rest residual
  MaskActivation mask_activation = MaskActivation::kSigmoid;
  uint64_t seed = 0;

  static constexpr size_t kMaxParams = 100000;

  size_t param_count() const {
    size_t c = static_cast<size_t>(num_sources);
    size_t w = static_cast<size_t>(window_len);
    size_t d = static_cast<size_t>(basis_dim);
    size_t h = static_cast<size_t>(separator_hidden);
    size_t n = d * w;                                    // analysis
    n += h * d + h;                                      // layer 0
    n += static_cast<size_t>(separator_layers - 1) * (h * h + h);
    n += c * d * h + c * d;                              // mask head
    n += w * d;                                          // synthesis
    return n;
  }

  void validate() const {
    if (num_sources < 2 || num_sources > 3)
      throw ConfigError("ModelConfig: num_sources must be 2 or 3");
    if (window_len <= 0 || hop_len <= 0)
      throw ConfigError("ModelConfig: window/hop must be positive");
    if (hop_len > window_len)
      throw ConfigError("ModelConfig: hop_len must not exceed window_len");
    if (basis_dim < num_sources)
      throw ConfigError("ModelConfig: basis_dim must be >= num_sources");
    if (separator_hidden <= 0 || separator_layers <= 0)
      throw ConfigError("ModelConfig: separator sizes must be positive");
    if (param_count() > kMaxParams)
      throw ConfigError("ModelConfig: parameter count " +
                        std::to_string(param_count()) + " exceeds budget " +
                        std::to_string(kMaxParams));
  }

  bool operator==(const ModelConfig &o) const {
    return num_sources == o.num_sources && window_len == o.window_len &&
           hop_len == o.hop_len && basis_dim == o.basis_dim &&
           separator_hidden == o.separator_hidden &&
           separator_layers == o.separator_layers &&
           mask_activation == o.mask_activation && seed == o.seed;
  }
};

inline ParamLayout make_layout(const ModelConfig &cfg) {
  cfg.validate();
  ParamLayout layout;
  size_t off = 0;
  auto add = [&](const std::string &name, std::vector<int> shape) {
    size_t size = 1;
    for (int d : shape) size *= static_cast<size_t>(d);
    layout.blocks.push_back({name, off, size, std::move(shape)});
    off += size;
  };
  add("analysis.weight", {cfg.basis_dim, cfg.window_len});
  add("separator.layer0.weight", {cfg.separator_hidden, cfg.basis_dim});
  add("separator.layer0.bias", {cfg.separator_hidden});
  for (int l = 1; l < cfg.separator_layers; ++l) {
    add("separator.layer" + std::to_string(l) + ".weight",
        {cfg.separator_hidden, cfg.separator_hidden});
    add("separator.layer" + std::to_string(l) + ".bias",
        {cfg.separator_hidden});
  }
  add("separator.out.weight",
      {cfg.num_sources * cfg.basis_dim, cfg.separator_hidden});
  add("separator.out.bias", {cfg.num_sources * cfg.basis_dim});
  add("synthesis.weight", {cfg.window_len, cfg.basis_dim});
  layout.total = off;
  layout.validate();
  return layout;
}

namespace detail {

// Resolved sizes plus flat offsets of every block, so the hot loops index
// straight into the parameter vector.
struct ModelDims {
  int c = 0, w = 0, h = 0, d = 0, hid = 0, layers = 0;
  MaskActivation act = MaskActivation::kSigmoid;
  size_t analysis = 0;
  std::vector<size_t> layer_w, layer_b;
  size_t out_w = 0, out_b = 0;
  size_t synthesis = 0;
  size_t total = 0;
};

inline ModelDims make_dims(const ModelConfig &cfg, const ParamLayout &layout) {
  ModelDims md;
  md.c = cfg.num_sources;
  md.w = cfg.window_len;
  md.h = cfg.hop_len;
  md.d = cfg.basis_dim;
  md.hid = cfg.separator_hidden;
  md.layers = cfg.separator_layers;
  md.act = cfg.mask_activation;
  md.analysis = layout.find("analysis.weight").offset;
  for (int l = 0; l < cfg.separator_layers; ++l) {
    std::string base = "separator.layer" + std::to_string(l);
    md.layer_w.push_back(layout.find(base + ".weight").offset);
    md.layer_b.push_back(layout.find(base + ".bias").offset);
  }
  md.out_w = layout.find("separator.out.weight").offset;
  md.out_b = layout.find("separator.out.bias").offset;
  md.synthesis = layout.find("synthesis.weight").offset;
  md.total = layout.total;
  return md;
}

inline int num_frames(size_t length, int window, int hop) {
  if (length < static_cast<size_t>(window))
    throw InvalidInput("separate: input shorter than window_len");
  size_t tail = length - static_cast<size_t>(window);
  return 1 + static_cast<int>((tail + static_cast<size_t>(hop) - 1) /
                              static_cast<size_t>(hop));
}

template <typename T>
T sigmoid(T z) {
  using std::exp;
  return T(1.0) / (T(1.0) + exp(T(0.0) - z));
}

// Everything the backward pass needs from one forward evaluation.
template <typename T>
struct ModelTrace {
  int frames = 0;
  size_t length = 0;
  std::vector<double> xpad;              // zero-padded input
  std::vector<int> cover;                // overlap count per output sample
  std::vector<T> feats;                  // frames x D
  std::vector<std::vector<T>> act;       // per layer: frames x hidden (tanh)
  std::vector<std::vector<T>> hid;       // per layer: frames x hidden
  std::vector<T> premask;                // frames x (C*D)
  std::vector<T> mask;                   // frames x (C*D)
  std::vector<T> masked;                 // C x frames x D
  std::vector<T> out_frames;             // C x frames x W
  std::vector<std::vector<T>> estimates; // C x length
};

template <typename T>
void model_forward(const T *p, const ModelDims &md,
                   const std::vector<double> &x, ModelTrace<T> *tr) {
  using std::tanh;
  const int f_count = num_frames(x.size(), md.w, md.h);
  const int cd = md.c * md.d;
  tr->frames = f_count;
  tr->length = x.size();

  tr->xpad.assign(static_cast<size_t>(f_count - 1) * md.h + md.w, 0.0);
  std::copy(x.begin(), x.end(), tr->xpad.begin());
  tr->cover.assign(x.size(), 0);
  for (int f = 0; f < f_count; ++f)
    for (int w = 0; w < md.w; ++w) {
      size_t t = static_cast<size_t>(f) * md.h + w;
      if (t < x.size()) tr->cover[t]++;
    }

  // Analysis: feats = A * frame.
  tr->feats.assign(static_cast<size_t>(f_count) * md.d, T(0.0));
  const T *a = p + md.analysis;
  for (int f = 0; f < f_count; ++f) {
    const double *frame = tr->xpad.data() + static_cast<size_t>(f) * md.h;
    T *feat = tr->feats.data() + static_cast<size_t>(f) * md.d;
    for (int d = 0; d < md.d; ++d) {
      T acc{};
      const T *row = a + static_cast<size_t>(d) * md.w;
      for (int w = 0; w < md.w; ++w) acc += row[w] * T(frame[w]);
      feat[d] = acc;
    }
  }

  // Mask estimator: layer 0 projects, later layers are residual.
  tr->act.assign(md.layers, {});
  tr->hid.assign(md.layers, {});
  for (int l = 0; l < md.layers; ++l) {
    const int in_dim = l == 0 ? md.d : md.hid;
    const T *in = l == 0 ? tr->feats.data() : tr->hid[l - 1].data();
    const T *wgt = p + md.layer_w[l];
    const T *bias = p + md.layer_b[l];
    tr->act[l].assign(static_cast<size_t>(f_count) * md.hid, T(0.0));
    tr->hid[l].assign(static_cast<size_t>(f_count) * md.hid, T(0.0));
    for (int f = 0; f < f_count; ++f) {
      const T *row_in = in + static_cast<size_t>(f) * in_dim;
      T *row_act = tr->act[l].data() + static_cast<size_t>(f) * md.hid;
      T *row_hid = tr->hid[l].data() + static_cast<size_t>(f) * md.hid;
      for (int i = 0; i < md.hid; ++i) {
        T acc = bias[i];
        const T *wrow = wgt + static_cast<size_t>(i) * in_dim;
        for (int j = 0; j < in_dim; ++j) acc += wrow[j] * row_in[j];
        row_act[i] = tanh(acc);
        row_hid[i] = l == 0 ? row_act[i]
                            : tr->hid[l - 1][static_cast<size_t>(f) * md.hid +
                                             i] +
                                  row_act[i];
      }
    }
  }

  // Mask head.
  const T *ow = p + md.out_w;
  const T *ob = p + md.out_b;
  tr->premask.assign(static_cast<size_t>(f_count) * cd, T(0.0));
  tr->mask.assign(static_cast<size_t>(f_count) * cd, T(0.0));
  const std::vector<T> &top = tr->hid[md.layers - 1];
  for (int f = 0; f < f_count; ++f) {
    const T *row_hid = top.data() + static_cast<size_t>(f) * md.hid;
    T *row_pre = tr->premask.data() + static_cast<size_t>(f) * cd;
    T *row_mask = tr->mask.data() + static_cast<size_t>(f) * cd;
    for (int k = 0; k < cd; ++k) {
      T acc = ob[k];
      const T *wrow = ow + static_cast<size_t>(k) * md.hid;
      for (int j = 0; j < md.hid; ++j) acc += wrow[j] * row_hid[j];
      row_pre[k] = acc;
      row_mask[k] = md.act == MaskActivation::kSigmoid
                        ? sigmoid(acc)
                        : (value_of(acc) > 0.0 ? acc : T(0.0));
    }
  }

  // Mask, synthesize, overlap-add.
  tr->masked.assign(static_cast<size_t>(md.c) * f_count * md.d, T(0.0));
  tr->out_frames.assign(static_cast<size_t>(md.c) * f_count * md.w, T(0.0));
  tr->estimates.assign(md.c, std::vector<T>(x.size(), T(0.0)));
  const T *s = p + md.synthesis;
  for (int c = 0; c < md.c; ++c) {
    for (int f = 0; f < f_count; ++f) {
      const T *feat = tr->feats.data() + static_cast<size_t>(f) * md.d;
      const T *row_mask =
          tr->mask.data() + static_cast<size_t>(f) * cd + c * md.d;
      T *row_masked = tr->masked.data() +
                      (static_cast<size_t>(c) * f_count + f) * md.d;
      for (int d = 0; d < md.d; ++d) row_masked[d] = row_mask[d] * feat[d];
      T *row_out = tr->out_frames.data() +
                   (static_cast<size_t>(c) * f_count + f) * md.w;
      for (int w = 0; w < md.w; ++w) {
        T acc{};
        const T *srow = s + static_cast<size_t>(w) * md.d;
        for (int d = 0; d < md.d; ++d) acc += srow[d] * row_masked[d];
        row_out[w] = acc;
      }
      for (int w = 0; w < md.w; ++w) {
        size_t t = static_cast<size_t>(f) * md.h + w;
        if (t < x.size()) tr->estimates[c][t] += row_out[w];
      }
    }
    for (size_t t = 0; t < x.size(); ++t)
      tr->estimates[c][t] /= T(static_cast<double>(tr->cover[t]));
  }
}

// Accumulates d(loss)/d(params) into grad given d(loss)/d(estimates).
template <typename T>
void model_backward(const T *p, const ModelDims &md, const ModelTrace<T> &tr,
                    const std::vector<std::vector<T>> &dest, T *grad) {
  const int f_count = tr.frames;
  const int cd = md.c * md.d;
  const T *s = p + md.synthesis;
  const T *ow = p + md.out_w;

  std::vector<T> dfeats(static_cast<size_t>(f_count) * md.d, T(0.0));
  std::vector<T> dpremask(static_cast<size_t>(f_count) * cd, T(0.0));

  // Through overlap-add, synthesis, and masking.
  for (int c = 0; c < md.c; ++c) {
    for (int f = 0; f < f_count; ++f) {
      const T *row_masked = tr.masked.data() +
                            (static_cast<size_t>(c) * f_count + f) * md.d;
      const T *feat = tr.feats.data() + static_cast<size_t>(f) * md.d;
      const T *row_mask =
          tr.mask.data() + static_cast<size_t>(f) * cd + c * md.d;
      std::vector<T> dmasked(md.d, T(0.0));
      for (int w = 0; w < md.w; ++w) {
        size_t t = static_cast<size_t>(f) * md.h + w;
        if (t >= tr.length) continue;
        T dout = dest[c][t] / T(static_cast<double>(tr.cover[t]));
        const T *srow = s + static_cast<size_t>(w) * md.d;
        T *dsrow = grad + md.synthesis + static_cast<size_t>(w) * md.d;
        for (int d = 0; d < md.d; ++d) {
          dsrow[d] += dout * row_masked[d];
          dmasked[d] += srow[d] * dout;
        }
      }
      T *row_dpre = dpremask.data() + static_cast<size_t>(f) * cd + c * md.d;
      T *row_dfeat = dfeats.data() + static_cast<size_t>(f) * md.d;
      const T *row_pre =
          tr.premask.data() + static_cast<size_t>(f) * cd + c * md.d;
      for (int d = 0; d < md.d; ++d) {
        T dmask = dmasked[d] * feat[d];
        row_dfeat[d] += dmasked[d] * row_mask[d];
        if (md.act == MaskActivation::kSigmoid) {
          row_dpre[d] += dmask * row_mask[d] * (T(1.0) - row_mask[d]);
        } else {
          if (value_of(row_pre[d]) > 0.0) row_dpre[d] += dmask;
        }
      }
    }
  }

  // Mask head.
  std::vector<T> dhid(static_cast<size_t>(f_count) * md.hid, T(0.0));
  const std::vector<T> &top = tr.hid[md.layers - 1];
  for (int f = 0; f < f_count; ++f) {
    const T *row_hid = top.data() + static_cast<size_t>(f) * md.hid;
    const T *row_dpre = dpremask.data() + static_cast<size_t>(f) * cd;
    T *row_dhid = dhid.data() + static_cast<size_t>(f) * md.hid;
    for (int k = 0; k < cd; ++k) {
      T dz = row_dpre[k];
      T *dwrow = grad + md.out_w + static_cast<size_t>(k) * md.hid;
      const T *wrow = ow + static_cast<size_t>(k) * md.hid;
      grad[md.out_b + k] += dz;
      for (int j = 0; j < md.hid; ++j) {
        dwrow[j] += dz * row_hid[j];
        row_dhid[j] += wrow[j] * dz;
      }
    }
  }

  // Residual stack, in reverse.
  for (int l = md.layers - 1; l >= 0; --l) {
    const int in_dim = l == 0 ? md.d : md.hid;
    const T *in = l == 0 ? tr.feats.data() : tr.hid[l - 1].data();
    const T *wgt = p + md.layer_w[l];
    std::vector<T> din(static_cast<size_t>(f_count) * in_dim, T(0.0));
    for (int f = 0; f < f_count; ++f) {
      const T *row_act = tr.act[l].data() + static_cast<size_t>(f) * md.hid;
      const T *row_in = in + static_cast<size_t>(f) * in_dim;
      const T *row_dhid = dhid.data() + static_cast<size_t>(f) * md.hid;
      T *row_din = din.data() + static_cast<size_t>(f) * in_dim;
      for (int i = 0; i < md.hid; ++i) {
        T dz = row_dhid[i] * (T(1.0) - row_act[i] * row_act[i]);
        grad[md.layer_b[l] + i] += dz;
        T *dwrow = grad + md.layer_w[l] + static_cast<size_t>(i) * in_dim;
        const T *wrow = wgt + static_cast<size_t>(i) * in_dim;
        for (int j = 0; j < in_dim; ++j) {
          dwrow[j] += dz * row_in[j];
          row_din[j] += wrow[j] * dz;
        }
      }
    }
    if (l == 0) {
      for (size_t i = 0; i < din.size(); ++i) dfeats[i] += din[i];
    } else {
      // Residual shortcut: the incoming gradient joins the branch gradient.
      for (size_t i = 0; i < din.size(); ++i) dhid[i] = dhid[i] + din[i];
    }
  }

  // Analysis.
  for (int f = 0; f < f_count; ++f) {
    const double *frame = tr.xpad.data() + static_cast<size_t>(f) * md.h;
    const T *row_dfeat = dfeats.data() + static_cast<size_t>(f) * md.d;
    for (int d = 0; d < md.d; ++d) {
      T *darow = grad + md.analysis + static_cast<size_t>(d) * md.w;
      T df = row_dfeat[d];
      for (int w = 0; w < md.w; ++w) darow[w] += df * T(frame[w]);
    }
  }
}

}  // namespace detail

// Model outputs for one mixture: C estimates plus the masks (C x D x frames).
struct SeparatedOutput {
  std::vector<Waveform> estimates;
  std::vector<double> masks;
  int num_sources = 0;
  int basis_dim = 0;
  int frames = 0;

  double mask(int c, int d, int f) const {
    return masks[(static_cast<size_t>(c) * basis_dim + d) * frames + f];
  }
};

// Deterministic seeded initialization. Separator weights are uniform with
// variance scaled by fan-in and zero biases. The analysis rows start
// orthonormal with the synthesis as their transpose, so the initial
// estimates are subspace projections of the mixture rather than a random
// filtering; that keeps the loss surface in its benign region (a random
// filter output is nearly orthogonal to the sources, where Si-SNR gradients
// blow up as the alignment shrinks).
inline ParamVector init_params(const ModelConfig &cfg) {
  cfg.validate();
  ParamVector pv;
  pv.layout = make_layout(cfg);
  pv.values.assign(pv.layout.total, 0.0);
  Rng rng(substream_seed(cfg.seed, "model-init"));
  for (const auto &block : pv.layout.blocks) {
    if (block.name.find(".bias") != std::string::npos) continue;
    if (block.name == "analysis.weight" || block.name == "synthesis.weight")
      continue;
    int fan_in = block.shape.back();
    double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (size_t i = 0; i < block.size; ++i)
      pv.values[block.offset + i] = rng.uniform(-bound, bound);
  }

  const int d = cfg.basis_dim, w = cfg.window_len;
  const ParamBlock &analysis = pv.layout.find("analysis.weight");
  const ParamBlock &synthesis = pv.layout.find("synthesis.weight");
  std::vector<double> rows(static_cast<size_t>(d) * w);
  for (double &v : rows) v = rng.normal();
  if (d <= w) {
    // Gram-Schmidt with one re-orthogonalization pass.
    for (int i = 0; i < d; ++i) {
      double *ri = rows.data() + static_cast<size_t>(i) * w;
      for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < i; ++j) {
          const double *rj = rows.data() + static_cast<size_t>(j) * w;
          double dot = 0.0;
          for (int k = 0; k < w; ++k) dot += ri[k] * rj[k];
          for (int k = 0; k < w; ++k) ri[k] -= dot * rj[k];
        }
      }
      double nrm = 0.0;
      for (int k = 0; k < w; ++k) nrm += ri[k] * ri[k];
      nrm = std::sqrt(nrm);
      for (int k = 0; k < w; ++k) ri[k] /= nrm;
    }
  } else {
    // More basis rows than window samples: orthonormality is impossible,
    // fall back to fan-in scaling.
    double bound = std::sqrt(1.0 / static_cast<double>(w));
    for (double &v : rows) v = rng.uniform(-bound, bound);
  }
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < w; ++k) {
      double v = rows[static_cast<size_t>(i) * w + k];
      pv.values[analysis.offset + static_cast<size_t>(i) * w + k] = v;
      pv.values[synthesis.offset + static_cast<size_t>(k) * d + i] = v;
    }
  return pv;
}

inline SeparatedOutput separate(const ParamVector &params,
                                const Waveform &mixture,
                                const ModelConfig &cfg) {
  cfg.validate();
  check_waveform(mixture, "separate");
  ParamLayout expect = make_layout(cfg);
  if (!(params.layout == expect))
    throw ConfigError("separate: parameter layout does not match config");
  detail::ModelDims md = detail::make_dims(cfg, expect);
  detail::ModelTrace<double> tr;
  detail::model_forward(params.values.data(), md, mixture.samples, &tr);

  SeparatedOutput out;
  out.num_sources = md.c;
  out.basis_dim = md.d;
  out.frames = tr.frames;
  out.estimates.resize(md.c);
  for (int c = 0; c < md.c; ++c) {
    out.estimates[c].sample_rate_hz = mixture.sample_rate_hz;
    out.estimates[c].samples = tr.estimates[c];
  }
  out.masks.assign(static_cast<size_t>(md.c) * md.d * tr.frames, 0.0);
  for (int f = 0; f < tr.frames; ++f)
    for (int c = 0; c < md.c; ++c)
      for (int d = 0; d < md.d; ++d)
        out.masks[(static_cast<size_t>(c) * md.d + d) * tr.frames + f] =
            tr.mask[static_cast<size_t>(f) * md.c * md.d + c * md.d + d];
  return out;
}

}  // namespace metasep

#endif  // METASEP_SEPMODEL_HPP_
