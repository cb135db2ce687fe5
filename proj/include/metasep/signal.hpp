// metasep/signal.hpp

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

#ifndef METASEP_SIGNAL_HPP_
#define METASEP_SIGNAL_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "metasep/dual.hpp"
#include "metasep/errors.hpp"

namespace metasep {

// A mono waveform: finite real amplitudes (nominally in [-1, 1]) at a fixed
// sample rate.
struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 8000;

  size_t size() const { return samples.size(); }
};

// C scaled sources, their sample-wise sum, and the bookkeeping needed to
// reproduce the mixture: which utterances went in and at which level offsets.
struct MixtureExample {
  std::vector<Waveform> sources;   // post-scaling
  Waveform mixture;                // sum of sources
  std::vector<std::string> source_utt_ids;
  std::vector<double> snr_offsets_db;

  int num_sources() const { return static_cast<int>(sources.size()); }
};

inline void check_waveform(const Waveform &w, const char *what) {
  if (w.samples.empty())
    throw InvalidInput(std::string(what) + ": empty waveform");
  if (w.sample_rate_hz <= 0)
    throw InvalidInput(std::string(what) + ": non-positive sample rate");
  for (double s : w.samples) {
    if (!std::isfinite(s))
      throw InvalidInput(std::string(what) + ": non-finite amplitude");
  }
}

inline void check_same_shape(const Waveform &a, const Waveform &b,
                             const char *what) {
  if (a.samples.size() != b.samples.size())
    throw InvalidInput(std::string(what) + ": length mismatch");
  if (a.sample_rate_hz != b.sample_rate_hz)
    throw InvalidInput(std::string(what) + ": sample rate mismatch");
}

// Mean squared amplitude.
inline double mean_power(const Waveform &w) {
  double acc = 0.0;
  for (double s : w.samples) acc += s * s;
  return acc / static_cast<double>(w.samples.size());
}

// Scales every source after the first so its power sits at the requested dB
// offset relative to source 0 (offset < 0 means quieter), then sums.
// offsets[0] must be 0: the first source is the power reference.
inline MixtureExample mix_at_snr(const std::vector<Waveform> &raw_sources,
                                 const std::vector<double> &snr_offsets_db,
                                 const std::vector<std::string> &utt_ids) {
  size_t c_count = raw_sources.size();
  if (c_count < 2) throw InvalidInput("mix_at_snr: need at least 2 sources");
  if (snr_offsets_db.size() != c_count || utt_ids.size() != c_count)
    throw InvalidInput("mix_at_snr: offsets/ids size mismatch");
  if (snr_offsets_db[0] != 0.0)
    throw InvalidInput("mix_at_snr: offsets[0] must be 0 (reference source)");
  for (size_t c = 0; c < c_count; ++c) {
    check_waveform(raw_sources[c], "mix_at_snr");
    if (c > 0) check_same_shape(raw_sources[0], raw_sources[c], "mix_at_snr");
    for (size_t k = 0; k < c; ++k) {
      if (utt_ids[k] == utt_ids[c])
        throw InvalidInput("mix_at_snr: duplicate source_utt_id '" +
                           utt_ids[c] + "'");
    }
  }

  double p_ref = mean_power(raw_sources[0]);
  if (p_ref <= 0.0) throw DegenerateSource("mix_at_snr: source 0 has zero power");

  MixtureExample ex;
  ex.sources.resize(c_count);
  ex.source_utt_ids = utt_ids;
  ex.snr_offsets_db = snr_offsets_db;
  ex.sources[0] = raw_sources[0];
  for (size_t c = 1; c < c_count; ++c) {
    double p_c = mean_power(raw_sources[c]);
    if (p_c <= 0.0)
      throw DegenerateSource("mix_at_snr: source " + std::to_string(c) +
                             " has zero power");
    // Target power: P_c' = P_ref * 10^(offset/10).
    double gain = std::sqrt(p_ref * std::pow(10.0, snr_offsets_db[c] / 10.0) /
                            p_c);
    ex.sources[c].sample_rate_hz = raw_sources[c].sample_rate_hz;
    ex.sources[c].samples.resize(raw_sources[c].samples.size());
    for (size_t t = 0; t < raw_sources[c].samples.size(); ++t)
      ex.sources[c].samples[t] = gain * raw_sources[c].samples[t];
  }

  ex.mixture.sample_rate_hz = raw_sources[0].sample_rate_hz;
  ex.mixture.samples.assign(raw_sources[0].samples.size(), 0.0);
  for (size_t c = 0; c < c_count; ++c)
    for (size_t t = 0; t < ex.mixture.samples.size(); ++t)
      ex.mixture.samples[t] += ex.sources[c].samples[t];
  return ex;
}

namespace detail {

// Zero-meaned reference and its energy, cached so pairwise uPIT scans don't
// recompute them per pair.
struct RefStats {
  std::vector<double> zm;   // reference minus its mean
  double energy = 0.0;      // sum of squares of zm
  bool constant = false;    // all raw samples equal
};

inline RefStats make_ref_stats(const std::vector<double> &ref) {
  RefStats rs;
  rs.constant = std::all_of(ref.begin(), ref.end(),
                            [&](double v) { return v == ref[0]; });
  double mean = std::accumulate(ref.begin(), ref.end(), 0.0) /
                static_cast<double>(ref.size());
  rs.zm.resize(ref.size());
  for (size_t i = 0; i < ref.size(); ++i) rs.zm[i] = ref[i] - mean;
  for (double v : rs.zm) rs.energy += v * v;
  return rs;
}

// Scalars of one Si-SNR evaluation, kept for the backward pass.
template <typename T>
struct SiSnrEval {
  T est_mean{};     // mean of the estimate
  T align{};        // <zero-mean estimate, zero-mean reference>
  T num{};          // energy of the projection onto the reference
  T est_energy{};   // energy of the zero-mean estimate
  T den{};          // residual energy plus the relative floor
  bool num_floored = false;
  T value{};        // Si-SNR in dB
};

constexpr double kSiSnrRelFloor = 1e-8;
constexpr double kLogGuard = 1e-300;

// Si-SNR of `est` against a prepared reference. Both log arguments carry a
// relative floor: the residual is floored against the projection's mean
// square (finite value for a perfect estimate) and the projection against
// the estimate's mean square (finite value and bounded gradients for a
// near-orthogonal estimate). Both floors scale with the estimate, so the
// value is exactly invariant under positive rescaling.
template <typename T>
SiSnrEval<T> si_snr_eval(const T *est, size_t n, const RefStats &ref) {
  using std::log;  // keep the double overload in play next to log(Dual)
  SiSnrEval<T> ev;
  T sum{};
  for (size_t i = 0; i < n; ++i) sum += est[i];
  ev.est_mean = sum / T(static_cast<double>(n));

  T align{};
  T est_energy{};
  for (size_t i = 0; i < n; ++i) {
    T e = est[i] - ev.est_mean;
    align += e * T(ref.zm[i]);
    est_energy += e * e;
  }
  ev.align = align;
  ev.est_energy = est_energy;
  ev.num = align * align / T(ref.energy);

  T coef = align / T(ref.energy);
  T resid{};
  for (size_t i = 0; i < n; ++i) {
    T d = est[i] - ev.est_mean - coef * T(ref.zm[i]);
    resid += d * d;
  }
  const double rel = kSiSnrRelFloor / static_cast<double>(n);
  ev.den = resid + T(rel) * ev.num;

  T num_floor = T(rel) * ev.est_energy;
  ev.num_floored = value_of(ev.num) < value_of(num_floor);
  T num_g = ev.num_floored ? num_floor : ev.num;
  if (value_of(num_g) < kLogGuard) num_g = T(kLogGuard);
  T den_g = value_of(ev.den) > kLogGuard ? ev.den : T(kLogGuard);
  ev.value = T(10.0 / M_LN10) * (log(num_g) - log(den_g));
  return ev;
}

// d(si_snr)/d(est), accumulated into dest with weight dvalue.
template <typename T>
void si_snr_backward(const T *est, size_t n, const RefStats &ref,
                     const SiSnrEval<T> &ev, T dvalue, T *dest) {
  const double inv_n = 1.0 / static_cast<double>(n);
  const double rel = kSiSnrRelFloor * inv_n;
  T k = dvalue * T(10.0 / M_LN10);
  T dnum{};       // d / d(projection energy)
  T dest_energy{};  // d / d(estimate energy), via the floored numerator
  T dden{};
  if (ev.num_floored) {
    if (value_of(ev.est_energy) > kLogGuard / rel)
      dest_energy = k / ev.est_energy;
  } else {
    if (value_of(ev.num) > kLogGuard) dnum = k / ev.num;
  }
  if (value_of(ev.den) > kLogGuard) dden = T(0.0) - k / ev.den;
  // den also carries the floor term proportional to num.
  dnum += dden * T(rel);

  T coef = ev.align / T(ref.energy);
  // d(num)/d(e_i) = 2 align/R * r_i ; d(resid)/d(e_i) = 2 d_i - 2 <d,r>/R r_i;
  // d(est_energy)/d(e_i) = 2 e_i.
  T two_align_over_r = T(2.0) * coef;
  T dr_dot{};
  for (size_t i = 0; i < n; ++i) {
    T d = est[i] - ev.est_mean - coef * T(ref.zm[i]);
    dr_dot += d * T(ref.zm[i]);
  }
  T resid_ref_coef = T(2.0) * dr_dot / T(ref.energy);

  // Gradient w.r.t. the zero-mean estimate, then project out the mean shift.
  T gsum{};
  std::vector<T> g(n);
  for (size_t i = 0; i < n; ++i) {
    T e = est[i] - ev.est_mean;
    T d = e - coef * T(ref.zm[i]);
    T ge = dnum * two_align_over_r * T(ref.zm[i]) +
           dest_energy * T(2.0) * e +
           dden * (T(2.0) * d - resid_ref_coef * T(ref.zm[i]));
    g[i] = ge;
    gsum += ge;
  }
  T gmean = gsum * T(inv_n);
  for (size_t i = 0; i < n; ++i) dest[i] += g[i] - gmean;
}

}  // namespace detail

// Scale-invariant SNR of an estimate against a reference, in dB. The
// zero-mean estimate is projected onto the zero-mean reference; the value is
// the ratio of projection energy to residual energy with a relative floor,
// so a perfect estimate reports 80 + 10*log10(length) dB instead of infinity.
inline double si_snr(const Waveform &estimate, const Waveform &reference) {
  check_waveform(estimate, "si_snr");
  check_waveform(reference, "si_snr");
  check_same_shape(estimate, reference, "si_snr");
  detail::RefStats rs = detail::make_ref_stats(reference.samples);
  if (rs.constant)
    throw DegenerateReference("si_snr: reference is identically constant");
  return detail::si_snr_eval<double>(estimate.samples.data(),
                                     estimate.samples.size(), rs)
      .value;
}

// Si-SNR improvement of an estimate over the unprocessed mixture.
inline double si_snr_improvement(const Waveform &estimate,
                                 const Waveform &reference,
                                 const Waveform &mixture) {
  return si_snr(estimate, reference) - si_snr(mixture, reference);
}

// Utterance-level permutation-invariant loss: the permutation of references
// minimizing the mean negative Si-SNR, ties broken toward the
// lexicographically smallest permutation. C is capped at 6 (factorial scan).
inline std::pair<double, std::vector<int>> upit_loss(
    const std::vector<Waveform> &estimates,
    const std::vector<Waveform> &references) {
  size_t c_count = estimates.size();
  if (c_count == 0 || references.size() != c_count)
    throw InvalidInput("upit_loss: estimate/reference count mismatch");
  if (c_count > 6)
    throw Unsupported("upit_loss: more than 6 sources is not supported");

  std::vector<detail::RefStats> stats(c_count);
  for (size_t k = 0; k < c_count; ++k) {
    check_waveform(references[k], "upit_loss");
    check_same_shape(estimates[0], references[k], "upit_loss");
    stats[k] = detail::make_ref_stats(references[k].samples);
    if (stats[k].constant)
      throw DegenerateReference("upit_loss: reference " + std::to_string(k) +
                                " is identically constant");
  }
  for (size_t c = 0; c < c_count; ++c) {
    check_waveform(estimates[c], "upit_loss");
    check_same_shape(estimates[0], estimates[c], "upit_loss");
  }

  // Pairwise scores, then a lexicographic scan over permutations; strict
  // improvement keeps the first (smallest) argmin on ties.
  std::vector<std::vector<double>> pair_si(c_count,
                                           std::vector<double>(c_count));
  for (size_t c = 0; c < c_count; ++c)
    for (size_t k = 0; k < c_count; ++k)
      pair_si[c][k] = detail::si_snr_eval<double>(estimates[c].samples.data(),
                                                  estimates[c].samples.size(),
                                                  stats[k])
                          .value;

  std::vector<int> perm(c_count);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best_perm = perm;
  double best_loss = std::numeric_limits<double>::infinity();
  do {
    double loss = 0.0;
    for (size_t c = 0; c < c_count; ++c) loss -= pair_si[c][perm[c]];
    loss /= static_cast<double>(c_count);
    if (loss < best_loss) {
      best_loss = loss;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best_loss, best_perm};
}

// Adds noise scaled so the clean-mixture-to-noise power ratio equals snr_db.
// snr_db = +infinity is the documented "no-noise" sentinel.
inline Waveform add_noise(const Waveform &clean_mixture, const Waveform &noise,
                          double snr_db) {
  check_waveform(clean_mixture, "add_noise");
  if (std::isinf(snr_db) && snr_db > 0) return clean_mixture;
  check_waveform(noise, "add_noise");
  check_same_shape(clean_mixture, noise, "add_noise");
  double p_noise = mean_power(noise);
  if (p_noise <= 0.0) throw DegenerateSource("add_noise: noise has zero power");
  double p_mix = mean_power(clean_mixture);
  double gain = std::sqrt(p_mix / (p_noise * std::pow(10.0, snr_db / 10.0)));
  Waveform out = clean_mixture;
  for (size_t t = 0; t < out.samples.size(); ++t)
    out.samples[t] += gain * noise.samples[t];
  return out;
}

}  // namespace metasep

#endif  // METASEP_SIGNAL_HPP_
