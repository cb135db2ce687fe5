// tests/test_eval.cpp

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

#include "metasep/eval.hpp"
#include "test_util.hpp"

using namespace metasep;
using namespace metasep_test;

namespace {

// Band-split oracle: the analysis is an orthonormal DCT-II, the mask head is
// saturated so source 0 takes the low half of the spectrum and source 1 the
// high half, and the synthesis inverts the DCT.
std::pair<ModelConfig, ParamVector> band_split_model() {
  ModelConfig cfg;
  cfg.num_sources = 2;
  cfg.window_len = 16;
  cfg.hop_len = 16;
  cfg.basis_dim = 16;
  cfg.separator_hidden = 4;
  cfg.separator_layers = 1;
  cfg.seed = 1;
  ParamVector p = init_params(cfg);
  std::fill(p.values.begin(), p.values.end(), 0.0);
  const int w_len = cfg.window_len;
  const ParamBlock &a = p.layout.find("analysis.weight");
  const ParamBlock &s = p.layout.find("synthesis.weight");
  for (int d = 0; d < w_len; ++d)
    for (int w = 0; w < w_len; ++w) {
      double v = std::sqrt(2.0 / w_len) *
                 std::cos(M_PI * (2.0 * w + 1.0) * d / (2.0 * w_len));
      if (d == 0) v *= std::sqrt(0.5);
      p.values[a.offset + static_cast<size_t>(d) * w_len + w] = v;
      p.values[s.offset + static_cast<size_t>(w) * w_len + d] = v;
    }
  const ParamBlock &ob = p.layout.find("separator.out.bias");
  for (int d = 0; d < w_len; ++d) {
    p.values[ob.offset + d] = d < w_len / 2 ? 30.0 : -30.0;          // source 0
    p.values[ob.offset + w_len + d] = d < w_len / 2 ? -30.0 : 30.0;  // source 1
  }
  return {cfg, p};
}

// Piecewise-periodic DCT-atom signal: each window-length frame repeats the
// same combination of DCT basis rows, so its spectrum sits in chosen bins.
Waveform atom_signal(const std::vector<int> &bins, size_t n, int w_len,
                     Rng *rng) {
  Waveform w;
  w.sample_rate_hz = 8000;
  w.samples.assign(n, 0.0);
  for (int k : bins) {
    double amp = rng->uniform(0.3, 0.6);
    for (size_t t = 0; t < n; ++t) {
      int tt = static_cast<int>(t % w_len);
      w.samples[t] +=
          amp * std::cos(M_PI * (2.0 * tt + 1.0) * k / (2.0 * w_len));
    }
  }
  return w;
}

std::vector<MetaTask> band_tasks(int n_tasks, const std::string &domain,
                                 uint64_t seed) {
  Rng rng(seed);
  std::vector<MetaTask> tasks;
  for (int i = 0; i < n_tasks; ++i) {
    MetaTask task;
    task.task_id = domain + "_t" + std::to_string(i);
    task.domain_label = domain;
    task.num_sources = 2;
    task.speaker_ids = {domain + "_lo", domain + "_hi"};
    auto make_ex = [&](const std::string &tag) {
      Waveform lo = atom_signal({2, 3}, 320, 16, &rng);
      Waveform hi = atom_signal({9, 11}, 320, 16, &rng);
      return mix_at_snr({lo, hi}, {0.0, rng.uniform(-2.0, 2.0)},
                        {tag + "_lo", tag + "_hi"});
    };
    task.support.push_back(make_ex(task.task_id + "_sup"));
    for (int q = 0; q < 4; ++q)
      task.query.push_back(make_ex(task.task_id + "_q" + std::to_string(q)));
    tasks.push_back(std::move(task));
  }
  return tasks;
}

}  // namespace

TEST_CASE("pearson: identities and the hand-computed triple") {
  std::vector<double> x = {1.0, 2.0, 3.0};
  REQUIRE_THAT(pearson(x, x), Catch::Matchers::WithinAbs(1.0, 1e-12));
  std::vector<double> neg = {-1.0, -2.0, -3.0};
  REQUIRE_THAT(pearson(x, neg), Catch::Matchers::WithinAbs(-1.0, 1e-12));
  // xs = (1,2,3), ys = (2,1,4): r = 6 / sqrt(84).
  std::vector<double> y = {2.0, 1.0, 4.0};
  REQUIRE_THAT(pearson(x, y), Catch::Matchers::WithinAbs(0.6546537, 1e-6));

  REQUIRE_THROWS_AS(pearson({1.0, 1.0, 1.0}, y), DegenerateInput);
  REQUIRE_THROWS_AS(pearson({1.0}, {2.0}), DegenerateInput);
  REQUIRE_THROWS_AS(pearson({1.0, 2.0}, {1.0, 2.0, 3.0}), InvalidInput);
}

TEST_CASE("pearson: symmetry and positive-affine invariance") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> x(8), y(8);
    for (int i = 0; i < 8; ++i) {
      x[i] = rng.uniform(-5.0, 5.0);
      y[i] = rng.uniform(-5.0, 5.0);
    }
    double r = pearson(x, y);
    REQUIRE_THAT(pearson(y, x), Catch::Matchers::WithinAbs(r, 1e-12));
    std::vector<double> ax(8);
    double scale = rng.uniform(0.1, 4.0), shift = rng.uniform(-3.0, 3.0);
    for (int i = 0; i < 8; ++i) ax[i] = scale * x[i] + shift;
    REQUIRE_THAT(pearson(ax, y), Catch::Matchers::WithinAbs(r, 1e-12));
  }
}

TEST_CASE("evaluate: oracle parameters separate the band-split family") {
  auto [cfg, p] = band_split_model();
  std::vector<MetaTask> tasks = band_tasks(3, "d00", 5);
  EvalReport report = evaluate(p, tasks, false, 0.0, 1, std::nullopt, cfg);
  REQUIRE(report.overall > 20.0);
  REQUIRE(report.settings.finetuned == false);
  REQUIRE(report.per_task.size() == 3);
}

TEST_CASE("evaluate: adapt with alpha 0 equals no adaptation") {
  auto [cfg, p] = band_split_model();
  // Perturb away from the oracle so there is something to (not) adapt.
  Rng rng(7);
  for (double &v : p.values) v += 0.01 * rng.uniform(-1.0, 1.0);
  std::vector<MetaTask> tasks = band_tasks(3, "d00", 9);
  EvalReport base = evaluate(p, tasks, false, 0.0, 1, std::nullopt, cfg);
  EvalReport zero = evaluate(p, tasks, true, 0.0, 1, std::nullopt, cfg);
  REQUIRE(zero.settings.finetuned == true);
  for (size_t i = 0; i < base.per_task.size(); ++i)
    REQUIRE(zero.per_task[i].si_snri == base.per_task[i].si_snri);
}

TEST_CASE("evaluate: aggregation is consistent and evaluation is isolated") {
  auto [cfg, p] = band_split_model();
  Rng rng(11);
  for (double &v : p.values) v += 0.05 * rng.uniform(-1.0, 1.0);
  std::vector<MetaTask> tasks = band_tasks(2, "d00", 13);
  std::vector<MetaTask> more = band_tasks(2, "d01", 14);
  tasks.insert(tasks.end(), more.begin(), more.end());

  ParamVector before = p;
  EvalReport a = evaluate(p, tasks, true, 0.01, 1, std::nullopt, cfg);
  EvalReport b = evaluate(p, tasks, true, 0.01, 1, std::nullopt, cfg);
  REQUIRE(p.values == before.values);  // per-task copies, no mutation
  for (size_t i = 0; i < a.per_task.size(); ++i)
    REQUIRE(a.per_task[i].si_snri == b.per_task[i].si_snri);

  double overall = 0.0;
  std::map<std::string, std::pair<double, int>> dom;
  for (const auto &pt : a.per_task) {
    overall += pt.si_snri;
    dom[pt.domain_label].first += pt.si_snri;
    dom[pt.domain_label].second++;
  }
  overall /= static_cast<double>(a.per_task.size());
  REQUIRE_THAT(a.overall, Catch::Matchers::WithinAbs(overall, 1e-12));
  for (const auto &[label, acc] : dom)
    REQUIRE_THAT(a.per_domain.at(label),
                 Catch::Matchers::WithinAbs(acc.first / acc.second, 1e-12));

  // Worker count does not change the report.
  EvalReport c = evaluate(p, tasks, true, 0.01, 1, std::nullopt, cfg, 4);
  for (size_t i = 0; i < a.per_task.size(); ++i)
    REQUIRE(c.per_task[i].si_snri == a.per_task[i].si_snri);
}

TEST_CASE("evaluate: noise lowers the mixture quality but stays seeded") {
  auto [cfg, p] = band_split_model();
  std::vector<MetaTask> tasks = band_tasks(2, "d00", 15);
  NoiseConfig noise;
  noise.snr_db = 5.0;
  noise.seed = 99;
  EvalReport noisy1 = evaluate(p, tasks, false, 0.0, 1, noise, cfg);
  EvalReport noisy2 = evaluate(p, tasks, false, 0.0, 1, noise, cfg);
  for (size_t i = 0; i < noisy1.per_task.size(); ++i)
    REQUIRE(noisy1.per_task[i].si_snri == noisy2.per_task[i].si_snri);
  REQUIRE(noisy1.settings.noisy == true);
  REQUIRE(noisy1.settings.noise_snr_db == 5.0);

  EvalReport clean = evaluate(p, tasks, false, 0.0, 1, std::nullopt, cfg);
  REQUIRE(noisy1.overall < clean.overall);
}

TEST_CASE("correlation_report: identities, oracle, and error paths") {
  EvalReport report;
  report.per_domain = {{"a", 3.0}, {"b", 5.0}, {"c", 4.0}};
  NativeLikenessTable table;
  table.ratings = {{"a", 3.0}, {"b", 5.0}, {"c", 4.0}};
  REQUIRE_THAT(correlation_report(report, table),
               Catch::Matchers::WithinAbs(1.0, 1e-12));

  // Ten synthetic domains against the standalone pearson.
  EvalReport ten;
  NativeLikenessTable ten_table;
  Rng rng(17);
  std::vector<double> xs, ys;
  for (int d = 0; d < 10; ++d) {
    std::string label = "dom" + std::to_string(d);
    double rating = 1.0 + 0.6 * d;
    double score = rng.uniform(-2.0, 12.0);
    ten.per_domain[label] = score;
    ten_table.ratings[label] = rating;
  }
  for (const auto &[label, score] : ten.per_domain) {
    xs.push_back(ten_table.ratings.at(label));
    ys.push_back(score);
  }
  REQUIRE_THAT(correlation_report(ten, ten_table),
               Catch::Matchers::WithinAbs(pearson(xs, ys), 1e-15));

  EvalReport single;
  single.per_domain = {{"only", 4.0}};
  NativeLikenessTable single_table;
  single_table.ratings = {{"only", 2.0}};
  REQUIRE_THROWS_AS(correlation_report(single, single_table), DegenerateInput);

  NativeLikenessTable missing;
  missing.ratings = {{"a", 2.0}, {"b", 3.0}};
  REQUIRE_THROWS_AS(correlation_report(report, missing), KeyMissing);

  NativeLikenessTable out_of_range;
  out_of_range.ratings = {{"a", 0.5}, {"b", 3.0}, {"c", 4.0}};
  REQUIRE_THROWS_AS(correlation_report(report, out_of_range), InvalidInput);
}

TEST_CASE("adaptation_comparison: counts degradations instead of hiding them") {
  auto [cfg, p] = band_split_model();
  Rng rng(19);
  for (double &v : p.values) v += 0.05 * rng.uniform(-1.0, 1.0);
  std::vector<MetaTask> tasks = band_tasks(4, "d00", 21);
  AdaptationComparison cmp =
      adaptation_comparison(p, tasks, 0.01, 1, std::nullopt, cfg);
  REQUIRE(cmp.per_task.size() == 4);
  int degraded = 0, improved = 0;
  for (const auto &d : cmp.per_task) {
    REQUIRE_THAT(d.delta, Catch::Matchers::WithinAbs(
                              d.adapted_si_snri - d.base_si_snri, 1e-12));
    if (d.delta < 0.0) ++degraded;
    if (d.delta > 0.0) ++improved;
  }
  REQUIRE(cmp.degraded_tasks == degraded);
  REQUIRE(cmp.improved_tasks == improved);

  nlohmann::ordered_json j = comparison_to_json(cmp);
  REQUIRE(j.contains("degraded_tasks"));
  REQUIRE(j.at("per_task").size() == 4);
}

TEST_CASE("report json and domain table are stable") {
  auto [cfg, p] = band_split_model();
  std::vector<MetaTask> tasks = band_tasks(2, "d00", 23);
  EvalReport report = evaluate(p, tasks, false, 0.0, 1, std::nullopt, cfg);
  report.correlation = 0.25;
  nlohmann::ordered_json j = report_to_json(report);
  REQUIRE(j.at("format") == "metasep-eval-report");
  REQUIRE(j.at("settings").at("finetuned") == false);
  REQUIRE(j.at("per_task").size() == 2);
  REQUIRE(j.at("correlation").get<double>() == 0.25);

  NativeLikenessTable table;
  table.ratings = {{"d00", 6.0}};
  std::ostringstream os;
  write_domain_table(report, &table, os);
  std::istringstream is(os.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  REQUIRE(line == "domain_label\trating\tsi_snri_db");
  REQUIRE(std::getline(is, line));
  REQUIRE(line.find("d00\t6\t") == 0);
}
