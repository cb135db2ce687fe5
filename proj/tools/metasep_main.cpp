// tools/metasep_main.cpp

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

// Command-line driver: synth, tasks, train, eval, bench subcommands over one
// shared experiment config. Exit codes: 0 success, 2 usage/config error,
// 1 runtime failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metasep/metasep.hpp"

namespace fs = std::filesystem;
using namespace metasep;

namespace {

struct CliState {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;  // 0 = keep the config's seed
  int workers = 0;

  std::string method;
  int speakers = 0;
  double train_alpha = -1.0;
  double beta = -1.0;
  int meta_batch = 0;
  int epochs = -1;

  std::string checkpoint_path;
  bool adapt = true;
  bool adapt_seen = false;
  double eval_alpha = -1.0;
  double noise_snr_db = 0.0;
  bool noise_seen = false;
  std::string ratings_path;
  int bench_iters = 12;
};

ExperimentConfig resolved_config(CliState *cli) {
  ExperimentConfig cfg = load_config(cli->config_path);
  if (cli->seed != 0) cfg.seed = cli->seed;
  if (!cli->method.empty())
    cfg.train.method = train_method_from_string(cli->method);
  if (cli->speakers != 0) {
    cfg.num_speakers = cli->speakers;
    cfg.model.num_sources = cli->speakers;
  }
  if (cli->train_alpha >= 0.0) cfg.train.alpha = cli->train_alpha;
  if (cli->beta >= 0.0) cfg.train.beta = cli->beta;
  if (cli->meta_batch > 0) cfg.train.meta_batch = cli->meta_batch;
  if (cli->epochs >= 0) cfg.train.epochs = cli->epochs;
  if (cli->adapt_seen) cfg.eval_adapt = cli->adapt;
  if (cli->eval_alpha >= 0.0) cfg.eval_alpha = cli->eval_alpha;
  if (cli->noise_seen) cfg.noise_snr_db = cli->noise_snr_db;
  if (!cli->ratings_path.empty()) cfg.ratings_path = cli->ratings_path;
  cfg.resolve_seeds();
  cfg.validate();
  return cfg;
}

fs::path prepare_out_dir(const CliState &cli, const ExperimentConfig &cfg) {
  fs::path out(cli.out_dir);
  fs::create_directories(out);
  save_config(cfg, (out / "config.json").string());
  return out;
}

int cmd_synth(CliState *cli) {
  ExperimentConfig cfg = resolved_config(cli);
  if (!cfg.synth)
    throw ConfigError("synth: config has no corpus.synth section");
  fs::path out = prepare_out_dir(*cli, cfg);
  SpeakerCorpus corpus = synth_corpus(*cfg.synth);
  std::string manifest = save_corpus(corpus, (out / "corpus").string());
  std::fprintf(stderr, "wrote %zu utterances, manifest %s\n",
               corpus.utterances.size(), manifest.c_str());
  if (cfg.eval_synth) {
    SpeakerCorpus targets = synth_corpus(*cfg.eval_synth);
    std::string eval_manifest =
        save_corpus(targets, (out / "eval_corpus").string());
    std::fprintf(stderr, "wrote %zu target utterances, manifest %s\n",
                 targets.utterances.size(), eval_manifest.c_str());
  }
  return 0;
}

int cmd_tasks(CliState *cli) {
  ExperimentConfig cfg = resolved_config(cli);
  fs::path out = prepare_out_dir(*cli, cfg);
  SpeakerCorpus corpus = resolve_corpus(cfg.synth, cfg.corpus_manifest);
  TaskSplit split = build_training_tasks(corpus, cfg);
  {
    std::ofstream os(out / "tasks_train.tsv", std::ios::trunc);
    write_task_manifest(split.train, os);
  }
  {
    std::ofstream os(out / "tasks_val.tsv", std::ios::trunc);
    write_task_manifest(split.val, os);
  }
  std::fprintf(stderr, "built %zu train tasks, %zu val tasks\n",
               split.train.size(), split.val.size());
  return 0;
}

int cmd_train(CliState *cli) {
  ExperimentConfig cfg = resolved_config(cli);
  fs::path out = prepare_out_dir(*cli, cfg);
  SpeakerCorpus corpus = resolve_corpus(cfg.synth, cfg.corpus_manifest);
  TaskSplit split = build_training_tasks(corpus, cfg);
  {
    std::ofstream os(out / "tasks_train.tsv", std::ios::trunc);
    write_task_manifest(split.train, os);
  }
  {
    std::ofstream os(out / "tasks_val.tsv", std::ios::trunc);
    write_task_manifest(split.val, os);
  }

  std::ofstream log(out / "train.log", std::ios::trunc);
  TrainState st = init_train_state(cfg.model, cfg.train);
  int workers = resolve_workers(cli->workers);
  if (cfg.train.method == TrainMethod::kJoint) {
    run_joint_epochs(&st, split.train, split.val, cfg.train, cfg.model,
                     cfg.train.epochs, workers, &log);
  } else {
    run_meta_epochs(&st, split.train, split.val, cfg.train, cfg.model,
                    cfg.train.epochs, workers, &log);
  }
  save_checkpoint((out / "checkpoint.json").string(), cfg.model,
                  st.best_params, &st);
  std::fprintf(
      stderr,
      "trained %s for %d epochs (%lld iterations), best val loss %.6f\n",
      to_string(cfg.train.method).c_str(), st.epoch,
      static_cast<long long>(st.iteration), st.best_validation_loss);
  if (st.clip_events > 0)
    std::fprintf(stderr, "gradient clip engaged on %d iterations\n",
                 st.clip_events);
  return 0;
}

int cmd_eval(CliState *cli) {
  ExperimentConfig cfg = resolved_config(cli);
  Checkpoint ck = load_checkpoint(cli->checkpoint_path);
  if (cfg.has_model_section && !(cfg.model == ck.model))
    throw ConfigError(
        "eval: config model section does not match the checkpoint");
  if (cfg.num_speakers != ck.model.num_sources)
    throw ConfigError("eval: checkpoint separates " +
                      std::to_string(ck.model.num_sources) +
                      " sources but config asks for " +
                      std::to_string(cfg.num_speakers));
  // The stored config carries the effective model so re-runs line up.
  cfg.model = ck.model;
  fs::path out = prepare_out_dir(*cli, cfg);

  SpeakerCorpus targets =
      (cfg.eval_synth || !cfg.eval_manifest.empty())
          ? resolve_corpus(cfg.eval_synth, cfg.eval_manifest)
          : resolve_corpus(cfg.synth, cfg.corpus_manifest);
  std::vector<MetaTask> tasks = build_eval_tasks(targets, cfg);

  std::optional<NoiseConfig> noise;
  if (cfg.noise_snr_db) {
    NoiseConfig nc;
    nc.snr_db = *cfg.noise_snr_db;
    nc.seed = substream_seed(cfg.seed, "eval-noise");
    noise = nc;
  }

  std::optional<NativeLikenessTable> ratings;
  if (!cfg.ratings_path.empty()) {
    NativeLikenessTable table;
    table.ratings = load_ratings(cfg.ratings_path);
    ratings = table;
  }

  int workers = resolve_workers(cli->workers);
  nlohmann::ordered_json run;
  run["format"] = "metasep-eval-run";
  run["format_version"] = 1;

  EvalReport primary;
  if (cfg.eval_adapt) {
    AdaptationComparison cmp =
        adaptation_comparison(ck.params, tasks, cfg.eval_alpha, cfg.eval_steps,
                              noise, ck.model, workers);
    if (ratings) {
      cmp.adapted.correlation = correlation_report(cmp.adapted, *ratings);
      cmp.base.correlation = correlation_report(cmp.base, *ratings);
    }
    primary = cmp.adapted;
    run["adapted"] = report_to_json(cmp.adapted);
    run["baseline"] = report_to_json(cmp.base);
    run["adaptation_comparison"] = comparison_to_json(cmp);
    std::fprintf(stderr,
                 "adapted overall %.4f dB (baseline %.4f dB); "
                 "%d of %zu tasks degraded by fine-tuning\n",
                 cmp.adapted.overall, cmp.base.overall, cmp.degraded_tasks,
                 cmp.per_task.size());
  } else {
    primary = evaluate(ck.params, tasks, false, cfg.eval_alpha, cfg.eval_steps,
                       noise, ck.model, workers);
    if (ratings) primary.correlation = correlation_report(primary, *ratings);
    run["baseline"] = report_to_json(primary);
    std::fprintf(stderr, "overall %.4f dB without adaptation\n",
                 primary.overall);
  }

  {
    std::ofstream os(out / "eval_report.json", std::ios::trunc);
    os << run.dump(1) << '\n';
  }
  {
    std::ofstream os(out / "eval_domains.tsv", std::ios::trunc);
    write_domain_table(primary, ratings ? &*ratings : nullptr, os);
  }
  return 0;
}

int cmd_bench(CliState *cli) {
  ExperimentConfig cfg = resolved_config(cli);
  fs::path out = prepare_out_dir(*cli, cfg);
  SpeakerCorpus corpus = resolve_corpus(cfg.synth, cfg.corpus_manifest);
  TaskSplit split = build_training_tasks(corpus, cfg);
  int workers = resolve_workers(cli->workers);

  auto time_method = [&](TrainMethod method, std::vector<double> *ms) {
    TrainConfig tc = cfg.train;
    tc.method = method;
    tc.inner_steps = 1;
    TrainState st = init_train_state(cfg.model, tc);
    // Both methods share the seed, so they see identical task batches.
    for (int i = 0; i < 2; ++i)  // warmup
      meta_train_iteration(&st, split.train, tc, cfg.model, workers);
    for (int i = 0; i < cli->bench_iters; ++i) {
      auto t0 = std::chrono::steady_clock::now();
      meta_train_iteration(&st, split.train, tc, cfg.model, workers);
      auto t1 = std::chrono::steady_clock::now();
      ms->push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  };

  std::vector<double> maml_ms, fomaml_ms;
  time_method(TrainMethod::kMaml, &maml_ms);
  time_method(TrainMethod::kFomaml, &fomaml_ms);

  auto stats = [](const std::vector<double> &v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return std::make_pair(mean, std::sqrt(var));
  };
  auto [maml_mean, maml_std] = stats(maml_ms);
  auto [fomaml_mean, fomaml_std] = stats(fomaml_ms);
  double ratio = maml_mean / fomaml_mean;

  char buf[256];
  std::string text;
  std::snprintf(buf, sizeof(buf),
                "method=maml iters=%d mean_ms=%.3f std_ms=%.3f\n",
                cli->bench_iters, maml_mean, maml_std);
  text += buf;
  std::snprintf(buf, sizeof(buf),
                "method=fomaml iters=%d mean_ms=%.3f std_ms=%.3f\n",
                cli->bench_iters, fomaml_mean, fomaml_std);
  text += buf;
  std::snprintf(buf, sizeof(buf), "ratio_maml_over_fomaml=%.4f\n", ratio);
  text += buf;
  std::ofstream os(out / "bench.txt", std::ios::trunc);
  os << text;
  std::fputs(text.c_str(), stdout);
  return 0;
}

void add_common(CLI::App *sub, CliState *cli) {
  sub->add_option("--config", cli->config_path, "experiment config JSON")
      ->required();
  sub->add_option("--out", cli->out_dir, "run output directory")->required();
  sub->add_option("--seed", cli->seed, "override the global seed");
  sub->add_option(
      "--workers", cli->workers,
      "worker threads (0 = all cores); results do not depend on it");
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"one-shot meta-learning for single-channel source separation"};
  app.require_subcommand(1);
  CliState cli;

  CLI::App *synth = app.add_subcommand("synth", "synthesize a corpus to disk");
  add_common(synth, &cli);

  CLI::App *tasks = app.add_subcommand("tasks", "build and export meta tasks");
  add_common(tasks, &cli);
  tasks->add_option("--speakers", cli.speakers, "sources per mixture (2 or 3)")
      ->check(CLI::Range(2, 3));

  CLI::App *train = app.add_subcommand("train", "train a separation model");
  add_common(train, &cli);
  train->add_option("--method", cli.method, "joint | maml | fomaml")
      ->check(CLI::IsMember({"joint", "maml", "fomaml"}));
  train->add_option("--speakers", cli.speakers, "sources per mixture (2 or 3)")
      ->check(CLI::Range(2, 3));
  train->add_option("--alpha", cli.train_alpha,
                    "inner / fast-adapt learning rate");
  train->add_option("--beta", cli.beta, "outer / joint learning rate");
  train->add_option("--meta-batch", cli.meta_batch, "tasks per meta update");
  train->add_option("--epochs", cli.epochs, "training epochs");

  CLI::App *eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, &cli);
  eval->add_option("--checkpoint", cli.checkpoint_path, "checkpoint path")
      ->required();
  eval->add_option("--alpha", cli.eval_alpha, "fine-tune learning rate");
  eval->add_flag("--adapt,!--no-adapt", cli.adapt,
                 "fine-tune on each task's support set before scoring");
  eval->add_option("--noise-snr", cli.noise_snr_db,
                   "overlay noise at this SNR (dB)");
  eval->add_option("--ratings", cli.ratings_path,
                   "per-domain native-likeness ratings file");

  CLI::App *bench = app.add_subcommand(
      "bench", "time maml vs fomaml meta-iterations on identical batches");
  add_common(bench, &cli);
  bench->add_option("--iters", cli.bench_iters, "measured iterations")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  cli.adapt_seen =
      eval->count("--adapt") > 0 || eval->count("--no-adapt") > 0;
  cli.noise_seen = eval->count("--noise-snr") > 0;

  try {
    if (synth->parsed()) return cmd_synth(&cli);
    if (tasks->parsed()) return cmd_tasks(&cli);
    if (train->parsed()) return cmd_train(&cli);
    if (eval->parsed()) return cmd_eval(&cli);
    if (bench->parsed()) return cmd_bench(&cli);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
