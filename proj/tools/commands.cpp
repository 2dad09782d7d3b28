// Copyright (c) 2026 The moelora Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "moelora/checkpoint.hpp"
#include "moelora/config.hpp"
#include "moelora/corpus.hpp"
#include "moelora/errors.hpp"
#include "moelora/io.hpp"
#include "moelora/metrics.hpp"
#include "moelora/trainer.hpp"

namespace moelora::cli {
namespace fs = std::filesystem;
namespace {

constexpr const char* kVersion = "0.1.0";

RunConfig read_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void write_run_manifest(const fs::path& dir, const std::string& command, const nlohmann::json& extra) {
  nlohmann::json j{{"tool", "moelora"}, {"version", kVersion}, {"command", command}};
  j.update(extra);
  write_text_file(dir / "run_manifest.json", j.dump(2) + "\n");
}

std::vector<EvalRecord> score_split(const Model& model, const Dataset& data, Split split) {
  const auto clips = data.split(split);
  std::vector<Tensor> frames;
  for (const Clip* c : clips) frames.push_back(c->frames);
  const auto scores = score_clips(model, frames, thread_budget());
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    out.push_back({clips[i]->id, scores[i], clips[i]->label, clips[i]->family, std::string(split_name(split))});
  }
  return out;
}

std::string eer_table(const std::vector<EerBreakdown>& rows) {
  std::ostringstream os;
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-9s %-5s bona=%-5zu spoof=%-5zu EER=%.2f%%\n", r.split.c_str(), r.family.c_str(),
                  r.bonafide, r.spoof, 100.0 * r.eer);
    os << buf;
  }
  return os.str();
}

std::string eer_csv(const std::vector<EerBreakdown>& rows) {
  std::ostringstream os;
  os << "split,family,bonafide,spoof,eer\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.eer);
    os << r.split << ',' << r.family << ',' << r.bonafide << ',' << r.spoof << ',' << buf << '\n';
  }
  return os.str();
}

std::vector<Split> parse_split_arg(const std::string& name) {
  if (name == "all") return {Split::Train, Split::Dev, Split::EvalId, Split::EvalOod};
  if (name == "eval") return {Split::EvalId, Split::EvalOod};
  return {parse_split(name)};
}

// gen-data ------------------------------------------------------------------

struct GenArgs {
  std::string out;
  std::uint64_t seed = 1;
  double scale = 1.0;
};

void cmd_gen(const GenArgs& a) {
  CorpusManifest m = CorpusManifest::defaults(a.seed);
  if (a.scale != 1.0) m = m.scaled(a.scale);
  const Dataset data = gen_dataset(m, a.out);
  RunConfig echo;
  echo.data_seed = a.seed;
  echo.corpus_scale = a.scale;
  write_text_file(fs::path(a.out) / "config_echo.txt", echo.echo());
  std::printf("wrote %zu clips to %s\n", data.clips.size(), a.out.c_str());
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  std::string data, config, out;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void cmd_train(const TrainArgs& a) {
  RunConfig cfg = read_config(a.config, a.overrides);
  const fs::path out = a.out;
  ensure_directory(out);
  cfg.out_dir = out;
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = load_dataset(a.data);
  write_text_file(out / "config_echo.txt", cfg.echo());
  write_run_manifest(out, "train",
                     {{"data_dir", fs::absolute(a.data).string()}, {"dataset", nlohmann::json(data.manifest)},
                      {"backbone_seed", cfg.backbone_seed}, {"init_seed", cfg.train.seed}});

  Model model(cfg.backbone, cfg.backbone_seed, cfg.train.seed);
  FitHooks hooks;
  if (!a.quiet) {
    hooks.on_epoch = [&](const EpochLog& e) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "epoch %3d  loss %.5f  dev EER %6.2f%%  lr %.3g  (%.1fs)\n", e.epoch, e.train_loss,
                   100.0 * e.dev_eer, e.lr, secs);
    };
  }
  const FitResult result = fit(model, data, cfg.train, hooks);
  save_checkpoint(result.best, out / "checkpoint.bin");
  write_text_file(out / "train_log.csv", training_log_csv(result.log));

  std::vector<EvalRecord> records;
  for (Split s : {Split::EvalId, Split::EvalOod}) {
    auto r = score_split(model, data, s);
    records.insert(records.end(), r.begin(), r.end());
  }
  write_scores_csv(out / "scores.csv", records);
  const auto breakdown = eer_breakdown(records);
  write_text_file(out / "eer_report.csv", eer_csv(breakdown));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("best epoch %d (dev EER %.2f%%) after %d epochs%s, %.1fs\n", result.best.epoch,
              100.0 * result.best.dev_eer, result.epochs_run, result.early_stopped ? " (early stop)" : "", secs);
  std::printf("%s", eer_table(breakdown).c_str());
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, data, split = "eval", scores;
};

void cmd_eval(const EvalArgs& a) {
  const Model model = restore(load_checkpoint(a.ckpt));
  const Dataset data = load_dataset(a.data);
  std::vector<EvalRecord> records;
  for (Split s : parse_split_arg(a.split)) {
    auto r = score_split(model, data, s);
    records.insert(records.end(), r.begin(), r.end());
  }
  if (records.empty()) throw ValidationError("split '" + a.split + "' has no clips");
  if (!a.scores.empty()) write_scores_csv(a.scores, records);
  std::printf("%s", eer_table(eer_breakdown(records)).c_str());
}

// analyze-experts -----------------------------------------------------------

struct AnalyzeArgs {
  std::string ckpt, out;
};

void cmd_analyze(const AnalyzeArgs& a) {
  const Model model = restore(load_checkpoint(a.ckpt));
  const auto rows = expert_svd_map(model);
  write_expert_csv(a.out, rows);
  double peak = 0.0;
  for (const auto& r : rows) peak = std::max(peak, r.sigma_max);
  std::printf("%zu experts, max sigma_max %.6g, written to %s\n", rows.size(), peak, a.out.c_str());
}

// seed-study ----------------------------------------------------------------

struct SeedArgs {
  std::string config, seeds, out, data;
  std::vector<std::string> overrides;
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw ValidationError("--seeds expects a comma-separated list of integers, got '" + text + "'");
    }
    out.push_back(std::stoull(item));
  }
  return out;
}

void cmd_seed_study(const SeedArgs& a) {
  RunConfig cfg = read_config(a.config, a.overrides);
  const auto seeds = parse_seed_list(a.seeds);
  if (seeds.size() < 2) throw ValidationError("seed-study needs at least two seeds");
  const fs::path csv = a.out;
  const fs::path dir = csv.has_parent_path() ? csv.parent_path() : fs::path(".");
  ensure_directory(dir);
  const Dataset data = a.data.empty() ? generate_corpus(cfg.corpus_manifest()) : load_dataset(a.data);
  write_text_file(dir / "config_echo.txt", cfg.echo());
  write_run_manifest(dir, "seed-study",
                     {{"seeds", seeds}, {"dataset", nlohmann::json(data.manifest)},
                      {"data_dir", a.data.empty() ? std::string() : fs::absolute(a.data).string()},
                      {"backbone_seed", cfg.backbone_seed}});

  std::vector<std::vector<SeedEer>> runs(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::mutex log_mu;
  auto run_one = [&](std::size_t i) {
    try {
      TrainConfig tc = cfg.train;
      tc.seed = seeds[i];
      Model model(cfg.backbone, cfg.backbone_seed, seeds[i]);
      const FitResult result = fit(model, data, tc);
      const fs::path run_dir = dir / ("seed_" + std::to_string(seeds[i]));
      ensure_directory(run_dir);
      save_checkpoint(result.best, run_dir / "checkpoint.bin");
      write_text_file(run_dir / "train_log.csv", training_log_csv(result.log));
      std::vector<EvalRecord> records;
      for (Split s : {Split::EvalId, Split::EvalOod}) {
        auto r = score_split(model, data, s);
        records.insert(records.end(), r.begin(), r.end());
        runs[i].push_back({std::string(split_name(s)), compute_eer(r).eer});
      }
      write_scores_csv(run_dir / "scores.csv", records);
      std::lock_guard<std::mutex> lock(log_mu);
      std::fprintf(stderr, "seed %llu: best epoch %d, eval_id EER %.2f%%, eval_ood EER %.2f%%\n",
                   static_cast<unsigned long long>(seeds[i]), result.best.epoch, 100.0 * runs[i][0].eer,
                   100.0 * runs[i][1].eer);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const unsigned workers = std::min<unsigned>(thread_budget(), static_cast<unsigned>(seeds.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < seeds.size(); i += workers) run_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::ostringstream per_seed;
  per_seed << "seed,eval_set,eer\n";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (const auto& r : runs[i]) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", r.eer);
      per_seed << seeds[i] << ',' << r.eval_set << ',' << buf << '\n';
    }
  }
  write_text_file(dir / "per_seed.csv", per_seed.str());
  const auto agg = seed_aggregate(runs);
  write_text_file(csv, aggregate_csv(agg));
  for (const auto& r : agg) {
    std::printf("%-9s EER %.2f%% +/- %.2f%% over %zu seeds\n", r.eval_set.c_str(), 100.0 * r.mean, 100.0 * r.std,
                r.n_seeds);
  }
}

// count-params --------------------------------------------------------------

struct CountArgs {
  std::size_t experts = 3, rank = 8;
  std::string mode = "paper", adapter = "moe_lora", config;
};

void cmd_count(const CountArgs& a) {
  BackboneConfig cfg = a.config.empty() ? BackboneConfig{} : load_run_config(a.config).backbone;
  cfg.adapter_mode = parse_adapter_mode(a.adapter);
  cfg.num_experts = a.experts;
  cfg.top_k = std::min(cfg.top_k, a.experts);
  if (cfg.top_k == 0) cfg.top_k = a.experts;
  cfg.lora_rank = a.rank;
  std::printf("%s", count_params(cfg, parse_count_mode(a.mode)).render().c_str());
}

// grad-check ----------------------------------------------------------------

struct GradArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::size_t seeds = 1, clips = 2, frames = 6;
};

void cmd_grad(const GradArgs& a) {
  const RunConfig cfg = read_config(a.config, a.overrides);
  double worst = 0.0;
  for (std::size_t s = 0; s < a.seeds; ++s) {
    const auto r = model_grad_check(cfg.backbone, cfg.train.seed + s, a.clips, a.frames);
    if (!r.valid) throw NumericError("loss is not deterministic; gradient check is meaningless");
    worst = std::max(worst, r.max_rel_error);
  }
  std::printf("max relative error %.3e\n", worst);
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"MoE-LoRA adapter experiments on a synthetic spoofing corpus", "moelora"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Corpus seed");
  g->add_option("--scale", gen.scale, "Multiply every split size")->check(CLI::PositiveNumber);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train adapters and head with early stopping");
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--config", train.config, "Run config file")->required();
  t->add_option("--out", train.out, "Run output directory")->required();
  t->add_option("--set", train.overrides, "Override a config key (key=value)");
  t->add_flag("--quiet", train.quiet, "No per-epoch progress");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a split and report EER");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--split", ev.split, "train, dev, eval_id, eval_ood, eval or all");
  e->add_option("--scores", ev.scores, "Scores CSV to write");

  AnalyzeArgs an;
  auto* x = app.add_subcommand("analyze-experts", "Largest singular value of every expert update");
  x->add_option("--ckpt", an.ckpt, "Checkpoint file")->required();
  x->add_option("--out", an.out, "Output CSV")->required();

  SeedArgs ss;
  auto* s = app.add_subcommand("seed-study", "Train once per seed and aggregate EER");
  s->add_option("--config", ss.config, "Run config file")->required();
  s->add_option("--seeds", ss.seeds, "Comma-separated seeds")->required();
  s->add_option("--out", ss.out, "Aggregate CSV")->required();
  s->add_option("--data", ss.data, "Dataset directory (default: generate from config)");
  s->add_option("--set", ss.overrides, "Override a config key (key=value)");

  CountArgs cnt;
  auto* c = app.add_subcommand("count-params", "Trainable parameter accounting");
  c->add_option("--experts", cnt.experts, "Number of experts")->check(CLI::PositiveNumber);
  c->add_option("--rank", cnt.rank, "LoRA rank")->check(CLI::PositiveNumber);
  c->add_option("--mode", cnt.mode, "paper or toy")->check(CLI::IsMember({"paper", "toy"}));
  c->add_option("--adapter", cnt.adapter, "moe_lora, single_lora or none")
      ->check(CLI::IsMember({"moe_lora", "single_lora", "none"}));
  c->add_option("--config", cnt.config, "Run config supplying toy dimensions");

  GradArgs gr;
  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the full model");
  gc->add_option("--config", gr.config, "Run config file")->required();
  gc->add_option("--set", gr.overrides, "Override a config key (key=value)");
  gc->add_option("--seeds", gr.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  gc->add_option("--clips", gr.clips, "Clips per batch")->check(CLI::PositiveNumber);
  gc->add_option("--frames", gr.frames, "Frames per clip")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }

  try {
    if (*g) cmd_gen(gen);
    else if (*t) cmd_train(train);
    else if (*e) cmd_eval(ev);
    else if (*x) cmd_analyze(an);
    else if (*s) cmd_seed_study(ss);
    else if (*c) cmd_count(cnt);
    else if (*gc) cmd_grad(gr);
  } catch (const Error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 0;
}

}  // namespace moelora::cli
