// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment runner: toy data generation, decoding runs, grid search and report tables.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdsl/errors.h"
#include "cdsl/harness.h"
#include "cdsl/toy_models.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct RunFlags {
  std::string config_path;
  std::string method;
  std::string target;
  std::string draft;
  std::string data;
  std::string out;
  std::string mode;
  std::string c;
  int d = 0;
  int k = 0;
  int b = 0;
  double a_t = 0.0;
  double r_t = 0.0;
  int l_m = 0;
  double p = 0.0;
  int beam_width = 0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON experiment config; flags override it");
  cmd->add_option("--method", f.method, "greedy|nucleus|beam|sd|cdlh|cdlh-appx|cdsl");
  cmd->add_option("--target", f.target, "target model file (scripted JSON or n-gram spec)");
  cmd->add_option("--draft", f.draft, "draft model file");
  cmd->add_option("--data", f.data, "dataset JSONL");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--d", f.d, "draft / lookahead length");
  cmd->add_option("--k", f.k, "candidates per constrained step");
  cmd->add_option("--b", f.b, "target-led rounds before a constrained step");
  cmd->add_option("--a-t", f.a_t, "acceptance threshold");
  cmd->add_option("--r-t", f.r_t, "reward threshold");
  cmd->add_option("--l-m", f.l_m, "max generated tokens");
  cmd->add_option("--p", f.p, "nucleus mass");
  cmd->add_option("--beam-width", f.beam_width, "beam width");
  cmd->add_option("--mode", f.mode, "hard|spec")->check(CLI::IsMember({"hard", "spec"}));
  cmd->add_option("--c", f.c, "draft/target cost coefficient or preset such as opt-125m@commongen");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--threads", f.threads, "worker threads");
}

cdsl::ExperimentConfig build_config(CLI::App* cmd, const RunFlags& f) {
  cdsl::ExperimentConfig config;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) {
      throw cdsl::ConfigError("cannot open config " + f.config_path);
    }
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw cdsl::ConfigError(std::string("malformed config: ") + e.what());
    }
    cdsl::apply_config_json(config, doc);
  }
  json overrides = json::object();
  auto set = [&](const char* flag, const char* key, const json& value) {
    if (cmd->count(flag) > 0) {
      overrides[key] = value;
    }
  };
  set("--method", "method", f.method);
  set("--target", "target", f.target);
  set("--draft", "draft", f.draft);
  set("--data", "data", f.data);
  set("--out", "out", f.out);
  set("--d", "d", f.d);
  set("--k", "k", f.k);
  set("--b", "b", f.b);
  set("--a-t", "a_t", f.a_t);
  set("--r-t", "r_t", f.r_t);
  set("--l-m", "l_m", f.l_m);
  set("--p", "p", f.p);
  set("--beam-width", "beam_width", f.beam_width);
  set("--mode", "mode", f.mode);
  set("--c", "c", f.c);
  set("--seed", "seed", f.seed);
  set("--threads", "threads", f.threads);
  cdsl::apply_config_json(config, overrides);
  config.validate();
  if (config.data_path.empty()) {
    throw cdsl::ConfigError("no dataset given (--data)");
  }
  if (config.out_dir.empty()) {
    throw cdsl::ConfigError("no output directory given (--out)");
  }
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw cdsl::LoadError("cannot write " + path.string());
  }
  out << text;
}

void write_toy_suite(const fs::path& dir, std::uint64_t seed, std::size_t concepts) {
  fs::create_directories(dir);
  std::string corpus;
  for (const auto& s : cdsl::generate_toy_corpus(cdsl::kDefaultCorpusSeed)) {
    corpus += s + "\n";
  }
  write_text(dir / "corpus.txt", corpus);
  const std::vector<std::string> extra = cdsl::toy_extra_tokens();
  for (auto [name, order] : {std::pair{"target.json", cdsl::kToyTargetOrder}, std::pair{"draft.json", cdsl::kToyDraftOrder}}) {
    json spec{{"type", "ngram"},
              {"order", order},
              {"smoothing", cdsl::kToySmoothing},
              {"corpus", "corpus.txt"},
              {"extra_tokens", extra}};
    write_text(dir / name, spec.dump(2) + "\n");
  }
  using cdsl::TaskKind;
  cdsl::write_dataset(cdsl::generate_toy_dataset(seed, cdsl::kValidationSize, concepts, "validation"),
                      dir / "validation.jsonl");
  cdsl::write_dataset(cdsl::generate_toy_dataset(seed + 1, cdsl::kTestSize, concepts, "test"), dir / "test.jsonl");
  cdsl::write_dataset(cdsl::generate_toy_dataset(seed + 2, 100, concepts, "semantic-validation", TaskKind::kSemantic),
                      dir / "semantic-validation.jsonl");
  cdsl::write_dataset(cdsl::generate_toy_dataset(seed + 3, 2000, concepts, "semantic-test", TaskKind::kSemantic),
                      dir / "semantic-test.jsonl");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained decoding with speculative lookaheads: experiment runner"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write the toy corpus, n-gram model specs and datasets");
  std::string gen_out;
  std::uint64_t gen_seed = 7;
  std::size_t gen_n = 0;
  std::size_t gen_concepts = 3;
  std::string gen_split;
  std::string gen_task = "lexical";
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--split", gen_split, "write only this split (needs --n)");
  gen->add_option("--n", gen_n, "examples in the split");
  gen->add_option("--concepts", gen_concepts, "concepts per lexical example");
  gen->add_option("--task", gen_task, "lexical|semantic")->check(CLI::IsMember({"lexical", "semantic"}));

  // run
  auto* run = app.add_subcommand("run", "decode a dataset with one method and write report.json + examples.jsonl");
  RunFlags run_flags;
  add_run_flags(run, run_flags);

  // grid
  auto* grid = app.add_subcommand("grid", "tune a_t, r_t, b for CDSL on a validation set");
  RunFlags grid_flags;
  add_run_flags(grid, grid_flags);
  std::vector<double> grid_a;
  std::vector<double> grid_r;
  std::vector<int> grid_b;
  grid->add_option("--grid-a-t", grid_a, "a_t values");
  grid->add_option("--grid-r-t", grid_r, "r_t values");
  grid->add_option("--grid-b", grid_b, "b values");

  // report
  auto* report = app.add_subcommand("report", "tabulate report.json files as CSV");
  std::vector<std::string> report_inputs;
  std::string report_baseline = "cdlh";
  std::string report_out;
  report->add_option("inputs", report_inputs, "report.json files")->required();
  report->add_option("--baseline", report_baseline, "method used as the speedup baseline");
  report->add_option("--out", report_out, "CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      cdsl::TaskKind kind = cdsl::parse_task_kind(gen_task);
      if (gen_split.empty()) {
        write_toy_suite(gen_out, gen_seed, gen_concepts);
      } else {
        if (gen_n == 0) {
          throw cdsl::ConfigError("--split needs --n >= 1");
        }
        fs::create_directories(gen_out);
        cdsl::write_dataset(cdsl::generate_toy_dataset(gen_seed, gen_n, gen_concepts, gen_split, kind),
                            fs::path(gen_out) / (gen_split + ".jsonl"));
      }
      return 0;
    }
    if (run->parsed()) {
      cdsl::ExperimentConfig config = build_config(run, run_flags);
      cdsl::ModelPair models = cdsl::load_models(config);
      auto dataset = cdsl::read_dataset(config.data_path);
      auto result = cdsl::run_experiment(config, models, dataset);
      cdsl::write_experiment(result, config.out_dir);
      std::cout << cdsl::report_to_json(result).dump(2) << '\n';
      return 0;
    }
    if (grid->parsed()) {
      cdsl::ExperimentConfig config = build_config(grid, grid_flags);
      config.method = cdsl::Method::kCdsl;
      cdsl::ModelPair models = cdsl::load_models(config);
      auto dataset = cdsl::read_dataset(config.data_path);
      auto spec = cdsl::GridSearchSpec::defaults(dataset.front().kind());
      if (!grid_a.empty()) spec.a_t = grid_a;
      if (!grid_r.empty()) spec.r_t = grid_r;
      if (!grid_b.empty()) spec.b = grid_b;
      auto result = cdsl::run_grid(config, spec, models, dataset);
      fs::create_directories(config.out_dir);
      write_text(fs::path(config.out_dir) / "grid.csv", cdsl::grid_to_csv(result));
      json selected{{"a_t", result.selected.params.a_t},
                    {"r_t", result.selected.params.r_t},
                    {"b", result.selected.params.b},
                    {"speedup", result.selected.speedup},
                    {"hard", result.selected.hard},
                    {"baseline_runtime_per_token", result.baseline_runtime}};
      write_text(fs::path(config.out_dir) / "selected.json", selected.dump(2) + "\n");
      std::cout << selected.dump(2) << '\n';
      return 0;
    }
    if (report->parsed()) {
      std::vector<json> reports;
      for (const auto& path : report_inputs) {
        std::ifstream in(path);
        if (!in) {
          throw cdsl::LoadError("cannot open " + path);
        }
        try {
          reports.push_back(json::parse(in));
        } catch (const json::parse_error& e) {
          throw cdsl::LoadError(path + ": " + e.what());
        }
      }
      std::string csv = cdsl::reports_to_csv(reports, report_baseline);
      if (report_out.empty()) {
        std::cout << csv;
      } else {
        write_text(report_out, csv);
      }
      return 0;
    }
  } catch (const cdsl::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const cdsl::LoadError& e) {
    std::cerr << "load error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
