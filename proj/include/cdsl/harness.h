// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cdsl/decoders.h"
#include "cdsl/lm.h"
#include "cdsl/metrics.h"
#include "cdsl/rewards.h"

namespace cdsl {

enum class Method { kGreedy, kNucleus, kBeam, kSpeculative, kCdlh, kCdlhAppx, kCdsl };
std::string_view to_string(Method method);
// Throws ConfigError for unknown names.
Method parse_method(std::string_view name);
bool needs_draft(Method method);

enum class TaskKind { kLexical, kSemantic };
std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

// One dataset line. Lexical examples carry concepts, semantic-proxy examples a blocklist.
struct TaskExample {
  std::string id;
  std::string prompt;
  std::vector<std::string> concepts;
  std::vector<std::string> blocklist;

  TaskKind kind() const { return concepts.empty() ? TaskKind::kSemantic : TaskKind::kLexical; }
};

nlohmann::json to_json(const TaskExample& example);
TaskExample example_from_json(const nlohmann::json& doc);
std::vector<TaskExample> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::vector<TaskExample>& examples, const std::filesystem::path& path);
std::string dataset_to_jsonl(const std::vector<TaskExample>& examples);

// ---- toy task generation --------------------------------------------------

inline constexpr std::uint64_t kDefaultCorpusSeed = 2025;
inline constexpr std::size_t kDefaultCorpusSize = 200;
inline constexpr std::size_t kValidationSize = 200;
inline constexpr std::size_t kTestSize = 1000;

// Template sentences over a fixed ~60-word vocabulary, deterministic in the seed.
std::vector<std::string> generate_toy_corpus(std::uint64_t seed, std::size_t n_sentences = kDefaultCorpusSize);
// Concept-eligible content words of the toy vocabulary.
const std::vector<std::string>& toy_content_words();
const std::vector<std::string>& toy_blocklist();
// Words that appear in prompts but never in corpus sentences.
const std::vector<std::string>& toy_prompt_words();
// Prompt, content and blocklist words, so every task token is in the model vocabulary.
std::vector<std::string> toy_extra_tokens();

inline constexpr int kToyTargetOrder = 4;
inline constexpr int kToyDraftOrder = 2;
inline constexpr double kToySmoothing = 0.1;

// Ids are "<split>-<index>", so splits never collide. Throws ConfigError when more concepts
// are requested than the vocabulary offers.
std::vector<TaskExample> generate_toy_dataset(std::uint64_t seed, std::size_t n_examples,
                                              std::size_t concepts_per_example, std::string_view split,
                                              TaskKind kind = TaskKind::kLexical);

// ---- experiments ------------------------------------------------------------

struct ModelPair {
  std::shared_ptr<const LanguageModel> target;
  std::shared_ptr<const LanguageModel> draft;  // may be null for single-model methods
};

struct ExperimentConfig {
  Method method = Method::kGreedy;
  std::string target_path;
  std::string draft_path;
  std::string data_path;
  std::string out_dir;
  CdslConfig cdsl;
  bool d_set = false;  // when false, d follows the task (3 lexical, 5 semantic)
  double top_p = 0.9;
  int beam_width = 3;
  double c = 0.077;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  // Minimum final reward counted as satisfied for semantic-proxy tasks.
  double satisfaction_threshold = 1.0;

  void validate() const;
};

// Reads a JSON object mirroring ExperimentConfig; absent keys keep their defaults.
void apply_config_json(ExperimentConfig& config, const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& config);

int default_draft_length(TaskKind kind);

struct ExampleOutcome {
  std::string id;
  std::string text;
  CallLedger ledger;
  std::string terminated_by;
  double reward = 0.0;
  std::size_t covered = 0;
  std::size_t total = 0;
  std::map<std::string, std::int64_t> states;
};

struct ExperimentResult {
  std::string method;
  std::string target;
  std::string draft;
  TaskKind task = TaskKind::kLexical;
  double c = 0.0;
  MetricsReport metrics;
  double satisfaction_rate = 0.0;  // share of final rewards at or above the threshold
  std::map<std::string, std::int64_t> states;
  CallLedger pooled;
  std::vector<ExampleOutcome> examples;
  std::vector<GenerationResult> generations;
  nlohmann::json config;
};

// Runs one decoder on one example. `rng` is the example's stream.
GenerationResult run_method(const ExperimentConfig& config, const ModelPair& models, const TaskExample& example,
                            const RewardFunction& reward, std::span<const TokenId> prompt, RngStream& rng);

std::unique_ptr<RewardFunction> make_reward(const TaskExample& example, const Vocabulary& vocab);

// Decodes every example (in parallel when config.threads > 1) and aggregates the metrics.
// Output is independent of the thread count.
ExperimentResult run_experiment(const ExperimentConfig& config, const ModelPair& models,
                                const std::vector<TaskExample>& dataset);
ModelPair load_models(const ExperimentConfig& config);
// The toy n-gram pair trained in memory; matches what gen-data writes to disk.
ModelPair train_toy_models(const std::vector<std::string>& corpus_lines);

nlohmann::json report_to_json(const ExperimentResult& result);
// report.json and examples.jsonl under out_dir.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& out_dir);

// ---- grid search ------------------------------------------------------------

struct GridPoint {
  double a_t = 0.0;
  double r_t = 0.0;
  int b = 0;
  auto operator<=>(const GridPoint&) const = default;
};

struct GridSearchSpec {
  std::vector<double> a_t;
  std::vector<double> r_t;
  std::vector<int> b;

  // Search space used for the lexical and semantic tasks.
  static GridSearchSpec defaults(TaskKind kind);
  std::vector<GridPoint> points() const;
};

struct GridRow {
  GridPoint params;
  double speedup = 0.0;
  double runtime_per_token = 0.0;
  double soft = 0.0;
  double hard = 0.0;
  double draft_calls_per_token = 0.0;
  double target_calls_per_token = 0.0;
};

inline constexpr std::size_t kGridShortlist = 10;

// Keeps the 10 fastest rows (speedup, then parameter order), then takes the best hard
// satisfaction among them; ties go to higher speedup, then parameter order.
// Throws ConfigError on an empty grid.
GridRow select_hyperparameters(std::span<const GridRow> rows);

struct GridResult {
  std::vector<GridRow> rows;
  GridRow selected;
  double baseline_runtime = 0.0;
};

// Evaluates every point with `evaluate` and applies select_hyperparameters.
GridResult grid_search(const GridSearchSpec& spec, const std::function<GridRow(const GridPoint&)>& evaluate);

// Runs CDSL over the grid on `validation`, with speedups relative to CDLH on the same data.
GridResult run_grid(const ExperimentConfig& base, const GridSearchSpec& spec, const ModelPair& models,
                    const std::vector<TaskExample>& validation);

std::string grid_to_csv(const GridResult& result);

// One row per report: columns follow the calls-per-token table layout.
std::string reports_to_csv(const std::vector<nlohmann::json>& reports, std::string_view baseline_method);

}  // namespace cdsl
