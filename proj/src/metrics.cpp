// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdsl/metrics.h"

#include <array>
#include <cmath>

#include "cdsl/errors.h"

namespace cdsl {

namespace {

constexpr std::array<CostPreset, 14> kPresets{{
    {"opt-13b", "opt-125m", "commongen", 0.077},
    {"opt-13b", "opt-350m", "commongen", 0.146},
    {"opt-13b", "opt-1.3b", "commongen", 0.156},
    {"bloomz-7.1b", "bloomz-560m", "commongen", 0.314},
    {"bloomz-7.1b", "bloomz-1.7b", "commongen", 0.341},
    {"qwen1.5-7b", "qwen1.5-0.5b", "commongen", 0.338},
    {"qwen1.5-7b", "qwen1.5-1.8b", "commongen", 0.347},
    {"opt-13b", "opt-125m", "htg", 0.077},
    {"opt-13b", "opt-350m", "htg", 0.147},
    {"opt-13b", "opt-1.3b", "htg", 0.176},
    {"bloomz-7.1b", "bloomz-560m", "htg", 0.309},
    {"bloomz-7.1b", "bloomz-1.7b", "htg", 0.358},
    {"qwen1.5-7b", "qwen1.5-0.5b", "htg", 0.375},
    {"qwen1.5-7b", "qwen1.5-1.8b", "htg", 0.409},
}};

}  // namespace

bool CostModel::validate() const {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw ConfigError("cost coefficient c must be > 0");
  }
  return c <= 1.0;
}

std::span<const CostPreset> cost_presets() { return kPresets; }

std::optional<double> find_cost_preset(std::string_view name) {
  std::string key = to_lower(std::string(name));
  for (const auto& p : kPresets) {
    if (key == std::string(p.draft) + "@" + std::string(p.task)) {
      return p.c;
    }
  }
  return std::nullopt;
}

double runtime_per_token(double draft_calls_per_token, double target_calls_per_token, double c) {
  return c * draft_calls_per_token + target_calls_per_token;
}

double runtime_per_token(const CallLedger& ledger, double c) {
  if (ledger.emitted_tokens <= 0) {
    throw InputError("runtime per token needs at least one emitted token");
  }
  auto tokens = static_cast<double>(ledger.emitted_tokens);
  return runtime_per_token(static_cast<double>(ledger.draft_calls) / tokens,
                           static_cast<double>(ledger.target_calls) / tokens, c);
}

double speedup(double baseline_runtime, double method_runtime) {
  if (!(baseline_runtime > 0.0) || !(method_runtime > 0.0)) {
    throw InputError("speedup needs positive runtimes");
  }
  return baseline_runtime / method_runtime;
}

MetricsReport constraint_metrics(std::span<const CoverageCount> coverage) {
  if (coverage.empty()) {
    throw InputError("constraint metrics over no examples");
  }
  std::size_t covered = 0;
  std::size_t total = 0;
  std::size_t complete = 0;
  for (const auto& c : coverage) {
    if (c.total == 0 || c.covered > c.total) {
      throw InputError("coverage count out of range");
    }
    covered += c.covered;
    total += c.total;
    complete += c.covered == c.total ? 1 : 0;
  }
  MetricsReport report;
  report.examples = coverage.size();
  report.soft_satisfaction = static_cast<double>(covered) / static_cast<double>(total);
  report.hard_satisfaction = static_cast<double>(complete) / static_cast<double>(coverage.size());
  return report;
}

MetricsReport constraint_metrics(const std::vector<std::pair<GenerationResult, ConceptSet>>& results,
                                 const Vocabulary& vocab) {
  std::vector<CoverageCount> coverage;
  std::vector<GenerationResult> generations;
  for (const auto& [result, concepts] : results) {
    std::vector<std::string> words;
    for (TokenId t : result.tokens) {
      words.push_back(vocab.token(t));
    }
    coverage.push_back({covered_concepts(words, concepts), concepts.size()});
    generations.push_back(result);
  }
  MetricsReport report = constraint_metrics(coverage);
  CallLedger pooled = pooled_ledger(generations);
  if (pooled.emitted_tokens > 0) {
    apply_accounting(report, pooled, 1.0);
  }
  return report;
}

double reward_satisfaction_rate(std::span<const double> final_rewards, double threshold) {
  if (final_rewards.empty()) {
    throw InputError("reward satisfaction over no examples");
  }
  std::size_t hits = 0;
  for (double r : final_rewards) {
    hits += satisfies(r, threshold) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(final_rewards.size());
}

double reward_satisfaction_rate(std::span<const GenerationResult> results,
                                std::span<const RewardFunction* const> rewards, double threshold) {
  if (results.size() != rewards.size()) {
    throw InputError("one reward function per result is required");
  }
  std::vector<double> scores;
  scores.reserve(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    scores.push_back(rewards[i]->score(results[i].tokens));
  }
  return reward_satisfaction_rate(scores, threshold);
}

CallLedger pooled_ledger(std::span<const GenerationResult> results) {
  CallLedger total;
  for (const auto& r : results) {
    total += r.ledger;
  }
  return total;
}

void apply_accounting(MetricsReport& report, const CallLedger& pooled, double c) {
  if (pooled.emitted_tokens <= 0) {
    throw InputError("no emitted tokens to account for");
  }
  auto tokens = static_cast<double>(pooled.emitted_tokens);
  report.avg_draft_calls_per_token = static_cast<double>(pooled.draft_calls) / tokens;
  report.avg_target_calls_per_token = static_cast<double>(pooled.target_calls) / tokens;
  report.runtime_per_token = runtime_per_token(pooled, c);
}

}  // namespace cdsl
