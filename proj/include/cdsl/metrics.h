// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cdsl/decoders.h"
#include "cdsl/lm.h"
#include "cdsl/rewards.h"

namespace cdsl {

// Draft cost per call relative to the target.
struct CostModel {
  double c = 0.077;

  // Throws ConfigError unless c > 0. Returns false when c > 1 (a draft dearer than its target).
  bool validate() const;
};

struct CostPreset {
  std::string_view target;
  std::string_view draft;
  std::string_view task;  // "commongen" or "htg"
  double c;
};

// Measured coefficients for the reference model pairs.
std::span<const CostPreset> cost_presets();
// Looks up "<draft>@<task>", e.g. "opt-125m@commongen" (case-insensitive).
std::optional<double> find_cost_preset(std::string_view name);

// P = c * draft_calls/token + target_calls/token, in target-call equivalents.
double runtime_per_token(const CallLedger& ledger, double c);
double runtime_per_token(double draft_calls_per_token, double target_calls_per_token, double c);

double speedup(double baseline_runtime, double method_runtime);

struct CoverageCount {
  std::size_t covered = 0;
  std::size_t total = 0;
};

struct MetricsReport {
  std::size_t examples = 0;
  double soft_satisfaction = 0.0;
  double hard_satisfaction = 0.0;
  double avg_draft_calls_per_token = 0.0;
  double avg_target_calls_per_token = 0.0;
  double runtime_per_token = 0.0;
  std::optional<double> speedup;
  std::string speedup_baseline;
};

// Soft = covered / total over all examples; hard = share of examples with full coverage.
MetricsReport constraint_metrics(std::span<const CoverageCount> coverage);
MetricsReport constraint_metrics(const std::vector<std::pair<GenerationResult, ConceptSet>>& results,
                                 const Vocabulary& vocab);

// Share of scores at or above the threshold.
double reward_satisfaction_rate(std::span<const double> final_rewards, double threshold);
double reward_satisfaction_rate(std::span<const GenerationResult> results,
                                std::span<const RewardFunction* const> rewards, double threshold);

// Ledger totals pooled over all generations (per-token averages divide pooled sums).
CallLedger pooled_ledger(std::span<const GenerationResult> results);

// Fills the per-token call averages and P from a pooled ledger.
void apply_accounting(MetricsReport& report, const CallLedger& pooled, double c);

}  // namespace cdsl
