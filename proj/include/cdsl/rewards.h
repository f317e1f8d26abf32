// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "cdsl/lm.h"

namespace cdsl {

// Scores constraint satisfaction of generated text. The prompt never contributes;
// callers pass only the generated suffix (including any lookahead being evaluated).
class RewardFunction {
 public:
  virtual ~RewardFunction() = default;
  virtual double score(std::span<const TokenId> generated) const = 0;
};

// Non-empty set of distinct lowercase concept words.
class ConceptSet {
 public:
  // Lowercases each entry. Throws InputError when empty or when two entries collide.
  explicit ConceptSet(std::vector<std::string> concepts);

  std::size_t size() const { return concepts_.size(); }
  const std::vector<std::string>& concepts() const { return concepts_; }

 private:
  std::vector<std::string> concepts_;
};

std::string to_lower(std::string s);

// Fraction of distinct concepts present in `generated` by exact lowercase token match.
double lexical_coverage_reward(std::span<const std::string> generated, const ConceptSet& concepts);
// Number of distinct concepts present.
std::size_t covered_concepts(std::span<const std::string> generated, const ConceptSet& concepts);

// 1 - (distinct blocklisted tokens present) / |blocklist|. Throws ConfigError on an empty blocklist.
double blocklist_reward(std::span<const std::string> generated, const std::vector<std::string>& blocklist);

inline bool satisfies(double score, double threshold) { return score >= threshold; }

// Token-id front ends over a fixed vocabulary. Concept and blocklist words missing from the
// vocabulary can never be produced, so they simply never match.
class LexicalCoverageReward final : public RewardFunction {
 public:
  LexicalCoverageReward(const Vocabulary& vocab, ConceptSet concepts);
  double score(std::span<const TokenId> generated) const override;
  std::size_t covered(std::span<const TokenId> generated) const;
  const ConceptSet& concepts() const { return concepts_; }

 private:
  ConceptSet concepts_;
  std::vector<int> concept_of_token_;  // concept index per token id, -1 if none
};

class BlocklistReward final : public RewardFunction {
 public:
  BlocklistReward(const Vocabulary& vocab, std::vector<std::string> blocklist);
  double score(std::span<const TokenId> generated) const override;

 private:
  std::vector<std::string> blocklist_;
  std::vector<int> entry_of_token_;
};

}  // namespace cdsl
