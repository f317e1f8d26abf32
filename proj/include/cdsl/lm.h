// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cdsl {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr std::string_view kBosToken = "<s>";
inline constexpr std::string_view kEosToken = "</s>";
inline constexpr std::string_view kSepToken = "<sep>";

// Closed, word-level vocabulary. Ids are dense in [0, size()).
class Vocabulary {
 public:
  Vocabulary() = default;
  // Throws ConfigError on an empty list or duplicate tokens.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < tokens_.size(); }

  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  // Throws InputError for tokens outside the vocabulary.
  TokenId id(std::string_view token) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<TokenId> bos() const { return find(kBosToken); }
  std::optional<TokenId> eos() const { return find(kEosToken); }
  std::optional<TokenId> sep() const { return find(kSepToken); }

  // Whitespace split; every piece must be a vocabulary token.
  TokenSeq tokenize(std::string_view text) const;
  // Tokens joined by a single space.
  std::string detokenize(std::span<const TokenId> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Probability vector over a vocabulary.
class Distribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  Distribution() = default;
  // Throws NumericError unless entries are in [0,1] and sum to 1 within kSumTolerance.
  explicit Distribution(std::vector<double> probs);
  // Divides by the total mass. Throws NumericError on non-positive mass or negative entries.
  static Distribution normalized(std::vector<double> weights);
  static Distribution one_hot(std::size_t size, TokenId id);
  static Distribution uniform(std::size_t size);

  std::size_t size() const { return probs_.size(); }
  double operator[](TokenId id) const { return probs_[static_cast<std::size_t>(id)]; }
  std::span<const double> probs() const { return probs_; }

  // Lowest id wins ties.
  TokenId argmax() const;
  // Up to k ids with positive probability, by descending probability then ascending id.
  std::vector<TokenId> top_k(std::size_t k) const;
  // Ids sorted by descending probability then ascending id.
  std::vector<TokenId> ranked() const;

  bool operator==(const Distribution& other) const { return probs_ == other.probs_; }

 private:
  std::vector<double> probs_;
};

enum class ModelRole { kDraft, kTarget };

// Raw cost accounting for one generation. Every forward invocation is charged to a role.
struct CallLedger {
  std::int64_t draft_calls = 0;
  std::int64_t target_calls = 0;
  std::int64_t emitted_tokens = 0;

  void charge(ModelRole role, std::int64_t calls = 1) {
    (role == ModelRole::kDraft ? draft_calls : target_calls) += calls;
  }
  CallLedger& operator+=(const CallLedger& other) {
    draft_calls += other.draft_calls;
    target_calls += other.target_calls;
    emitted_tokens += other.emitted_tokens;
    return *this;
  }
  bool operator==(const CallLedger&) const = default;
};

// Deterministic autoregressive model. Implementations are immutable once built and may be
// shared between concurrent generations.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const Vocabulary& vocabulary() const = 0;
  virtual std::string identity() const = 0;

  // Next-token distribution for a validated context. Does not touch any ledger.
  virtual Distribution distribution(std::span<const TokenId> context) const = 0;
};

// One forward call: validates the prefix and charges `role` once.
Distribution next_distribution(const LanguageModel& model, ModelRole role, std::span<const TokenId> prefix,
                               CallLedger& ledger);

// Scores a drafted block in a single forward pass: result[i] is the distribution after
// prefix + drafted[0..i). Returns drafted.size() distributions and charges one call.
std::vector<Distribution> forward_scores(const LanguageModel& model, ModelRole role,
                                         std::span<const TokenId> prefix, std::span<const TokenId> drafted,
                                         CallLedger& ledger);

// Throws InputError naming the first id outside the vocabulary.
void check_tokens(const Vocabulary& vocab, std::span<const TokenId> ids);

// Throws ConfigError unless both models share one vocabulary.
void check_same_vocabulary(const LanguageModel& target, const LanguageModel& draft);

}  // namespace cdsl
