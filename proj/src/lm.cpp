// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdsl/lm.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cdsl/errors.h"

namespace cdsl {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) {
    throw ConfigError("vocabulary is empty");
  }
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || tokens_[i].find_first_of(" \t\n\r") != std::string::npos) {
      throw ConfigError("vocabulary token must be a non-empty word: '" + tokens_[i] + "'");
    }
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw ConfigError("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

const std::string& Vocabulary::token(TokenId id) const {
  if (!contains(id)) {
    throw InputError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) {
    return std::nullopt;
  }
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto found = find(token);
  if (!found) {
    throw InputError("unknown token: '" + std::string(token) + "'");
  }
  return *found;
}

TokenSeq Vocabulary::tokenize(std::string_view text) const {
  TokenSeq out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    out.push_back(id(word));
  }
  return out;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) {
      out += ' ';
    }
    out += token(ids[i]);
  }
  return out;
}

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) {
    throw NumericError("distribution over an empty vocabulary");
  }
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw NumericError("probability outside [0,1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "distribution sums to " << sum;
    throw NumericError(msg.str());
  }
}

Distribution Distribution::normalized(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw NumericError("negative or non-finite weight");
    }
    total += w;
  }
  if (!(total > 0.0)) {
    throw NumericError("weights have no mass");
  }
  for (double& w : weights) {
    w /= total;
  }
  return Distribution(std::move(weights));
}

Distribution Distribution::one_hot(std::size_t size, TokenId id) {
  std::vector<double> probs(size, 0.0);
  probs.at(static_cast<std::size_t>(id)) = 1.0;
  return Distribution(std::move(probs));
}

Distribution Distribution::uniform(std::size_t size) {
  return normalized(std::vector<double>(size, 1.0));
}

TokenId Distribution::argmax() const {
  // max_element returns the first maximum, i.e. the lowest id.
  return static_cast<TokenId>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

std::vector<TokenId> Distribution::ranked() const {
  std::vector<TokenId> ids(probs_.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [this](TokenId a, TokenId b) { return (*this)[a] > (*this)[b]; });
  return ids;
}

std::vector<TokenId> Distribution::top_k(std::size_t k) const {
  std::vector<TokenId> ids(probs_.size());
  std::iota(ids.begin(), ids.end(), 0);
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), [this](TokenId a, TokenId b) {
    return (*this)[a] > (*this)[b] || ((*this)[a] == (*this)[b] && a < b);
  });
  ids.resize(k);
  std::erase_if(ids, [this](TokenId id) { return (*this)[id] <= 0.0; });
  return ids;
}

void check_tokens(const Vocabulary& vocab, std::span<const TokenId> ids) {
  if (vocab.empty()) {
    throw ConfigError("model has an empty vocabulary");
  }
  for (TokenId id : ids) {
    if (!vocab.contains(id)) {
      throw InputError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(vocab.size()));
    }
  }
}

void check_same_vocabulary(const LanguageModel& target, const LanguageModel& draft) {
  if (!(target.vocabulary() == draft.vocabulary())) {
    throw ConfigError("draft model '" + draft.identity() + "' and target model '" + target.identity() +
                      "' do not share a vocabulary");
  }
}

Distribution next_distribution(const LanguageModel& model, ModelRole role, std::span<const TokenId> prefix,
                               CallLedger& ledger) {
  check_tokens(model.vocabulary(), prefix);
  ledger.charge(role);
  return model.distribution(prefix);
}

std::vector<Distribution> forward_scores(const LanguageModel& model, ModelRole role,
                                         std::span<const TokenId> prefix, std::span<const TokenId> drafted,
                                         CallLedger& ledger) {
  if (drafted.empty()) {
    throw InputError("forward_scores needs at least one drafted token");
  }
  check_tokens(model.vocabulary(), prefix);
  check_tokens(model.vocabulary(), drafted);
  TokenSeq context(prefix.begin(), prefix.end());
  context.reserve(prefix.size() + drafted.size());
  std::vector<Distribution> out;
  out.reserve(drafted.size());
  for (TokenId token : drafted) {
    out.push_back(model.distribution(context));
    context.push_back(token);
  }
  ledger.charge(role);
  return out;
}

}  // namespace cdsl
