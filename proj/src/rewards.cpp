// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdsl/rewards.h"

#include <algorithm>
#include <cctype>
#include <set>

#include "cdsl/errors.h"

namespace cdsl {

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

ConceptSet::ConceptSet(std::vector<std::string> concepts) {
  if (concepts.empty()) {
    throw InputError("concept set is empty");
  }
  std::set<std::string> seen;
  for (auto& c : concepts) {
    c = to_lower(std::move(c));
    if (c.empty()) {
      throw InputError("empty concept");
    }
    if (!seen.insert(c).second) {
      throw InputError("duplicate concept: " + c);
    }
  }
  concepts_ = std::move(concepts);
}

std::size_t covered_concepts(std::span<const std::string> generated, const ConceptSet& concepts) {
  std::set<std::string> present;
  for (const auto& w : generated) {
    present.insert(to_lower(w));
  }
  return static_cast<std::size_t>(std::count_if(concepts.concepts().begin(), concepts.concepts().end(),
                                                [&](const std::string& c) { return present.contains(c); }));
}

double lexical_coverage_reward(std::span<const std::string> generated, const ConceptSet& concepts) {
  return static_cast<double>(covered_concepts(generated, concepts)) / static_cast<double>(concepts.size());
}

double blocklist_reward(std::span<const std::string> generated, const std::vector<std::string>& blocklist) {
  std::set<std::string> blocked;
  for (const auto& b : blocklist) {
    blocked.insert(to_lower(b));
  }
  if (blocked.empty()) {
    throw ConfigError("blocklist is empty");
  }
  std::set<std::string> hits;
  for (const auto& w : generated) {
    auto lw = to_lower(w);
    if (blocked.contains(lw)) {
      hits.insert(lw);
    }
  }
  double score = 1.0 - static_cast<double>(hits.size()) / static_cast<double>(blocked.size());
  return std::clamp(score, 0.0, 1.0);
}

LexicalCoverageReward::LexicalCoverageReward(const Vocabulary& vocab, ConceptSet concepts)
    : concepts_(std::move(concepts)), concept_of_token_(vocab.size(), -1) {
  for (std::size_t t = 0; t < vocab.size(); ++t) {
    auto word = to_lower(vocab.token(static_cast<TokenId>(t)));
    const auto& list = concepts_.concepts();
    auto it = std::find(list.begin(), list.end(), word);
    if (it != list.end()) {
      concept_of_token_[t] = static_cast<int>(it - list.begin());
    }
  }
}

std::size_t LexicalCoverageReward::covered(std::span<const TokenId> generated) const {
  std::vector<bool> hit(concepts_.size(), false);
  std::size_t count = 0;
  for (TokenId t : generated) {
    int c = concept_of_token_.at(static_cast<std::size_t>(t));
    if (c >= 0 && !hit[static_cast<std::size_t>(c)]) {
      hit[static_cast<std::size_t>(c)] = true;
      ++count;
    }
  }
  return count;
}

double LexicalCoverageReward::score(std::span<const TokenId> generated) const {
  return static_cast<double>(covered(generated)) / static_cast<double>(concepts_.size());
}

BlocklistReward::BlocklistReward(const Vocabulary& vocab, std::vector<std::string> blocklist)
    : entry_of_token_(vocab.size(), -1) {
  std::set<std::string> unique;
  for (auto& b : blocklist) {
    unique.insert(to_lower(b));
  }
  if (unique.empty()) {
    throw ConfigError("blocklist is empty");
  }
  blocklist_.assign(unique.begin(), unique.end());
  for (std::size_t t = 0; t < vocab.size(); ++t) {
    auto it = std::find(blocklist_.begin(), blocklist_.end(), to_lower(vocab.token(static_cast<TokenId>(t))));
    if (it != blocklist_.end()) {
      entry_of_token_[t] = static_cast<int>(it - blocklist_.begin());
    }
  }
}

double BlocklistReward::score(std::span<const TokenId> generated) const {
  std::vector<bool> hit(blocklist_.size(), false);
  std::size_t count = 0;
  for (TokenId t : generated) {
    int e = entry_of_token_.at(static_cast<std::size_t>(t));
    if (e >= 0 && !hit[static_cast<std::size_t>(e)]) {
      hit[static_cast<std::size_t>(e)] = true;
      ++count;
    }
  }
  return std::clamp(1.0 - static_cast<double>(count) / static_cast<double>(blocklist_.size()), 0.0, 1.0);
}

}  // namespace cdsl
