// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cdsl/lm.h"

namespace cdsl {

// Table-driven model: exact lookup on the full prefix, else the default row.
class ScriptedModel final : public LanguageModel {
 public:
  ScriptedModel(Vocabulary vocab, std::map<TokenSeq, Distribution> table, Distribution fallback,
                std::string identity = "scripted");

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::string identity() const override { return identity_; }
  Distribution distribution(std::span<const TokenId> context) const override;

  const std::map<TokenSeq, Distribution>& table() const { return table_; }
  const Distribution& fallback() const { return fallback_; }

 private:
  Vocabulary vocab_;
  std::map<TokenSeq, Distribution> table_;
  Distribution fallback_;
  std::string identity_;
};

// Add-k smoothed n-gram model with stupid-backoff context truncation:
//   P(t | c) = (count(c,t) + k) / (count(c,.) + k|V|)
// where c is the longest suffix of the prefix (at most order-1 tokens) seen in training.
class NgramModel final : public LanguageModel {
 public:
  NgramModel(Vocabulary vocab, int order, double smoothing, std::map<TokenSeq, std::vector<double>> counts,
             std::string identity);

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::string identity() const override { return identity_; }
  Distribution distribution(std::span<const TokenId> context) const override;

  int order() const { return order_; }
  double smoothing() const { return smoothing_; }
  // Number of tokens of the given prefix actually used as context.
  std::size_t context_length(std::span<const TokenId> prefix) const;

 private:
  struct ContextCounts {
    std::vector<double> counts;
    double total = 0.0;
  };

  Vocabulary vocab_;
  int order_;
  double smoothing_;
  std::map<TokenSeq, ContextCounts> contexts_;
  std::string identity_;
};

// Trains on token sequences. Each sequence contributes every k-gram with k <= order.
// Throws InputError on an empty corpus, ConfigError on order < 1 or smoothing <= 0.
NgramModel train_ngram(const Vocabulary& vocab, const std::vector<TokenSeq>& corpus, int order, double smoothing,
                       std::string identity = {});

// Scripted-model JSON: {"vocab": [...], "table": {"<space-joined prefix>": {"<tok>": p}}, "default": {...}}
// Throws LoadError on malformed JSON, unknown tokens, or rows whose mass is off by more than 1e-6.
ScriptedModel scripted_from_file(const std::filesystem::path& path);
ScriptedModel scripted_from_json_text(const std::string& text, std::string identity = "scripted");
std::string scripted_to_json_text(const ScriptedModel& model);
void save_scripted(const ScriptedModel& model, const std::filesystem::path& path);

// One sentence per line, whitespace tokenized. Blank lines are skipped.
std::vector<std::vector<std::string>> read_corpus(const std::filesystem::path& path);

// Specials (<s>, </s>, <sep>) first, then the sorted set of corpus words and extras.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& sentences,
                            const std::vector<std::string>& extra_tokens = {});

// Training sequences are "<sep> w1 ... wm </s>", so a prompt ending in <sep> starts a sentence.
std::vector<TokenSeq> encode_sentences(const Vocabulary& vocab, const std::vector<std::vector<std::string>>& sentences);

// Loads either a scripted JSON model or an n-gram spec:
//   {"type": "ngram", "order": 4, "smoothing": 0.1, "corpus": "corpus.txt", "extra_tokens": [...]}
// Relative corpus paths resolve against the spec file's directory.
std::shared_ptr<const LanguageModel> load_model(const std::filesystem::path& path);

}  // namespace cdsl
