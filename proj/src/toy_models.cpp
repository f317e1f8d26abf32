// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdsl/toy_models.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cdsl/errors.h"

namespace cdsl {

using nlohmann::json;

ScriptedModel::ScriptedModel(Vocabulary vocab, std::map<TokenSeq, Distribution> table, Distribution fallback,
                             std::string identity)
    : vocab_(std::move(vocab)), table_(std::move(table)), fallback_(std::move(fallback)), identity_(std::move(identity)) {
  if (vocab_.empty()) {
    throw ConfigError("scripted model has an empty vocabulary");
  }
  if (fallback_.size() != vocab_.size()) {
    throw ConfigError("default row size does not match vocabulary");
  }
  for (const auto& [prefix, dist] : table_) {
    check_tokens(vocab_, prefix);
    if (dist.size() != vocab_.size()) {
      throw ConfigError("table row size does not match vocabulary");
    }
  }
}

Distribution ScriptedModel::distribution(std::span<const TokenId> context) const {
  auto it = table_.find(TokenSeq(context.begin(), context.end()));
  return it == table_.end() ? fallback_ : it->second;
}

NgramModel::NgramModel(Vocabulary vocab, int order, double smoothing, std::map<TokenSeq, std::vector<double>> counts,
                       std::string identity)
    : vocab_(std::move(vocab)), order_(order), smoothing_(smoothing), identity_(std::move(identity)) {
  if (vocab_.empty()) {
    throw ConfigError("n-gram model has an empty vocabulary");
  }
  if (order_ < 1) {
    throw ConfigError("n-gram order must be >= 1");
  }
  if (!(smoothing_ > 0.0)) {
    throw ConfigError("n-gram smoothing constant must be > 0");
  }
  for (auto& [context, row] : counts) {
    if (row.size() != vocab_.size()) {
      throw ConfigError("n-gram count row size does not match vocabulary");
    }
    ContextCounts entry;
    entry.total = 0.0;
    for (double c : row) {
      entry.total += c;
    }
    entry.counts = std::move(row);
    if (entry.total > 0.0) {
      contexts_.emplace(context, std::move(entry));
    }
  }
  if (!contexts_.contains(TokenSeq{})) {
    throw InputError("n-gram model has no unigram counts");
  }
}

std::size_t NgramModel::context_length(std::span<const TokenId> prefix) const {
  std::size_t len = std::min(prefix.size(), static_cast<std::size_t>(order_ - 1));
  for (;; --len) {
    TokenSeq context(prefix.end() - static_cast<std::ptrdiff_t>(len), prefix.end());
    if (contexts_.contains(context) || len == 0) {
      return len;
    }
  }
}

Distribution NgramModel::distribution(std::span<const TokenId> context) const {
  std::size_t len = context_length(context);
  const ContextCounts& row = contexts_.at(TokenSeq(context.end() - static_cast<std::ptrdiff_t>(len), context.end()));
  double denom = row.total + smoothing_ * static_cast<double>(vocab_.size());
  std::vector<double> probs(vocab_.size());
  for (std::size_t t = 0; t < probs.size(); ++t) {
    probs[t] = (row.counts[t] + smoothing_) / denom;
  }
  return Distribution::normalized(std::move(probs));
}

NgramModel train_ngram(const Vocabulary& vocab, const std::vector<TokenSeq>& corpus, int order, double smoothing,
                       std::string identity) {
  if (order < 1) {
    throw ConfigError("n-gram order must be >= 1");
  }
  if (!(smoothing > 0.0)) {
    throw ConfigError("n-gram smoothing constant must be > 0");
  }
  bool any = std::any_of(corpus.begin(), corpus.end(), [](const TokenSeq& s) { return !s.empty(); });
  if (!any) {
    throw InputError("n-gram training corpus is empty");
  }
  std::map<TokenSeq, std::vector<double>> counts;
  auto bump = [&](TokenSeq context, TokenId token) {
    auto& row = counts[std::move(context)];
    if (row.empty()) {
      row.assign(vocab.size(), 0.0);
    }
    row[static_cast<std::size_t>(token)] += 1.0;
  };
  for (const TokenSeq& seq : corpus) {
    check_tokens(vocab, seq);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      bump({}, seq[i]);
      std::size_t max_len = std::min(i, static_cast<std::size_t>(order - 1));
      for (std::size_t len = 1; len <= max_len; ++len) {
        bump(TokenSeq(seq.begin() + static_cast<std::ptrdiff_t>(i - len), seq.begin() + static_cast<std::ptrdiff_t>(i)),
             seq[i]);
      }
    }
  }
  if (identity.empty()) {
    identity = "ngram-" + std::to_string(order);
  }
  return NgramModel(vocab, order, smoothing, std::move(counts), std::move(identity));
}

namespace {

Distribution parse_row(const json& row, const Vocabulary& vocab, const std::string& where) {
  if (!row.is_object()) {
    throw LoadError(where + ": row must be an object of token -> probability");
  }
  std::vector<double> probs(vocab.size(), 0.0);
  double sum = 0.0;
  for (const auto& [token, value] : row.items()) {
    auto id = vocab.find(token);
    if (!id) {
      throw LoadError(where + ": unknown token '" + token + "'");
    }
    if (!value.is_number()) {
      throw LoadError(where + ": probability for '" + token + "' is not a number");
    }
    double p = value.get<double>();
    if (!(p >= 0.0 && p <= 1.0)) {
      throw LoadError(where + ": probability for '" + token + "' outside [0,1]");
    }
    probs[static_cast<std::size_t>(*id)] = p;
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    std::ostringstream msg;
    msg << where << ": row sums to " << sum;
    throw LoadError(msg.str());
  }
  if (std::abs(sum - 1.0) > Distribution::kSumTolerance) {
    return Distribution::normalized(std::move(probs));
  }
  return Distribution(std::move(probs));
}

json row_to_json(const Distribution& dist, const Vocabulary& vocab) {
  json row = json::object();
  for (std::size_t t = 0; t < dist.size(); ++t) {
    double p = dist[static_cast<TokenId>(t)];
    if (p > 0.0) {
      row[vocab.token(static_cast<TokenId>(t))] = p;
    }
  }
  return row;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw LoadError("cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

ScriptedModel scripted_from_json_text(const std::string& text, std::string identity) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw LoadError(std::string("malformed scripted model JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("vocab") || !doc["vocab"].is_array()) {
    throw LoadError("scripted model needs a \"vocab\" array");
  }
  if (!doc.contains("default")) {
    throw LoadError("scripted model needs a \"default\" row");
  }
  std::vector<std::string> tokens;
  for (const auto& t : doc["vocab"]) {
    if (!t.is_string()) {
      throw LoadError("vocab entries must be strings");
    }
    tokens.push_back(t.get<std::string>());
  }
  Vocabulary vocab;
  try {
    vocab = Vocabulary(std::move(tokens));
  } catch (const ConfigError& e) {
    throw LoadError(e.what());
  }
  std::map<TokenSeq, Distribution> table;
  if (doc.contains("table")) {
    if (!doc["table"].is_object()) {
      throw LoadError("\"table\" must be an object");
    }
    for (const auto& [key, row] : doc["table"].items()) {
      TokenSeq prefix;
      try {
        prefix = vocab.tokenize(key);
      } catch (const InputError& e) {
        throw LoadError("table key '" + key + "': " + e.what());
      }
      table.emplace(std::move(prefix), parse_row(row, vocab, "table['" + key + "']"));
    }
  }
  Distribution fallback = parse_row(doc["default"], vocab, "default");
  return ScriptedModel(std::move(vocab), std::move(table), std::move(fallback), std::move(identity));
}

ScriptedModel scripted_from_file(const std::filesystem::path& path) {
  return scripted_from_json_text(read_file(path), path.stem().string());
}

std::string scripted_to_json_text(const ScriptedModel& model) {
  const Vocabulary& vocab = model.vocabulary();
  json doc;
  doc["vocab"] = vocab.tokens();
  json table = json::object();
  for (const auto& [prefix, dist] : model.table()) {
    table[vocab.detokenize(prefix)] = row_to_json(dist, vocab);
  }
  doc["table"] = std::move(table);
  doc["default"] = row_to_json(model.fallback(), vocab);
  return doc.dump(2) + "\n";
}

void save_scripted(const ScriptedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw LoadError("cannot write " + path.string());
  }
  out << scripted_to_json_text(model);
}

std::vector<std::vector<std::string>> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw LoadError("cannot open corpus " + path.string());
  }
  std::vector<std::vector<std::string>> sentences;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    std::vector<std::string> sentence;
    std::string w;
    while (words >> w) {
      sentence.push_back(w);
    }
    if (!sentence.empty()) {
      sentences.push_back(std::move(sentence));
    }
  }
  return sentences;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& sentences,
                            const std::vector<std::string>& extra_tokens) {
  std::set<std::string> words(extra_tokens.begin(), extra_tokens.end());
  for (const auto& s : sentences) {
    words.insert(s.begin(), s.end());
  }
  std::vector<std::string> tokens{std::string(kBosToken), std::string(kEosToken), std::string(kSepToken)};
  for (const auto& w : words) {
    if (w != kBosToken && w != kEosToken && w != kSepToken) {
      tokens.push_back(w);
    }
  }
  return Vocabulary(std::move(tokens));
}

std::vector<TokenSeq> encode_sentences(const Vocabulary& vocab, const std::vector<std::vector<std::string>>& sentences) {
  TokenId sep = vocab.id(kSepToken);
  TokenId eos = vocab.id(kEosToken);
  std::vector<TokenSeq> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    TokenSeq seq{sep};
    for (const auto& w : s) {
      seq.push_back(vocab.id(w));
    }
    seq.push_back(eos);
    out.push_back(std::move(seq));
  }
  return out;
}

std::shared_ptr<const LanguageModel> load_model(const std::filesystem::path& path) {
  std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw LoadError(path.string() + ": malformed JSON: " + e.what());
  }
  if (doc.is_object() && doc.value("type", "") == "ngram") {
    try {
      auto corpus_path = std::filesystem::path(doc.at("corpus").get<std::string>());
      if (corpus_path.is_relative()) {
        corpus_path = path.parent_path() / corpus_path;
      }
      int order = doc.at("order").get<int>();
      double smoothing = doc.value("smoothing", 0.1);
      auto extra = doc.value("extra_tokens", std::vector<std::string>{});
      auto sentences = read_corpus(corpus_path);
      Vocabulary vocab = build_vocabulary(sentences, extra);
      return std::make_shared<NgramModel>(
          train_ngram(vocab, encode_sentences(vocab, sentences), order, smoothing, path.stem().string()));
    } catch (const json::exception& e) {
      throw LoadError(path.string() + ": bad n-gram spec: " + e.what());
    }
  }
  return std::make_shared<ScriptedModel>(scripted_from_json_text(text, path.stem().string()));
}

}  // namespace cdsl
