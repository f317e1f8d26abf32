// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdsl/harness.h"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "cdsl/errors.h"
#include "cdsl/toy_models.h"

namespace cdsl {

using nlohmann::json;

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kGreedy:
      return "greedy";
    case Method::kNucleus:
      return "nucleus";
    case Method::kBeam:
      return "beam";
    case Method::kSpeculative:
      return "sd";
    case Method::kCdlh:
      return "cdlh";
    case Method::kCdlhAppx:
      return "cdlh-appx";
    case Method::kCdsl:
      return "cdsl";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kGreedy, Method::kNucleus, Method::kBeam, Method::kSpeculative, Method::kCdlh,
                   Method::kCdlhAppx, Method::kCdsl}) {
    if (to_string(m) == name) {
      return m;
    }
  }
  throw ConfigError("unknown method: " + std::string(name));
}

bool needs_draft(Method method) {
  return method == Method::kSpeculative || method == Method::kCdlhAppx || method == Method::kCdsl;
}

std::string_view to_string(TaskKind kind) { return kind == TaskKind::kLexical ? "lexical" : "semantic"; }

TaskKind parse_task_kind(std::string_view name) {
  if (name == "lexical") {
    return TaskKind::kLexical;
  }
  if (name == "semantic") {
    return TaskKind::kSemantic;
  }
  throw ConfigError("unknown task kind: " + std::string(name));
}

json to_json(const TaskExample& example) {
  json doc;
  doc["id"] = example.id;
  doc["prompt"] = example.prompt;
  if (!example.concepts.empty()) {
    doc["concepts"] = example.concepts;
  }
  if (!example.blocklist.empty()) {
    doc["blocklist"] = example.blocklist;
  }
  return doc;
}

TaskExample example_from_json(const json& doc) {
  TaskExample ex;
  try {
    ex.id = doc.at("id").get<std::string>();
    ex.prompt = doc.at("prompt").get<std::string>();
    ex.concepts = doc.value("concepts", std::vector<std::string>{});
    ex.blocklist = doc.value("blocklist", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw LoadError(std::string("bad dataset line: ") + e.what());
  }
  if (ex.concepts.empty() && ex.blocklist.empty()) {
    throw LoadError("example " + ex.id + " has neither concepts nor a blocklist");
  }
  return ex;
}

std::vector<TaskExample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw LoadError("cannot open dataset " + path.string());
  }
  std::vector<TaskExample> out;
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw LoadError(path.string() + ": malformed JSONL: " + e.what());
    }
    out.push_back(example_from_json(doc));
    if (!ids.insert(out.back().id).second) {
      throw LoadError(path.string() + ": duplicate example id " + out.back().id);
    }
  }
  if (out.empty()) {
    throw LoadError(path.string() + ": dataset is empty");
  }
  return out;
}

std::string dataset_to_jsonl(const std::vector<TaskExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += to_json(ex).dump();
    out += '\n';
  }
  return out;
}

void write_dataset(const std::vector<TaskExample>& examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw LoadError("cannot write " + path.string());
  }
  out << dataset_to_jsonl(examples);
}

// ---- toy task generation --------------------------------------------------

namespace {

const std::vector<std::string> kPeople{"man", "woman", "boy", "girl", "cook", "farmer"};
const std::vector<std::string> kAnimals{"dog", "cat", "horse"};
const std::vector<std::string> kVerbs{"throws", "kicks", "holds", "cooks", "reads",
                                      "washes", "paints", "carries", "finds", "catches"};
const std::vector<std::string> kObjects{"ball", "pan", "book", "car", "hat", "bike", "apple", "stew", "fish", "kite"};
const std::vector<std::string> kPlaces{"park", "field", "kitchen", "river", "garden", "street", "beach"};
const std::vector<std::string> kAdjectives{"red", "big", "small", "old", "happy"};
const std::vector<std::string> kMotions{"runs", "sits", "sleeps", "jumps", "walks", "swims"};
const std::vector<std::string> kHarmVerbs{"steal", "hurt", "kill", "poison"};

class Picker {
 public:
  explicit Picker(std::uint64_t seed) : engine_(seed) {}
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  const std::string& pick(const std::vector<std::string>& words) { return words[index(words.size())]; }
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

std::string subject(Picker& p) { return p.unit() < 0.7 ? p.pick(kPeople) : p.pick(kAnimals); }

std::string harmful_sentence(Picker& p) {
  std::string s = subject(p);
  switch (p.index(3)) {
    case 0:
      return "the " + s + " wants to steal the " + p.pick(kObjects);
    case 1:
      return "the " + s + " will hurt the " + subject(p) + " with a weapon";
    default:
      return "the " + s + " wants to " + p.pick(kHarmVerbs) + " the " + p.pick(kPeople);
  }
}

std::string benign_sentence(Picker& p) {
  std::string s = subject(p);
  switch (p.index(7)) {
    case 0:
      return "the " + s + " " + p.pick(kVerbs) + " the " + p.pick(kObjects) + " in the " + p.pick(kPlaces);
    case 1:
      return "the " + s + " " + p.pick(kVerbs) + " a " + p.pick(kAdjectives) + " " + p.pick(kObjects);
    case 2:
      return "the " + s + " " + p.pick(kMotions) + " in the " + p.pick(kPlaces);
    case 3:
      return "a " + p.pick(kAdjectives) + " " + s + " " + p.pick(kMotions) + " near the " + p.pick(kPlaces);
    case 4:
      return "the " + s + " " + p.pick(kVerbs) + " " + (p.unit() < 0.5 ? "his " : "her ") + p.pick(kObjects) +
             " and " + p.pick(kMotions) + " to the " + p.pick(kPlaces);
    case 5:
      return "the " + s + " " + p.pick(kVerbs) + " the " + p.pick(kObjects) + " with the " + p.pick(kObjects);
    default:
      return "the " + s + " " + p.pick(kMotions) + " with the " + subject(p) + " on the " + p.pick(kPlaces);
  }
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) {
    out.push_back(w);
  }
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) {
      out += ' ';
    }
    out += w;
  }
  return out;
}

}  // namespace

const std::vector<std::string>& toy_content_words() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> all;
    for (const auto* list : {&kPeople, &kAnimals, &kVerbs, &kObjects, &kPlaces, &kAdjectives, &kMotions}) {
      all.insert(all.end(), list->begin(), list->end());
    }
    return all;
  }();
  return words;
}

const std::vector<std::string>& toy_blocklist() {
  static const std::vector<std::string> words{"steal", "hurt", "kill", "poison", "weapon"};
  return words;
}

const std::vector<std::string>& toy_prompt_words() {
  static const std::vector<std::string> words{"concepts", "reply"};
  return words;
}

std::vector<std::string> toy_extra_tokens() {
  std::vector<std::string> extra = toy_prompt_words();
  extra.insert(extra.end(), toy_content_words().begin(), toy_content_words().end());
  extra.insert(extra.end(), toy_blocklist().begin(), toy_blocklist().end());
  return extra;
}

std::vector<std::string> generate_toy_corpus(std::uint64_t seed, std::size_t n_sentences) {
  Picker p(seed);
  std::vector<std::string> out;
  out.reserve(n_sentences);
  for (std::size_t i = 0; i < n_sentences; ++i) {
    out.push_back(p.unit() < 0.1 ? harmful_sentence(p) : benign_sentence(p));
  }
  return out;
}

std::vector<TaskExample> generate_toy_dataset(std::uint64_t seed, std::size_t n_examples,
                                              std::size_t concepts_per_example, std::string_view split,
                                              TaskKind kind) {
  if (n_examples == 0) {
    throw ConfigError("dataset needs at least one example");
  }
  const auto& content = toy_content_words();
  if (kind == TaskKind::kLexical && (concepts_per_example == 0 || concepts_per_example > content.size())) {
    throw ConfigError("concepts per example must be in [1, " + std::to_string(content.size()) + "]");
  }
  const std::set<std::string> eligible(content.begin(), content.end());
  Picker p(seed);
  std::vector<TaskExample> out;
  out.reserve(n_examples);
  for (std::size_t i = 0; i < n_examples; ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%.*s-%04zu", static_cast<int>(split.size()), split.data(), i);
    TaskExample ex;
    ex.id = id;
    if (kind == TaskKind::kLexical) {
      // Concepts come from a reference sentence, so every example is satisfiable.
      std::vector<std::string> pool;
      for (const auto& w : split_words(benign_sentence(p))) {
        if (eligible.contains(w) && std::find(pool.begin(), pool.end(), w) == pool.end()) {
          pool.push_back(w);
        }
      }
      for (std::size_t j = pool.size(); j > 1; --j) {
        std::swap(pool[j - 1], pool[p.index(j)]);
      }
      while (pool.size() < concepts_per_example) {
        const auto& w = p.pick(content);
        if (std::find(pool.begin(), pool.end(), w) == pool.end()) {
          pool.push_back(w);
        }
      }
      pool.resize(concepts_per_example);
      ex.concepts = pool;
      ex.prompt = "<s> concepts " + join(pool) + " <sep>";
    } else {
      auto words = split_words(p.unit() < 0.5 ? harmful_sentence(p) : benign_sentence(p));
      words.resize(2);
      ex.blocklist = toy_blocklist();
      ex.prompt = "<s> reply <sep> " + join(words);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

// ---- experiments ------------------------------------------------------------

void ExperimentConfig::validate() const {
  cdsl.validate();
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw ConfigError("nucleus p must be in (0, 1]");
  }
  if (beam_width < 1) {
    throw ConfigError("beam width must be >= 1");
  }
  CostModel{c}.validate();
  if (threads < 1) {
    throw ConfigError("threads must be >= 1");
  }
}

namespace {

double parse_cost(const json& value) {
  if (value.is_number()) {
    return value.get<double>();
  }
  if (value.is_string()) {
    auto name = value.get<std::string>();
    if (auto preset = find_cost_preset(name)) {
      return *preset;
    }
    try {
      std::size_t used = 0;
      double c = std::stod(name, &used);
      if (used == name.size()) {
        return c;
      }
    } catch (const std::exception&) {
    }
    throw ConfigError("unknown cost coefficient or preset: " + name);
  }
  throw ConfigError("c must be a number or a preset name");
}

}  // namespace

void apply_config_json(ExperimentConfig& config, const json& doc) {
  if (!doc.is_object()) {
    throw ConfigError("experiment config must be a JSON object");
  }
  try {
    if (doc.contains("method")) config.method = parse_method(doc["method"].get<std::string>());
    if (doc.contains("target")) config.target_path = doc["target"].get<std::string>();
    if (doc.contains("draft")) config.draft_path = doc["draft"].get<std::string>();
    if (doc.contains("data")) config.data_path = doc["data"].get<std::string>();
    if (doc.contains("out")) config.out_dir = doc["out"].get<std::string>();
    if (doc.contains("d")) {
      config.d_set = !(doc["d"].is_string() && doc["d"].get<std::string>() == "auto");
      if (config.d_set) {
        config.cdsl.d = doc["d"].get<int>();
      }
    }
    if (doc.contains("k")) config.cdsl.k = doc["k"].get<int>();
    if (doc.contains("b")) config.cdsl.b = doc["b"].get<int>();
    if (doc.contains("a_t")) config.cdsl.a_t = doc["a_t"].get<double>();
    if (doc.contains("r_t")) config.cdsl.r_t = doc["r_t"].get<double>();
    if (doc.contains("l_m")) config.cdsl.l_m = doc["l_m"].get<int>();
    if (doc.contains("mode")) config.cdsl.mode = parse_verification_mode(doc["mode"].get<std::string>());
    if (doc.contains("emit_replacement_in_cdsl"))
      config.cdsl.emit_replacement_in_cdsl = doc["emit_replacement_in_cdsl"].get<bool>();
    if (doc.contains("keep_prefix_on_low_acceptance"))
      config.cdsl.keep_prefix_on_low_acceptance = doc["keep_prefix_on_low_acceptance"].get<bool>();
    if (doc.contains("p")) config.top_p = doc["p"].get<double>();
    if (doc.contains("beam_width")) config.beam_width = doc["beam_width"].get<int>();
    if (doc.contains("c")) config.c = parse_cost(doc["c"]);
    if (doc.contains("seed")) config.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("threads")) config.threads = doc["threads"].get<unsigned>();
    if (doc.contains("satisfaction_threshold"))
      config.satisfaction_threshold = doc["satisfaction_threshold"].get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
}

json to_json(const ExperimentConfig& config) {
  json doc;
  doc["method"] = std::string(to_string(config.method));
  doc["target"] = config.target_path;
  doc["draft"] = config.draft_path;
  doc["data"] = config.data_path;
  doc["d"] = config.d_set ? json(config.cdsl.d) : json("auto");
  doc["k"] = config.cdsl.k;
  doc["b"] = config.cdsl.b;
  doc["a_t"] = config.cdsl.a_t;
  doc["r_t"] = config.cdsl.r_t;
  doc["l_m"] = config.cdsl.l_m;
  doc["mode"] = std::string(to_string(config.cdsl.mode));
  doc["emit_replacement_in_cdsl"] = config.cdsl.emit_replacement_in_cdsl;
  doc["keep_prefix_on_low_acceptance"] = config.cdsl.keep_prefix_on_low_acceptance;
  doc["p"] = config.top_p;
  doc["beam_width"] = config.beam_width;
  doc["c"] = config.c;
  doc["seed"] = config.seed;
  doc["satisfaction_threshold"] = config.satisfaction_threshold;
  return doc;
}

int default_draft_length(TaskKind kind) { return kind == TaskKind::kLexical ? 3 : 5; }

std::unique_ptr<RewardFunction> make_reward(const TaskExample& example, const Vocabulary& vocab) {
  if (example.kind() == TaskKind::kLexical) {
    return std::make_unique<LexicalCoverageReward>(vocab, ConceptSet(example.concepts));
  }
  return std::make_unique<BlocklistReward>(vocab, example.blocklist);
}

GenerationResult run_method(const ExperimentConfig& config, const ModelPair& models, const TaskExample& example,
                            const RewardFunction& reward, std::span<const TokenId> prompt, RngStream& rng) {
  CdslConfig cfg = config.cdsl;
  if (!config.d_set) {
    cfg.d = default_draft_length(example.kind());
  }
  const LanguageModel& target = *models.target;
  if (needs_draft(config.method) && !models.draft) {
    throw ConfigError(std::string(to_string(config.method)) + " needs a draft model");
  }
  switch (config.method) {
    case Method::kGreedy:
      return decode_greedy(target, prompt, cfg.l_m);
    case Method::kNucleus:
      return decode_nucleus(target, prompt, config.top_p, cfg.l_m, rng);
    case Method::kBeam:
      return decode_beam(target, prompt, config.beam_width, cfg.l_m);
    case Method::kSpeculative:
      return decode_speculative(target, *models.draft, prompt, cfg.d, cfg.l_m, cfg.mode, rng);
    case Method::kCdlh:
      return decode_cdlh(target, reward, prompt, cfg.d, cfg.k, cfg.l_m);
    case Method::kCdlhAppx:
      return decode_cdlh_appx(target, *models.draft, reward, prompt, cfg.d, cfg.k, cfg.l_m);
    case Method::kCdsl:
      return decode_cdsl(target, *models.draft, reward, prompt, cfg, rng);
  }
  throw InternalError("unhandled method");
}

ModelPair load_models(const ExperimentConfig& config) {
  if (config.target_path.empty()) {
    throw ConfigError("no target model given");
  }
  ModelPair models;
  models.target = load_model(config.target_path);
  if (needs_draft(config.method)) {
    if (config.draft_path.empty()) {
      throw ConfigError(std::string(to_string(config.method)) + " needs a draft model");
    }
    models.draft = load_model(config.draft_path);
    check_same_vocabulary(*models.target, *models.draft);
  }
  return models;
}

ModelPair train_toy_models(const std::vector<std::string>& corpus_lines) {
  std::vector<std::vector<std::string>> sentences;
  for (const auto& line : corpus_lines) {
    auto words = split_words(line);
    if (!words.empty()) {
      sentences.push_back(std::move(words));
    }
  }
  Vocabulary vocab = build_vocabulary(sentences, toy_extra_tokens());
  auto encoded = encode_sentences(vocab, sentences);
  ModelPair models;
  models.target = std::make_shared<NgramModel>(train_ngram(vocab, encoded, kToyTargetOrder, kToySmoothing, "target"));
  models.draft = std::make_shared<NgramModel>(train_ngram(vocab, encoded, kToyDraftOrder, kToySmoothing, "draft"));
  return models;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ModelPair& models,
                                const std::vector<TaskExample>& dataset) {
  config.validate();
  if (!models.target) {
    throw ConfigError("no target model");
  }
  if (dataset.empty()) {
    throw InputError("empty dataset");
  }
  if (models.draft) {
    check_same_vocabulary(*models.target, *models.draft);
  }
  const Vocabulary& vocab = models.target->vocabulary();

  std::vector<GenerationResult> generations(dataset.size());
  std::vector<ExampleOutcome> outcomes(dataset.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= dataset.size()) {
        return;
      }
      try {
        const TaskExample& ex = dataset[i];
        auto reward = make_reward(ex, vocab);
        TokenSeq prompt = vocab.tokenize(ex.prompt);
        RngStream rng = RngStream::for_example(config.seed, ex.id);
        GenerationResult gen = run_method(config, models, ex, *reward, prompt, rng);

        ExampleOutcome& out = outcomes[i];
        out.id = ex.id;
        out.text = vocab.detokenize(gen.tokens);
        out.ledger = gen.ledger;
        out.terminated_by = gen.terminated_by == Termination::kEos ? "eos" : "length-limit";
        out.reward = reward->score(gen.tokens);
        if (ex.kind() == TaskKind::kLexical) {
          out.covered = static_cast<const LexicalCoverageReward&>(*reward).covered(gen.tokens);
          out.total = ex.concepts.size();
        }
        for (const auto& t : gen.traces) {
          ++out.states[std::string(to_string(t.state))];
        }
        generations[i] = std::move(gen);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) {
          error = std::current_exception();
        }
        next.store(dataset.size());
        return;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    unsigned n_threads = std::min<unsigned>(config.threads, static_cast<unsigned>(dataset.size()));
    for (unsigned t = 1; t < n_threads; ++t) {
      pool.emplace_back(worker);
    }
    worker();
  }
  if (error) {
    std::rethrow_exception(error);
  }

  ExperimentResult result;
  result.method = std::string(to_string(config.method));
  result.target = models.target->identity();
  result.draft = needs_draft(config.method) && models.draft ? models.draft->identity() : "";
  result.task = dataset.front().kind();
  result.c = config.c;
  result.config = to_json(config);

  std::vector<CoverageCount> coverage;
  std::vector<double> rewards;
  for (const auto& out : outcomes) {
    if (out.total > 0) {
      coverage.push_back({out.covered, out.total});
    }
    rewards.push_back(out.reward);
    for (const auto& [state, count] : out.states) {
      result.states[state] += count;
    }
  }
  if (!coverage.empty()) {
    result.metrics = constraint_metrics(coverage);
  }
  result.metrics.examples = dataset.size();
  result.satisfaction_rate = reward_satisfaction_rate(rewards, config.satisfaction_threshold);
  result.pooled = pooled_ledger(generations);
  apply_accounting(result.metrics, result.pooled, config.c);
  result.examples = std::move(outcomes);
  result.generations = std::move(generations);
  return result;
}

json report_to_json(const ExperimentResult& result) {
  json doc;
  doc["method"] = result.method;
  doc["target"] = result.target;
  doc["draft"] = result.draft;
  doc["task"] = std::string(to_string(result.task));
  doc["c"] = result.c;
  doc["examples"] = result.metrics.examples;
  doc["emitted_tokens"] = result.pooled.emitted_tokens;
  doc["draft_calls"] = result.pooled.draft_calls;
  doc["target_calls"] = result.pooled.target_calls;
  doc["avg_draft_calls_per_token"] = result.metrics.avg_draft_calls_per_token;
  doc["avg_target_calls_per_token"] = result.metrics.avg_target_calls_per_token;
  doc["runtime_per_token"] = result.metrics.runtime_per_token;
  if (result.task == TaskKind::kLexical) {
    doc["soft_satisfaction"] = result.metrics.soft_satisfaction;
    doc["hard_satisfaction"] = result.metrics.hard_satisfaction;
  }
  doc["satisfaction_rate"] = result.satisfaction_rate;
  std::int64_t drafted = 0;
  std::int64_t accepted = 0;
  for (const auto& g : result.generations) {
    drafted += g.drafted_tokens;
    accepted += g.accepted_tokens;
  }
  if (drafted > 0) {
    doc["acceptance_rate"] = static_cast<double>(accepted) / static_cast<double>(drafted);
  }
  doc["state_histogram"] = result.states;
  doc["config"] = result.config;
  return doc;
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "report.json", std::ios::binary);
    if (!out) {
      throw LoadError("cannot write " + (out_dir / "report.json").string());
    }
    out << report_to_json(result).dump(2) << '\n';
  }
  std::ofstream out(out_dir / "examples.jsonl", std::ios::binary);
  if (!out) {
    throw LoadError("cannot write " + (out_dir / "examples.jsonl").string());
  }
  for (const auto& ex : result.examples) {
    json line;
    line["id"] = ex.id;
    line["output"] = ex.text;
    line["emitted_tokens"] = ex.ledger.emitted_tokens;
    line["draft_calls"] = ex.ledger.draft_calls;
    line["target_calls"] = ex.ledger.target_calls;
    line["terminated_by"] = ex.terminated_by;
    line["reward"] = ex.reward;
    if (ex.total > 0) {
      line["covered"] = ex.covered;
      line["concepts"] = ex.total;
    }
    if (!ex.states.empty()) {
      line["states"] = ex.states;
    }
    out << line.dump() << '\n';
  }
}

// ---- grid search ------------------------------------------------------------

GridSearchSpec GridSearchSpec::defaults(TaskKind kind) {
  if (kind == TaskKind::kLexical) {
    return {{0.3, 0.6, 0.9}, {0.3, 0.5, 0.6, 0.9}, {0, 1, 2}};
  }
  return {{0.3, 0.4, 0.6, 0.8}, {0.05, 0.1, 0.15, 0.2, 0.3, 0.4}, {0, 1, 2}};
}

std::vector<GridPoint> GridSearchSpec::points() const {
  std::vector<GridPoint> out;
  for (double a : a_t) {
    for (double r : r_t) {
      for (int bb : b) {
        out.push_back({a, r, bb});
      }
    }
  }
  return out;
}

GridRow select_hyperparameters(std::span<const GridRow> rows) {
  if (rows.empty()) {
    throw ConfigError("hyperparameter grid is empty");
  }
  std::vector<GridRow> ranked(rows.begin(), rows.end());
  std::sort(ranked.begin(), ranked.end(), [](const GridRow& x, const GridRow& y) {
    if (x.speedup != y.speedup) {
      return x.speedup > y.speedup;
    }
    return x.params < y.params;
  });
  ranked.resize(std::min(ranked.size(), kGridShortlist));
  const GridRow* best = &ranked.front();
  for (const auto& row : ranked) {
    // The shortlist is already ordered by speedup then parameters, so strict > settles ties.
    if (row.hard > best->hard) {
      best = &row;
    }
  }
  return *best;
}

GridResult grid_search(const GridSearchSpec& spec, const std::function<GridRow(const GridPoint&)>& evaluate) {
  auto points = spec.points();
  if (points.empty()) {
    throw ConfigError("hyperparameter grid is empty");
  }
  GridResult result;
  for (const auto& point : points) {
    GridRow row = evaluate(point);
    row.params = point;
    result.rows.push_back(row);
  }
  result.selected = select_hyperparameters(result.rows);
  return result;
}

GridResult run_grid(const ExperimentConfig& base, const GridSearchSpec& spec, const ModelPair& models,
                    const std::vector<TaskExample>& validation) {
  ExperimentConfig baseline = base;
  baseline.method = Method::kCdlh;
  const double baseline_runtime = run_experiment(baseline, models, validation).metrics.runtime_per_token;
  const bool lexical = validation.front().kind() == TaskKind::kLexical;

  GridResult result = grid_search(spec, [&](const GridPoint& point) {
    ExperimentConfig cfg = base;
    cfg.method = Method::kCdsl;
    cfg.cdsl.a_t = point.a_t;
    cfg.cdsl.r_t = point.r_t;
    cfg.cdsl.b = point.b;
    ExperimentResult run = run_experiment(cfg, models, validation);
    GridRow row;
    row.runtime_per_token = run.metrics.runtime_per_token;
    row.speedup = speedup(baseline_runtime, row.runtime_per_token);
    row.soft = lexical ? run.metrics.soft_satisfaction : run.satisfaction_rate;
    row.hard = lexical ? run.metrics.hard_satisfaction : run.satisfaction_rate;
    row.draft_calls_per_token = run.metrics.avg_draft_calls_per_token;
    row.target_calls_per_token = run.metrics.avg_target_calls_per_token;
    return row;
  });
  result.baseline_runtime = baseline_runtime;
  return result;
}

namespace {

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string grid_to_csv(const GridResult& result) {
  std::ostringstream out;
  out << "a_t,r_t,b,speedup,runtime_per_token,draft_calls_per_token,target_calls_per_token,soft,hard,selected\n";
  for (const auto& row : result.rows) {
    out << fmt_num(row.params.a_t) << ',' << fmt_num(row.params.r_t) << ',' << row.params.b << ','
        << fmt_num(row.speedup) << ',' << fmt_num(row.runtime_per_token) << ','
        << fmt_num(row.draft_calls_per_token) << ',' << fmt_num(row.target_calls_per_token) << ','
        << fmt_num(row.soft) << ',' << fmt_num(row.hard) << ','
        << (row.params == result.selected.params ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string reports_to_csv(const std::vector<json>& reports, std::string_view baseline_method) {
  std::optional<double> baseline;
  for (const auto& r : reports) {
    if (r.value("method", "") == baseline_method) {
      baseline = r.at("runtime_per_token").get<double>();
      break;
    }
  }
  std::ostringstream out;
  out << "method,target,draft,task,c,speedup,draft_calls_per_token,target_calls_per_token,runtime_per_token,"
         "soft,hard,satisfaction_rate\n";
  for (const auto& r : reports) {
    double p = r.at("runtime_per_token").get<double>();
    out << r.value("method", "") << ',' << r.value("target", "") << ',' << r.value("draft", "") << ','
        << r.value("task", "") << ',' << fmt_num(r.value("c", 0.0)) << ','
        << (baseline ? fmt_num(speedup(*baseline, p)) : "") << ','
        << fmt_num(r.value("avg_draft_calls_per_token", 0.0)) << ','
        << fmt_num(r.value("avg_target_calls_per_token", 0.0)) << ',' << fmt_num(p) << ','
        << (r.contains("soft_satisfaction") ? fmt_num(r["soft_satisfaction"].get<double>()) : "") << ','
        << (r.contains("hard_satisfaction") ? fmt_num(r["hard_satisfaction"].get<double>()) : "") << ','
        << fmt_num(r.value("satisfaction_rate", 0.0)) << '\n';
  }
  return out.str();
}

}  // namespace cdsl
