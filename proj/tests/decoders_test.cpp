// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "cdsl/decoders.h"
#include "cdsl/errors.h"
#include "support/random_models.h"

namespace cdsl {
namespace {

using testing::chain_model;
using testing::random_scripted_pair;

LexicalCoverageReward concept_reward(const Vocabulary& v, std::vector<std::string> concepts) {
  return LexicalCoverageReward(v, ConceptSet(std::move(concepts)));
}

TEST(GreedyTest, ChainChargesTheEosCall) {
  Vocabulary v({"</s>", "A", "B"});
  ScriptedModel m = chain_model(v, {{{}, 1}, {{1}, 2}}, 0);
  auto r = decode_greedy(m, TokenSeq{}, 10);
  EXPECT_EQ(r.tokens, (TokenSeq{1, 2}));
  EXPECT_EQ(r.ledger.target_calls, 3);
  EXPECT_EQ(r.ledger.draft_calls, 0);
  EXPECT_EQ(r.terminated_by, Termination::kEos);
}

TEST(GreedyTest, LengthLimitOfOne) {
  Vocabulary v({"</s>", "A"});
  ScriptedModel m = chain_model(v, {}, 1);
  auto r = decode_greedy(m, TokenSeq{}, 1);
  EXPECT_EQ(r.tokens, (TokenSeq{1}));
  EXPECT_EQ(r.ledger.target_calls, 1);
  EXPECT_EQ(r.terminated_by, Termination::kLengthLimit);
  EXPECT_THROW(decode_greedy(m, TokenSeq{}, 0), ConfigError);
}

TEST(GreedyTest, OneTargetCallPerToken) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto pair = random_scripted_pair(seed);
    auto r = decode_greedy(*pair.target, pair.prompt, 40);
    EXPECT_EQ(r.ledger.target_calls, r.ledger.emitted_tokens);
    EXPECT_LE(r.tokens.size(), 40u);
  }
}

TEST(NucleusTest, HandAccumulatedSets) {
  Distribution d({0.6, 0.3, 0.1});
  EXPECT_EQ(nucleus_set(d, 0.5), (std::vector<TokenId>{0}));
  EXPECT_EQ(nucleus_set(d, 0.9), (std::vector<TokenId>{0, 1}));
  EXPECT_EQ(nucleus_set(d, 1.0), (std::vector<TokenId>{0, 1, 2}));
  EXPECT_THROW(nucleus_set(d, 0.0), ConfigError);
}

TEST(NucleusTest, SmallNucleusIsDeterministic) {
  Vocabulary v({"</s>", "A", "B", "C"});
  ScriptedModel m(v, {}, Distribution({0.0, 0.6, 0.3, 0.1}));
  RngStream rng(1);
  auto r = decode_nucleus(m, TokenSeq{}, 0.5, 5, rng);
  EXPECT_EQ(r.tokens, (TokenSeq{1, 1, 1, 1, 1}));
  EXPECT_EQ(r.ledger.target_calls, 5);
}

TEST(NucleusTest, RenormalizedSampling) {
  Vocabulary v({"</s>", "A", "B", "C"});
  ScriptedModel m(v, {}, Distribution({0.0, 0.6, 0.3, 0.1}));
  RngStream rng(2);
  std::vector<double> counts(4, 0.0);
  const int trials = 30000;
  for (int i = 0; i < trials; ++i) {
    auto r = decode_nucleus(m, TokenSeq{}, 0.9, 1, rng);
    counts[static_cast<std::size_t>(r.tokens.at(0))] += 1.0;
  }
  EXPECT_EQ(counts[3], 0.0);
  EXPECT_NEAR(counts[1] / trials, 2.0 / 3.0, 0.01);
  EXPECT_NEAR(counts[2] / trials, 1.0 / 3.0, 0.01);
}

TEST(NucleusTest, SeededRunsRepeat) {
  auto pair = random_scripted_pair(9);
  RngStream a(5);
  RngStream b(5);
  EXPECT_EQ(decode_nucleus(*pair.target, pair.prompt, 0.8, 20, a).tokens,
            decode_nucleus(*pair.target, pair.prompt, 0.8, 20, b).tokens);
}

// Exhaustive search over all finished paths up to max_len tokens, scored by log-prob per token
// (EOS included).
TokenSeq best_path_oracle(const LanguageModel& m, int max_len) {
  TokenSeq best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::function<void(TokenSeq&, double)> walk = [&](TokenSeq& path, double logp) {
    Distribution d = m.distribution(path);
    for (TokenId t = 0; t < static_cast<TokenId>(d.size()); ++t) {
      if (d[t] <= 0.0) {
        continue;
      }
      double lp = logp + std::log(d[t]);
      if (t == 0) {
        double score = lp / static_cast<double>(path.size() + 1);
        if (score > best_score) {
          best_score = score;
          best = path;
        }
      } else if (static_cast<int>(path.size()) + 1 < max_len) {
        path.push_back(t);
        walk(path, lp);
        path.pop_back();
      }
    }
  };
  TokenSeq root;
  walk(root, 0.0);
  return best;
}

TEST(BeamTest, FindsBranchGreedyMisses) {
  Vocabulary v({"</s>", "A", "B", "C", "D"});
  std::map<TokenSeq, Distribution> table{
      {{}, Distribution({0.0, 0.6, 0.4, 0.0, 0.0})},
      {{1}, Distribution({0.0, 0.0, 0.0, 0.5, 0.5})},
      {{2}, Distribution::one_hot(5, 3)},
  };
  ScriptedModel m(v, table, Distribution::one_hot(5, 0));
  auto greedy = decode_greedy(m, TokenSeq{}, 5);
  auto beam = decode_beam(m, TokenSeq{}, 2, 5);
  EXPECT_EQ(greedy.tokens, (TokenSeq{1, 3}));
  EXPECT_EQ(beam.tokens, (TokenSeq{2, 3}));
  EXPECT_EQ(beam.tokens, best_path_oracle(m, 5));
  // One call at step 1, then one per live beam for two more steps.
  EXPECT_EQ(beam.ledger.target_calls, 5);
}

TEST(BeamTest, WidthOneIsGreedy) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto pair = random_scripted_pair(seed);
    auto b = decode_beam(*pair.target, pair.prompt, 1, 12);
    auto g = decode_greedy(*pair.target, pair.prompt, 12);
    ASSERT_EQ(b.tokens, g.tokens) << "seed " << seed;
    EXPECT_EQ(b.ledger.target_calls, g.ledger.target_calls);
  }
}

TEST(BeamTest, CallsPerStepBoundedByWidth) {
  Vocabulary v({"</s>", "A", "B", "C"});
  ScriptedModel m(v, {}, Distribution({0.0, 0.5, 0.3, 0.2}));
  auto r = decode_beam(m, TokenSeq{}, 3, 30);
  EXPECT_EQ(r.tokens.size(), 30u);
  EXPECT_EQ(r.ledger.target_calls, 1 + 3 * 29);
}

TEST(SpeculativeTest, SelfDraftingIsGreedy) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto pair = random_scripted_pair(seed);
    RngStream rng(seed);
    auto sd = decode_speculative(*pair.target, *pair.target, pair.prompt, 3, 20, VerificationMode::kHard, rng);
    auto g = decode_greedy(*pair.target, pair.prompt, 20);
    ASSERT_EQ(sd.tokens, g.tokens) << "seed " << seed;
  }
}

TEST(SpeculativeTest, SelfDraftingNeedsFewerTargetCalls) {
  Vocabulary v({"</s>", "A", "B"});
  ScriptedModel m = chain_model(v, {}, 1);
  RngStream rng(0);
  auto sd = decode_speculative(m, m, TokenSeq{}, 4, 40, VerificationMode::kHard, rng);
  EXPECT_EQ(sd.tokens.size(), 40u);
  // Each round accepts 4 drafts and adds a bonus token for 2 target calls.
  EXPECT_EQ(sd.ledger.target_calls, 16);
  EXPECT_LT(static_cast<double>(sd.ledger.target_calls) / sd.ledger.emitted_tokens, 1.0);
}

TEST(SpeculativeTest, AdversarialPairEmitsOneTokenPerRound) {
  Vocabulary v({"</s>", "A", "B"});
  ScriptedModel target = chain_model(v, {}, 2);
  ScriptedModel draft = chain_model(v, {}, 1);
  RngStream rng(0);
  auto sd = decode_speculative(target, draft, TokenSeq{}, 1, 10, VerificationMode::kHard, rng);
  EXPECT_EQ(sd.tokens, TokenSeq(10, 2));
  EXPECT_EQ(sd.ledger.draft_calls, 10);
  EXPECT_EQ(sd.ledger.target_calls, 10);
}

TEST(SpeculativeTest, SamplingModePreservesTargetMarginal) {
  Vocabulary v({"</s>", "A", "B"});
  Distribution p({0.2, 0.5, 0.3});
  Distribution q({0.1, 0.2, 0.7});
  ScriptedModel target(v, {}, p);
  ScriptedModel draft(v, {}, q);
  RngStream rng(77);
  std::vector<double> counts(3, 0.0);
  const int trials = 50000;
  for (int i = 0; i < trials; ++i) {
    auto r = decode_speculative(target, draft, TokenSeq{}, 2, 1, VerificationMode::kSpeculative, rng);
    counts[r.tokens.empty() ? 0 : static_cast<std::size_t>(r.tokens[0])] += 1.0;
  }
  double tv = 0.0;
  for (TokenId t = 0; t < 3; ++t) {
    tv += std::abs(counts[static_cast<std::size_t>(t)] / trials - p[t]);
  }
  EXPECT_LE(tv / 2.0, 0.02);
}

TEST(SpeculativeTest, VocabularyMismatchIsConfigError) {
  ScriptedModel a(Vocabulary({"</s>", "A"}), {}, Distribution::uniform(2));
  ScriptedModel b(Vocabulary({"</s>", "B"}), {}, Distribution::uniform(2));
  RngStream rng(0);
  EXPECT_THROW(decode_speculative(a, b, TokenSeq{}, 2, 5, VerificationMode::kHard, rng), ConfigError);
}

TEST(CdlhTest, PicksLowerProbabilityCandidateThatReachesAConcept) {
  Vocabulary v({"</s>", "A", "B", "dog", "cat"});
  std::map<TokenSeq, Distribution> table{
      {{}, Distribution({0.0, 0.6, 0.4, 0.0, 0.0})},
      {{1}, Distribution::one_hot(5, 4)},
      {{2}, Distribution::one_hot(5, 3)},
  };
  ScriptedModel m(v, table, Distribution::one_hot(5, 0));
  auto reward = concept_reward(v, {"dog"});
  // Oracle: greedy rollouts of length 2 after each candidate.
  EXPECT_EQ(reward.score(TokenSeq{1, 4}), 0.0);
  EXPECT_EQ(reward.score(TokenSeq{2, 3}), 1.0);
  auto cdlh = decode_cdlh(m, reward, TokenSeq{}, 2, 2, 10);
  auto greedy = decode_greedy(m, TokenSeq{}, 10);
  EXPECT_EQ(cdlh.tokens, (TokenSeq{2, 3}));
  EXPECT_EQ(greedy.tokens, (TokenSeq{1, 4}));
}

TEST(CdlhTest, TiesKeepTheMoreLikelyCandidate) {
  Vocabulary v({"</s>", "A", "B", "C"});
  ScriptedModel m(v, {}, Distribution({0.1, 0.2, 0.4, 0.3}));
  auto reward = concept_reward(v, {"zzz"});
  auto r = decode_cdlh(m, reward, TokenSeq{}, 2, 3, 4);
  EXPECT_EQ(r.tokens, (TokenSeq{2, 2, 2, 2}));
}

struct Reductions : ::testing::TestWithParam<std::uint64_t> {};

TEST_P(Reductions, HoldOnRandomPairs) {
  const std::uint64_t seed = GetParam();
  auto pair = random_scripted_pair(seed);
  const Vocabulary& v = pair.target->vocabulary();
  auto reward = concept_reward(v, {"w1", "w3"});
  const int l_m = 12;

  auto greedy = decode_greedy(*pair.target, pair.prompt, l_m);
  auto cdlh = decode_cdlh(*pair.target, reward, pair.prompt, 3, 3, l_m);
  auto appx = decode_cdlh_appx(*pair.target, *pair.draft, reward, pair.prompt, 3, 3, l_m);

  CdslConfig cfg;
  cfg.b = 0;
  cfg.a_t = 1.1;
  cfg.l_m = l_m;
  RngStream rng(seed);
  EXPECT_EQ(decode_cdsl(*pair.target, *pair.draft, reward, pair.prompt, cfg, rng).tokens, appx.tokens);
  EXPECT_EQ(decode_cdlh_appx(*pair.target, *pair.target, reward, pair.prompt, 3, 3, l_m).tokens, cdlh.tokens);
  EXPECT_EQ(decode_cdlh(*pair.target, reward, pair.prompt, 3, 1, l_m).tokens, greedy.tokens);
  EXPECT_EQ(decode_beam(*pair.target, pair.prompt, 1, l_m).tokens, greedy.tokens);
  EXPECT_EQ(decode_speculative(*pair.target, *pair.target, pair.prompt, 3, l_m, VerificationMode::kHard, rng).tokens,
            greedy.tokens);

  // Call-count bounds.
  const double per_token = static_cast<double>(cdlh.ledger.emitted_tokens);
  EXPECT_LE(cdlh.ledger.target_calls / per_token, 1.0 + 3 * 3);
  EXPECT_EQ(appx.ledger.target_calls, appx.ledger.emitted_tokens);
  EXPECT_LE(appx.ledger.draft_calls, 9 * appx.ledger.emitted_tokens);
}

INSTANTIATE_TEST_SUITE_P(Seeds, Reductions, ::testing::Range<std::uint64_t>(0, 60));

TEST(CdslTest, SelfDraftingWithZeroThresholdsIsGreedyAtOneOverD) {
  Vocabulary v({"</s>", "A", "B"});
  ScriptedModel m = chain_model(v, {{{}, 1}, {{1}, 2}, {{1, 2}, 1}}, 2);
  auto reward = concept_reward(v, {"a"});
  CdslConfig cfg;
  cfg.d = 3;
  cfg.a_t = 0.0;
  cfg.r_t = 0.0;
  cfg.l_m = 12;
  RngStream rng(0);
  auto r = decode_cdsl(m, m, reward, TokenSeq{}, cfg, rng);
  EXPECT_EQ(r.tokens, decode_greedy(m, TokenSeq{}, 12).tokens);
  EXPECT_EQ(r.ledger.target_calls, 4);
  EXPECT_EQ(r.ledger.draft_calls, 12);
  for (const auto& t : r.traces) {
    EXPECT_EQ(t.state, CdslState::kS1);
    EXPECT_EQ(t.tokens_emitted, 3u);
  }
}

TEST(CdslTest, TargetLedRoundSucceeds) {
  Vocabulary v({"</s>", "A", "B", "dog"});
  std::map<TokenSeq, Distribution> target_table{
      {{}, Distribution({0.0, 0.3, 0.7, 0.0})},
      {{2}, Distribution::one_hot(4, 3)},
  };
  ScriptedModel target(v, target_table, Distribution::one_hot(4, 0));
  ScriptedModel draft(v, {{{2}, Distribution::one_hot(4, 3)}}, Distribution::one_hot(4, 1));
  auto reward = concept_reward(v, {"dog"});
  CdslConfig cfg;
  cfg.d = 1;
  cfg.k = 2;
  cfg.b = 1;
  cfg.a_t = 0.5;
  cfg.r_t = 1.0;
  cfg.l_m = 10;
  RngStream rng(0);
  auto r = decode_cdsl(target, draft, reward, TokenSeq{}, cfg, rng);
  EXPECT_EQ(r.tokens, (TokenSeq{2, 3}));
  ASSERT_EQ(r.traces.size(), 3u);
  EXPECT_EQ(r.traces[0].state, CdslState::kStep1);
  EXPECT_EQ(r.traces[1].state, CdslState::kS1);
  EXPECT_EQ(r.traces[2].state, CdslState::kStep1);
  // Verification passes in all three steps plus one call per target-led round.
  EXPECT_EQ(r.ledger.draft_calls, 4);
  EXPECT_EQ(r.ledger.target_calls, 5);
  EXPECT_EQ(r.terminated_by, Termination::kEos);
}

TEST(CdslTest, LowRewardWithHighAcceptanceTakesS4) {
  Vocabulary v({"</s>", "A", "B"});
  ScriptedModel m(v, {}, Distribution({0.0, 0.6, 0.4}));
  auto reward = concept_reward(v, {"b"});
  CdslConfig cfg;
  cfg.d = 2;
  cfg.k = 2;
  cfg.a_t = 0.5;
  cfg.r_t = 1.0;
  cfg.l_m = 3;
  RngStream rng(0);
  auto r = decode_cdsl(m, m, reward, TokenSeq{}, cfg, rng);
  ASSERT_FALSE(r.traces.empty());
  EXPECT_EQ(r.traces[0].state, CdslState::kS4);
  // Two verified A tokens, then B is the only candidate whose lookahead covers the concept.
  EXPECT_EQ(r.tokens, (TokenSeq{1, 1, 2}));
}

TEST(CdslTest, ConfigValidation) {
  auto pair = random_scripted_pair(0);
  auto reward = concept_reward(pair.target->vocabulary(), {"w1"});
  RngStream rng(0);
  CdslConfig cfg;
  cfg.d = 0;
  EXPECT_THROW(decode_cdsl(*pair.target, *pair.draft, reward, pair.prompt, cfg, rng), ConfigError);
  cfg = CdslConfig{};
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = CdslConfig{};
  cfg.b = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_verification_mode("spec"), VerificationMode::kSpeculative);
  EXPECT_THROW(parse_verification_mode("soft"), ConfigError);
}

// Replays a CDSL run and checks each emitted token against the target at its position: verified and
// target-led tokens must be the target argmax (hard mode), constrained tokens must be in the top-k.
void check_target_authority(const LanguageModel& target, const TokenSeq& prompt, const GenerationResult& r, int k) {
  TokenSeq ctx = prompt;
  ASSERT_GE(r.sources.size(), r.tokens.size());
  for (std::size_t i = 0; i < r.sources.size(); ++i) {
    Distribution p = target.distribution(ctx);
    TokenId token = i < r.tokens.size() ? r.tokens[i] : *target.vocabulary().eos();
    switch (r.sources[i]) {
      case TokenSource::kVerified:
      case TokenSource::kTargetGreedy:
      case TokenSource::kTarget:
        ASSERT_EQ(token, p.argmax()) << "position " << i;
        break;
      case TokenSource::kTargetTopK: {
        auto top = p.top_k(static_cast<std::size_t>(k));
        ASSERT_NE(std::find(top.begin(), top.end(), token), top.end()) << "position " << i;
        break;
      }
      case TokenSource::kTargetSampled:
        ASSERT_GT(p[token], 0.0);
        break;
    }
    ctx.push_back(token);
  }
}

TEST(CdslTest, ProgressAuthorityAndLedgerConsistency) {
  std::mt19937_64 gen(4);
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    auto pair = random_scripted_pair(seed, 4, 4, 0.7);
    auto reward = concept_reward(pair.target->vocabulary(), {"w2", "w4"});
    CdslConfig cfg;
    cfg.d = std::uniform_int_distribution<int>(1, 4)(gen);
    cfg.k = std::uniform_int_distribution<int>(1, 3)(gen);
    cfg.b = std::uniform_int_distribution<int>(0, 2)(gen);
    cfg.a_t = std::uniform_int_distribution<int>(0, 4)(gen) / 4.0;
    cfg.r_t = std::uniform_int_distribution<int>(0, 2)(gen) / 2.0;
    cfg.l_m = 15;
    cfg.keep_prefix_on_low_acceptance = seed % 2 == 1;
    RngStream rng(seed);
    auto r = decode_cdsl(*pair.target, *pair.draft, reward, pair.prompt, cfg, rng);
    EXPECT_LE(r.tokens.size(), 15u);
    check_target_authority(*pair.target, pair.prompt, r, cfg.k);
    CallLedger sum;
    std::size_t emitted = 0;
    for (const auto& t : r.traces) {
      EXPECT_GE(t.tokens_emitted, 1u);
      if (t.state == CdslState::kS1) {
        EXPECT_GT(t.acceptance, 0.0);
      }
      sum += t.cost;
      emitted += t.tokens_emitted;
    }
    EXPECT_EQ(sum.draft_calls, r.ledger.draft_calls);
    EXPECT_EQ(sum.target_calls, r.ledger.target_calls);
    EXPECT_EQ(static_cast<std::int64_t>(emitted), r.ledger.emitted_tokens);
    EXPECT_EQ(r.sources.size(), emitted);

    RngStream again(seed);
    auto r2 = decode_cdsl(*pair.target, *pair.draft, reward, pair.prompt, cfg, again);
    EXPECT_EQ(r2.tokens, r.tokens);
    EXPECT_EQ(r2.ledger, r.ledger);
  }
}

TEST(CdslTest, SpeculativeModeStillProgresses) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto pair = random_scripted_pair(seed);
    auto reward = concept_reward(pair.target->vocabulary(), {"w1"});
    CdslConfig cfg;
    cfg.mode = VerificationMode::kSpeculative;
    cfg.a_t = 0.0;
    cfg.l_m = 10;
    cfg.emit_replacement_in_cdsl = seed % 2 == 0;
    RngStream rng(seed);
    auto r = decode_cdsl(*pair.target, *pair.draft, reward, pair.prompt, cfg, rng);
    for (const auto& t : r.traces) {
      EXPECT_GE(t.tokens_emitted, 1u);
    }
    EXPECT_LE(r.tokens.size(), 10u);
  }
}

}  // namespace
}  // namespace cdsl
