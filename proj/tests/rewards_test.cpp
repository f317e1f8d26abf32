// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "cdsl/errors.h"
#include "cdsl/rewards.h"

namespace cdsl {
namespace {

std::vector<std::string> words(std::initializer_list<const char*> list) { return {list.begin(), list.end()}; }

TEST(LexicalRewardTest, TwoOfFiveIsPointFour) {
  ConceptSet c(words({"dog", "cat", "ball", "park", "run"}));
  EXPECT_EQ(lexical_coverage_reward(words({"the", "dog", "sees", "a", "cat"}), c), 0.4);
}

TEST(LexicalRewardTest, Boundaries) {
  ConceptSet c(words({"dog", "cat"}));
  EXPECT_EQ(lexical_coverage_reward(words({"cat", "and", "dog"}), c), 1.0);
  EXPECT_EQ(lexical_coverage_reward(words({"nothing"}), c), 0.0);
  EXPECT_EQ(lexical_coverage_reward(std::vector<std::string>{}, c), 0.0);
}

TEST(LexicalRewardTest, ExactMatchOnly) {
  ConceptSet c(words({"dog", "run", "field"}));
  EXPECT_DOUBLE_EQ(lexical_coverage_reward(words({"the", "dog", "runs", "fast"}), c), 1.0 / 3.0);
}

TEST(LexicalRewardTest, CaseInsensitive) {
  ConceptSet c(words({"Dog"}));
  EXPECT_EQ(c.concepts().front(), "dog");
  EXPECT_EQ(lexical_coverage_reward(words({"DOG"}), c), 1.0);
}

TEST(LexicalRewardTest, RepeatedConceptCountsOnce) {
  ConceptSet c(words({"dog", "cat"}));
  EXPECT_EQ(lexical_coverage_reward(words({"dog", "dog", "dog"}), c), 0.5);
}

TEST(ConceptSetTest, Validation) {
  EXPECT_THROW(ConceptSet(std::vector<std::string>{}), InputError);
  EXPECT_THROW(ConceptSet(words({"dog", "DOG"})), InputError);
}

TEST(LexicalRewardTest, TokenIdPathMatchesStringPath) {
  Vocabulary v({"</s>", "the", "dog", "runs", "field", "run"});
  ConceptSet c(words({"dog", "run", "field"}));
  LexicalCoverageReward r(v, c);
  TokenSeq ids = v.tokenize("the dog runs");
  EXPECT_DOUBLE_EQ(r.score(ids), 1.0 / 3.0);
  EXPECT_EQ(r.covered(v.tokenize("run field dog")), 3u);
}

// Random cases: appending never lowers the score, full coverage iff score 1, score in [0,1], and
// the id-mapped reward agrees with the string reward.
TEST(LexicalRewardTest, PropertiesOnRandomCases) {
  std::vector<std::string> pool{"a", "b", "c", "d", "e", "f", "g", "h"};
  Vocabulary v(pool);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> shuffled = pool;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::size_t m = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
    ConceptSet c(std::vector<std::string>(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(m)));
    LexicalCoverageReward reward(v, c);
    std::vector<std::string> gen;
    TokenSeq ids;
    double prev = lexical_coverage_reward(gen, c);
    EXPECT_EQ(prev, 0.0);
    int len = std::uniform_int_distribution<int>(0, 10)(rng);
    for (int i = 0; i < len; ++i) {
      TokenId t = std::uniform_int_distribution<TokenId>(0, 7)(rng);
      gen.push_back(pool[static_cast<std::size_t>(t)]);
      ids.push_back(t);
      double s = lexical_coverage_reward(gen, c);
      EXPECT_GE(s, prev);
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
      EXPECT_EQ(s, reward.score(ids));
      prev = s;
    }
    std::set<std::string> present(gen.begin(), gen.end());
    bool all = std::all_of(c.concepts().begin(), c.concepts().end(),
                           [&](const std::string& x) { return present.contains(x); });
    EXPECT_EQ(all, prev == 1.0);
  }
}

TEST(BlocklistRewardTest, Formula) {
  auto block = words({"steal", "hurt", "kill", "poison"});
  EXPECT_EQ(blocklist_reward(words({"a", "nice", "day"}), block), 1.0);
  EXPECT_EQ(blocklist_reward(words({"steal", "hurt", "kill", "poison"}), block), 0.0);
  EXPECT_EQ(blocklist_reward(words({"we", "hurt", "hurt"}), block), 0.75);
  EXPECT_THROW(blocklist_reward(words({"a"}), {}), ConfigError);
}

TEST(BlocklistRewardTest, TokenIdPathMatchesStringPath) {
  Vocabulary v({"</s>", "we", "steal", "hurt", "kill", "poison"});
  BlocklistReward r(v, words({"steal", "hurt", "kill", "poison"}));
  EXPECT_EQ(r.score(v.tokenize("we steal")), 0.75);
  EXPECT_EQ(r.score(TokenSeq{}), 1.0);
  EXPECT_THROW(BlocklistReward(v, {}), ConfigError);
}

TEST(SatisfiesTest, InclusiveThreshold) {
  EXPECT_TRUE(satisfies(0.4, 0.3));
  EXPECT_TRUE(satisfies(0.3, 0.3));
  EXPECT_FALSE(satisfies(0.29, 0.3));
}

}  // namespace
}  // namespace cdsl
