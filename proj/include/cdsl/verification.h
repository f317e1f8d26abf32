// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "cdsl/lm.h"

namespace cdsl {

// Seeded draw stream owned by one generation.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}
  // Stream for one example, independent of processing order.
  static RngStream for_example(std::uint64_t seed, std::string_view example_id);

  // Uniform on (0, 1].
  double uniform();
  // Index drawn proportionally to non-negative weights. Throws NumericError when all are zero.
  TokenId sample(std::span<const double> weights);
  TokenId sample(const Distribution& dist) { return sample(dist.probs()); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::mt19937_64 engine_;
};

struct VerificationOutcome {
  std::size_t accepted = 0;  // n, length of the accepted draft prefix
  double acceptance = 0.0;   // a = n / d
  std::optional<TokenId> replacement;
};

double acceptance_score(std::size_t accepted, std::size_t draft_length);

// Accepts drafted tokens while they match the target argmax.
VerificationOutcome hard_reject(std::span<const TokenId> drafted, std::span<const Distribution> target_dists);

// Accepts x_i while r <= min(1, p(x_i) / q(x_i)) with r ~ U(0,1]; at the first rejection draws the
// replacement from normalize(max(0, p - q)), or from p when that residual has no mass.
VerificationOutcome speculative_verify(std::span<const TokenId> drafted, std::span<const Distribution> draft_dists,
                                       std::span<const Distribution> target_dists, RngStream& rng);

std::vector<double> residual_weights(const Distribution& target, const Distribution& draft);

}  // namespace cdsl
