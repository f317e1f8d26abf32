// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdsl/verification.h"

#include <algorithm>

#include "cdsl/errors.h"

namespace cdsl {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RngStream RngStream::for_example(std::uint64_t seed, std::string_view example_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fnv1a(example_id)), static_cast<std::uint32_t>(fnv1a(example_id) >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return RngStream((static_cast<std::uint64_t>(words[0]) << 32) | words[1]);
}

double RngStream::uniform() {
  ++counter_;
  return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
}

TokenId RngStream::sample(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    total += w;
  }
  if (!(total > 0.0)) {
    throw NumericError("cannot sample from weights with no mass");
  }
  double threshold = uniform() * total;
  double cumulative = 0.0;
  std::optional<TokenId> last;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) {
      continue;
    }
    last = static_cast<TokenId>(i);
    cumulative += weights[i];
    if (cumulative >= threshold) {
      return *last;
    }
  }
  return *last;
}

double acceptance_score(std::size_t accepted, std::size_t draft_length) {
  if (draft_length == 0) {
    throw InputError("draft length must be >= 1");
  }
  if (accepted > draft_length) {
    throw InputError("accepted length exceeds draft length");
  }
  return static_cast<double>(accepted) / static_cast<double>(draft_length);
}

VerificationOutcome hard_reject(std::span<const TokenId> drafted, std::span<const Distribution> target_dists) {
  if (drafted.size() != target_dists.size()) {
    throw InputError("drafted tokens and target distributions differ in length");
  }
  VerificationOutcome out;
  while (out.accepted < drafted.size() && target_dists[out.accepted].argmax() == drafted[out.accepted]) {
    ++out.accepted;
  }
  out.acceptance = acceptance_score(out.accepted, drafted.size());
  return out;
}

std::vector<double> residual_weights(const Distribution& target, const Distribution& draft) {
  std::vector<double> w(target.size());
  for (std::size_t t = 0; t < w.size(); ++t) {
    auto id = static_cast<TokenId>(t);
    w[t] = std::max(0.0, target[id] - draft[id]);
  }
  return w;
}

VerificationOutcome speculative_verify(std::span<const TokenId> drafted, std::span<const Distribution> draft_dists,
                                       std::span<const Distribution> target_dists, RngStream& rng) {
  if (drafted.size() != draft_dists.size() || drafted.size() != target_dists.size()) {
    throw InputError("drafted tokens and distributions differ in length");
  }
  VerificationOutcome out;
  for (std::size_t i = 0; i < drafted.size(); ++i) {
    double q = draft_dists[i][drafted[i]];
    double p = target_dists[i][drafted[i]];
    if (!(q > 0.0)) {
      throw NumericError("drafted token has zero draft probability");
    }
    double r = rng.uniform();
    if (r <= std::min(1.0, p / q)) {
      ++out.accepted;
      continue;
    }
    auto residual = residual_weights(target_dists[i], draft_dists[i]);
    bool has_mass = std::any_of(residual.begin(), residual.end(), [](double w) { return w > 0.0; });
    out.replacement = has_mass ? rng.sample(residual) : rng.sample(target_dists[i]);
    break;
  }
  out.acceptance = acceptance_score(out.accepted, drafted.size());
  return out;
}

}  // namespace cdsl
