// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "cdsl/lm.h"
#include "cdsl/rewards.h"
#include "cdsl/verification.h"

namespace cdsl {

enum class VerificationMode { kHard, kSpeculative };

std::string_view to_string(VerificationMode mode);
VerificationMode parse_verification_mode(std::string_view text);

struct CdslConfig {
  int d = 3;          // draft / lookahead length
  int k = 3;          // candidates expanded by a constrained step
  int b = 0;          // target-led rounds tried before a constrained step
  double a_t = 0.6;   // acceptance threshold
  double r_t = 0.3;   // reward threshold
  int l_m = 32;       // max generated tokens (a terminating EOS counts)
  VerificationMode mode = VerificationMode::kHard;
  // Emit the target-sampled replacement after an S1 prefix in speculative mode.
  bool emit_replacement_in_cdsl = false;
  // Keep the verified draft prefix when acceptance is below a_t. Off by default: the low-acceptance
  // branch then restarts from the previous output, which makes b = 0, a_t > 1 reduce to CDLH-appx.
  bool keep_prefix_on_low_acceptance = false;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

enum class CdslState { kS1, kStep1, kStep2, kS4 };
std::string_view to_string(CdslState state);

// How a token came to be emitted.
enum class TokenSource {
  kTarget,          // argmax / sample of the target at that position (greedy, nucleus, beam, CDLH, SD)
  kVerified,        // drafted and accepted by the target
  kTargetGreedy,    // target argmax during a target-led round
  kTargetTopK,      // chosen among the target's top-k by lookahead reward
  kTargetSampled,   // replacement or bonus sampled from target-derived distributions
};

struct StepTrace {
  CdslState state = CdslState::kS1;
  std::size_t drafted = 0;
  std::size_t tokens_emitted = 0;  // includes a terminating EOS
  double acceptance = 0.0;
  double reward = 0.0;
  CallLedger cost;  // calls charged during this step (emitted_tokens mirrors tokens_emitted)
};

enum class Termination { kEos, kLengthLimit };

struct GenerationResult {
  TokenSeq tokens;  // generated suffix without the prompt and without EOS
  std::vector<TokenSource> sources;  // one per emitted token, including a terminating EOS
  CallLedger ledger;
  std::vector<StepTrace> traces;  // CDSL only
  Termination terminated_by = Termination::kLengthLimit;
  // Drafted and target-accepted draft tokens (speculative decoding and CDSL).
  std::int64_t drafted_tokens = 0;
  std::int64_t accepted_tokens = 0;
};

GenerationResult decode_greedy(const LanguageModel& target, std::span<const TokenId> prompt, int l_m);

GenerationResult decode_nucleus(const LanguageModel& target, std::span<const TokenId> prompt, double top_p, int l_m,
                                RngStream& rng);

// Smallest probability-ranked prefix of ids whose mass reaches top_p.
std::vector<TokenId> nucleus_set(const Distribution& dist, double top_p);

// Length-normalized log-probability beam search; one target call per live beam per step.
GenerationResult decode_beam(const LanguageModel& target, std::span<const TokenId> prompt, int width, int l_m);

// Plain speculative decoding: emits the accepted prefix plus the target's correction, or a bonus
// token (one extra target call) after full acceptance.
GenerationResult decode_speculative(const LanguageModel& target, const LanguageModel& draft,
                                    std::span<const TokenId> prompt, int d, int l_m, VerificationMode mode,
                                    RngStream& rng);

// Lookahead-heuristic decoding: each token is the top-k candidate whose greedy rollout of d target
// tokens maximizes the reward.
GenerationResult decode_cdlh(const LanguageModel& target, const RewardFunction& reward,
                             std::span<const TokenId> prompt, int d, int k, int l_m);

// As decode_cdlh, with rollouts delegated to the draft model.
GenerationResult decode_cdlh_appx(const LanguageModel& target, const LanguageModel& draft,
                                  const RewardFunction& reward, std::span<const TokenId> prompt, int d, int k,
                                  int l_m);

// Constrained decoding with speculative lookaheads. `rng` is only drawn from in speculative mode.
GenerationResult decode_cdsl(const LanguageModel& target, const LanguageModel& draft, const RewardFunction& reward,
                             std::span<const TokenId> prompt, const CdslConfig& config, RngStream& rng);

}  // namespace cdsl
