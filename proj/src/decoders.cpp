// Copyright (C) 2026 The cdsl Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdsl/decoders.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "cdsl/errors.h"

namespace cdsl {

std::string_view to_string(VerificationMode mode) {
  return mode == VerificationMode::kHard ? "hard" : "spec";
}

VerificationMode parse_verification_mode(std::string_view text) {
  if (text == "hard") {
    return VerificationMode::kHard;
  }
  if (text == "spec" || text == "speculative") {
    return VerificationMode::kSpeculative;
  }
  throw ConfigError("unknown verification mode: " + std::string(text));
}

std::string_view to_string(CdslState state) {
  switch (state) {
    case CdslState::kS1:
      return "S1";
    case CdslState::kStep1:
      return "S2/S3-step1";
    case CdslState::kStep2:
      return "S2/S3-step2";
    case CdslState::kS4:
      return "S4";
  }
  return "?";
}

void CdslConfig::validate() const {
  if (d < 1) {
    throw ConfigError("d must be >= 1");
  }
  if (k < 1) {
    throw ConfigError("k must be >= 1");
  }
  if (b < 0) {
    throw ConfigError("b must be >= 0");
  }
  if (l_m < 1) {
    throw ConfigError("l_m must be >= 1");
  }
  if (!std::isfinite(a_t) || !std::isfinite(r_t)) {
    throw ConfigError("thresholds must be finite");
  }
}

namespace {

// Output under construction: prompt + generated tokens, plus emission bookkeeping.
class Generation {
 public:
  Generation(const LanguageModel& model, std::span<const TokenId> prompt, int l_m)
      : context_(prompt.begin(), prompt.end()), prompt_len_(prompt.size()), eos_(model.vocabulary().eos()) {
    if (l_m < 1) {
      throw ConfigError("l_m must be >= 1");
    }
    check_tokens(model.vocabulary(), prompt);
    limit_ = static_cast<std::size_t>(l_m);
  }

  const TokenSeq& context() const { return context_; }
  std::span<const TokenId> output() const { return std::span<const TokenId>(context_).subspan(prompt_len_); }
  std::optional<TokenId> eos() const { return eos_; }
  bool is_eos(TokenId t) const { return eos_ && *eos_ == t; }
  bool done() const { return done_; }
  CallLedger& ledger() { return result_.ledger; }

  // Appends one token. EOS and the length limit both end the generation.
  bool emit(TokenId token, TokenSource source) {
    if (done_) {
      return false;
    }
    result_.sources.push_back(source);
    ++result_.ledger.emitted_tokens;
    if (is_eos(token)) {
      done_ = true;
      result_.terminated_by = Termination::kEos;
      return true;
    }
    context_.push_back(token);
    if (static_cast<std::size_t>(result_.ledger.emitted_tokens) >= limit_) {
      done_ = true;
      result_.terminated_by = Termination::kLengthLimit;
    }
    return true;
  }

  std::size_t emit_all(std::span<const TokenId> tokens, TokenSource source) {
    std::size_t n = 0;
    for (TokenId t : tokens) {
      if (!emit(t, source)) {
        break;
      }
      ++n;
    }
    return n;
  }

  void add_trace(StepTrace trace) { result_.traces.push_back(trace); }
  void record_verification(std::size_t drafted, std::size_t accepted) {
    result_.drafted_tokens += static_cast<std::int64_t>(drafted);
    result_.accepted_tokens += static_cast<std::int64_t>(accepted);
  }

  GenerationResult finish() && {
    result_.tokens.assign(context_.begin() + static_cast<std::ptrdiff_t>(prompt_len_), context_.end());
    return std::move(result_);
  }

 private:
  TokenSeq context_;
  std::size_t prompt_len_;
  std::optional<TokenId> eos_;
  std::size_t limit_ = 1;
  bool done_ = false;
  GenerationResult result_;
};

TokenSeq concat(std::span<const TokenId> a, std::span<const TokenId> b) {
  TokenSeq out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Greedy rollout of up to `length` tokens; stops early (excluding EOS) when the model ends the text.
TokenSeq greedy_rollout(const LanguageModel& model, ModelRole role, TokenSeq context, int length,
                        std::optional<TokenId> eos, CallLedger& ledger) {
  TokenSeq out;
  for (int i = 0; i < length; ++i) {
    TokenId t = next_distribution(model, role, context, ledger).argmax();
    if (eos && t == *eos) {
      break;
    }
    context.push_back(t);
    out.push_back(t);
  }
  return out;
}

// One constrained step: among the top-k candidates of `dist`, the one whose candidate + greedy
// lookahead (rolled out by `roller`) scores highest. Earlier (more probable, lower id) wins ties.
TokenId select_by_lookahead(const Distribution& dist, const LanguageModel& roller, ModelRole role,
                            const TokenSeq& context, std::span<const TokenId> generated,
                            const RewardFunction& reward, int d, int k, std::optional<TokenId> eos,
                            CallLedger& ledger) {
  auto candidates = dist.top_k(static_cast<std::size_t>(k));
  if (candidates.empty()) {
    throw InternalError("distribution has no positive-probability candidate");
  }
  TokenId best = candidates.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (TokenId cand : candidates) {
    TokenSeq scored(generated.begin(), generated.end());
    if (!(eos && cand == *eos)) {
      TokenSeq ctx = context;
      ctx.push_back(cand);
      scored.push_back(cand);
      TokenSeq lookahead = greedy_rollout(roller, role, std::move(ctx), d, eos, ledger);
      scored.insert(scored.end(), lookahead.begin(), lookahead.end());
    }
    double score = reward.score(scored);
    if (score > best_score) {
      best_score = score;
      best = cand;
    }
  }
  return best;
}

void check_lookahead_params(int d, int k) {
  if (d < 1) {
    throw ConfigError("lookahead length d must be >= 1");
  }
  if (k < 1) {
    throw ConfigError("candidate count k must be >= 1");
  }
}

GenerationResult decode_lookahead(const LanguageModel& target, const LanguageModel& roller, ModelRole roller_role,
                                  const RewardFunction& reward, std::span<const TokenId> prompt, int d, int k,
                                  int l_m) {
  check_lookahead_params(d, k);
  Generation gen(target, prompt, l_m);
  while (!gen.done()) {
    Distribution dist = next_distribution(target, ModelRole::kTarget, gen.context(), gen.ledger());
    TokenSeq generated(gen.output().begin(), gen.output().end());
    TokenId token =
        select_by_lookahead(dist, roller, roller_role, gen.context(), generated, reward, d, k, gen.eos(), gen.ledger());
    gen.emit(token, TokenSource::kTargetTopK);
  }
  return std::move(gen).finish();
}

}  // namespace

GenerationResult decode_greedy(const LanguageModel& target, std::span<const TokenId> prompt, int l_m) {
  Generation gen(target, prompt, l_m);
  while (!gen.done()) {
    gen.emit(next_distribution(target, ModelRole::kTarget, gen.context(), gen.ledger()).argmax(), TokenSource::kTarget);
  }
  return std::move(gen).finish();
}

std::vector<TokenId> nucleus_set(const Distribution& dist, double top_p) {
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw ConfigError("nucleus p must be in (0, 1]");
  }
  std::vector<TokenId> out;
  double mass = 0.0;
  for (TokenId id : dist.ranked()) {
    if (dist[id] <= 0.0) {
      break;
    }
    out.push_back(id);
    mass += dist[id];
    // Sums like 0.6 + 0.3 land a hair below 0.9.
    if (mass + 1e-12 >= top_p) {
      break;
    }
  }
  return out;
}

GenerationResult decode_nucleus(const LanguageModel& target, std::span<const TokenId> prompt, double top_p, int l_m,
                                RngStream& rng) {
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw ConfigError("nucleus p must be in (0, 1]");
  }
  Generation gen(target, prompt, l_m);
  while (!gen.done()) {
    Distribution dist = next_distribution(target, ModelRole::kTarget, gen.context(), gen.ledger());
    std::vector<double> weights(dist.size(), 0.0);
    for (TokenId id : nucleus_set(dist, top_p)) {
      weights[static_cast<std::size_t>(id)] = dist[id];
    }
    gen.emit(rng.sample(weights), TokenSource::kTarget);
  }
  return std::move(gen).finish();
}

GenerationResult decode_beam(const LanguageModel& target, std::span<const TokenId> prompt, int width, int l_m) {
  if (width < 1) {
    throw ConfigError("beam width must be >= 1");
  }
  if (l_m < 1) {
    throw ConfigError("l_m must be >= 1");
  }
  check_tokens(target.vocabulary(), prompt);
  const auto eos = target.vocabulary().eos();
  const auto w = static_cast<std::size_t>(width);

  struct Hypothesis {
    TokenSeq tokens;
    double logprob = 0.0;
    bool finished = false;
    double normalized() const {
      return logprob / static_cast<double>(tokens.size() + (finished ? 1 : 0));
    }
  };
  struct Candidate {
    std::size_t beam;
    TokenId token;
    double logprob;
  };

  GenerationResult result;
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;
  for (int step = 0; step < l_m && !live.empty() && finished.size() < w; ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < live.size(); ++i) {
      Distribution dist = next_distribution(target, ModelRole::kTarget, concat(prompt, live[i].tokens), result.ledger);
      for (std::size_t t = 0; t < dist.size(); ++t) {
        double p = dist[static_cast<TokenId>(t)];
        if (p > 0.0) {
          candidates.push_back({i, static_cast<TokenId>(t), live[i].logprob + std::log(p)});
        }
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.logprob > b.logprob; });
    std::vector<Hypothesis> next;
    for (std::size_t rank = 0; rank < candidates.size() && next.size() < w; ++rank) {
      const Candidate& c = candidates[rank];
      Hypothesis h{live[c.beam].tokens, c.logprob, false};
      if (eos && c.token == *eos) {
        if (rank < w) {
          h.finished = true;
          finished.push_back(std::move(h));
        }
        continue;
      }
      h.tokens.push_back(c.token);
      next.push_back(std::move(h));
    }
    live = std::move(next);
  }

  std::vector<Hypothesis> pool = finished;
  if (finished.size() < w) {
    pool.insert(pool.end(), live.begin(), live.end());
  }
  if (pool.empty()) {
    throw InternalError("beam search produced no hypothesis");
  }
  const Hypothesis* best = &pool.front();
  for (const auto& h : pool) {
    if (h.normalized() > best->normalized()) {
      best = &h;
    }
  }
  result.tokens = best->tokens;
  result.terminated_by = best->finished ? Termination::kEos : Termination::kLengthLimit;
  result.ledger.emitted_tokens = static_cast<std::int64_t>(best->tokens.size() + (best->finished ? 1 : 0));
  result.sources.assign(static_cast<std::size_t>(result.ledger.emitted_tokens), TokenSource::kTarget);
  return result;
}

GenerationResult decode_speculative(const LanguageModel& target, const LanguageModel& draft,
                                    std::span<const TokenId> prompt, int d, int l_m, VerificationMode mode,
                                    RngStream& rng) {
  check_same_vocabulary(target, draft);
  if (d < 1) {
    throw ConfigError("draft length d must be >= 1");
  }
  Generation gen(target, prompt, l_m);
  const bool sampling = mode == VerificationMode::kSpeculative;
  while (!gen.done()) {
    TokenSeq context = gen.context();
    TokenSeq drafted;
    std::vector<Distribution> draft_dists;
    for (int i = 0; i < d; ++i) {
      Distribution q = next_distribution(draft, ModelRole::kDraft, context, gen.ledger());
      TokenId x = sampling ? rng.sample(q) : q.argmax();
      drafted.push_back(x);
      draft_dists.push_back(std::move(q));
      if (gen.is_eos(x)) {
        break;
      }
      context.push_back(x);
    }
    auto target_dists = forward_scores(target, ModelRole::kTarget, gen.context(), drafted, gen.ledger());
    VerificationOutcome outcome =
        sampling ? speculative_verify(drafted, draft_dists, target_dists, rng) : hard_reject(drafted, target_dists);
    const std::size_t n = outcome.accepted;
    gen.record_verification(drafted.size(), n);
    gen.emit_all(std::span<const TokenId>(drafted).first(n), TokenSource::kVerified);
    if (gen.done()) {
      continue;
    }
    if (n < drafted.size()) {
      TokenId fix = sampling ? *outcome.replacement : target_dists[n].argmax();
      gen.emit(fix, sampling ? TokenSource::kTargetSampled : TokenSource::kTarget);
    } else {
      Distribution bonus = next_distribution(target, ModelRole::kTarget, gen.context(), gen.ledger());
      gen.emit(sampling ? rng.sample(bonus) : bonus.argmax(), sampling ? TokenSource::kTargetSampled : TokenSource::kTarget);
    }
  }
  return std::move(gen).finish();
}

GenerationResult decode_cdlh(const LanguageModel& target, const RewardFunction& reward,
                             std::span<const TokenId> prompt, int d, int k, int l_m) {
  return decode_lookahead(target, target, ModelRole::kTarget, reward, prompt, d, k, l_m);
}

GenerationResult decode_cdlh_appx(const LanguageModel& target, const LanguageModel& draft,
                                  const RewardFunction& reward, std::span<const TokenId> prompt, int d, int k,
                                  int l_m) {
  check_same_vocabulary(target, draft);
  return decode_lookahead(target, draft, ModelRole::kDraft, reward, prompt, d, k, l_m);
}

GenerationResult decode_cdsl(const LanguageModel& target, const LanguageModel& draft, const RewardFunction& reward,
                             std::span<const TokenId> prompt, const CdslConfig& config, RngStream& rng) {
  config.validate();
  check_same_vocabulary(target, draft);
  Generation gen(target, prompt, config.l_m);
  const auto eos = gen.eos();

  while (!gen.done()) {
    const CallLedger before = gen.ledger();
    const std::int64_t emitted_before = gen.ledger().emitted_tokens;
    StepTrace trace;

    // Target-led and constrained steps each pay for their own target call.
    auto target_at = [&](const TokenSeq& context) {
      return next_distribution(target, ModelRole::kTarget, context, gen.ledger());
    };
    auto constrained_token = [&](const TokenSeq& context, std::span<const TokenId> generated) {
      return select_by_lookahead(target_at(context), draft, ModelRole::kDraft, context, generated, reward, config.d,
                                 config.k, eos, gen.ledger());
    };

    // Draft d tokens greedily.
    TokenSeq context = gen.context();
    TokenSeq drafted;
    std::vector<Distribution> draft_dists;
    for (int i = 0; i < config.d; ++i) {
      Distribution q = next_distribution(draft, ModelRole::kDraft, context, gen.ledger());
      TokenId x = q.argmax();
      drafted.push_back(x);
      draft_dists.push_back(std::move(q));
      if (gen.is_eos(x)) {
        break;
      }
      context.push_back(x);
    }

    // Verify with one target pass.
    auto target_dists = forward_scores(target, ModelRole::kTarget, gen.context(), drafted, gen.ledger());
    VerificationOutcome outcome = config.mode == VerificationMode::kHard
                                      ? hard_reject(drafted, target_dists)
                                      : speculative_verify(drafted, draft_dists, target_dists, rng);
    const std::size_t n = outcome.accepted;
    gen.record_verification(drafted.size(), n);
    const std::span<const TokenId> accepted = std::span<const TokenId>(drafted).first(n);
    const bool accepted_has_eos = eos && std::find(accepted.begin(), accepted.end(), *eos) != accepted.end();
    TokenSeq generated(gen.output().begin(), gen.output().end());
    TokenSeq generated_with_accepted = concat(generated, accepted);
    std::erase_if(generated_with_accepted, [&](TokenId t) { return gen.is_eos(t); });

    trace.drafted = drafted.size();
    trace.acceptance = outcome.acceptance;
    trace.reward = reward.score(generated_with_accepted);
    const bool high_acceptance = trace.acceptance >= config.a_t;
    const bool high_reward = satisfies(trace.reward, config.r_t);

    if (high_acceptance && high_reward && n > 0) {
      trace.state = CdslState::kS1;
      gen.emit_all(accepted, TokenSource::kVerified);
      if (config.emit_replacement_in_cdsl && outcome.replacement && !accepted_has_eos) {
        gen.emit(*outcome.replacement, TokenSource::kTargetSampled);
      }
    } else if (!high_acceptance) {
      // Low acceptance: let the target lead for up to b tokens, else force a constrained token.
      TokenSeq kept = config.keep_prefix_on_low_acceptance ? TokenSeq(accepted.begin(), accepted.end()) : TokenSeq{};
      if (accepted_has_eos && config.keep_prefix_on_low_acceptance) {
        trace.state = CdslState::kStep1;
        gen.emit_all(kept, TokenSource::kVerified);
      } else {
        const TokenSeq base_context = concat(gen.context(), kept);
        const TokenSeq base_generated = concat(generated, kept);
        TokenSeq led;
        bool found = false;
        for (int round = 0; round < config.b && !found; ++round) {
          TokenSeq ctx = concat(base_context, led);
          TokenId y = target_at(ctx).argmax();
          led.push_back(y);
          if (gen.is_eos(y)) {
            found = satisfies(reward.score(concat(base_generated, std::span<const TokenId>(led).first(led.size() - 1))),
                              config.r_t);
            break;
          }
          ctx.push_back(y);
          TokenSeq lookahead = greedy_rollout(draft, ModelRole::kDraft, ctx, config.d, eos, gen.ledger());
          found = satisfies(reward.score(concat(concat(base_generated, led), lookahead)), config.r_t);
        }
        gen.emit_all(kept, TokenSource::kVerified);
        if (found) {
          trace.state = CdslState::kStep1;
          gen.emit_all(led, TokenSource::kTargetGreedy);
        } else {
          trace.state = CdslState::kStep2;
          if (!gen.done()) {
            gen.emit(constrained_token(base_context, base_generated), TokenSource::kTargetTopK);
          }
        }
      }
    } else {
      // High acceptance but low reward (or nothing accepted): keep the verified prefix and
      // append one constrained token.
      trace.state = CdslState::kS4;
      gen.emit_all(accepted, TokenSource::kVerified);
      if (!gen.done()) {
        TokenSeq so_far(gen.output().begin(), gen.output().end());
        gen.emit(constrained_token(gen.context(), so_far), TokenSource::kTargetTopK);
      }
    }

    trace.tokens_emitted = static_cast<std::size_t>(gen.ledger().emitted_tokens - emitted_before);
    if (trace.tokens_emitted == 0) {
      throw InternalError("CDSL iteration emitted no token");
    }
    trace.cost.draft_calls = gen.ledger().draft_calls - before.draft_calls;
    trace.cost.target_calls = gen.ledger().target_calls - before.target_calls;
    trace.cost.emitted_tokens = static_cast<std::int64_t>(trace.tokens_emitted);
    gen.add_trace(trace);
  }
  return std::move(gen).finish();
}

}  // namespace cdsl
