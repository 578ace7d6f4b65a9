// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

// Self-taught preference data with adaptive reasoning depth.
//
// One pass over a problem set:
//   1. probe every problem without reasoning; correct answers are Simple
//   2. probe the rest with reasoning; correct answers are Challenging
//   3. re-probe what is left with a hint naming the ground truth, keeping the
//      first correct response (up to `rejection_budget` tries); these are
//      Formidable, and problems never solved go to the discard report
//   4. pair responses: Simple problems prefer the direct answer over the
//      reasoning one, Challenging and Formidable problems the reverse
//
// Simple problems get their reasoning response from an extra probe issued
// after classification, since step 2 only covers the remainder.
//
// The pairs feed a DPO trainer; dpo_loss and dpo_loss_gradient evaluate the
// objective for one (preferred, dispreferred) pair.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rastar/backend.hpp"
#include "rastar/correction.hpp"
#include "rastar/error.hpp"
#include "rastar/ner.hpp"
#include "rastar/parallel.hpp"
#include "rastar/repository.hpp"
#include "rastar/utf8.hpp"

namespace rastar {

inline constexpr double kDefaultDpoBeta = 0.1;

enum class Difficulty { Simple, Challenging, Formidable };

inline std::string_view difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::Simple: return "simple";
    case Difficulty::Challenging: return "challenging";
    case Difficulty::Formidable: return "formidable";
  }
  return "simple";
}

struct ProblemRecord {
  std::string id;
  std::string hypothesis;
  EntitySpan span;  // the detected entity inside the hypothesis
  RankedCandidates candidates;
  std::string template_id = "correct";
  std::string ground_truth;
};

/// Exact match after NFC and whitespace stripping.
inline bool check_answer(const ModelResponse& response, std::string_view ground_truth) {
  return utf8::nfc(utf8::strip(response.answer)) == utf8::nfc(utf8::strip(ground_truth));
}

struct AstarOptions {
  int rejection_budget = 4;
  std::string hint_template = "hint";
  Markers markers;
  Sampling sampling;
  std::size_t jobs = 1;
};

struct ProbeRecord {
  Mode mode;
  bool hinted;
  int attempt;
  ModelResponse response;
};

struct ProblemOutcome {
  std::size_t index = 0;  // position in the input problem list
  std::string id;
  std::string prompt;
  Difficulty difficulty = Difficulty::Simple;
  std::optional<ModelResponse> nothink;
  /// Reasoning response: the unhinted probe for Simple and Challenging, the
  /// accepted hinted response for Formidable.
  std::optional<ModelResponse> think;
  int hint_attempts = 0;
};

struct DiscardRecord {
  std::size_t index = 0;
  std::string id;
  std::string reason;
  std::vector<ProbeRecord> probes;
};

struct Partition {
  std::vector<ProblemOutcome> simple;
  std::vector<ProblemOutcome> challenging;
  std::vector<ProblemOutcome> formidable;
  std::vector<DiscardRecord> discarded;
};

inline std::string problem_prompt(const ProblemRecord& p, const PromptTemplates& templates,
                                  const Markers& markers) {
  if (p.ground_truth.empty()) throw Error(Errc::InvalidArgument, "problem '" + p.id + "' has no ground truth");
  CorrectionRequest request{p.hypothesis, p.span, p.candidates, p.template_id, ModeDirective::Auto};
  return render_prompt(request, templates, markers);
}

inline std::string hinted_prompt(const std::string& prompt, const ProblemRecord& p,
                                 const PromptTemplates& templates, const AstarOptions& options) {
  return prompt + "\n" +
         templates.render(options.hint_template, {{"answer", p.ground_truth},
                                                  {"keep_token", options.markers.keep_token},
                                                  {"answer_open", options.markers.answer_open},
                                                  {"answer_close", options.markers.answer_close}});
}

inline Partition classify_problems(std::span<const ProblemRecord> problems, ModelBackend& backend,
                                   const PromptTemplates& templates, const AstarOptions& options = {}) {
  if (options.rejection_budget < 1) throw Error(Errc::InvalidArgument, "rejection budget must be >= 1");
  struct State {
    ProblemOutcome outcome;
    std::vector<ProbeRecord> probes;
    std::optional<std::string> failure;
    bool resolved = false;
    bool unsolved = false;
  };
  std::vector<State> states(problems.size());
  for (std::size_t i = 0; i < problems.size(); ++i) {
    states[i].outcome.index = i;
    states[i].outcome.id = problems[i].id;
    states[i].outcome.prompt = problem_prompt(problems[i], templates, options.markers);
  }

  auto probe = [&](State& s, const std::string& prompt, Mode mode, bool hinted, int attempt) {
    BackendRequest request{prompt, mode, options.sampling,
                           s.outcome.id + ":" + std::string(mode_name(mode)) + (hinted ? ":hint" : "") +
                               ":" + std::to_string(attempt)};
    const BackendReply reply = backend.invoke(request);
    ModelResponse response = parse_response(reply.text, reply.token_count, options.markers);
    s.probes.push_back({mode, hinted, attempt, response});
    return response;
  };
  auto guarded = [&](State& s, auto&& step) {
    if (s.failure) return;
    try {
      step();
    } catch (const Error& e) {
      if (e.code() != Errc::BackendFailure && e.code() != Errc::Timeout && e.code() != Errc::ProtocolError) {
        throw;
      }
      s.failure = e.what();
    }
  };

  // Direct answers for everything.
  parallel_for(states.size(), options.jobs, [&](std::size_t i) {
    State& s = states[i];
    guarded(s, [&] {
      s.outcome.nothink = probe(s, s.outcome.prompt, Mode::Nothink, false, 0);
      if (check_answer(*s.outcome.nothink, problems[i].ground_truth)) {
        s.outcome.difficulty = Difficulty::Simple;
        s.resolved = true;
      }
    });
  });
  // Reasoning for the remainder.
  parallel_for(states.size(), options.jobs, [&](std::size_t i) {
    State& s = states[i];
    if (s.resolved) return;
    guarded(s, [&] {
      s.outcome.think = probe(s, s.outcome.prompt, Mode::Think, false, 0);
      if (check_answer(*s.outcome.think, problems[i].ground_truth)) {
        s.outcome.difficulty = Difficulty::Challenging;
        s.resolved = true;
      }
    });
  });
  // Hinted rejection sampling for the rest; Simple problems get their
  // reasoning response here too.
  parallel_for(states.size(), options.jobs, [&](std::size_t i) {
    State& s = states[i];
    guarded(s, [&] {
      if (s.resolved) {
        if (s.outcome.difficulty == Difficulty::Simple) {
          s.outcome.think = probe(s, s.outcome.prompt, Mode::Think, false, 0);
        }
        return;
      }
      const std::string prompt = hinted_prompt(s.outcome.prompt, problems[i], templates, options);
      for (int attempt = 0; attempt < options.rejection_budget; ++attempt) {
        ModelResponse response = probe(s, prompt, Mode::Think, true, attempt);
        s.outcome.hint_attempts = attempt + 1;
        if (check_answer(response, problems[i].ground_truth)) {
          s.outcome.think = std::move(response);
          s.outcome.difficulty = Difficulty::Formidable;
          s.resolved = true;
          return;
        }
      }
      s.unsolved = true;
    });
  });

  Partition out;
  for (auto& s : states) {
    if (s.failure || s.unsolved) {
      out.discarded.push_back({s.outcome.index, s.outcome.id,
                               s.failure ? "backend_failure: " + *s.failure
                                         : "unsolved after " + std::to_string(options.rejection_budget) +
                                               " hinted attempts",
                               std::move(s.probes)});
      continue;
    }
    switch (s.outcome.difficulty) {
      case Difficulty::Simple: out.simple.push_back(std::move(s.outcome)); break;
      case Difficulty::Challenging: out.challenging.push_back(std::move(s.outcome)); break;
      case Difficulty::Formidable: out.formidable.push_back(std::move(s.outcome)); break;
    }
  }
  return out;
}

struct PreferencePair {
  std::size_t index = 0;
  std::string problem_id;
  std::string prompt;
  ModelResponse preferred;
  ModelResponse dispreferred;
  Difficulty difficulty = Difficulty::Simple;
};

inline const ModelResponse& require_response(const ProblemOutcome& o, Mode mode) {
  const auto& slot = mode == Mode::Think ? o.think : o.nothink;
  if (!slot || slot->mode != mode) {
    throw Error(Errc::MissingResponse, "problem '" + o.id + "' lacks a " + std::string(mode_name(mode)) +
                                           " response");
  }
  return *slot;
}

/// With `balance`, the larger of {nothink preferred} and {nothink
/// dispreferred} is down-sampled with `seed` to the size of the smaller.
/// Pairs come out in input problem order.
inline std::vector<PreferencePair> build_preference_pairs(const Partition& partition, bool balance,
                                                          std::uint64_t seed) {
  std::vector<PreferencePair> direct;     // nothink preferred
  std::vector<PreferencePair> reasoned;   // think preferred
  for (const auto& o : partition.simple) {
    direct.push_back({o.index, o.id, o.prompt, require_response(o, Mode::Nothink),
                      require_response(o, Mode::Think), Difficulty::Simple});
  }
  for (const auto* group : {&partition.challenging, &partition.formidable}) {
    for (const auto& o : *group) {
      reasoned.push_back({o.index, o.id, o.prompt, require_response(o, Mode::Think),
                          require_response(o, Mode::Nothink), o.difficulty});
    }
  }
  if (balance) {
    std::mt19937_64 rng(seed);
    auto& larger = direct.size() >= reasoned.size() ? direct : reasoned;
    const std::size_t keep = std::min(direct.size(), reasoned.size());
    std::vector<PreferencePair> kept;
    for (std::size_t i : sample_indices(larger.size(), keep, rng)) kept.push_back(std::move(larger[i]));
    larger = std::move(kept);
  }
  std::vector<PreferencePair> pairs;
  pairs.reserve(direct.size() + reasoned.size());
  std::merge(std::make_move_iterator(direct.begin()), std::make_move_iterator(direct.end()),
             std::make_move_iterator(reasoned.begin()), std::make_move_iterator(reasoned.end()),
             std::back_inserter(pairs),
             [](const PreferencePair& a, const PreferencePair& b) { return a.index < b.index; });
  return pairs;
}

inline nlohmann::ordered_json pair_json(const PreferencePair& p) {
  return {{"id", p.problem_id},
          {"prompt", p.prompt},
          {"preferred", p.preferred.raw},
          {"dispreferred", p.dispreferred.raw},
          {"difficulty", difficulty_name(p.difficulty)},
          {"preferred_mode", mode_name(p.preferred.mode)}};
}

inline nlohmann::ordered_json discard_json(const DiscardRecord& d) {
  nlohmann::ordered_json probes = nlohmann::ordered_json::array();
  for (const auto& p : d.probes) {
    probes.push_back({{"mode", mode_name(p.mode)},
                      {"hinted", p.hinted},
                      {"attempt", p.attempt},
                      {"answer", p.response.answer},
                      {"raw", p.response.raw}});
  }
  return {{"id", d.id}, {"reason", d.reason}, {"responses", probes}};
}

// ---------------------------------------------------------------------------
// DPO objective

inline void require_finite(std::initializer_list<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteInput, "DPO inputs must be finite");
  }
}

/// log(sigmoid(x)) without overflow.
inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// (log pi(y+) - log ref(y+)) - (log pi(y-) - log ref(y-))
inline double dpo_margin(double logp_policy_pref, double logp_policy_disp, double logp_ref_pref,
                         double logp_ref_disp) {
  return (logp_policy_pref - logp_ref_pref) - (logp_policy_disp - logp_ref_disp);
}

inline double dpo_loss(double logp_policy_pref, double logp_policy_disp, double logp_ref_pref,
                       double logp_ref_disp, double beta = kDefaultDpoBeta) {
  require_finite({logp_policy_pref, logp_policy_disp, logp_ref_pref, logp_ref_disp, beta});
  if (!(beta > 0.0)) throw Error(Errc::InvalidArgument, "beta must be positive");
  return -log_sigmoid(beta * dpo_margin(logp_policy_pref, logp_policy_disp, logp_ref_pref, logp_ref_disp));
}

/// Gradient of dpo_loss with respect to (policy_pref, policy_disp, ref_pref,
/// ref_disp).
inline std::array<double, 4> dpo_loss_gradient(double logp_policy_pref, double logp_policy_disp,
                                               double logp_ref_pref, double logp_ref_disp,
                                               double beta = kDefaultDpoBeta) {
  require_finite({logp_policy_pref, logp_policy_disp, logp_ref_pref, logp_ref_disp, beta});
  if (!(beta > 0.0)) throw Error(Errc::InvalidArgument, "beta must be positive");
  const double x = beta * dpo_margin(logp_policy_pref, logp_policy_disp, logp_ref_pref, logp_ref_disp);
  const double g = beta * sigmoid(-x);
  return {-g, g, g, -g};
}

struct DpoSample {
  double logp_policy_pref;
  double logp_policy_disp;
  double logp_ref_pref;
  double logp_ref_disp;
};

/// Mean loss over a batch of pairs.
inline double mean_dpo_loss(std::span<const DpoSample> batch, double beta = kDefaultDpoBeta) {
  if (batch.empty()) throw Error(Errc::EmptyInput, "empty DPO batch");
  double total = 0.0;
  for (const auto& s : batch) {
    total += dpo_loss(s.logp_policy_pref, s.logp_policy_disp, s.logp_ref_pref, s.logp_ref_disp, beta);
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace rastar
