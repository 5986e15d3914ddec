#pragma once

#include <exception>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "riley/config.hpp"
#include "riley/emotion.hpp"
#include "riley/events.hpp"
#include "riley/gateway.hpp"

namespace riley {

inline constexpr int kDebateRounds = 4;

struct RoundOutputs {
  int round = 0;
  std::map<EmotionId, std::string> outputs;

  const std::string& at(const EmotionId& id) const {
    auto it = outputs.find(id);
    require(it != outputs.end(), "no output for emotion '" + id.name() + "' in round " + std::to_string(round));
    return it->second;
  }

  /// One non-empty entry per agent and nothing else.
  bool complete_for(std::span<const EmotionAgent> agents) const {
    if (outputs.size() != agents.size()) return false;
    for (const auto& a : agents) {
      auto it = outputs.find(a.id());
      if (it == outputs.end() || it->second.empty()) return false;
    }
    return true;
  }
};

struct DebateTranscript {
  std::string query;
  std::vector<RoundOutputs> rounds;

  std::size_t output_count() const {
    std::size_t n = 0;
    for (const auto& r : rounds) n += r.outputs.size();
    return n;
  }
  bool complete() const { return rounds.size() == kDebateRounds; }
  const RoundOutputs& final_round() const {
    require(complete(), "debate transcript is incomplete");
    return rounds.back();
  }
};

/// What every pipeline stage needs: the backend gateway, the configuration
/// and (optionally) the session log.
struct PipelineContext {
  Gateway& gateway;
  const Config& config;
  EventLog* log = nullptr;
};

namespace detail {

/// Runs one round. `prompt_for` returns the round prompt appended to the
/// agent's history before the call (nullopt: call on the history as-is).
/// Returns only after every agent's call has finished.
inline RoundOutputs run_round(PipelineContext& ctx, std::span<EmotionAgent> agents, int round,
                              const std::function<std::optional<std::string>(const EmotionAgent&)>& prompt_for) {
  require(!agents.empty(), "agents must be initialised");
  log_event(ctx.log, EventKind::RoundStarted, {{"agents", agents.size()}}, std::nullopt, round);

  struct Slot {
    std::optional<std::string> output;
    std::exception_ptr error;
  };
  std::vector<Slot> slots(agents.size());

  auto work = [&](std::size_t i) {
    EmotionAgent& agent = agents[i];
    try {
      if (auto prompt = prompt_for(agent)) agent.append(ChatMessage::user(std::move(*prompt)));
      auto done = ctx.gateway.invoke(BackendRole::Text, agent.history(),
                                     ctx.gateway.params_for(BackendRole::Text, ctx.config.backend.agent_temperature),
                                     CallTag{"debate", agent.id().name(), round});
      agent.append(done.reply);
      log_event(ctx.log, EventKind::Generation, call_payload(done.record), agent.id().name(), round);
      slots[i].output = std::move(done.reply.content);
    } catch (...) {
      slots[i].error = std::current_exception();
    }
  };

  if (ctx.config.debate.parallel && agents.size() > 1) {
    std::vector<std::future<void>> pending;
    pending.reserve(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i) pending.push_back(std::async(std::launch::async, work, i));
    for (auto& f : pending) f.get();
  } else {
    for (std::size_t i = 0; i < agents.size(); ++i) work(i);
  }

  RoundOutputs out{round, {}};
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (slots[i].error) {
      const std::string stage = "round " + std::to_string(round);
      try {
        std::rethrow_exception(slots[i].error);
      } catch (Error& e) {
        e.with_stage(stage).with_emotion(agents[i].id().name());
        throw;
      } catch (const std::exception& e) {
        throw Error(ErrorCode::TransportError, e.what()).with_stage(stage).with_emotion(agents[i].id().name());
      }
    }
    out.outputs.emplace(agents[i].id(), std::move(*slots[i].output));
  }
  return out;
}

/// "Name: text" blocks for every emotion except `self`, in emotion-name order.
inline std::string peer_block(const RoundOutputs& prior, const EmotionId& self) {
  std::string block;
  for (const auto& [id, output] : prior.outputs) {
    if (id == self) continue;
    if (!block.empty()) block += "\n\n";
    block += id.name() + ": " + output;
  }
  return block;
}

inline RoundOutputs run_peer_round(PipelineContext& ctx, std::span<EmotionAgent> agents, const RoundOutputs& prior,
                                   int round, const std::string& tmpl) {
  require(prior.round == round - 1, "round " + std::to_string(round) + " needs round " +
                                        std::to_string(round - 1) + " outputs, got round " +
                                        std::to_string(prior.round));
  require(prior.complete_for(agents), "round " + std::to_string(prior.round) + " outputs are incomplete");
  return run_round(ctx, agents, round, [&](const EmotionAgent& a) -> std::optional<std::string> {
    return text::render(tmpl, {{"peers", peer_block(prior, a.id())}, {"emotion", a.id().name()}});
  });
}

}  // namespace detail

/// Initial answers: each agent answers from its own history (the injected user turn).
inline RoundOutputs run_round0(PipelineContext& ctx, std::span<EmotionAgent> agents) {
  for (const auto& a : agents)
    require(a.history().size() >= 2 && a.history().back().role == Role::User,
            "user turn must be injected before round 0");
  return detail::run_round(ctx, agents, 0, [](const EmotionAgent&) { return std::nullopt; });
}

/// Cross-review of the other emotions' round-0 answers.
inline RoundOutputs run_round1(PipelineContext& ctx, std::span<EmotionAgent> agents, const RoundOutputs& prior) {
  return detail::run_peer_round(ctx, agents, prior, 1, ctx.config.debate.round1_template);
}

/// Refined perspective from the other emotions' round-1 replies.
inline RoundOutputs run_round2(PipelineContext& ctx, std::span<EmotionAgent> agents, const RoundOutputs& prior) {
  return detail::run_peer_round(ctx, agents, prior, 2, ctx.config.debate.round2_template);
}

/// Final reassessment of the original query; outputs are the ballot candidates.
inline RoundOutputs run_round3(PipelineContext& ctx, std::span<EmotionAgent> agents, const std::string& query) {
  require(!text::is_blank(query), "query must be non-empty");
  return detail::run_round(ctx, agents, 3, [&](const EmotionAgent& a) -> std::optional<std::string> {
    return text::render(ctx.config.debate.round3_template, {{"query", query}, {"emotion", a.id().name()}});
  });
}

/// Injects the turn and runs rounds 0-3 with a barrier between rounds.
/// The first agent failure aborts; events of finished rounds stay in the log.
inline DebateTranscript run_debate(PipelineContext& ctx, std::span<EmotionAgent> agents, const UserTurn& turn) {
  inject_user_turn(agents, turn);
  DebateTranscript t{turn.question, {}};
  t.rounds.push_back(run_round0(ctx, agents));
  t.rounds.push_back(run_round1(ctx, agents, t.rounds.back()));
  t.rounds.push_back(run_round2(ctx, agents, t.rounds.back()));
  t.rounds.push_back(run_round3(ctx, agents, turn.question));
  return t;
}

}  // namespace riley
