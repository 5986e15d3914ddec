#pragma once

#include <algorithm>
#include <future>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "riley/debate.hpp"
#include "riley/emotion.hpp"

namespace riley {

struct Vote {
  EmotionId voter;
  EmotionId choice;
  std::string justification;
};

struct Winner {
  EmotionId emotion;
};

/// All emotions sharing the maximum count, in registry order.
struct Tie {
  std::vector<EmotionId> emotions;
};

using Outcome = std::variant<Winner, Tie>;

struct BallotResult {
  std::vector<Vote> votes;
  std::vector<EmotionId> abstentions;
  std::map<EmotionId, std::size_t> tally;
  Outcome outcome = Tie{};
  // Every voter abstained; the outcome is a tie over the whole registry.
  bool degenerate = false;

  bool has_winner() const { return std::holds_alternative<Winner>(outcome); }
  std::vector<EmotionId> outcome_set() const {
    if (auto* w = std::get_if<Winner>(&outcome)) return {w->emotion};
    return std::get<Tie>(outcome).emotions;
  }
};

/// Plurality count. Winner iff a unique maximum exists.
inline BallotResult tally(std::span<const Vote> votes, const EmotionRegistry& registry) {
  BallotResult r;
  for (const auto& id : registry) r.tally[id] = 0;
  for (const auto& v : votes) {
    auto canonical = registry.find(v.choice.name());
    require(canonical.has_value(), "vote for unregistered emotion '" + v.choice.name() + "'");
    ++r.tally[*canonical];
    r.votes.push_back(v);
  }
  std::size_t best = 0;
  for (const auto& [id, n] : r.tally) best = std::max(best, n);
  if (best == 0) {
    r.degenerate = true;
    r.outcome = Tie{registry.ids()};
    return r;
  }
  std::vector<EmotionId> top;
  for (const auto& id : registry)
    if (r.tally[id] == best) top.push_back(id);
  if (top.size() == 1) r.outcome = Winner{top.front()};
  else r.outcome = Tie{std::move(top)};
  return r;
}

namespace detail {

inline std::string_view strip_decoration(std::string_view s) {
  constexpr std::string_view junk = " \t*_`\"'.!<>[]()#-";
  while (!s.empty() && junk.find(s.front()) != std::string_view::npos) s.remove_prefix(1);
  while (!s.empty() && junk.find(s.back()) != std::string_view::npos) s.remove_suffix(1);
  return s;
}

// Drops markdown emphasis and list markers in front of a header.
inline std::string_view header_line(std::string_view line) {
  line = text::trim(line);
  while (!line.empty() && (line.front() == '*' || line.front() == '#' || line.front() == '-' ||
                           line.front() == '>' || line.front() == '_'))
    line = text::trim(line.substr(1));
  return line;
}

}  // namespace detail

/// Reads "VOTE: <Name>" and "JUSTIFICATION: <text>" lines (case-insensitive)
/// after removing think spans. Returns nullopt when either is missing or the
/// name is not registered.
inline std::optional<Vote> parse_vote(std::string_view raw, const EmotionId& voter, const EmotionRegistry& registry) {
  const std::string cleaned = text::strip_think_spans(raw);
  auto lines = text::split_lines(cleaned);
  std::optional<EmotionId> choice;
  std::optional<std::string> justification;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = detail::header_line(lines[i]);
    if (!choice && text::istarts_with(line, "VOTE:")) {
      choice = registry.find(detail::strip_decoration(line.substr(5)));
    } else if (!justification && text::istarts_with(line, "JUSTIFICATION:")) {
      auto rest = text::trim(line.substr(14));
      while (!rest.empty() && (rest.front() == '*' || rest.front() == '_')) rest = text::trim(rest.substr(1));
      if (rest.empty() && i + 1 < lines.size()) rest = text::trim(lines[i + 1]);
      if (!rest.empty()) justification = std::string(rest);
    }
  }
  if (!choice || !justification) return std::nullopt;
  return Vote{voter, *choice, *justification};
}

inline std::string candidate_block(const RoundOutputs& candidates) {
  std::string block;
  for (const auto& [id, answer] : candidates.outputs) {
    if (!block.empty()) block += "\n\n";
    block += "CANDIDATE " + id.name() + ":\n" + answer;
  }
  return block;
}

inline std::string build_vote_prompt(const Config& cfg, const EmotionAgent& agent, const RoundOutputs& candidates,
                                     const std::string& query, SynthesisMode mode) {
  std::string prompt = text::render(
      cfg.ballot.vote_template,
      {{"query", query}, {"candidates", candidate_block(candidates)}, {"emotion", agent.id().name()}});
  if (mode == SynthesisMode::Armando) prompt = cfg.ballot.armando_preamble + "\n\n" + prompt;
  return prompt;
}

struct CastResult {
  std::optional<Vote> vote;  // nullopt: abstention
  std::vector<CallRecord> attempts;
};

inline constexpr int kVoteAttempts = 2;

/// One vote. Riley mode uses the reasoning backend; Armando mode the text
/// backend with a reasoning preamble. Both keep the agent's persona prompt.
inline CastResult cast_vote(PipelineContext& ctx, const EmotionAgent& agent, const RoundOutputs& candidates,
                            const EmotionRegistry& registry, const std::string& query, SynthesisMode mode) {
  for (const auto& id : registry)
    require(candidates.outputs.contains(id), "candidate missing for emotion '" + id.name() + "'");
  const auto role = mode == SynthesisMode::Riley ? BackendRole::Reasoning : BackendRole::Text;
  const std::string prompt = build_vote_prompt(ctx.config, agent, candidates, query, mode);

  CastResult out;
  for (int attempt = 0; attempt < kVoteAttempts; ++attempt) {
    try {
      auto done = ctx.gateway.invoke(role, {ChatMessage::system(agent.persona_prompt()), ChatMessage::user(prompt)},
                                     ctx.gateway.params_for(role, ctx.config.backend.adjudication_temperature),
                                     CallTag{"vote", agent.id().name(), -1});
      out.attempts.push_back(done.record);
      if (auto v = parse_vote(done.reply.content, agent.id(), registry)) {
        out.vote = std::move(v);
        break;
      }
    } catch (Error& e) {
      e.with_stage("vote").with_emotion(agent.id().name());
      throw;
    }
  }
  return out;
}

/// Casts every agent's vote, logs one vote-or-abstention event per agent and
/// one tally event.
inline BallotResult run_ballot(PipelineContext& ctx, std::span<const EmotionAgent> agents,
                               const RoundOutputs& candidates, const EmotionRegistry& registry,
                               const std::string& query, SynthesisMode mode) {
  std::vector<CastResult> results(agents.size());
  if (ctx.config.debate.parallel && agents.size() > 1) {
    std::vector<std::future<CastResult>> pending;
    for (const auto& a : agents)
      pending.push_back(std::async(std::launch::async, [&, ap = &a] {
        return cast_vote(ctx, *ap, candidates, registry, query, mode);
      }));
    std::exception_ptr first;
    for (std::size_t i = 0; i < pending.size(); ++i) {
      try {
        results[i] = pending[i].get();
      } catch (...) {
        if (!first) first = std::current_exception();
      }
    }
    if (first) std::rethrow_exception(first);
  } else {
    for (std::size_t i = 0; i < agents.size(); ++i)
      results[i] = cast_vote(ctx, agents[i], candidates, registry, query, mode);
  }

  std::vector<Vote> votes;
  std::vector<EmotionId> abstentions;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto& r = results[i];
    json payload = r.attempts.empty() ? json::object() : call_payload(r.attempts.back());
    json raws = json::array();
    for (const auto& a : r.attempts) raws.push_back(a.response);
    payload["raw_attempts"] = std::move(raws);
    if (r.vote) {
      payload["choice"] = r.vote->choice.name();
      payload["justification"] = r.vote->justification;
      log_event(ctx.log, EventKind::Vote, std::move(payload), agents[i].id().name());
      votes.push_back(*r.vote);
    } else {
      payload["reason"] = "unparseable vote after " + std::to_string(r.attempts.size()) + " attempts";
      log_event(ctx.log, EventKind::Abstention, std::move(payload), agents[i].id().name());
      abstentions.push_back(agents[i].id());
    }
  }

  BallotResult result = tally(votes, registry);
  result.abstentions = std::move(abstentions);

  json counts = json::object();
  for (const auto& id : registry) counts[id.name()] = result.tally[id];
  json outcome_names = json::array();
  for (const auto& id : result.outcome_set()) outcome_names.push_back(id.name());
  log_event(ctx.log, EventKind::Tally,
            {{"tally", counts},
             {"outcome", result.has_winner() ? "winner" : "tie"},
             {"emotions", outcome_names},
             {"abstentions", result.abstentions.size()},
             {"degenerate", result.degenerate}});
  if (result.degenerate)
    log_event(ctx.log, EventKind::Warning, {{"stage", "tally"}, {"message", "every voter abstained; tie over the whole registry"}});
  return result;
}

}  // namespace riley
