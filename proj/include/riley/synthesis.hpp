#pragma once

#include <optional>
#include <string>
#include <vector>

#include "riley/ballot.hpp"
#include "riley/debate.hpp"

namespace riley {

struct FinalAnswer {
  std::string reasoning;
  std::optional<std::string> thoughts;  // present iff Riley mode
  std::string final;
  std::vector<EmotionId> winning_emotions;
};

struct ParsedSegments {
  std::string reasoning;
  std::optional<std::string> thoughts;
  std::string final;
  std::string discarded;  // text before the first header
  std::vector<std::string> warnings;
};

namespace detail {

enum class Segment { None, Reasoning, Thoughts, Final };

inline Segment match_header(std::string_view line, std::string_view& rest) {
  static constexpr std::pair<std::string_view, Segment> headers[] = {
      {"REASONING:", Segment::Reasoning}, {"THOUGHTS:", Segment::Thoughts}, {"FINAL ANSWER:", Segment::Final}};
  auto hl = header_line(line);
  for (const auto& [h, seg] : headers) {
    if (text::istarts_with(hl, h)) {
      rest = hl.substr(h.size());
      while (!rest.empty() && (rest.front() == '*' || rest.front() == '_')) rest.remove_prefix(1);
      return seg;
    }
  }
  return Segment::None;
}

}  // namespace detail

/// Splits on "REASONING:", "THOUGHTS:" and "FINAL ANSWER:" at line start
/// (case-insensitive, first occurrence of each, any order). Think spans are
/// removed first. Armando mode drops THOUGHTS; a missing FINAL ANSWER throws.
inline ParsedSegments parse_segments(std::string_view raw, SynthesisMode mode) {
  require(!text::is_blank(raw), "synthesis output must be non-empty");
  using detail::Segment;
  const std::string cleaned = text::strip_think_spans(raw);

  std::optional<std::string> parts[4];
  Segment current = Segment::None;
  std::string discarded;
  for (auto line : text::split_lines(cleaned)) {
    std::string_view rest;
    Segment seg = detail::match_header(line, rest);
    if (seg != Segment::None && !parts[static_cast<int>(seg)]) {
      current = seg;
      parts[static_cast<int>(seg)] = std::string(rest);
      continue;
    }
    if (current == Segment::None) {
      discarded += line;
      discarded += '\n';
    } else {
      auto& p = *parts[static_cast<int>(current)];
      p += '\n';
      p += line;
    }
  }

  auto take = [&](Segment s) -> std::optional<std::string> {
    auto& p = parts[static_cast<int>(s)];
    if (!p) return std::nullopt;
    return std::string(text::trim(*p));
  };

  ParsedSegments out;
  out.discarded = std::string(text::trim(discarded));
  auto final = take(Segment::Final);
  if (!final || final->empty())
    throw Error(ErrorCode::MissingFinalAnswer, "no FINAL ANSWER segment").with_detail(std::string(raw));
  out.final = std::move(*final);

  if (auto r = take(Segment::Reasoning)) {
    out.reasoning = std::move(*r);
  } else {
    out.warnings.emplace_back("REASONING segment missing; left empty");
  }

  auto thoughts = take(Segment::Thoughts);
  if (mode == SynthesisMode::Armando) {
    if (thoughts) out.warnings.emplace_back("THOUGHTS segment dropped in Armando mode");
  } else if (thoughts) {
    out.thoughts = std::move(thoughts);
  } else {
    out.thoughts = std::string();
    out.warnings.emplace_back("THOUGHTS segment missing; left empty");
  }
  return out;
}

inline std::string serialize(const FinalAnswer& a) {
  std::string s = "REASONING: " + a.reasoning + "\n";
  if (a.thoughts) s += "THOUGHTS: " + *a.thoughts + "\n";
  s += "FINAL ANSWER: " + a.final;
  return s;
}

inline constexpr std::string_view kVerifiedHeader = "VERIFIED INFORMATION:";

inline std::string build_synthesis_prompt(const Config& cfg, const DebateTranscript& transcript,
                                          const BallotResult& ballot, SynthesisMode mode,
                                          const std::optional<std::string>& rag_context) {
  const RoundOutputs& finals = transcript.final_round();
  std::string prompt;
  if (auto* w = std::get_if<Winner>(&ballot.outcome)) {
    std::string justifications;
    for (const auto& v : ballot.votes) {
      if (!(v.choice == w->emotion)) continue;
      justifications += "- " + v.voter.name() + ": " + v.justification + "\n";
    }
    prompt = text::render(cfg.synthesis.winner_template, {{"winner", w->emotion.name()},
                                                          {"query", transcript.query},
                                                          {"winner_answer", finals.at(w->emotion)},
                                                          {"justifications", std::string(text::trim(justifications))}});
  } else {
    const auto& tied = std::get<Tie>(ballot.outcome).emotions;
    std::vector<std::string> names;
    std::string answers;
    for (const auto& id : tied) {
      names.push_back(id.name());
      if (!answers.empty()) answers += "\n\n";
      answers += "ANSWER FROM " + id.name() + ":\n" + finals.at(id);
    }
    prompt = text::render(cfg.synthesis.tie_template,
                          {{"tied", text::join(names, ", ")}, {"query", transcript.query}, {"tied_answers", answers}});
  }

  if (rag_context && !text::is_blank(*rag_context)) {
    prompt += "\n\n";
    prompt += kVerifiedHeader;
    prompt += "\n" + *rag_context + "\n\n" + cfg.synthesis.grounding_instruction;
  }
  prompt += "\n\n" + (mode == SynthesisMode::Riley ? cfg.synthesis.riley_format : cfg.synthesis.armando_format);
  if (mode == SynthesisMode::Armando) prompt = cfg.synthesis.armando_preamble + "\n\n" + prompt;
  return prompt;
}

inline constexpr const char* kSynthesisSystemPrompt =
    "You are the final voice of Riley's mind. You integrate the perspectives of Riley's emotions "
    "into one response for the user.";

inline constexpr int kSynthesisAttempts = 2;

/// Reasoning backend in Riley mode, text backend with the reasoning preamble
/// in Armando mode. Retries once when the FINAL ANSWER segment is missing.
inline FinalAnswer synthesize(PipelineContext& ctx, const DebateTranscript& transcript, const BallotResult& ballot,
                              SynthesisMode mode, const std::optional<std::string>& rag_context) {
  const std::string prompt = build_synthesis_prompt(ctx.config, transcript, ballot, mode, rag_context);
  const auto role = mode == SynthesisMode::Riley ? BackendRole::Reasoning : BackendRole::Text;

  std::vector<CallRecord> attempts;
  for (int attempt = 0; attempt < kSynthesisAttempts; ++attempt) {
    Completion done;
    try {
      done = ctx.gateway.invoke(role, {ChatMessage::system(kSynthesisSystemPrompt), ChatMessage::user(prompt)},
                                ctx.gateway.params_for(role, ctx.config.backend.adjudication_temperature),
                                CallTag{"synthesis", "", -1});
    } catch (Error& e) {
      e.with_stage("synthesis");
      throw;
    }
    attempts.push_back(done.record);
    try {
      auto seg = parse_segments(done.reply.content, mode);
      FinalAnswer answer{seg.reasoning, seg.thoughts, seg.final, ballot.outcome_set()};

      json payload = call_payload(done.record);
      json raws = json::array();
      for (const auto& a : attempts) raws.push_back(a.response);
      json winners = json::array();
      for (const auto& id : answer.winning_emotions) winners.push_back(id.name());
      payload["raw_attempts"] = std::move(raws);
      payload["mode"] = to_string(mode);
      payload["reasoning"] = answer.reasoning;
      if (answer.thoughts) payload["thoughts"] = *answer.thoughts;
      payload["final_answer"] = answer.final;
      payload["winning_emotions"] = std::move(winners);
      payload["discarded"] = seg.discarded;
      payload["warnings"] = seg.warnings;
      payload["grounded"] = rag_context.has_value() && !text::is_blank(*rag_context);
      log_event(ctx.log, EventKind::Synthesis, std::move(payload));
      for (const auto& w : seg.warnings) log_event(ctx.log, EventKind::Warning, {{"stage", "synthesis"}, {"message", w}});
      return answer;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingFinalAnswer) throw;
    }
  }
  throw Error(ErrorCode::MalformedSynthesis,
              "no FINAL ANSWER segment after " + std::to_string(kSynthesisAttempts) + " attempts")
      .with_stage("synthesis")
      .with_detail(attempts.back().response);
}

}  // namespace riley
