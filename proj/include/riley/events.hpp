#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <ctime>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "riley/gateway.hpp"

namespace riley {

enum class EventKind {
  SessionStart,
  UserTurn,
  ContextSubmitted,
  ImageDescription,
  RoundStarted,
  Generation,
  Vote,
  Abstention,
  Tally,
  ContextUpdate,
  Retrieval,
  Synthesis,
  Warning,
  Error,
};

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::SessionStart: return "session_start";
    case EventKind::UserTurn: return "user_turn";
    case EventKind::ContextSubmitted: return "context_submitted";
    case EventKind::ImageDescription: return "image_description";
    case EventKind::RoundStarted: return "round_started";
    case EventKind::Generation: return "generation";
    case EventKind::Vote: return "vote";
    case EventKind::Abstention: return "abstention";
    case EventKind::Tally: return "tally";
    case EventKind::ContextUpdate: return "context_update";
    case EventKind::Retrieval: return "retrieval";
    case EventKind::Synthesis: return "synthesis";
    case EventKind::Warning: return "warning";
    case EventKind::Error: return "error";
  }
  return "warning";
}

inline EventKind event_kind_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(EventKind::Error); ++i) {
    auto k = static_cast<EventKind>(i);
    if (to_string(k) == s) return k;
  }
  throw riley::Error(ErrorCode::PreconditionViolation, "unknown event kind '" + std::string(s) + "'");
}

/// Name used for the server-sent event stream.
inline std::string_view progress_name(EventKind k) {
  switch (k) {
    case EventKind::Generation: return "agent_answered";
    case EventKind::Vote:
    case EventKind::Abstention: return "vote_cast";
    case EventKind::Tally: return "tally_done";
    case EventKind::Retrieval: return "retrieval_done";
    case EventKind::Synthesis: return "synthesis_done";
    default: return to_string(k);
  }
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp = std::chrono::system_clock::now()) {
  auto secs = std::chrono::time_point_cast<std::chrono::seconds>(tp);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(tp - secs).count();
  std::time_t t = std::chrono::system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

struct LogEvent {
  std::uint64_t seq = 0;
  std::string timestamp;
  EventKind kind = EventKind::Warning;
  std::optional<std::string> emotion;
  std::optional<int> round;
  json payload = json::object();

  json to_json() const {
    json j = {{"seq", seq}, {"ts", timestamp}, {"kind", to_string(kind)}, {"payload", payload}};
    if (emotion) j["emotion"] = *emotion;
    if (round) j["round"] = *round;
    return j;
  }

  static LogEvent from_json(const json& j) {
    LogEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.timestamp = j.at("ts").get<std::string>();
    e.kind = event_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("emotion")) e.emotion = j.at("emotion").get<std::string>();
    if (j.contains("round")) e.round = j.at("round").get<int>();
    e.payload = j.value("payload", json::object());
    return e;
  }
};

inline json to_json(const GenerationParams& p) {
  json j = {{"model", p.model}, {"temperature", p.temperature}};
  if (p.seed) j["seed"] = *p.seed;
  if (p.max_tokens) j["max_tokens"] = *p.max_tokens;
  return j;
}

/// Payload fields shared by every event that records a backend call.
inline json call_payload(const CallRecord& rec) {
  json prompt = rec.messages.empty() ? json("") : json(rec.messages.back().content);
  json j = {{"operation", rec.operation},
            {"backend_role", to_string(rec.role)},
            {"params", to_json(rec.params)},
            {"prompt", std::move(prompt)},
            {"message_count", rec.messages.size()},
            {"raw_response", rec.response},
            {"latency_ms", rec.latency_ms},
            {"attempts", rec.attempts},
            {"call_id", rec.id}};
  if (!rec.messages.empty() && rec.messages.front().role == Role::System)
    j["system_prompt"] = rec.messages.front().content;
  if (!rec.image_sizes.empty()) j["image_bytes"] = rec.image_sizes;
  return j;
}

/// Append-only, thread-safe event sequence with gap-free seq numbers.
class EventLog {
 public:
  LogEvent append(EventKind kind, json payload = json::object(), std::optional<std::string> emotion = std::nullopt,
                  std::optional<int> round = std::nullopt) {
    LogEvent e;
    e.kind = kind;
    e.payload = std::move(payload);
    e.emotion = std::move(emotion);
    e.round = round;
    {
      std::lock_guard lk(mu_);
      e.seq = events_.size() + 1;
      e.timestamp = utc_timestamp();
      events_.push_back(e);
    }
    cv_.notify_all();
    return e;
  }

  std::vector<LogEvent> snapshot() const {
    std::lock_guard lk(mu_);
    return events_;
  }

  /// Events with seq > `after`.
  std::vector<LogEvent> since(std::uint64_t after) const {
    std::lock_guard lk(mu_);
    if (after >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(after), events_.end()};
  }

  std::size_t size() const {
    std::lock_guard lk(mu_);
    return events_.size();
  }

  std::size_t count(EventKind kind) const {
    std::lock_guard lk(mu_);
    std::size_t n = 0;
    for (const auto& e : events_)
      if (e.kind == kind) ++n;
    return n;
  }

  /// Blocks until an event with seq > `after` exists, the log is closed, or
  /// the timeout expires. Returns true when new events are available.
  template <typename Rep, typename Period>
  bool wait_after(std::uint64_t after, std::chrono::duration<Rep, Period> timeout) const {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return closed_ || events_.size() > after; });
    return events_.size() > after;
  }

  void close() {
    {
      std::lock_guard lk(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<LogEvent> events_;
  bool closed_ = false;
};

inline void log_event(EventLog* log, EventKind kind, json payload = json::object(),
                      std::optional<std::string> emotion = std::nullopt, std::optional<int> round = std::nullopt) {
  if (log) log->append(kind, std::move(payload), std::move(emotion), round);
}

}  // namespace riley
