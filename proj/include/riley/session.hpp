#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "riley/ballot.hpp"
#include "riley/debate.hpp"
#include "riley/emotion.hpp"
#include "riley/events.hpp"
#include "riley/gateway.hpp"
#include "riley/rag.hpp"
#include "riley/synthesis.hpp"

namespace riley {

/// One conversation: persistent agents, the cumulative context (Armando),
/// and an append-only event log. At most one ask runs at a time.
class Session {
 public:
  Session(std::string id, SynthesisMode mode, Config config, std::shared_ptr<Backend> backend,
          std::shared_ptr<const EmbeddingIndex> index)
      : id_(std::move(id)),
        mode_(mode),
        config_(std::move(config)),
        gateway_(std::move(backend), config_.backend),
        index_(std::move(index)),
        registry_(EmotionRegistry::from(config_.emotions)),
        agents_(init_agents(registry_, config_.personas)),
        created_at_(utc_timestamp()) {
    json emotions = json::array();
    for (const auto& e : registry_) emotions.push_back(e.name());
    log_.append(EventKind::SessionStart,
                {{"session", id_},
                 {"mode", to_string(mode_)},
                 {"created_at", created_at_},
                 {"emotions", emotions},
                 {"models",
                  {{"text", config_.backend.text_model},
                   {"vision", config_.backend.vision_model},
                   {"reasoning", config_.backend.reasoning_model},
                   {"embedding", config_.backend.embed_model}}},
                 {"backend_mode", config_.backend.mode},
                 {"agent_temperature", config_.backend.agent_temperature},
                 {"adjudication_temperature", config_.backend.adjudication_temperature},
                 {"personas", persona_json()}});
    if (mode_ == SynthesisMode::Armando && (!index_ || index_->empty()))
      log_.append(EventKind::Warning,
                  {{"stage", "create_session"}, {"message", "Armando session without an ingested corpus; answers will not be grounded"}});
  }

  const std::string& id() const noexcept { return id_; }
  SynthesisMode mode() const noexcept { return mode_; }
  const Config& config() const noexcept { return config_; }
  const EmotionRegistry& registry() const noexcept { return registry_; }
  const EventLog& log() const noexcept { return log_; }
  EventLog& log() noexcept { return log_; }
  const Gateway& gateway() const noexcept { return gateway_; }
  bool busy() const noexcept { return busy_.load(); }

  std::vector<EmotionAgent> agents() const {
    std::lock_guard lk(mu_);
    return agents_;
  }
  CumulativeContext cumulative_context() const {
    std::lock_guard lk(mu_);
    return cumulative_;
  }

  void submit_context(std::string context) {
    BusyGuard guard(busy_);
    require(!text::is_blank(context), "context must be non-empty");
    log_.append(EventKind::ContextSubmitted, {{"context", context}});
    std::lock_guard lk(mu_);
    pending_context_ = std::move(context);
  }

  /// Describes the image with the vision backend; the description, never the
  /// image, is what reaches the agents.
  std::string submit_image(std::span<const std::uint8_t> image) {
    BusyGuard guard(busy_);
    Completion done;
    try {
      done = gateway_.describe_image_recorded(image, config_.image_instruction,
                                              config_.backend.adjudication_temperature, CallTag{"image", "", -1});
    } catch (Error& e) {
      e.with_stage("image");
      log_error(e);
      throw;
    }
    json payload = call_payload(done.record);
    payload["description"] = done.reply.content;
    log_.append(EventKind::ImageDescription, std::move(payload));
    std::lock_guard lk(mu_);
    pending_image_ = done.reply.content;
    return done.reply.content;
  }

  /// Input -> rounds 0-3 -> votes -> tally -> [Armando: context update and
  /// retrieval] -> synthesis.
  FinalAnswer ask(const std::string& question) {
    BusyGuard guard(busy_);
    require(!text::is_blank(question), "question must be non-empty");
    UserTurn turn{question, {}, {}};
    {
      std::lock_guard lk(mu_);
      turn.context = pending_context_;
      turn.image_description = pending_image_;
    }
    json turn_payload = {{"question", question}, {"mode", to_string(mode_)}};
    if (turn.context) turn_payload["context"] = *turn.context;
    if (turn.image_description) turn_payload["image_description"] = *turn.image_description;
    log_.append(EventKind::UserTurn, std::move(turn_payload));

    PipelineContext ctx{gateway_, config_, &log_};
    try {
      // agents_ is only mutated while busy_ is held, so the pipeline works on it directly.
      DebateTranscript transcript = run_debate(ctx, agents_, turn);
      BallotResult ballot = run_ballot(ctx, agents_, transcript.final_round(), registry_, question, mode_);

      std::optional<std::string> rag_context;
      if (mode_ == SynthesisMode::Armando) {
        CumulativeContext next = update_context(ctx, cumulative_context(), question, last_answer_);
        {
          std::lock_guard lk(mu_);
          cumulative_ = next;
        }
        static const EmbeddingIndex empty_index;
        const EmbeddingIndex& index = index_ ? *index_ : empty_index;
        try {
          rag_context = enrich_before_synthesis(ctx, index, next, question, config_.rag.k);
        } catch (Error& e) {
          e.with_stage("retrieval");
          throw;
        }
      }

      FinalAnswer answer = synthesize(ctx, transcript, ballot, mode_, rag_context);
      std::lock_guard lk(mu_);
      last_answer_ = answer.final;
      pending_context_.reset();
      pending_image_.reset();
      return answer;
    } catch (Error& e) {
      log_error(e);
      throw;
    }
  }

  std::string transcript(std::string_view format = "jsonl") const {
    auto events = log_.snapshot();
    if (format == "jsonl") {
      std::string out;
      for (const auto& e : events) {
        out += e.to_json().dump();
        out += '\n';
      }
      return out;
    }
    if (format == "json") {
      json arr = json::array();
      for (const auto& e : events) arr.push_back(e.to_json());
      return json{{"session", id_}, {"mode", to_string(mode_)}, {"events", std::move(arr)}}.dump(2) + "\n";
    }
    throw Error(ErrorCode::PreconditionViolation, "unknown transcript format '" + std::string(format) + "'");
  }

 private:
  class BusyGuard {
   public:
    explicit BusyGuard(std::atomic<bool>& flag) : flag_(flag) {
      if (flag_.exchange(true)) throw Error(ErrorCode::Busy, "an ask is already in flight for this session");
    }
    ~BusyGuard() { flag_.store(false); }
    BusyGuard(const BusyGuard&) = delete;
    BusyGuard& operator=(const BusyGuard&) = delete;

   private:
    std::atomic<bool>& flag_;
  };

  json persona_json() const {
    json j = json::object();
    for (const auto& a : agents_) j[a.id().name()] = a.persona_prompt();
    return j;
  }

  void log_error(const Error& e) {
    json payload = {{"code", to_string(e.code())}, {"message", e.what()}, {"stage", e.stage()}};
    if (!e.detail().empty()) payload["raw_output"] = e.detail();
    std::optional<std::string> emotion;
    if (!e.emotion().empty()) emotion = e.emotion();
    log_.append(EventKind::Error, std::move(payload), emotion);
  }

  std::string id_;
  SynthesisMode mode_;
  Config config_;
  Gateway gateway_;
  std::shared_ptr<const EmbeddingIndex> index_;
  EmotionRegistry registry_;
  EventLog log_;
  std::atomic<bool> busy_{false};

  mutable std::mutex mu_;
  std::vector<EmotionAgent> agents_;
  CumulativeContext cumulative_;
  std::optional<std::string> pending_context_;
  std::optional<std::string> pending_image_;
  std::string last_answer_;
  std::string created_at_;
};

/// Owns all live sessions. Thread-safe.
class SessionManager {
 public:
  SessionManager(Config base, std::shared_ptr<Backend> backend, std::shared_ptr<const EmbeddingIndex> index = nullptr)
      : base_(std::move(base)), backend_(std::move(backend)), index_(std::move(index)) {
    validate(base_);
  }

  const Config& base_config() const noexcept { return base_; }

  std::string create(SynthesisMode mode, const json& overrides = json::object()) {
    Config cfg = base_;
    if (!overrides.is_null() && !overrides.empty()) apply_json(cfg, overrides);
    std::string id = fresh_id();
    auto session = std::make_shared<Session>(id, mode, std::move(cfg), backend_, index_);
    std::lock_guard lk(mu_);
    sessions_.emplace(id, std::move(session));
    return id;
  }

  std::shared_ptr<Session> get(const std::string& id) const {
    std::lock_guard lk(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
    return it->second;
  }

  std::size_t size() const {
    std::lock_guard lk(mu_);
    return sessions_.size();
  }

  void submit_context(const std::string& id, std::string context) { get(id)->submit_context(std::move(context)); }
  std::string submit_image(const std::string& id, std::span<const std::uint8_t> image) {
    return get(id)->submit_image(image);
  }
  FinalAnswer ask(const std::string& id, const std::string& question) { return get(id)->ask(question); }
  std::string get_transcript(const std::string& id, std::string_view format = "jsonl") const {
    return get(id)->transcript(format);
  }

  void close_all() {
    std::lock_guard lk(mu_);
    for (auto& [id, s] : sessions_) s->log().close();
  }

 private:
  std::string fresh_id() {
    std::lock_guard lk(mu_);
    for (;;) {
      std::string id = text::hex64(rng_()) + text::hex64(rng_());
      if (!sessions_.contains(id)) return id;
    }
  }

  Config base_;
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<const EmbeddingIndex> index_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mt19937_64 rng_{std::random_device{}()};
};

inline json to_json(const FinalAnswer& a) {
  json winners = json::array();
  for (const auto& id : a.winning_emotions) winners.push_back(id.name());
  json j = {{"reasoning", a.reasoning}, {"final_answer", a.final}, {"winning_emotions", winners}};
  if (a.thoughts) j["thoughts"] = *a.thoughts;
  return j;
}

/// Parses a JSONL transcript back into events.
inline std::vector<LogEvent> replay_jsonl(std::string_view jsonl) {
  std::vector<LogEvent> events;
  for (auto line : text::split_lines(jsonl)) {
    if (text::is_blank(line)) continue;
    events.push_back(LogEvent::from_json(json::parse(line)));
  }
  return events;
}

}  // namespace riley
