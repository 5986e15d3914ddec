#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "riley/config.hpp"
#include "riley/error.hpp"
#include "riley/text.hpp"

namespace riley {

enum class Role { System, User, Assistant };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

inline Role role_from_string(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw Error(ErrorCode::PreconditionViolation, "unknown message role '" + std::string(s) + "'");
}

using ImageBytes = std::vector<std::uint8_t>;

inline constexpr std::size_t kMaxImageBytes = 20u * 1024u * 1024u;

struct ChatMessage {
  Role role = Role::User;
  std::string content;
  std::vector<ImageBytes> images;

  static ChatMessage system(std::string c) { return {Role::System, std::move(c), {}}; }
  static ChatMessage user(std::string c, std::vector<ImageBytes> imgs = {}) {
    return {Role::User, std::move(c), std::move(imgs)};
  }
  static ChatMessage assistant(std::string c) { return {Role::Assistant, std::move(c), {}}; }

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

inline void validate(const ChatMessage& m) {
  require(!m.content.empty() || !m.images.empty(), "message content must be non-empty unless images are attached");
  require(m.images.empty() || m.role == Role::User, "images are only permitted on user messages");
  for (const auto& img : m.images)
    if (img.size() > kMaxImageBytes) throw Error(ErrorCode::InvalidImage, "image exceeds 20 MiB");
}

struct GenerationParams {
  std::string model;
  double temperature = 0.8;
  std::optional<std::int64_t> seed;
  std::optional<int> max_tokens;

  friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

inline void validate(const GenerationParams& p) {
  require(!p.model.empty(), "model identifier must be non-empty");
  require(p.temperature >= 0.0 && p.temperature <= 2.0, "temperature must lie in [0, 2]");
  require(!p.max_tokens || *p.max_tokens > 0, "max_tokens must be positive");
}

enum class BackendRole { Text, Vision, Reasoning, Embedding };

inline std::string_view to_string(BackendRole r) {
  switch (r) {
    case BackendRole::Text: return "text";
    case BackendRole::Vision: return "vision";
    case BackendRole::Reasoning: return "reasoning";
    case BackendRole::Embedding: return "embedding";
  }
  return "text";
}

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const noexcept { return values.size(); }
  bool is_zero() const noexcept {
    for (double v : values)
      if (v != 0.0) return false;
    return true;
  }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// Which pipeline step issued a call; carried into the call log.
struct CallTag {
  std::string stage;
  std::string emotion;
  int round = -1;
};

struct CallRecord {
  std::uint64_t id = 0;
  std::string operation;  // chat | describe_image | embed
  BackendRole role = BackendRole::Text;
  std::vector<ChatMessage> messages;  // image payloads are not retained
  std::vector<std::size_t> image_sizes;
  GenerationParams params;
  std::string response;
  double latency_ms = 0.0;
  int attempts = 1;
  std::uint64_t started_tick = 0;
  std::uint64_t finished_tick = 0;
  CallTag tag;
};

struct Completion {
  ChatMessage reply;
  CallRecord record;
};

/// A model server. Implementations throw riley::Error; a retryable
/// TransportError or an empty return value triggers the gateway retry.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string chat(BackendRole role, std::span<const ChatMessage> messages,
                           const GenerationParams& params) = 0;
  virtual std::vector<double> embed(std::string_view model, std::string_view input) = 0;
};

/// Header-level check that the payload is a PNG or JPEG image.
inline void validate_image(std::span<const std::uint8_t> img) {
  if (img.empty()) throw Error(ErrorCode::InvalidImage, "empty image payload");
  if (img.size() > kMaxImageBytes) throw Error(ErrorCode::InvalidImage, "image exceeds 20 MiB");
  static constexpr std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (img.size() >= 8 && std::equal(png_sig, png_sig + 8, img.begin())) {
    // IHDR must follow the signature: length 13, then width/height.
    if (img.size() < 8 + 8 + 13 + 4) throw Error(ErrorCode::InvalidImage, "truncated PNG");
    auto be32 = [&](std::size_t at) {
      return (std::uint32_t{img[at]} << 24) | (std::uint32_t{img[at + 1]} << 16) |
             (std::uint32_t{img[at + 2]} << 8) | std::uint32_t{img[at + 3]};
    };
    if (be32(8) != 13 || img[12] != 'I' || img[13] != 'H' || img[14] != 'D' || img[15] != 'R')
      throw Error(ErrorCode::InvalidImage, "PNG without IHDR header");
    if (be32(16) == 0 || be32(20) == 0) throw Error(ErrorCode::InvalidImage, "PNG with zero dimension");
    std::string_view bytes(reinterpret_cast<const char*>(img.data()), img.size());
    if (bytes.find("IEND") == std::string_view::npos) throw Error(ErrorCode::InvalidImage, "PNG without IEND");
    return;
  }
  if (img.size() >= 4 && img[0] == 0xFF && img[1] == 0xD8 && img[2] == 0xFF) {
    if (img[img.size() - 2] != 0xFF || img[img.size() - 1] != 0xD9)
      throw Error(ErrorCode::InvalidImage, "JPEG without end-of-image marker");
    return;
  }
  throw Error(ErrorCode::InvalidImage, "payload is neither PNG nor JPEG");
}

struct ModelRoster {
  std::string text;
  std::string vision;
  std::string reasoning;
  std::string embedding;

  static ModelRoster from(const BackendConfig& b) {
    return {b.text_model, b.vision_model, b.reasoning_model, b.embed_model};
  }

  const std::string& model_for(BackendRole r) const {
    switch (r) {
      case BackendRole::Text: return text;
      case BackendRole::Vision: return vision;
      case BackendRole::Reasoning: return reasoning;
      case BackendRole::Embedding: return embedding;
    }
    return text;
  }
};

/// Uniform entry point to all model backends. Thread-safe; every successful
/// operation appends exactly one CallRecord to the call log.
class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, const BackendConfig& cfg)
      : backend_(std::move(backend)),
        roster_(ModelRoster::from(cfg)),
        seed_(cfg.seed),
        max_tokens_(cfg.max_tokens),
        expected_dim_(cfg.embed_dimension) {}

  const ModelRoster& roster() const noexcept { return roster_; }

  GenerationParams params_for(BackendRole role, double temperature) const {
    return {roster_.model_for(role), temperature, seed_, max_tokens_};
  }

  Completion invoke(BackendRole role, std::vector<ChatMessage> messages, GenerationParams params,
                    CallTag tag = {}) {
    require(!messages.empty(), "chat requires at least one message");
    require(role != BackendRole::Embedding, "chat is not available on the embedding role");
    validate(params);
    for (std::size_t i = 0; i < messages.size(); ++i) {
      validate(messages[i]);
      require(i == 0 || messages[i].role != Role::System, "only the first message may be system-role");
    }
    return run_chat("chat", role, std::move(messages), std::move(params), std::move(tag));
  }

  ChatMessage chat(BackendRole role, std::vector<ChatMessage> messages, GenerationParams params,
                   CallTag tag = {}) {
    return invoke(role, std::move(messages), std::move(params), std::move(tag)).reply;
  }

  Completion describe_image_recorded(std::span<const std::uint8_t> image, std::string_view instruction,
                                     double temperature, CallTag tag = {}) {
    validate_image(image);
    require(!text::is_blank(instruction), "image instruction must be non-empty");
    std::vector<ChatMessage> msgs{
        ChatMessage::user(std::string(instruction), {ImageBytes(image.begin(), image.end())})};
    return run_chat("describe_image", BackendRole::Vision, std::move(msgs),
                    params_for(BackendRole::Vision, temperature), std::move(tag));
  }

  std::string describe_image(std::span<const std::uint8_t> image, std::string_view instruction) {
    return describe_image_recorded(image, instruction, 0.2).reply.content;
  }

  EmbeddingVector embed(std::string_view input) {
    require(!text::is_blank(input), "embedding input must be non-empty");
    CallRecord rec;
    rec.operation = "embed";
    rec.role = BackendRole::Embedding;
    rec.params = {roster_.embedding, 0.0, std::nullopt, std::nullopt};
    rec.messages.push_back(ChatMessage::user(std::string(input)));
    rec.started_tick = tick_.fetch_add(1);
    auto t0 = std::chrono::steady_clock::now();

    std::vector<double> values;
    for (int attempt = 1;; ++attempt) {
      rec.attempts = attempt;
      try {
        values = backend_->embed(roster_.embedding, input);
        break;
      } catch (const Error& e) {
        if (attempt < 2 && e.retryable()) continue;
        throw;
      }
    }
    check_dimension(values.size());
    EmbeddingVector vec{std::move(values)};
    if (vec.is_zero()) throw Error(ErrorCode::EmbeddingFailure, "backend returned an all-zero embedding");

    rec.latency_ms = elapsed_ms(t0);
    rec.finished_tick = tick_.fetch_add(1);
    rec.response = "[embedding dim=" + std::to_string(vec.dimension()) + "]";
    append(std::move(rec));
    return vec;
  }

  std::size_t dimension() const {
    std::lock_guard lk(mu_);
    return expected_dim_;
  }

  std::vector<CallRecord> calls() const {
    std::lock_guard lk(mu_);
    return log_;
  }

  std::size_t call_count() const {
    std::lock_guard lk(mu_);
    return log_.size();
  }

 private:
  Completion run_chat(std::string operation, BackendRole role, std::vector<ChatMessage> messages,
                      GenerationParams params, CallTag tag) {
    CallRecord rec;
    rec.operation = std::move(operation);
    rec.role = role;
    rec.params = params;
    rec.tag = std::move(tag);
    rec.started_tick = tick_.fetch_add(1);
    auto t0 = std::chrono::steady_clock::now();

    std::string content;
    for (int attempt = 1;; ++attempt) {
      rec.attempts = attempt;
      try {
        content = backend_->chat(role, messages, params);
        if (text::is_blank(content))
          throw Error(ErrorCode::EmptyCompletion, "backend returned empty content for model " + params.model, true);
        break;
      } catch (const Error& e) {
        if (attempt < 2 && e.retryable()) continue;
        throw;
      }
    }

    rec.latency_ms = elapsed_ms(t0);
    rec.finished_tick = tick_.fetch_add(1);
    rec.response = content;
    for (auto& m : messages) {
      for (const auto& img : m.images) rec.image_sizes.push_back(img.size());
      m.images.clear();
    }
    rec.messages = std::move(messages);
    Completion out{ChatMessage::assistant(std::move(content)), {}};
    out.record = append(std::move(rec));
    return out;
  }

  void check_dimension(std::size_t got) {
    std::lock_guard lk(mu_);
    if (expected_dim_ == 0) {
      if (got == 0) throw Error(ErrorCode::DimensionMismatch, "backend returned an empty embedding");
      expected_dim_ = got;
    } else if (got != expected_dim_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "expected dimension " + std::to_string(expected_dim_) + ", got " + std::to_string(got));
    }
  }

  CallRecord append(CallRecord rec) {
    std::lock_guard lk(mu_);
    rec.id = log_.size() + 1;
    log_.push_back(rec);
    return rec;
  }

  static double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }

  std::shared_ptr<Backend> backend_;
  ModelRoster roster_;
  std::optional<std::int64_t> seed_;
  std::optional<int> max_tokens_;
  std::atomic<std::uint64_t> tick_{1};
  mutable std::mutex mu_;
  std::size_t expected_dim_;
  std::vector<CallRecord> log_;
};

}  // namespace riley
