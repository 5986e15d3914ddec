#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "riley/gateway.hpp"
#include "riley/text.hpp"

namespace riley {

/// Emotion name; equality and ordering ignore ASCII case.
class EmotionId {
 public:
  EmotionId() = default;
  explicit EmotionId(std::string name) : name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

  friend bool operator==(const EmotionId& a, const EmotionId& b) { return text::iequals(a.name_, b.name_); }
  friend bool operator<(const EmotionId& a, const EmotionId& b) {
    return text::to_lower(a.name_) < text::to_lower(b.name_);
  }

 private:
  std::string name_;
};

class EmotionRegistry {
 public:
  EmotionRegistry() = default;

  static EmotionRegistry from(const std::vector<std::string>& names) {
    EmotionRegistry r;
    require(!names.empty(), "emotion registry must not be empty");
    for (const auto& n : names) {
      require(!text::is_blank(n), "emotion names must be non-empty");
      require(!r.contains(n), "duplicate emotion name '" + n + "'");
      r.ids_.emplace_back(std::string(text::trim(n)));
    }
    return r;
  }

  std::size_t size() const noexcept { return ids_.size(); }
  auto begin() const { return ids_.begin(); }
  auto end() const { return ids_.end(); }
  const EmotionId& operator[](std::size_t i) const { return ids_.at(i); }
  const std::vector<EmotionId>& ids() const noexcept { return ids_; }

  /// Canonical spelling for a case-insensitive name.
  std::optional<EmotionId> find(std::string_view name) const {
    for (const auto& id : ids_)
      if (text::iequals(id.name(), text::trim(name))) return id;
    return std::nullopt;
  }
  bool contains(std::string_view name) const { return find(name).has_value(); }
  bool contains(const EmotionId& id) const { return contains(id.name()); }

 private:
  std::vector<EmotionId> ids_;
};

/// One persona. history()[0] is the system-role persona prompt; the history
/// only grows.
class EmotionAgent {
 public:
  EmotionAgent(EmotionId id, std::string persona_prompt)
      : id_(std::move(id)), persona_prompt_(std::move(persona_prompt)) {
    history_.push_back(ChatMessage::system(persona_prompt_));
  }

  const EmotionId& id() const noexcept { return id_; }
  const std::string& persona_prompt() const noexcept { return persona_prompt_; }
  const std::vector<ChatMessage>& history() const noexcept { return history_; }

  void append(ChatMessage m) {
    require(m.role != Role::System, "system messages cannot be appended to an agent history");
    history_.push_back(std::move(m));
  }

 private:
  EmotionId id_;
  std::string persona_prompt_;
  std::vector<ChatMessage> history_;
};

/// Tag read by the mock backend and visible in logs.
inline std::string emotion_tag(const EmotionId& id) { return "[emotion: " + id.name() + "]"; }

inline std::vector<EmotionAgent> init_agents(const EmotionRegistry& registry,
                                             const std::map<std::string, std::string>& persona_templates) {
  std::vector<EmotionAgent> agents;
  agents.reserve(registry.size());
  for (const auto& id : registry) {
    const std::string* tmpl = nullptr;
    for (const auto& [name, t] : persona_templates)
      if (text::iequals(name, id.name())) tmpl = &t;
    if (!tmpl) throw Error(ErrorCode::MissingPersona, "no persona template for emotion '" + id.name() + "'");
    agents.emplace_back(id, emotion_tag(id) + "\n" + text::render(*tmpl, {{"emotion", id.name()}}));
  }
  return agents;
}

struct UserTurn {
  std::string question;
  std::optional<std::string> context;
  std::optional<std::string> image_description;
};

inline std::string format_user_turn(const UserTurn& turn) {
  require(!text::is_blank(turn.question), "question must be non-empty");
  std::string msg = turn.question;
  if (turn.context && !text::is_blank(*turn.context)) msg += "\n\nCONTEXT: " + *turn.context;
  if (turn.image_description && !text::is_blank(*turn.image_description))
    msg += "\n\nIMAGE: " + *turn.image_description;
  return msg;
}

inline void inject_user_turn(std::span<EmotionAgent> agents, const UserTurn& turn) {
  require(!agents.empty(), "agents must be initialised");
  const std::string msg = format_user_turn(turn);
  for (auto& a : agents) a.append(ChatMessage::user(msg));
}

}  // namespace riley
