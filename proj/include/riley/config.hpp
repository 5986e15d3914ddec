#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "riley/error.hpp"
#include "riley/text.hpp"

namespace riley {

using json = nlohmann::json;

enum class SynthesisMode { Riley, Armando };

inline std::string_view to_string(SynthesisMode m) { return m == SynthesisMode::Riley ? "riley" : "armando"; }

inline SynthesisMode mode_from_string(std::string_view s) {
  if (text::iequals(s, "riley")) return SynthesisMode::Riley;
  if (text::iequals(s, "armando")) return SynthesisMode::Armando;
  throw Error(ErrorCode::InvalidConfig, "unknown mode '" + std::string(s) + "' (expected riley or armando)");
}

struct BackendConfig {
  std::string mode = "mock";  // live | mock
  std::string base_url = "http://127.0.0.1:11434";
  std::string text_model = "huihui_ai/llama3.2-abliterate:3b";
  std::string vision_model = "gemma3:4b";
  std::string reasoning_model = "huihui_ai/deepseek-r1-abliterated:8b";
  std::string embed_model = "mxbai-embed-large";
  double agent_temperature = 0.8;
  double adjudication_temperature = 0.2;
  std::optional<std::int64_t> seed;
  std::optional<int> max_tokens;
  double timeout_seconds = 300.0;
  // Expected embedding length; 0 accepts whatever the backend returns first.
  std::size_t embed_dimension = 0;
};

struct DebateConfig {
  std::string round1_template =
      "The other emotions answered the user's question as follows:\n\n{peers}\n\n"
      "As {emotion}, review and respond to these answers. Point out what you agree with, "
      "what worries or bothers you, and what they missed, while staying true to your own "
      "emotional perspective. Keep your reply under 200 words.";
  std::string round2_template =
      "The other emotions responded to the discussion as follows:\n\n{peers}\n\n"
      "As {emotion}, synthesise a refined perspective based on the insights gained from this "
      "exchange. Keep your reply under 200 words.";
  std::string round3_template =
      "Reassess the original question from the user:\n\n{query}\n\n"
      "As {emotion}, deliver your evolved and finalised answer to it, influenced by the "
      "discussion so far. Keep your reply under 200 words.";
  bool parallel = true;
};

struct BallotConfig {
  std::string vote_template =
      "The emotions have each proposed a final answer to the user's question:\n\n{query}\n\n"
      "{candidates}\n\n"
      "As {emotion}, critically evaluate every candidate and vote for the one that best "
      "serves the user. You may vote for any candidate, including your own.\n"
      "Reply with exactly two lines:\n"
      "VOTE: <emotion name of the chosen candidate>\n"
      "JUSTIFICATION: <one concise sentence>";
  std::string armando_preamble =
      "Reason step by step before you decide: list the facts each candidate relies on, check "
      "them for safety and accuracy, compare the candidates, then commit to one.";
};

struct SynthesisConfig {
  std::string winner_template =
      "The emotions debated the user's question and voted. Outcome of the vote, winning "
      "emotion: {winner}\n\n"
      "USER QUESTION:\n{query}\n\n"
      "ANSWER FROM {winner}:\n{winner_answer}\n\n"
      "WHY THE VOTERS CHOSE IT:\n{justifications}\n\n"
      "Write the final response so that it primarily reflects the perspective of {winner}.";
  std::string tie_template =
      "The emotions debated the user's question and the vote ended in a tie between: "
      "{tied}\n\n"
      "USER QUESTION:\n{query}\n\n"
      "{tied_answers}\n\n"
      "Synthesise the final response from all of these perspectives, giving each of them "
      "equal weight.";
  std::string riley_format =
      "Structure your reply in three sections, each header at the start of its own line:\n"
      "REASONING: <your analytical assessment>\n"
      "THOUGHTS: <Riley's internal thoughts about the situation>\n"
      "FINAL ANSWER: <a balanced, easy to read answer for the user>";
  std::string armando_format =
      "Structure your reply in two sections, each header at the start of its own line:\n"
      "REASONING: <your analytical assessment>\n"
      "FINAL ANSWER: <a calm, clear and actionable answer for the user>";
  std::string armando_preamble =
      "Reason step by step before you answer: identify the facts that matter, weigh the "
      "risks to the user, then decide what they should do. Keep the user calm.";
  std::string grounding_instruction =
      "Every factual claim in the answer (places, numbers, contacts, procedures) must come "
      "from the VERIFIED INFORMATION above.";
};

struct RagConfig {
  std::size_t k = 4;
  std::size_t max_chunk_chars = 1500;
  std::size_t keyword_count = 10;
  std::string index_path = "riley.index";
  std::string context_template =
      "Update the running context of this conversation.\n\n"
      "RECENT QUESTIONS:\n{questions}\n\n"
      "LATEST ANSWER:\n{answer}\n\n"
      "PREVIOUS SUMMARY:\n{summary}\n\n"
      "Reply with exactly two lines:\n"
      "TOPICS: <comma-separated conversation topics>\n"
      "SUMMARY: <one short paragraph summarising the conversation>";
};

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct Config {
  BackendConfig backend;
  std::vector<std::string> emotions = {"Joy", "Sadness", "Fear", "Anger", "Disgust"};
  std::map<std::string, std::string> personas = default_personas();
  DebateConfig debate;
  BallotConfig ballot;
  SynthesisConfig synthesis;
  RagConfig rag;
  ServerConfig server;
  std::string image_instruction =
      "Describe this image in detail, focusing on anything relevant to the user's situation.";

  static std::map<std::string, std::string> default_personas() {
    const std::string tail =
        " Stay in character as {emotion} in every round of the discussion and keep your "
        "emotional authenticity. Answer in at most 200 words.";
    return {
        {"Joy",
         "You are Joy, one of the emotions inside Riley's mind. You look for the bright side, "
         "hope and opportunity in every situation, and you want Riley to feel encouraged and "
         "capable." + tail},
        {"Sadness",
         "You are Sadness, one of the emotions inside Riley's mind. You acknowledge loss, pain "
         "and disappointment honestly, and you make room for empathy and for feelings that "
         "need to be felt." + tail},
        {"Fear",
         "You are Fear, one of the emotions inside Riley's mind. You are vigilant and surface "
         "risks, dangers and worst cases, and you want Riley to stay safe and prepared." + tail},
        {"Anger",
         "You are Anger, one of the emotions inside Riley's mind. You react strongly to "
         "unfairness and obstacles, and you push for decisive action and for Riley's boundaries "
         "to be respected." + tail},
        {"Disgust",
         "You are Disgust, one of the emotions inside Riley's mind. You are discerning and "
         "reject what is unhealthy, toxic or beneath Riley's standards, and you protect Riley "
         "from bad choices." + tail},
    };
  }
};

namespace detail {

template <typename T>
void read_into(const json& obj, const char* key, T& out, const std::string& path) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + "." + key + ": " + e.what());
  }
}

template <typename T>
void read_into(const json& obj, const char* key, std::optional<T>& out, const std::string& path) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) {
    out.reset();
    return;
  }
  T value{};
  read_into(obj, key, value, path);
  out = value;
}

inline const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  if (!root.contains(key)) return empty;
  const auto& s = root.at(key);
  if (!s.is_object()) throw Error(ErrorCode::InvalidConfig, std::string(key) + " must be an object");
  return s;
}

}  // namespace detail

inline void validate(const Config& cfg) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (cfg.backend.mode != "live" && cfg.backend.mode != "mock")
    fail("backend.mode must be 'live' or 'mock'");
  for (const auto* m : {&cfg.backend.text_model, &cfg.backend.vision_model,
                        &cfg.backend.reasoning_model, &cfg.backend.embed_model})
    if (m->empty()) fail("backend model identifiers must be non-empty");
  for (double t : {cfg.backend.agent_temperature, cfg.backend.adjudication_temperature})
    if (!(t >= 0.0 && t <= 2.0)) fail("temperatures must lie in [0, 2]");
  if (cfg.backend.max_tokens && *cfg.backend.max_tokens <= 0) fail("backend.max_tokens must be positive");
  if (cfg.emotions.empty()) fail("emotion registry must not be empty");
  for (std::size_t i = 0; i < cfg.emotions.size(); ++i) {
    if (text::is_blank(cfg.emotions[i])) fail("emotion names must be non-empty");
    for (std::size_t j = 0; j < i; ++j)
      if (text::iequals(cfg.emotions[i], cfg.emotions[j]))
        fail("duplicate emotion name: " + cfg.emotions[i]);
  }
  if (cfg.rag.k == 0) fail("rag.k must be positive");
  if (cfg.rag.max_chunk_chars < 16) fail("rag.max_chunk_chars must be at least 16");
}

/// Overlays the keys present in `root` onto `cfg`. Unknown keys are ignored.
inline void apply_json(Config& cfg, const json& root) {
  if (!root.is_object()) throw Error(ErrorCode::InvalidConfig, "config root must be an object");
  using detail::read_into;
  using detail::section;

  const auto& b = section(root, "backend");
  read_into(b, "mode", cfg.backend.mode, "backend");
  read_into(b, "base_url", cfg.backend.base_url, "backend");
  read_into(b, "text_model", cfg.backend.text_model, "backend");
  read_into(b, "vision_model", cfg.backend.vision_model, "backend");
  read_into(b, "reasoning_model", cfg.backend.reasoning_model, "backend");
  read_into(b, "embed_model", cfg.backend.embed_model, "backend");
  read_into(b, "agent_temperature", cfg.backend.agent_temperature, "backend");
  read_into(b, "adjudication_temperature", cfg.backend.adjudication_temperature, "backend");
  read_into(b, "seed", cfg.backend.seed, "backend");
  read_into(b, "max_tokens", cfg.backend.max_tokens, "backend");
  read_into(b, "timeout_seconds", cfg.backend.timeout_seconds, "backend");
  read_into(b, "embed_dimension", cfg.backend.embed_dimension, "backend");

  read_into(root, "emotions", cfg.emotions, "");
  const auto& p = section(root, "personas");
  for (const auto& [name, value] : p.items()) {
    if (!value.is_string()) throw Error(ErrorCode::InvalidConfig, "personas." + name + " must be a string");
    cfg.personas[name] = value.get<std::string>();
  }

  const auto& d = section(root, "debate");
  read_into(d, "round1_template", cfg.debate.round1_template, "debate");
  read_into(d, "round2_template", cfg.debate.round2_template, "debate");
  read_into(d, "round3_template", cfg.debate.round3_template, "debate");
  read_into(d, "parallel", cfg.debate.parallel, "debate");

  const auto& v = section(root, "ballot");
  read_into(v, "vote_template", cfg.ballot.vote_template, "ballot");
  read_into(v, "armando_preamble", cfg.ballot.armando_preamble, "ballot");

  const auto& s = section(root, "synthesis");
  read_into(s, "winner_template", cfg.synthesis.winner_template, "synthesis");
  read_into(s, "tie_template", cfg.synthesis.tie_template, "synthesis");
  read_into(s, "riley_format", cfg.synthesis.riley_format, "synthesis");
  read_into(s, "armando_format", cfg.synthesis.armando_format, "synthesis");
  read_into(s, "armando_preamble", cfg.synthesis.armando_preamble, "synthesis");
  read_into(s, "grounding_instruction", cfg.synthesis.grounding_instruction, "synthesis");

  const auto& r = section(root, "rag");
  read_into(r, "k", cfg.rag.k, "rag");
  read_into(r, "max_chunk_chars", cfg.rag.max_chunk_chars, "rag");
  read_into(r, "keyword_count", cfg.rag.keyword_count, "rag");
  read_into(r, "index_path", cfg.rag.index_path, "rag");
  read_into(r, "context_template", cfg.rag.context_template, "rag");

  const auto& sv = section(root, "server");
  read_into(sv, "host", cfg.server.host, "server");
  read_into(sv, "port", cfg.server.port, "server");

  read_into(root, "image_instruction", cfg.image_instruction, "");
  validate(cfg);
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config file " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  Config cfg;
  apply_json(cfg, root);
  return cfg;
}

inline constexpr const char* kConfigEnvVar = "RILEY_CONFIG";

/// Explicit path wins, then $RILEY_CONFIG, then built-in defaults.
inline Config resolve_config(const std::optional<std::string>& explicit_path) {
  if (explicit_path && !explicit_path->empty()) return load_config(*explicit_path);
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return load_config(env);
  Config cfg;
  validate(cfg);
  return cfg;
}

}  // namespace riley
