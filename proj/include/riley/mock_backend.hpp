#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "riley/gateway.hpp"
#include "riley/text.hpp"

namespace riley {

/// Deterministic offline embedder: lowercase word tokens hashed with
/// FNV-1a-64 into `dimension` buckets, counted, then L2-normalised.
inline std::vector<double> hashed_bag_of_words(std::string_view input, std::size_t dimension = 256) {
  std::vector<double> v(dimension, 0.0);
  auto tokens = text::word_tokens(input);
  if (tokens.empty()) throw Error(ErrorCode::EmbeddingFailure, "input has no word tokens");
  for (const auto& t : tokens) v[text::fnv1a64(t) % dimension] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

struct MockRequest {
  BackendRole role;
  std::span<const ChatMessage> messages;
  const GenerationParams& params;
};

/// Offline backend whose replies are a pure function of the request.
///
/// Plain chat replies are "MOCK[<marker>]:<fnv>" where <fnv> is the FNV-1a-64
/// digest of all message contents concatenated and <marker> is the lowercased
/// name from the system prompt's "[emotion: Name]" tag ("joy-less" without
/// one). Prompts that request the structured vote, synthesis or context
/// formats get replies in those formats (THOUGHTS only when asked for); vision calls get "MOCK-IMG:<fnv of
/// the image bytes>".
class MockBackend : public Backend {
 public:
  /// Returns a reply to override the default, or nullopt. May throw.
  using Script = std::function<std::optional<std::string>(const MockRequest&)>;

  struct Options {
    std::size_t embed_dimension = 256;
    // Upper bound on a deterministic per-call sleep, used to shuffle
    // completion order in concurrency tests.
    std::chrono::microseconds max_jitter{0};
    Script script;
  };

  MockBackend() = default;
  explicit MockBackend(Options opts) : opts_(std::move(opts)) {}

  std::string chat(BackendRole role, std::span<const ChatMessage> messages,
                   const GenerationParams& params) override {
    std::string reply;
    if (opts_.script) {
      if (auto scripted = opts_.script(MockRequest{role, messages, params})) reply = *scripted;
      else reply = default_reply(role, messages);
    } else {
      reply = default_reply(role, messages);
    }
    if (opts_.max_jitter.count() > 0) {
      auto h = text::fnv1a64(reply);
      std::this_thread::sleep_for(std::chrono::microseconds(h % static_cast<std::uint64_t>(opts_.max_jitter.count())));
    }
    return reply;
  }

  std::vector<double> embed(std::string_view, std::string_view input) override {
    return hashed_bag_of_words(input, opts_.embed_dimension);
  }

  static std::string marker_for(std::span<const ChatMessage> messages) {
    static const std::regex tag(R"(\[emotion:\s*([^\]]+)\])", std::regex::icase);
    if (!messages.empty() && messages.front().role == Role::System) {
      std::smatch m;
      const std::string& sys = messages.front().content;
      if (std::regex_search(sys, m, tag)) return text::to_lower(text::trim(m[1].str()));
    }
    return "joy-less";
  }

  static std::string concatenated(std::span<const ChatMessage> messages) {
    std::string all;
    for (const auto& m : messages) all += m.content;
    return all;
  }

  static std::string default_reply(BackendRole role, std::span<const ChatMessage> messages) {
    if (role == BackendRole::Vision) {
      std::uint64_t h = text::kFnvOffset;
      bool any = false;
      for (const auto& m : messages)
        for (const auto& img : m.images) {
          h = text::fnv1a64(std::span<const std::uint8_t>(img), h);
          any = true;
        }
      if (any) return "MOCK-IMG:" + text::hex64(h);
    }

    const std::string marker = marker_for(messages);
    const std::uint64_t h = text::fnv1a64(concatenated(messages));
    const std::string tagline = "MOCK[" + marker + "]:" + text::hex64(h);
    const std::string& last = messages.back().content;

    if (text::contains(last, "VOTE:")) {
      auto names = candidate_names(last);
      if (!names.empty())
        return "VOTE: " + names[h % names.size()] + "\nJUSTIFICATION: " + tagline;
    }
    if (text::contains(last, "FINAL ANSWER:")) {
      std::string out = "REASONING: " + tagline + "\n";
      if (text::contains(last, "THOUGHTS:")) out += "THOUGHTS: " + tagline + "/t\n";
      return out + "FINAL ANSWER: " + tagline + "/a";
    }
    if (text::contains(last, "TOPICS:")) {
      return "TOPICS: mock-" + text::hex64(h).substr(0, 8) + "\nSUMMARY: " + tagline;
    }
    return tagline;
  }

  /// Names from lines of the form "CANDIDATE <Name>:".
  static std::vector<std::string> candidate_names(std::string_view prompt) {
    std::vector<std::string> names;
    for (auto line : text::split_lines(prompt)) {
      if (!line.starts_with("CANDIDATE ")) continue;
      auto colon = line.find(':');
      if (colon == std::string_view::npos) continue;
      names.emplace_back(text::trim(line.substr(10, colon - 10)));
    }
    return names;
  }

 private:
  Options opts_;
};

}  // namespace riley
