#pragma once

#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "riley/gateway.hpp"

// Ollama-compatible wire protocol: POST /api/chat (non-streamed) and
// POST /api/embed. Encoders emit compact JSON with sorted keys, so a
// decoded message re-encodes to the same bytes.
namespace riley::ollama {

using json = nlohmann::json;

struct ChatRequest {
  GenerationParams params;
  std::vector<ChatMessage> messages;
};

struct ChatResponse {
  std::string model;
  ChatMessage message = ChatMessage::assistant("");
  json message_extra = json::object();  // e.g. "thinking"
  json extra = json::object();          // created_at, done, durations, ...
};

struct EmbedRequest {
  std::string model;
  std::string input;
};

struct EmbedResponse {
  std::string model;
  std::vector<std::vector<double>> embeddings;
  json extra = json::object();
};

inline json encode(const ChatRequest& req) {
  json msgs = json::array();
  for (const auto& m : req.messages) {
    json jm = {{"role", to_string(m.role)}, {"content", m.content}};
    if (!m.images.empty()) {
      json imgs = json::array();
      for (const auto& img : m.images) imgs.push_back(text::base64_encode(img));
      jm["images"] = std::move(imgs);
    }
    msgs.push_back(std::move(jm));
  }
  json options = {{"temperature", req.params.temperature}};
  if (req.params.seed) options["seed"] = *req.params.seed;
  if (req.params.max_tokens) options["num_predict"] = *req.params.max_tokens;
  return {{"model", req.params.model}, {"messages", std::move(msgs)}, {"stream", false}, {"options", std::move(options)}};
}

inline ChatRequest decode_chat_request(const json& j) {
  try {
    ChatRequest req;
    req.params.model = j.at("model").get<std::string>();
    if (j.contains("options")) {
      const auto& o = j.at("options");
      if (o.contains("temperature")) req.params.temperature = o.at("temperature").get<double>();
      if (o.contains("seed")) req.params.seed = o.at("seed").get<std::int64_t>();
      if (o.contains("num_predict")) req.params.max_tokens = o.at("num_predict").get<int>();
    }
    for (const auto& jm : j.at("messages")) {
      ChatMessage m;
      m.role = role_from_string(jm.at("role").get<std::string>());
      m.content = jm.value("content", "");
      if (jm.contains("images")) {
        for (const auto& b64 : jm.at("images")) {
          ImageBytes img;
          if (!text::base64_decode(b64.get<std::string>(), img))
            throw Error(ErrorCode::InvalidImage, "malformed base64 image");
          m.images.push_back(std::move(img));
        }
      }
      req.messages.push_back(std::move(m));
    }
    return req;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::TransportError, std::string("malformed chat request: ") + e.what());
  }
}

inline json encode(const ChatResponse& resp) {
  json out = resp.extra;
  json msg = resp.message_extra;
  msg["role"] = to_string(resp.message.role);
  msg["content"] = resp.message.content;
  out["model"] = resp.model;
  out["message"] = std::move(msg);
  return out;
}

inline ChatResponse decode_chat_response(const json& j) {
  try {
    ChatResponse resp;
    resp.extra = j;
    resp.model = j.value("model", "");
    const auto& msg = j.at("message");
    resp.message.role = role_from_string(msg.value("role", "assistant"));
    resp.message.content = msg.at("content").get<std::string>();
    resp.message_extra = msg;
    resp.message_extra.erase("role");
    resp.message_extra.erase("content");
    resp.extra.erase("model");
    resp.extra.erase("message");
    return resp;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::TransportError, std::string("malformed chat response: ") + e.what());
  }
}

inline json encode(const EmbedRequest& req) { return {{"model", req.model}, {"input", req.input}}; }

inline EmbedRequest decode_embed_request(const json& j) {
  try {
    return {j.at("model").get<std::string>(), j.at("input").get<std::string>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::TransportError, std::string("malformed embed request: ") + e.what());
  }
}

inline json encode(const EmbedResponse& resp) {
  json out = resp.extra;
  out["model"] = resp.model;
  out["embeddings"] = resp.embeddings;
  return out;
}

inline EmbedResponse decode_embed_response(const json& j) {
  try {
    EmbedResponse resp;
    resp.extra = j;
    resp.model = j.value("model", "");
    resp.embeddings = j.at("embeddings").get<std::vector<std::vector<double>>>();
    resp.extra.erase("model");
    resp.extra.erase("embeddings");
    return resp;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::TransportError, std::string("malformed embed response: ") + e.what());
  }
}

/// HTTP backend for an Ollama server.
class OllamaBackend : public Backend {
 public:
  explicit OllamaBackend(std::string base_url, double timeout_seconds = 300.0)
      : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {}

  std::string chat(BackendRole, std::span<const ChatMessage> messages, const GenerationParams& params) override {
    ChatRequest req{params, {messages.begin(), messages.end()}};
    json body = post("/api/chat", encode(req), params.model);
    return decode_chat_response(body).message.content;
  }

  std::vector<double> embed(std::string_view model, std::string_view input) override {
    json body = post("/api/embed", encode(EmbedRequest{std::string(model), std::string(input)}), std::string(model));
    auto resp = decode_embed_response(body);
    if (resp.embeddings.empty()) throw Error(ErrorCode::DimensionMismatch, "backend returned no embedding");
    return std::move(resp.embeddings.front());
  }

 private:
  json post(const std::string& path, const json& payload, const std::string& model) {
    httplib::Client cli(base_url_);
    auto secs = static_cast<time_t>(timeout_seconds_);
    cli.set_connection_timeout(10, 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    auto res = cli.Post(path, payload.dump(), "application/json");
    if (!res)
      throw Error(ErrorCode::TransportError, base_url_ + path + ": " + httplib::to_string(res.error()), true);
    if (res->status == 404)
      throw Error(ErrorCode::ModelNotFound, "model '" + model + "' is not available on " + base_url_);
    if (res->status != 200) {
      std::string msg = res->body;
      if (auto j = json::parse(res->body, nullptr, false); j.is_object() && j.contains("error"))
        msg = j["error"].dump();
      if (text::contains(msg, "not found"))
        throw Error(ErrorCode::ModelNotFound, "model '" + model + "' is not available: " + msg);
      throw Error(ErrorCode::TransportError, path + " returned HTTP " + std::to_string(res->status) + ": " + msg,
                  res->status >= 500);
    }
    auto j = json::parse(res->body, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::TransportError, path + " returned invalid JSON");
    return j;
  }

  std::string base_url_;
  double timeout_seconds_;
};

}  // namespace riley::ollama
