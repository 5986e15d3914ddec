#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "riley/session.hpp"

namespace riley {

inline int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession: return 404;
    case ErrorCode::Busy: return 409;
    case ErrorCode::PreconditionViolation:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidImage:
    case ErrorCode::MissingPersona: return 400;
    case ErrorCode::TransportError:
    case ErrorCode::ModelNotFound:
    case ErrorCode::EmptyCompletion:
    case ErrorCode::MalformedSynthesis:
    case ErrorCode::EmbeddingFailure:
    case ErrorCode::DimensionMismatch: return 502;
    default: return 500;
  }
}

/// One server-sent event frame for a log event.
inline std::string sse_frame(const LogEvent& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: " + std::string(progress_name(e.kind)) +
         "\ndata: " + e.to_json().dump() + "\n\n";
}

/// HTTP binding of the session API:
///   POST /sessions                     {"mode": "riley"|"armando", "overrides": {...}}
///   POST /sessions/{id}/context        {"text": "..."} or a text/plain body
///   POST /sessions/{id}/images         raw PNG/JPEG body
///   POST /sessions/{id}/ask            {"question": "..."}
///   GET  /sessions/{id}/events         server-sent events (?since=N, ?follow=0)
///   GET  /sessions/{id}/transcript     ?format=jsonl|json
class HttpService {
 public:
  explicit HttpService(std::shared_ptr<SessionManager> sessions) : sessions_(std::move(sessions)) { routes(); }

  ~HttpService() { stop(); }

  httplib::Server& server() noexcept { return server_; }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void wait_until_ready() { server_.wait_until_ready(); }

  void stop() {
    if (stopping_.exchange(true)) return;
    sessions_->close_all();
    server_.stop();
  }

 private:
  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      json body = {{"error", to_string(e.code())}, {"message", e.what()}};
      if (!e.stage().empty()) body["stage"] = e.stage();
      if (!e.emotion().empty()) body["emotion"] = e.emotion();
      send_json(res, http_status_for(e.code()), body);
    } catch (const json::exception& e) {
      send_json(res, 400, {{"error", "BadRequest"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
    }
  }

  static json body_json(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    return json::parse(req.body);
  }

  void routes() {
    server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        json body = body_json(req);
        auto mode = mode_from_string(body.value("mode", "riley"));
        std::string id = sessions_->create(mode, body.value("overrides", json::object()));
        send_json(res, 201, {{"id", id}, {"mode", to_string(mode)}});
      });
    });

    server_.Post(R"(/sessions/([0-9a-zA-Z_-]+)/context)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::string ctx = req.body;
        if (req.get_header_value("Content-Type").starts_with("application/json"))
          ctx = body_json(req).at("text").get<std::string>();
        sessions_->submit_context(req.matches[1], ctx);
        send_json(res, 200, {{"ok", true}});
      });
    });

    server_.Post(R"(/sessions/([0-9a-zA-Z_-]+)/images)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size());
        std::string description = sessions_->submit_image(req.matches[1], bytes);
        send_json(res, 200, {{"description", description}});
      });
    });

    server_.Post(R"(/sessions/([0-9a-zA-Z_-]+)/ask)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto question = body_json(req).at("question").get<std::string>();
        auto answer = sessions_->ask(req.matches[1], question);
        send_json(res, 200, to_json(answer));
      });
    });

    server_.Get(R"(/sessions/([0-9a-zA-Z_-]+)/transcript)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::string format = req.has_param("format") ? req.get_param_value("format") : "jsonl";
        std::string id = req.matches[1];
        std::string body = sessions_->get_transcript(id, format);
        res.set_header("Content-Disposition", "attachment; filename=\"riley-" + id + "." + format + "\"");
        res.status = 200;
        res.set_content(body, format == "jsonl" ? "application/x-ndjson" : "application/json");
      });
    });

    server_.Get(R"(/sessions/([0-9a-zA-Z_-]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto session = sessions_->get(req.matches[1]);
        std::uint64_t since = 0;
        if (req.has_header("Last-Event-ID")) since = std::stoull(req.get_header_value("Last-Event-ID"));
        if (req.has_param("since")) since = std::stoull(req.get_param_value("since"));
        const bool follow = !(req.has_param("follow") && req.get_param_value("follow") == "0");
        auto cursor = std::make_shared<std::uint64_t>(since);

        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [this, session, cursor, follow](std::size_t, httplib::DataSink& sink) {
              auto pending = session->log().since(*cursor);
              if (pending.empty()) {
                if (!follow || stopping_) {
                  sink.done();
                  return true;
                }
                if (!session->log().wait_after(*cursor, std::chrono::milliseconds(500))) {
                  if (stopping_) {
                    sink.done();
                    return true;
                  }
                  // Keep-alive comment.
                  static constexpr char ping[] = ": ping\n\n";
                  return sink.write(ping, sizeof ping - 1);
                }
                pending = session->log().since(*cursor);
              }
              for (const auto& e : pending) {
                auto frame = sse_frame(e);
                if (!sink.write(frame.data(), frame.size())) return false;
                *cursor = e.seq;
              }
              return true;
            });
      });
    });
  }

  std::shared_ptr<SessionManager> sessions_;
  httplib::Server server_;
  std::atomic<bool> stopping_{false};
};

}  // namespace riley
