#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "riley/http_service.hpp"
#include "riley/ollama.hpp"
#include "riley/riley.hpp"

namespace {

using namespace riley;

std::shared_ptr<Backend> make_backend(const Config& cfg) {
  if (cfg.backend.mode == "mock") {
    MockBackend::Options opts;
    if (cfg.backend.embed_dimension) opts.embed_dimension = cfg.backend.embed_dimension;
    return std::make_shared<MockBackend>(opts);
  }
  return std::make_shared<ollama::OllamaBackend>(cfg.backend.base_url, cfg.backend.timeout_seconds);
}

std::shared_ptr<EmbeddingIndex> build_index(const Config& cfg, Backend& backend, const std::string& corpus_dir) {
  auto index = std::make_shared<EmbeddingIndex>(cfg.rag.max_chunk_chars);
  if (!corpus_dir.empty()) {
    Gateway gw(std::shared_ptr<Backend>(&backend, [](Backend*) {}), cfg.backend);
    for (const auto& doc : load_corpus_dir(corpus_dir)) index->ingest(doc, gw);
  } else if (std::filesystem::exists(cfg.rag.index_path)) {
    *index = EmbeddingIndex::load(cfg.rag.index_path);
  }
  return index;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::PreconditionViolation, "cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void print_answer(const FinalAnswer& a) {
  std::vector<std::string> names;
  for (const auto& e : a.winning_emotions) names.push_back(e.name());
  std::cout << "WINNING EMOTIONS: " << text::join(names, ", ") << "\n\n";
  std::cout << "REASONING:\n" << a.reasoning << "\n\n";
  if (a.thoughts) std::cout << "THOUGHTS:\n" << *a.thoughts << "\n\n";
  std::cout << "FINAL ANSWER:\n" << a.final << "\n";
}

HttpService* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"riley - emotion-agent debate engine and chat service"};
  app.require_subcommand(1);

  std::string config_path;
  bool force_mock = false;
  app.add_option("-c,--config", config_path, "Config file (default: $RILEY_CONFIG, then built-in defaults)");
  app.add_flag("--mock", force_mock, "Use the offline mock backend regardless of the config");

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string host;
  int port = 0;
  serve->add_option("--host", host, "Bind address (default: server.host)");
  serve->add_option("--port", port, "Port (default: server.port)");

  auto* ask = app.add_subcommand("ask", "Run one question through the pipeline locally");
  std::string mode = "riley", question, context, image, transcript_out, corpus;
  bool as_json = false;
  ask->add_option("--mode", mode, "riley or armando")->check(CLI::IsMember({"riley", "armando"}, CLI::ignore_case));
  ask->add_option("-q,--question", question, "The user question")->required();
  ask->add_option("--context", context, "Contextual information supplied before the question");
  ask->add_option("--image", image, "PNG or JPEG image to describe and inject")->check(CLI::ExistingFile);
  ask->add_option("--corpus", corpus, "Corpus directory to ingest instead of loading rag.index_path")
      ->check(CLI::ExistingDirectory);
  ask->add_option("--transcript", transcript_out, "Write the JSONL transcript to this file");
  ask->add_flag("--json", as_json, "Print the answer as JSON");

  auto* ingest = app.add_subcommand("ingest", "Embed a corpus directory into an index snapshot");
  std::string ingest_dir, index_out;
  ingest->add_option("dir", ingest_dir, "Directory of '# title | kind' text files")->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--index", index_out, "Snapshot path (default: rag.index_path)");

  auto* transcript = app.add_subcommand("transcript", "Download a session transcript from a running service");
  std::string session_id, server_url, format = "jsonl", output;
  transcript->add_option("session", session_id, "Session id")->required();
  transcript->add_option("--server", server_url, "Service URL (default: http://server.host:server.port)");
  transcript->add_option("--format", format, "jsonl or json")->check(CLI::IsMember({"jsonl", "json"}));
  transcript->add_option("-o,--output", output, "Write to a file instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg = resolve_config(config_path.empty() ? std::nullopt : std::optional<std::string>(config_path));
    if (force_mock) cfg.backend.mode = "mock";

    if (*ingest) {
      auto backend = make_backend(cfg);
      Gateway gw(backend, cfg.backend);
      EmbeddingIndex index(cfg.rag.max_chunk_chars);
      for (const auto& doc : load_corpus_dir(ingest_dir)) {
        auto n = index.ingest(doc, gw);
        std::cout << doc.id << ": " << n << " chunk(s)\n";
      }
      const std::string path = index_out.empty() ? cfg.rag.index_path : index_out;
      index.save(path);
      std::cout << "wrote " << index.size() << " chunk(s), dimension " << index.dimension() << ", to " << path << "\n";
      return 0;
    }

    if (*ask) {
      auto backend = make_backend(cfg);
      auto m = mode_from_string(mode);
      std::shared_ptr<const EmbeddingIndex> index;
      if (m == SynthesisMode::Armando) index = build_index(cfg, *backend, corpus);
      SessionManager sessions(cfg, backend, index);
      auto id = sessions.create(m);
      auto session = sessions.get(id);
      if (!context.empty()) session->submit_context(context);
      if (!image.empty()) {
        auto bytes = read_file(image);
        session->submit_image(bytes);
      }
      std::optional<FinalAnswer> answer;
      std::optional<Error> failure;
      try {
        answer = session->ask(question);
      } catch (const Error& e) {
        failure = e;
      }
      if (!transcript_out.empty()) {
        std::ofstream out(transcript_out, std::ios::binary);
        out << session->transcript("jsonl");
      }
      if (failure) throw *failure;
      if (as_json) std::cout << to_json(*answer).dump(2) << "\n";
      else print_answer(*answer);
      return 0;
    }

    if (*serve) {
      auto backend = make_backend(cfg);
      auto index = build_index(cfg, *backend, "");
      auto sessions = std::make_shared<SessionManager>(cfg, backend, index);
      HttpService service(sessions);
      g_service = &service;
      std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_service) g_service->stop();
      });
      const std::string h = host.empty() ? cfg.server.host : host;
      const int p = port ? port : cfg.server.port;
      std::cerr << "riley listening on http://" << h << ":" << p << " (" << cfg.backend.mode << " backend, "
                << index->size() << " indexed chunk(s))\n";
      if (!service.listen(h, p)) {
        std::cerr << "error: cannot listen on " << h << ":" << p << "\n";
        return 1;
      }
      return 0;
    }

    if (*transcript) {
      std::string url = server_url.empty() ? "http://" + cfg.server.host + ":" + std::to_string(cfg.server.port)
                                           : server_url;
      httplib::Client cli(url);
      auto res = cli.Get("/sessions/" + session_id + "/transcript?format=" + format);
      if (!res) throw Error(ErrorCode::TransportError, url + ": " + httplib::to_string(res.error()));
      if (res->status != 200) {
        std::cerr << "error: HTTP " << res->status << ": " << res->body << "\n";
        return 1;
      }
      if (output.empty()) {
        std::cout << res->body;
      } else {
        std::ofstream out(output, std::ios::binary);
        out << res->body;
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what();
    if (!e.stage().empty()) std::cerr << " [stage " << e.stage() << "]";
    if (!e.emotion().empty()) std::cerr << " [emotion " << e.emotion() << "]";
    std::cerr << "\n";
    return 2;
  }
  return 0;
}
