#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "riley/debate.hpp"
#include "riley/events.hpp"
#include "riley/gateway.hpp"
#include "riley/text.hpp"

namespace riley {

struct SourceDocument {
  std::string id;
  std::string title;
  std::string body;
  std::map<std::string, std::string> metadata;  // e.g. kind = incident | contacts | procedure
};

struct Chunk {
  std::string doc_id;
  std::uint32_t ordinal = 0;
  std::string text;
  EmbeddingVector embedding;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct Hit {
  Chunk chunk;
  double score = 0.0;
};

struct RetrievalResult {
  std::vector<Hit> hits;  // score descending, then (doc_id, ordinal) ascending
  std::string query_text;
};

using Embedder = std::function<EmbeddingVector(std::string_view)>;

inline double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dimension() != v.dimension())
    throw Error(ErrorCode::DimensionMismatch,
                "cosine of vectors with dimensions " + std::to_string(u.dimension()) + " and " +
                    std::to_string(v.dimension()));
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    dot += u.values[i] * v.values[i];
    uu += u.values[i] * u.values[i];
    vv += v.values[i] * v.values[i];
  }
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  double c = dot / (std::sqrt(uu) * std::sqrt(vv));
  return std::clamp(c, -1.0, 1.0);
}

/// Paragraphs (separated by blank lines) packed greedily into chunks of at
/// most `max_chars` bytes, joined by a blank line, without overlap.
/// Paragraphs longer than the limit are split at whitespace.
inline std::vector<std::string> chunk_text(std::string_view body, std::size_t max_chars) {
  require(max_chars > 0, "max_chunk_chars must be positive");
  std::vector<std::string> paragraphs;
  std::string para;
  for (auto line : text::split_lines(body)) {
    if (text::is_blank(line)) {
      if (!para.empty()) paragraphs.push_back(std::move(para));
      para.clear();
      continue;
    }
    if (!para.empty()) para += '\n';
    para += text::trim(line);
  }
  if (!para.empty()) paragraphs.push_back(std::move(para));

  std::vector<std::string> pieces;
  for (auto& p : paragraphs) {
    std::string_view rest = p;
    while (rest.size() > max_chars) {
      std::size_t cut = text::utf8_floor(rest, max_chars);
      std::size_t ws = rest.substr(0, cut + 1).find_last_of(" \t\n");
      if (ws != std::string_view::npos && ws > 0) cut = std::min(cut, ws);
      if (cut == 0) cut = text::utf8_floor(rest, max_chars);
      if (cut == 0) cut = max_chars;
      auto head = text::trim(rest.substr(0, cut));
      if (!head.empty()) pieces.emplace_back(head);
      rest = text::trim(rest.substr(cut));
    }
    if (!rest.empty()) pieces.emplace_back(rest);
  }

  std::vector<std::string> chunks;
  std::string cur;
  for (auto& piece : pieces) {
    if (cur.empty()) {
      cur = std::move(piece);
    } else if (cur.size() + 2 + piece.size() <= max_chars) {
      cur += "\n\n";
      cur += piece;
    } else {
      chunks.push_back(std::move(cur));
      cur = std::move(piece);
    }
  }
  if (!cur.empty()) chunks.push_back(std::move(cur));
  return chunks;
}

/// Orders hits: score descending, then doc_id and ordinal ascending.
inline bool hit_before(const Hit& a, const Hit& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.chunk.doc_id != b.chunk.doc_id) return a.chunk.doc_id < b.chunk.doc_id;
  return a.chunk.ordinal < b.chunk.ordinal;
}

/// In-memory chunk index searched by exhaustive cosine scan. Concurrent
/// readers, exclusive writers.
class EmbeddingIndex {
 public:
  struct DocumentInfo {
    std::string title;
    std::map<std::string, std::string> metadata;
    friend bool operator==(const DocumentInfo&, const DocumentInfo&) = default;
  };

  explicit EmbeddingIndex(std::size_t max_chunk_chars = 1500) : max_chunk_chars_(max_chunk_chars) {}

  EmbeddingIndex(const EmbeddingIndex& other) {
    std::shared_lock lk(other.mu_);
    max_chunk_chars_ = other.max_chunk_chars_;
    dimension_ = other.dimension_;
    chunks_ = other.chunks_;
    docs_ = other.docs_;
  }
  EmbeddingIndex& operator=(const EmbeddingIndex& other) {
    if (this == &other) return *this;
    EmbeddingIndex copy(other);
    std::unique_lock lk(mu_);
    max_chunk_chars_ = copy.max_chunk_chars_;
    dimension_ = copy.dimension_;
    chunks_ = std::move(copy.chunks_);
    docs_ = std::move(copy.docs_);
    return *this;
  }

  std::size_t max_chunk_chars() const noexcept { return max_chunk_chars_; }

  /// Chunks, embeds and stores `doc`, replacing any chunks with the same id.
  /// All-or-nothing: a failed embedding leaves the index untouched.
  std::size_t ingest(const SourceDocument& doc, const Embedder& embed) {
    require(!text::is_blank(doc.id), "document id must be non-empty");
    require(!text::is_blank(doc.body), "document body must be non-empty");
    auto texts = chunk_text(doc.body, max_chunk_chars_);

    std::vector<Chunk> fresh;
    fresh.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      EmbeddingVector vec;
      try {
        vec = embed(texts[i]);
      } catch (const std::exception& e) {
        throw Error(ErrorCode::EmbeddingFailure,
                    "embedding chunk " + std::to_string(i) + " of '" + doc.id + "' failed: " + e.what());
      }
      if (vec.dimension() == 0 || vec.is_zero())
        throw Error(ErrorCode::EmbeddingFailure, "empty embedding for chunk " + std::to_string(i) + " of '" + doc.id + "'");
      if (!fresh.empty() && vec.dimension() != fresh.front().embedding.dimension())
        throw Error(ErrorCode::EmbeddingFailure, "inconsistent embedding dimensions within '" + doc.id + "'");
      fresh.push_back(Chunk{doc.id, static_cast<std::uint32_t>(i), std::move(texts[i]), std::move(vec)});
    }

    std::unique_lock lk(mu_);
    const std::size_t dim = fresh.front().embedding.dimension();
    if (dimension_ != 0 && dim != dimension_)
      throw Error(ErrorCode::EmbeddingFailure, "embedding dimension " + std::to_string(dim) +
                                                   " does not match index dimension " + std::to_string(dimension_));
    dimension_ = dim;
    std::erase_if(chunks_, [&](const Chunk& c) { return c.doc_id == doc.id; });
    for (auto& c : fresh) chunks_.push_back(std::move(c));
    docs_[doc.id] = DocumentInfo{doc.title.empty() ? doc.id : doc.title, doc.metadata};
    return texts.size();
  }

  std::size_t ingest(const SourceDocument& doc, Gateway& gw) {
    return ingest(doc, [&gw](std::string_view s) { return gw.embed(s); });
  }

  RetrievalResult retrieve(const EmbeddingVector& query, std::string query_text, std::size_t k) const {
    require(k > 0, "k must be positive");
    std::shared_lock lk(mu_);
    if (chunks_.empty()) throw Error(ErrorCode::EmptyIndex, "the index holds no chunks");
    if (query.dimension() != dimension_)
      throw Error(ErrorCode::DimensionMismatch, "query dimension " + std::to_string(query.dimension()) +
                                                    " does not match index dimension " + std::to_string(dimension_));
    std::vector<Hit> all;
    all.reserve(chunks_.size());
    for (const auto& c : chunks_) all.push_back(Hit{c, cosine(query, c.embedding)});
    const std::size_t n = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), hit_before);
    all.resize(n);
    return RetrievalResult{std::move(all), std::move(query_text)};
  }

  RetrievalResult retrieve(std::string_view query, std::size_t k, const Embedder& embed) const {
    if (empty()) throw Error(ErrorCode::EmptyIndex, "the index holds no chunks");
    return retrieve(embed(query), std::string(query), k);
  }

  RetrievalResult retrieve(std::string_view query, std::size_t k, Gateway& gw) const {
    return retrieve(query, k, [&gw](std::string_view s) { return gw.embed(s); });
  }

  std::size_t size() const {
    std::shared_lock lk(mu_);
    return chunks_.size();
  }
  bool empty() const { return size() == 0; }
  std::size_t dimension() const {
    std::shared_lock lk(mu_);
    return dimension_;
  }
  std::vector<Chunk> chunks() const {
    std::shared_lock lk(mu_);
    return chunks_;
  }
  std::map<std::string, DocumentInfo> documents() const {
    std::shared_lock lk(mu_);
    return docs_;
  }
  std::string title_of(const std::string& doc_id) const {
    std::shared_lock lk(mu_);
    auto it = docs_.find(doc_id);
    return it == docs_.end() ? doc_id : it->second.title;
  }

  friend bool operator==(const EmbeddingIndex& a, const EmbeddingIndex& b) {
    if (&a == &b) return true;
    std::shared_lock la(a.mu_), lb(b.mu_);
    return a.dimension_ == b.dimension_ && a.chunks_ == b.chunks_ && a.docs_ == b.docs_;
  }

  // Snapshot file, all integers and reals little-endian:
  //   "RILEYIDX" u32 version u32 dimension u32 max_chunk_chars
  //   u32 n_docs { str id, str title, u32 n_meta { str key, str value } }
  //   u32 n_chunks { str doc_id, u32 ordinal, str text, f32[dimension] }
  // where str = u32 byte length + UTF-8 bytes.
  static constexpr std::uint32_t kSnapshotVersion = 1;

  void save(const std::filesystem::path& path) const {
    std::string buf("RILEYIDX");
    std::shared_lock lk(mu_);
    put_u32(buf, kSnapshotVersion);
    put_u32(buf, static_cast<std::uint32_t>(dimension_));
    put_u32(buf, static_cast<std::uint32_t>(max_chunk_chars_));
    put_u32(buf, static_cast<std::uint32_t>(docs_.size()));
    for (const auto& [id, info] : docs_) {
      put_str(buf, id);
      put_str(buf, info.title);
      put_u32(buf, static_cast<std::uint32_t>(info.metadata.size()));
      for (const auto& [k, v] : info.metadata) {
        put_str(buf, k);
        put_str(buf, v);
      }
    }
    put_u32(buf, static_cast<std::uint32_t>(chunks_.size()));
    for (const auto& c : chunks_) {
      put_str(buf, c.doc_id);
      put_u32(buf, c.ordinal);
      put_str(buf, c.text);
      for (double x : c.embedding.values) put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
    lk.unlock();

    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorCode::PreconditionViolation, "cannot write " + tmp.string());
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      if (!out) throw Error(ErrorCode::PreconditionViolation, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

  static EmbeddingIndex load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::CorruptSnapshot, "cannot open " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{buf, 0};
    if (buf.size() < 8 || buf.compare(0, 8, "RILEYIDX") != 0)
      throw Error(ErrorCode::CorruptSnapshot, path.string() + ": bad magic");
    r.pos = 8;
    if (auto v = r.u32(); v != kSnapshotVersion)
      throw Error(ErrorCode::CorruptSnapshot, path.string() + ": unsupported version " + std::to_string(v));
    EmbeddingIndex idx;
    idx.dimension_ = r.u32();
    idx.max_chunk_chars_ = r.u32();
    for (std::uint32_t n = r.u32(); n > 0; --n) {
      std::string id = r.str();
      DocumentInfo info;
      info.title = r.str();
      for (std::uint32_t m = r.u32(); m > 0; --m) {
        std::string k = r.str();
        info.metadata[k] = r.str();
      }
      idx.docs_[id] = std::move(info);
    }
    for (std::uint32_t n = r.u32(); n > 0; --n) {
      Chunk c;
      c.doc_id = r.str();
      c.ordinal = r.u32();
      c.text = r.str();
      c.embedding.values.resize(idx.dimension_);
      for (auto& x : c.embedding.values) x = std::bit_cast<float>(r.u32());
      idx.chunks_.push_back(std::move(c));
    }
    if (r.pos != buf.size()) throw Error(ErrorCode::CorruptSnapshot, path.string() + ": trailing bytes");
    return idx;
  }

 private:
  static void put_u32(std::string& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  static void put_str(std::string& b, const std::string& s) {
    put_u32(b, static_cast<std::uint32_t>(s.size()));
    b += s;
  }

  struct Reader {
    const std::string& buf;
    std::size_t pos;
    std::uint32_t u32() {
      if (pos + 4 > buf.size()) throw Error(ErrorCode::CorruptSnapshot, "truncated snapshot");
      std::uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)])} << (8 * i);
      pos += 4;
      return v;
    }
    std::string str() {
      auto n = u32();
      if (pos + n > buf.size()) throw Error(ErrorCode::CorruptSnapshot, "truncated snapshot");
      std::string s = buf.substr(pos, n);
      pos += n;
      return s;
    }
  };

  mutable std::shared_mutex mu_;
  std::size_t max_chunk_chars_ = 1500;
  std::size_t dimension_ = 0;
  std::vector<Chunk> chunks_;
  std::map<std::string, DocumentInfo> docs_;
};

/// Reads a corpus directory: every regular, non-hidden file is one document
/// whose id is the file stem. A first line "# title | kind" sets the title
/// and metadata["kind"] and is not part of the body.
inline std::vector<SourceDocument> load_corpus_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), "corpus directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && !e.path().filename().string().starts_with(".")) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  std::vector<SourceDocument> docs;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    SourceDocument doc;
    doc.id = f.stem().string();
    doc.title = doc.id;
    std::string_view body = content;
    auto nl = body.find('\n');
    std::string_view first = text::trim(body.substr(0, nl));
    if (first.starts_with("#")) {
      first = text::trim(first.substr(1));
      auto bar = first.find('|');
      doc.title = std::string(text::trim(first.substr(0, bar)));
      if (bar != std::string_view::npos) doc.metadata["kind"] = std::string(text::trim(first.substr(bar + 1)));
      body = nl == std::string_view::npos ? std::string_view{} : body.substr(nl + 1);
    }
    doc.body = std::string(text::trim(body));
    if (doc.body.empty()) continue;
    docs.push_back(std::move(doc));
  }
  return docs;
}

// Cumulative conversational context ---------------------------------------

struct CumulativeContext {
  static constexpr std::size_t kWindow = 3;

  std::vector<std::string> topics;
  std::vector<std::string> keywords;
  std::vector<std::string> recent_questions;  // oldest first, at most kWindow
  std::string summary;

  bool empty() const { return topics.empty() && keywords.empty() && recent_questions.empty() && summary.empty(); }

  /// Copy with `q` pushed into the question window.
  CumulativeContext with_question(std::string q) const {
    CumulativeContext next = *this;
    next.recent_questions.push_back(std::move(q));
    if (next.recent_questions.size() > kWindow)
      next.recent_questions.erase(next.recent_questions.begin(),
                                  next.recent_questions.end() - static_cast<std::ptrdiff_t>(kWindow));
    return next;
  }

  friend bool operator==(const CumulativeContext&, const CumulativeContext&) = default;
};

inline const std::set<std::string>& stop_words() {
  static const std::set<std::string> words = {
      "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as", "at",
      "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could",
      "did", "do", "does", "doing", "don", "down", "during", "each", "few", "for", "from", "further", "had",
      "has", "have", "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i",
      "if", "in", "into", "is", "it", "its", "itself", "just", "ll", "me", "more", "most", "my", "myself",
      "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours",
      "ourselves", "out", "over", "own", "re", "s", "same", "she", "should", "so", "some", "such", "t",
      "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these", "they",
      "this", "those", "through", "to", "too", "under", "until", "up", "ve", "very", "was", "we", "were",
      "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would", "you",
      "your", "yours", "yourself", "yourselves", "m", "d", "also", "may", "might", "must", "shall",
  };
  return words;
}

/// Top-`n` terms by frequency after stop-word removal; ties keep first
/// occurrence order.
inline std::vector<std::string> extract_keywords(std::string_view body, std::size_t n) {
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> stats;  // term -> (count, first index)
  std::size_t index = 0;
  for (auto& tok : text::word_tokens(body)) {
    if (stop_words().contains(tok)) continue;
    auto [it, inserted] = stats.try_emplace(tok, 0, index++);
    ++it->second.first;
  }
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> ranked(stats.begin(), stats.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.second.second < b.second.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < n; ++i) out.push_back(ranked[i].first);
  return out;
}

/// Question first, then keywords, topics and summary, one per line.
inline std::string build_query(const CumulativeContext& ctx, std::string_view question) {
  require(!text::is_blank(question), "question must be non-empty");
  std::string q(question);
  if (!ctx.keywords.empty()) q += "\n" + text::join(ctx.keywords, " ");
  if (!ctx.topics.empty()) q += "\n" + text::join(ctx.topics, ", ");
  if (!ctx.summary.empty()) q += "\n" + ctx.summary;
  return q;
}

struct TopicsAndSummary {
  std::vector<std::string> topics;
  std::string summary;
};

inline std::optional<TopicsAndSummary> parse_topics_summary(std::string_view raw) {
  const std::string cleaned = text::strip_think_spans(raw);
  std::optional<std::vector<std::string>> topics;
  std::optional<std::string> summary;
  for (auto line : text::split_lines(cleaned)) {
    auto l = text::trim(line);
    if (!topics && text::istarts_with(l, "TOPICS:")) {
      std::vector<std::string> ts;
      std::string_view rest = l.substr(7);
      while (!rest.empty()) {
        auto comma = rest.find(',');
        auto t = text::trim(rest.substr(0, comma));
        if (!t.empty()) ts.emplace_back(t);
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
      }
      topics = std::move(ts);
    } else if (!summary && text::istarts_with(l, "SUMMARY:")) {
      summary = std::string(text::trim(l.substr(8)));
    }
  }
  if (!topics || !summary || summary->empty()) return std::nullopt;
  return TopicsAndSummary{std::move(*topics), std::move(*summary)};
}

/// Returns the next context; `prev` is never modified. The question window
/// and keywords always advance; topics and summary come from one text-backend
/// call and keep their previous values if that call fails or cannot be parsed.
inline CumulativeContext update_context(PipelineContext& ctx, const CumulativeContext& prev, std::string_view question,
                                        std::string_view final_answer) {
  require(!text::is_blank(question), "question must be non-empty");
  CumulativeContext next = prev.with_question(std::string(question));
  std::string corpus = text::join(next.recent_questions, "\n");
  if (!final_answer.empty()) corpus += "\n" + std::string(final_answer);
  next.keywords = extract_keywords(corpus, ctx.config.rag.keyword_count);

  json payload = {{"question", question}};
  std::optional<std::string> warning;
  try {
    std::string questions;
    for (const auto& q : next.recent_questions) questions += "- " + q + "\n";
    std::string prompt = text::render(ctx.config.rag.context_template,
                                      {{"questions", std::string(text::trim(questions))},
                                       {"answer", final_answer.empty() ? "(none yet)" : std::string(final_answer)},
                                       {"summary", prev.summary.empty() ? "(none yet)" : prev.summary}});
    auto done = ctx.gateway.invoke(BackendRole::Text, {ChatMessage::user(prompt)},
                                   ctx.gateway.params_for(BackendRole::Text, ctx.config.backend.adjudication_temperature),
                                   CallTag{"context_update", "", -1});
    payload.update(call_payload(done.record));
    if (auto parsed = parse_topics_summary(done.reply.content)) {
      next.topics = std::move(parsed->topics);
      next.summary = std::move(parsed->summary);
    } else {
      warning = "could not parse TOPICS/SUMMARY; keeping previous values";
    }
  } catch (const Error& e) {
    warning = std::string("context backend call failed; keeping previous topics and summary: ") + e.what();
  }

  payload["recent_questions"] = next.recent_questions;
  payload["keywords"] = next.keywords;
  payload["topics"] = next.topics;
  payload["summary"] = next.summary;
  if (warning) payload["warning"] = *warning;
  log_event(ctx.log, EventKind::ContextUpdate, std::move(payload));
  if (warning) log_event(ctx.log, EventKind::Warning, {{"stage", "context_update"}, {"message", *warning}});
  return next;
}

/// Retrieval for grounding the final synthesis. Returns the top-k chunk texts
/// with their source titles, or an empty string (plus a warning) when the
/// index is empty.
inline std::string enrich_before_synthesis(PipelineContext& ctx, const EmbeddingIndex& index,
                                           const CumulativeContext& cumulative, std::string_view question,
                                           std::size_t k) {
  const std::string query = build_query(cumulative, question);
  if (index.empty()) {
    log_event(ctx.log, EventKind::Retrieval, {{"query", query}, {"hits", json::array()}, {"warning", "empty index"}});
    log_event(ctx.log, EventKind::Warning, {{"stage", "retrieval"}, {"message", "index is empty; synthesis is not grounded"}});
    return {};
  }
  auto result = index.retrieve(query, k, ctx.gateway);
  std::string out;
  json hits = json::array();
  for (const auto& h : result.hits) {
    const std::string title = index.title_of(h.chunk.doc_id);
    if (!out.empty()) out += "\n\n";
    out += "[" + title + "]\n" + h.chunk.text;
    hits.push_back({{"doc_id", h.chunk.doc_id}, {"ordinal", h.chunk.ordinal}, {"title", title}, {"score", h.score}});
  }
  log_event(ctx.log, EventKind::Retrieval, {{"query", query}, {"k", k}, {"hits", std::move(hits)}});
  return out;
}

}  // namespace riley
