#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "riley/riley.hpp"

namespace riley::testing {

inline std::filesystem::path fixture_dir() { return RILEY_FIXTURE_DIR; }

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  auto s = read_text(p);
  return {s.begin(), s.end()};
}

inline Embedder test_embedder(std::size_t dim = 256) {
  return [dim](std::string_view s) { return EmbeddingVector{hashed_bag_of_words(s, dim)}; };
}

inline std::shared_ptr<EmbeddingIndex> fixture_index() {
  auto index = std::make_shared<EmbeddingIndex>(1500);
  for (const auto& doc : load_corpus_dir(fixture_dir() / "corpus")) index->ingest(doc, test_embedder());
  return index;
}

/// Max-count reference: emotions with the top count, in registry order.
inline std::vector<std::string> naive_outcome(const std::vector<std::string>& registry,
                                              const std::vector<std::string>& choices) {
  std::vector<int> counts(registry.size(), 0);
  for (const auto& c : choices)
    for (std::size_t i = 0; i < registry.size(); ++i)
      if (registry[i] == c) ++counts[i];
  int best = *std::max_element(counts.begin(), counts.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < registry.size(); ++i)
    if (best == 0 || counts[i] == best) out.push_back(registry[i]);
  return out;
}

inline std::vector<std::string> names_of(const std::vector<EmotionId>& ids) {
  std::vector<std::string> out;
  for (const auto& id : ids) out.push_back(id.name());
  return out;
}

/// Full-scan reference ranking: every chunk scored, sorted by
/// (score desc, doc_id asc, ordinal asc), cut to k.
inline std::vector<std::pair<std::string, std::uint32_t>> brute_force_rank(const std::vector<Chunk>& chunks,
                                                                           const EmbeddingVector& q, std::size_t k) {
  struct Row {
    double score;
    std::string doc;
    std::uint32_t ord;
  };
  std::vector<Row> rows;
  for (const auto& c : chunks) {
    double dot = 0, a = 0, b = 0;
    for (std::size_t i = 0; i < q.values.size(); ++i) {
      dot += q.values[i] * c.embedding.values[i];
      a += q.values[i] * q.values[i];
      b += c.embedding.values[i] * c.embedding.values[i];
    }
    rows.push_back({std::clamp(dot / (std::sqrt(a) * std::sqrt(b)), -1.0, 1.0), c.doc_id, c.ordinal});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
    if (x.score != y.score) return x.score > y.score;
    if (x.doc != y.doc) return x.doc < y.doc;
    return x.ord < y.ord;
  });
  std::vector<std::pair<std::string, std::uint32_t>> out;
  for (std::size_t i = 0; i < rows.size() && i < k; ++i) out.emplace_back(rows[i].doc, rows[i].ord);
  return out;
}

inline std::string random_words(std::mt19937_64& rng, const std::vector<std::string>& vocab, std::size_t n) {
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += vocab[pick(rng)];
  }
  return s;
}

inline const std::vector<std::string>& small_vocab() {
  static const std::vector<std::string> v = {"fire",  "smoke", "exit",   "stairs", "water", "flood", "quake",
                                             "door",  "floor", "call",   "help",   "alarm", "calm",  "breathe",
                                             "north", "south", "street", "window", "cloth", "lisboa"};
  return v;
}

}  // namespace riley::testing
