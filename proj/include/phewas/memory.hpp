#pragma once

// Per-agent long-term memory: feature-hashing embeddings, cosine retrieval
// and append-only JSONL persistence. A Remote embedding mode delegates to an
// HTTP endpoint; the Deterministic mode needs no network and is the test
// reference.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "phewas/errors.hpp"
#include "phewas/prng.hpp"

namespace phewas::memory {

using Json = nlohmann::ordered_json;

inline constexpr std::size_t kDefaultDimension = 4096;

enum class EmbeddingMode { Deterministic, Remote };

struct EmbeddingSpec {
  EmbeddingMode mode = EmbeddingMode::Deterministic;
  std::size_t dimension = kDefaultDimension;
  std::string remote_endpoint;  // Remote mode only, e.g. "http://host:port"
};

inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

// Bag-of-tokens feature hashing: each token lands in bucket fnv1a(token)
// mod E with sign from the hash's top-bit parity; the result is
// L2-normalized.
inline std::vector<double> embed_deterministic(
    const EmbeddingSpec& spec, const std::string& case_text,
    const std::vector<std::string>& phenotype_ids) {
  if (case_text.empty() && phenotype_ids.empty())
    throw ValidationError("embed: empty input");
  std::vector<double> v(spec.dimension, 0.0);
  auto add_tokens = [&](const std::string& text) {
    for (const auto& tok : tokenize(text)) {
      const std::uint64_t h = rng::splitmix64(rng::fnv1a(tok));
      const std::size_t bucket = h % spec.dimension;
      const double sign = (h >> 63) ? -1.0 : 1.0;
      v[bucket] += sign;
    }
  };
  add_tokens(case_text);
  for (const auto& id : phenotype_ids) add_tokens(id);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm <= 0.0)
    throw DegenerateInputError("embed: all token hashes cancelled");
  for (double& x : v) x /= norm;
  return v;
}

inline double cosine_sim(const std::vector<double>& a,
                         const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ValidationError("cosine_sim: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0)
    throw DegenerateInputError("cosine_sim: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

struct MemoryCase {
  std::string case_id;
  std::vector<double> embedding;
  std::string summary;
  std::vector<std::string> recommended_phenotype_ids;
  std::string outcome_note;
  std::string created_at;  // ISO-8601

  Json to_json() const {
    return {{"case_id", case_id},
            {"embedding", embedding},
            {"summary", summary},
            {"recommended_phenotype_ids", recommended_phenotype_ids},
            {"outcome_note", outcome_note},
            {"created_at", created_at}};
  }
  static MemoryCase from_json(const Json& j) {
    MemoryCase c;
    c.case_id = j.at("case_id").get<std::string>();
    c.embedding = j.at("embedding").get<std::vector<double>>();
    c.summary = j.at("summary").get<std::string>();
    c.recommended_phenotype_ids =
        j.at("recommended_phenotype_ids").get<std::vector<std::string>>();
    c.outcome_note = j.at("outcome_note").get<std::string>();
    c.created_at = j.at("created_at").get<std::string>();
    return c;
  }
};

struct Retrieval {
  MemoryCase item;
  double similarity = 0.0;
};

class MemoryBank {
 public:
  MemoryBank(std::string agent_id, std::size_t dimension = kDefaultDimension)
      : agent_id_(std::move(agent_id)), dimension_(dimension) {}

  const std::string& agent_id() const { return agent_id_; }
  std::size_t dimension() const { return dimension_; }
  const std::vector<MemoryCase>& cases() const { return cases_; }
  std::size_t size() const { return cases_.size(); }

  // Optional persistence: once attached, stores append to the file.
  void attach_persistence(const std::string& path) { persist_path_ = path; }

  void store(MemoryCase c) {
    if (c.embedding.size() != dimension_)
      throw ValidationError("store: embedding dimension mismatch");
    double norm = 0.0;
    for (double x : c.embedding) norm += x * x;
    if (norm <= 0.0) throw ValidationError("store: zero embedding");
    for (const auto& existing : cases_)
      if (existing.case_id == c.case_id)
        throw ConflictError("store: duplicate case id: " + c.case_id);
    if (persist_path_) {
      std::ofstream out(*persist_path_, std::ios::app);
      if (!out) throw TransportError("cannot open memory file: " + *persist_path_);
      out << c.to_json().dump() << "\n";
    }
    cases_.push_back(std::move(c));
  }

  // Top-k by cosine similarity, ties broken by insertion order. Smaller
  // banks return fewer; an empty bank returns an empty list.
  std::vector<Retrieval> retrieve(const std::vector<double>& query,
                                  std::size_t k = 1) const {
    if (k < 1) throw ValidationError("retrieve: k must be >= 1");
    if (query.size() != dimension_)
      throw ValidationError("retrieve: query dimension mismatch");
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(cases_.size());
    for (std::size_t i = 0; i < cases_.size(); ++i)
      scored.emplace_back(cosine_sim(query, cases_[i].embedding), i);
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) {
                       return a.first > b.first;
                     });
    std::vector<Retrieval> out;
    for (std::size_t i = 0; i < std::min(k, scored.size()); ++i)
      out.push_back({cases_[scored[i].second], scored[i].first});
    return out;
  }

  // Load a persisted bank (one JSON object per line).
  static MemoryBank load(const std::string& agent_id, std::size_t dimension,
                         const std::string& path) {
    MemoryBank bank(agent_id, dimension);
    std::ifstream in(path);
    if (!in) throw TransportError("cannot open memory file: " + path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      bank.store(MemoryCase::from_json(Json::parse(line)));
    }
    // Re-attach after replay so loads don't duplicate lines.
    bank.persist_path_ = path;
    return bank;
  }

 private:
  std::string agent_id_;
  std::size_t dimension_;
  std::vector<MemoryCase> cases_;
  std::optional<std::string> persist_path_;
};

}  // namespace phewas::memory
