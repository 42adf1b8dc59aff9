#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mathlearner/embedding.hpp"
#include "mathlearner/types.hpp"

namespace mathlearner {

inline constexpr int kStoreFormatVersion = 1;

struct LearnedRecord {
  std::string record_id;
  std::string problem_id;
  FeatureSet feature_set;
  EmbeddingVector category_vector;
  /// Embedding of step_features joined by '\n'.
  EmbeddingVector steps_vector;
  SolutionProgram program;
  std::int64_t created_at = 0;  // unix seconds
  /// Set by make_record / load; checked against the store, not serialized.
  std::string embedder_id;

  bool operator==(const LearnedRecord&) const = default;
};

struct SimilarityHit {
  std::string record_id;
  double score = 0.0;
  double category_score = 0.0;
  double steps_score = 0.0;
};

struct StoreManifest {
  int dimension = 0;
  std::string embedder_id;
  std::size_t record_count = 0;
  int format_version = kStoreFormatVersion;
  std::string checksum = "crc32";
};

struct QueryVectors {
  EmbeddingVector category;
  EmbeddingVector steps;
};

/// Deterministic record id for a problem: "r" + 16 hex digits of FNV-1a 64.
std::string record_id_for(std::string_view problem_id);

/// dot(a,b) / (|a| |b|), 0 when either norm is 0. Throws DimensionMismatch.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

std::string join_steps(const std::vector<std::string>& steps);
/// Empty text embeds to the zero vector without calling the embedder.
QueryVectors embed_features(Embedder& embedder, const FeatureSet& features);

LearnedRecord make_record(std::string problem_id, FeatureSet features, SolutionProgram program, Embedder& embedder,
                          std::int64_t created_at);

// On-disk encoding helpers, exposed for tests and other readers.
std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);
std::string encode_vector(const EmbeddingVector& v);
EmbeddingVector decode_vector(std::string_view base64);
std::uint32_t crc32_of(std::string_view bytes);
/// One records.jsonl line (no trailing newline) including its crc32 field.
std::string serialize_record(const LearnedRecord& record);
/// Verifies crc32 and returns the record. Throws ChecksumMismatch / StorageFailure.
LearnedRecord parse_record_line(std::string_view line);

/// Append-only vector database with exact flat cosine retrieval.
///
/// A store is either in-memory or attached to a directory holding
/// manifest.json + records.jsonl; attached stores make each put durable
/// before returning. Readers run concurrently with appends; a query sees the
/// records present when it started.
class FeatureStore {
 public:
  FeatureStore(int dimension, std::string embedder_id);
  ~FeatureStore();
  FeatureStore(FeatureStore&&) noexcept;
  FeatureStore& operator=(FeatureStore&&) noexcept;

  /// Loads dir if it holds a store (checking dimension/embedder agree),
  /// otherwise creates an empty one there. Subsequent puts append to it.
  static FeatureStore open(const std::filesystem::path& dir, int dimension, const std::string& embedder_id);
  /// Loads a persisted store into memory (detached).
  static FeatureStore load(const std::filesystem::path& dir);
  /// Writes a full snapshot to dir, replacing existing store files there.
  void persist(const std::filesystem::path& dir) const;

  std::string put(LearnedRecord record);
  std::vector<SimilarityHit> query(const QueryVectors& query, int k, double tau, double alpha) const;

  std::optional<LearnedRecord> get(std::string_view record_id) const;
  bool contains_problem(std::string_view problem_id) const;
  std::vector<LearnedRecord> records() const;
  StoreManifest manifest() const;
  std::size_t size() const;
  int dimension() const;
  const std::string& embedder_id() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mathlearner
