#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mathlearner/types.hpp"

namespace mathlearner {

struct CorpusEntry {
  Problem problem;
  ReferenceSolution solution;

  bool operator==(const CorpusEntry&) const = default;
};

struct CorpusManifest {
  std::map<std::string, int> per_category;
  std::map<std::string, int> per_level;
  int skipped_missing_field = 0;
  int skipped_no_boxed_answer = 0;
  int skipped_malformed = 0;

  bool operator==(const CorpusManifest&) const = default;
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  std::uint64_t split_seed = 0;
  CorpusManifest manifest;

  /// Rebuilds per-category/per-level counts from entries; skip counters are kept.
  void recount();
  const CorpusEntry* find(std::string_view id) const;
};

/// Content of the last \boxed{...} group (brace-matched), canonicalized.
/// Throws Error(NoBoxedAnswer) when there is none or it is empty/unbalanced.
Answer extract_boxed_answer(std::string_view solution_text);

/// Parses one MATH-layout JSON record (keys problem, level, type, solution).
std::pair<Problem, ReferenceSolution> load_problem_record(std::string_view record_json, std::string id,
                                                          std::optional<std::string> source_path = std::nullopt);

using WarningSink = std::function<void(const std::string&)>;

/// Walks a file or directory tree. `*.json` holds one record per file, `*.jsonl`
/// one record per line. Ids are paths relative to root (plus `:line` for jsonl).
/// Files are visited in sorted path order, so the corpus order is stable.
Corpus load_corpus(const std::filesystem::path& root, const WarningSink& warn = {});

/// PCG32 (XSH-RR, 64-bit state). Seeding follows the reference pcg32_srandom_r.
class Pcg32 {
 public:
  static constexpr std::uint64_t kDefaultStream = 54;

  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = kDefaultStream);
  std::uint32_t next();
  /// Unbiased value in [0, bound) by threshold rejection; bound > 0.
  std::uint32_t bounded(std::uint32_t bound);

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
};

struct Split {
  Corpus train;
  Corpus test;
};

/// Partial Fisher-Yates over the category's entries (in corpus order) using
/// Pcg32(seed): the first n_test drawn form the test set, the next n_train the
/// train set. Drawing test first keeps the test set independent of n_train.
Split select_split(const Corpus& corpus, std::string_view category, std::size_t n_train, std::size_t n_test,
                   std::uint64_t seed);

}  // namespace mathlearner
