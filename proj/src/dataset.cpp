#include "mathlearner/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "mathlearner/error.hpp"

namespace mathlearner {

namespace fs = std::filesystem;
using nlohmann::json;

void Corpus::recount() {
  manifest.per_category.clear();
  manifest.per_level.clear();
  for (const auto& entry : entries) {
    ++manifest.per_category[entry.problem.category];
    ++manifest.per_level[entry.problem.level];
  }
}

const CorpusEntry* Corpus::find(std::string_view id) const {
  for (const auto& entry : entries) {
    if (entry.problem.id == id) return &entry;
  }
  return nullptr;
}

Answer extract_boxed_answer(std::string_view text) {
  static constexpr std::string_view kMarker = "\\boxed";
  std::size_t search_end = text.size();
  std::size_t at = std::string_view::npos;
  // Find the last "\boxed" that is followed (after spaces) by '{'.
  while (search_end > 0) {
    at = text.rfind(kMarker, search_end - 1);
    if (at == std::string_view::npos) break;
    std::size_t open = at + kMarker.size();
    while (open < text.size() && text[open] == ' ') ++open;
    if (open < text.size() && text[open] == '{') {
      int depth = 0;
      for (std::size_t i = open; i < text.size(); ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) {
          ++i;
          continue;
        }
        if (text[i] == '{') ++depth;
        if (text[i] == '}' && --depth == 0) {
          std::string_view inner = text.substr(open + 1, i - open - 1);
          Answer answer = canonicalize_answer(inner);
          if (answer.canonical.empty()) throw Error(ErrorCode::NoBoxedAnswer, "empty \\boxed{} group");
          return answer;
        }
      }
      throw Error(ErrorCode::NoBoxedAnswer, "unbalanced braces in last \\boxed group");
    }
    search_end = at;
  }
  throw Error(ErrorCode::NoBoxedAnswer, "no \\boxed{...} in solution");
}

std::pair<Problem, ReferenceSolution> load_problem_record(std::string_view record_json, std::string id,
                                                          std::optional<std::string> source_path) {
  json record = json::parse(record_json);
  if (!record.is_object()) throw Error(ErrorCode::MissingField, "record is not a JSON object");
  auto field = [&](const char* key) -> std::string {
    auto it = record.find(key);
    if (it == record.end() || !it->is_string()) {
      throw Error(ErrorCode::MissingField, std::string("record lacks string field '") + key + "'");
    }
    return it->get<std::string>();
  };
  Problem problem;
  problem.id = std::move(id);
  problem.statement = field("problem");
  problem.level = field("level");
  problem.category = field("type");
  problem.source_path = std::move(source_path);
  std::string solution_text = field("solution");
  if (problem.statement.empty()) throw Error(ErrorCode::MissingField, "empty problem statement");
  if (solution_text.empty()) throw Error(ErrorCode::MissingField, "empty solution");

  ReferenceSolution solution;
  solution.problem_id = problem.id;
  solution.final_answer = extract_boxed_answer(solution_text);
  solution.solution_text = std::move(solution_text);
  return {std::move(problem), std::move(solution)};
}

namespace {

void ingest_record(Corpus& corpus, std::string_view text, std::string id, const std::string& path,
                   const WarningSink& warn) {
  try {
    auto [problem, solution] = load_problem_record(text, std::move(id), path);
    corpus.entries.push_back({std::move(problem), std::move(solution)});
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoBoxedAnswer) {
      ++corpus.manifest.skipped_no_boxed_answer;
    } else {
      ++corpus.manifest.skipped_missing_field;
    }
    if (warn) warn(path + ": skipped: " + e.what());
  } catch (const json::exception& e) {
    ++corpus.manifest.skipped_malformed;
    if (warn) warn(path + ": skipped malformed JSON: " + e.what());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

Corpus load_corpus(const fs::path& root, const WarningSink& warn) {
  if (!fs::exists(root)) throw Error(ErrorCode::InvalidArgument, "dataset path does not exist: " + root.string());
  std::vector<fs::path> files;
  if (fs::is_regular_file(root)) {
    files.push_back(root);
  } else {
    for (const auto& item : fs::recursive_directory_iterator(root)) {
      if (!item.is_regular_file()) continue;
      auto ext = item.path().extension();
      if (ext == ".json" || ext == ".jsonl") files.push_back(item.path());
    }
    std::sort(files.begin(), files.end());
  }

  const fs::path base = fs::is_regular_file(root) ? root.parent_path() : root;
  Corpus corpus;
  for (const auto& file : files) {
    std::string rel = fs::relative(file, base).generic_string();
    std::string text = read_file(file);
    if (file.extension() == ".jsonl") {
      std::istringstream lines(text);
      std::string line;
      int line_no = 0;
      while (std::getline(lines, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ingest_record(corpus, line, rel + ":" + std::to_string(line_no), rel, warn);
      }
    } else {
      ingest_record(corpus, text, rel, rel, warn);
    }
  }
  corpus.recount();
  return corpus;
}

Pcg32::Pcg32(std::uint64_t seed, std::uint64_t stream) {
  state_ = 0;
  inc_ = (stream << 1u) | 1u;
  next();
  state_ += seed;
  next();
}

std::uint32_t Pcg32::next() {
  std::uint64_t old = state_;
  state_ = old * 6364136223846793005ULL + inc_;
  auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
  auto rot = static_cast<std::uint32_t>(old >> 59u);
  return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
}

std::uint32_t Pcg32::bounded(std::uint32_t bound) {
  std::uint32_t threshold = (0u - bound) % bound;
  for (;;) {
    std::uint32_t r = next();
    if (r >= threshold) return r % bound;
  }
}

Split select_split(const Corpus& corpus, std::string_view category, std::size_t n_train, std::size_t n_test,
                   std::uint64_t seed) {
  std::vector<const CorpusEntry*> pool;
  for (const auto& entry : corpus.entries) {
    if (entry.problem.category == category) pool.push_back(&entry);
  }
  if (pool.empty() && n_train + n_test > 0) {
    throw Error(ErrorCode::NotEnoughProblems, "category '" + std::string(category) + "' has no problems");
  }
  if (n_train + n_test > pool.size()) {
    throw Error(ErrorCode::NotEnoughProblems, "requested " + std::to_string(n_train + n_test) + " problems but '" +
                                                  std::string(category) + "' has " + std::to_string(pool.size()));
  }

  Pcg32 rng(seed);
  const std::size_t take = n_train + n_test;
  for (std::size_t i = 0; i < take; ++i) {
    auto j = i + rng.bounded(static_cast<std::uint32_t>(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }

  Split split;
  split.train.split_seed = split.test.split_seed = seed;
  for (std::size_t i = 0; i < n_test; ++i) split.test.entries.push_back(*pool[i]);
  for (std::size_t i = n_test; i < take; ++i) split.train.entries.push_back(*pool[i]);
  split.train.recount();
  split.test.recount();
  return split;
}

}  // namespace mathlearner
