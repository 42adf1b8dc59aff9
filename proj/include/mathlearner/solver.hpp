#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mathlearner/config.hpp"
#include "mathlearner/embedding.hpp"
#include "mathlearner/executor.hpp"
#include "mathlearner/feature_store.hpp"
#include "mathlearner/gateway.hpp"
#include "mathlearner/types.hpp"

namespace mathlearner {

enum class SolveMode { Augmented, Direct };

std::string_view to_string(SolveMode mode);

inline constexpr int kTraceSchemaVersion = 1;

struct RetrievedRef {
  std::string record_id;
  double score = 0.0;

  bool operator==(const RetrievedRef&) const = default;
};

struct ExecutionSummary {
  /// Executor status, or one of model_error / unparseable / executor_error.
  std::string status;
  std::string output;
  std::string stderr_excerpt;

  bool operator==(const ExecutionSummary&) const = default;
};

struct SolveTrace {
  std::string problem_id;
  /// nullopt when feature extraction failed and the solver fell back to direct mode.
  std::optional<FeatureSet> query_features;
  std::optional<RetrievedRef> retrieved;
  std::vector<RetrievedRef> extra_hits;
  SolveMode mode = SolveMode::Direct;
  std::string program_source;
  ExecutionSummary execution;
  std::optional<Answer> answer;
  std::optional<bool> correct;
  int attempts = 0;

  bool operator==(const SolveTrace&) const = default;
};

/// One JSON object, no trailing newline. Field order is fixed (sorted keys).
std::string trace_to_json_line(const SolveTrace& trace);
SolveTrace trace_from_json_line(std::string_view line);
std::vector<SolveTrace> read_trace_file(const std::string& path);

/// Bindings for the augmented prompt: exactly problem, retrieved_steps and
/// retrieved_program.
Bindings build_augmented_prompt(const Problem& problem, const LearnedRecord& hit);

/// Featurize -> retrieve -> generate (augmented or direct) -> execute.
/// Model and execution failures are recorded in the trace, never thrown.
class Solver {
 public:
  Solver(Gateway& gateway, const TemplateSet& templates, Embedder& embedder, Executor& executor,
         PipelineConfig config);

  /// Category plus predicted solution steps; nullopt after one failed re-ask.
  std::optional<FeatureSet> extract_query_features(const Problem& problem);
  SolveTrace solve(const Problem& problem, const FeatureStore& store);
  /// Chain-of-thought baseline: always direct, no featurization or retrieval.
  SolveTrace solve_direct_baseline(const Problem& problem);

 private:
  void generate_and_run(SolveTrace& trace, Role role, const Bindings& bindings, const std::string& key);

  Gateway& gateway_;
  const TemplateSet& templates_;
  Embedder& embedder_;
  Executor& executor_;
  PipelineConfig config_;
};

}  // namespace mathlearner
