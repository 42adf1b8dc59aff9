#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mathlearner/config.hpp"
#include "mathlearner/dataset.hpp"
#include "mathlearner/embedding.hpp"
#include "mathlearner/error.hpp"
#include "mathlearner/executor.hpp"
#include "mathlearner/feature_store.hpp"
#include "mathlearner/gateway.hpp"
#include "mathlearner/types.hpp"

namespace mathlearner {

struct Verdict {
  enum class Kind { Pass, WrongAnswer, ExecError };

  Kind kind = Kind::ExecError;
  std::string got;         // WrongAnswer: the produced answer
  std::string error_kind;  // ExecError: executor status or "unparseable"
  std::string detail;

  bool passed() const { return kind == Kind::Pass; }
  /// One-line description used in repair prompts.
  std::string describe() const;
};

class VerificationExhausted : public Error {
 public:
  VerificationExhausted(Verdict last, int attempts)
      : Error(ErrorCode::VerificationExhausted,
              "no verified program after " + std::to_string(attempts) + " attempts; last: " + last.describe()),
        last_(std::move(last)),
        attempts_(attempts) {}

  const Verdict& last_verdict() const { return last_; }
  int attempts() const { return attempts_; }

 private:
  Verdict last_;
  int attempts_;
};

enum class LearnStatus { Stored, VerificationFailed, FeatureFailed, Skipped };

std::string_view to_string(LearnStatus status);

struct LearnOutcome {
  std::string problem_id;
  LearnStatus status = LearnStatus::Skipped;
  int attempts = 0;
  std::optional<std::string> record_id;
  /// Failing stage (decompose, sketch, verify, features, store); empty when stored.
  std::string stage;
  std::string detail;
};

/// Turns worked solutions into verified programs plus feature sets:
/// decompose -> sketch -> synthesize/verify/repair -> features -> store.
class Learner {
 public:
  using Clock = std::function<std::int64_t()>;

  Learner(Gateway& gateway, const TemplateSet& templates, Embedder& embedder, Executor& executor,
          PipelineConfig config, Clock clock = {});

  std::vector<std::string> decompose_solution(const Problem& problem, const ReferenceSolution& solution);
  SolutionSketch sketch_from_steps(const Problem& problem, const std::vector<std::string>& steps);
  /// Unverified program from the first round of synthesis.
  SolutionProgram synthesize_program(const Problem& problem, const ReferenceSolution& solution,
                                     const SolutionSketch& sketch);
  Verdict verify_program(const SolutionProgram& program, const Answer& expected);
  /// Up to max_attempts synthesize/verify rounds; round 1 uses the synthesize
  /// prompt, later rounds the repair prompt with the previous source and verdict.
  /// Throws VerificationExhausted.
  SolutionProgram repair_loop(const Problem& problem, const ReferenceSolution& solution, const SolutionSketch& sketch,
                              int max_attempts);
  FeatureSet extract_features(const Problem& problem, const std::vector<std::string>& steps);

  /// Writes to the store only when every stage succeeded.
  LearnOutcome learn_one(const Problem& problem, const ReferenceSolution& solution, FeatureStore& store);
  /// Outcomes come back in corpus order regardless of scheduling.
  std::vector<LearnOutcome> learn_corpus(const Corpus& train, FeatureStore& store, int parallelism);

 private:
  std::string ask(const PromptTemplate& tmpl, const Bindings& bindings, const std::string& key,
                  std::string_view feedback = {});
  SolutionProgram program_from_reply(const std::string& reply, const SolutionSketch& sketch, int attempt) const;

  Gateway& gateway_;
  const TemplateSet& templates_;
  Embedder& embedder_;
  Executor& executor_;
  PipelineConfig config_;
  Clock clock_;
};

}  // namespace mathlearner
