#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mathlearner/answer.hpp"

namespace mathlearner {

struct Problem {
  std::string id;
  std::string statement;
  std::string category;
  std::string level;
  std::optional<std::string> source_path;

  bool operator==(const Problem&) const = default;
};

struct ReferenceSolution {
  std::string problem_id;
  std::string solution_text;
  Answer final_answer;

  bool operator==(const ReferenceSolution&) const = default;
};

struct FunctionSpec {
  std::string name;
  std::string purpose;
  std::vector<std::string> inputs;
  std::string output;
  std::vector<std::string> dependencies;

  bool operator==(const FunctionSpec&) const = default;
};

/// Pseudo-code decomposition of a solution: the step list and one function per
/// step, plus the root "solve" that depends on all of them.
struct SolutionSketch {
  std::vector<std::string> steps;
  std::vector<FunctionSpec> functions;

  bool operator==(const SolutionSketch&) const = default;
};

inline constexpr const char* kEntryPoint = "solve";

struct SolutionProgram {
  std::string source;
  std::string entry_point = kEntryPoint;
  SolutionSketch sketch;
  bool verified = false;
  int attempts = 0;

  bool operator==(const SolutionProgram&) const = default;
};

/// The two kinds of features describing how a problem is solved: one line for
/// the problem type, and one line per solution step naming the operation or
/// theorem used.
struct FeatureSet {
  std::string category_feature;
  std::vector<std::string> step_features;

  bool operator==(const FeatureSet&) const = default;
  bool empty() const { return category_feature.empty() && step_features.empty(); }
};

}  // namespace mathlearner
