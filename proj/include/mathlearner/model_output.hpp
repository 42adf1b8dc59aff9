#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mathlearner/types.hpp"

namespace mathlearner {

// Parsers for the labeled line formats the prompt templates ask for. They
// return nullopt on malformed output so callers can re-ask once.

/// Lines of the form "1. text" or "1) text". Non-matching lines are ignored.
std::optional<std::vector<std::string>> parse_numbered_steps(std::string_view text);

/// Blocks introduced by "FUNCTION: name", followed by optional PURPOSE:,
/// INPUTS:, OUTPUT:, DEPENDS: lines (comma separated lists, "none" = empty).
std::optional<std::vector<FunctionSpec>> parse_function_specs(std::string_view text);

/// "CATEGORY: ..." plus "STEP i: ..." lines numbered 1..n without gaps.
std::optional<FeatureSet> parse_feature_lines(std::string_view text);

/// Body of the first ``` fenced block (language tag dropped).
std::optional<std::string> extract_code_block(std::string_view text);

/// True when `name` followed by optional spaces and '(' occurs as a whole word.
bool mentions_function(std::string_view source, std::string_view name);

/// Names whose dependencies form a cycle, or empty when acyclic.
std::vector<std::string> find_cycle(const std::vector<FunctionSpec>& functions);

std::string render_numbered(const std::vector<std::string>& lines);
std::string render_sketch(const SolutionSketch& sketch);

}  // namespace mathlearner
