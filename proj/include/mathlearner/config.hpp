#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace mathlearner {

struct PipelineConfig {
  double similarity_threshold = 0.80;  // tau
  int top_k = 1;
  int max_repair_attempts = 3;  // R
  double category_weight = 0.30;  // alpha
  int embed_dimension = 256;
  double exec_timeout_s = 10.0;
  std::uint64_t exec_memory_limit = 512ull * 1024 * 1024;
  double numeric_tolerance = 1e-6;

  /// Throws Error(InvalidArgument) naming the first violated bound.
  void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys are kept so
/// callers (the CLI) can pick up their own settings.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);

/// Applies recognised PipelineConfig keys from a key/value map.
void apply_key_values(PipelineConfig& config, const std::map<std::string, std::string>& values);

}  // namespace mathlearner
