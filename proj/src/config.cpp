#include "mathlearner/config.hpp"

#include <fstream>
#include <sstream>

#include "mathlearner/error.hpp"

namespace mathlearner {

namespace {

std::string trimmed(const std::string& s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double d = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "config key '" + key + "' expects a number, got '" + value + "'");
  }
}

}  // namespace

void PipelineConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (!(similarity_threshold >= 0.0 && similarity_threshold <= 1.0)) fail("similarity_threshold must be in [0,1]");
  if (top_k < 1) fail("top_k must be positive");
  if (max_repair_attempts < 1) fail("max_repair_attempts must be positive");
  if (!(category_weight >= 0.0 && category_weight <= 1.0)) fail("category_weight must be in [0,1]");
  if (embed_dimension < 2) fail("embed_dimension must be at least 2");
  if (!(exec_timeout_s > 0.0)) fail("exec_timeout must be positive");
  if (exec_memory_limit == 0) fail("exec_memory_limit must be positive");
  if (!(numeric_tolerance >= 0.0)) fail("numeric_tolerance must be non-negative");
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> values;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trimmed(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(line_no) + " has no '='");
    }
    values[trimmed(line.substr(0, eq))] = trimmed(line.substr(eq + 1));
  }
  return values;
}

std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_key_values(buffer.str());
}

void apply_key_values(PipelineConfig& config, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    if (key == "similarity_threshold") config.similarity_threshold = to_double(key, value);
    else if (key == "top_k") config.top_k = static_cast<int>(to_double(key, value));
    else if (key == "max_repair_attempts") config.max_repair_attempts = static_cast<int>(to_double(key, value));
    else if (key == "category_weight") config.category_weight = to_double(key, value);
    else if (key == "embed_dimension") config.embed_dimension = static_cast<int>(to_double(key, value));
    else if (key == "exec_timeout") config.exec_timeout_s = to_double(key, value);
    else if (key == "exec_memory_limit") config.exec_memory_limit = static_cast<std::uint64_t>(to_double(key, value));
    else if (key == "numeric_tolerance") config.numeric_tolerance = to_double(key, value);
  }
  config.validate();
}

}  // namespace mathlearner
