#include "mathlearner/model_output.hpp"

#include <cctype>
#include <algorithm>
#include <map>
#include <sstream>

namespace mathlearner {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

// Matches "LABEL:" case-insensitively at the start of a trimmed line
// (markdown bold markers tolerated) and returns the rest.
std::optional<std::string> labeled(const std::string& line, std::string_view label) {
  std::string t = trim(line);
  while (!t.empty() && (t.front() == '*' || t.front() == '-')) t.erase(0, 1);
  t = trim(t);
  if (t.size() < label.size() + 1) return std::nullopt;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (std::toupper(static_cast<unsigned char>(t[i])) != label[i]) return std::nullopt;
  }
  std::string rest = t.substr(label.size());
  while (!rest.empty() && rest.front() == '*') rest.erase(0, 1);
  if (rest.empty() || rest.front() != ':') return std::nullopt;
  rest.erase(0, 1);
  while (!rest.empty() && rest.back() == '*') rest.pop_back();
  return trim(rest);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string lowered;
  for (char c : value) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lowered.empty() || lowered == "none" || lowered == "-" || lowered == "n/a") return out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::optional<std::vector<std::string>> parse_numbered_steps(std::string_view text) {
  std::vector<std::string> steps;
  for (const auto& raw : lines_of(text)) {
    std::string line = trim(raw);
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == 0 || i >= line.size() || (line[i] != '.' && line[i] != ')')) continue;
    std::string body = trim(std::string_view(line).substr(i + 1));
    if (!body.empty()) steps.push_back(std::move(body));
  }
  if (steps.empty()) return std::nullopt;
  return steps;
}

std::optional<std::vector<FunctionSpec>> parse_function_specs(std::string_view text) {
  std::vector<FunctionSpec> specs;
  for (const auto& line : lines_of(text)) {
    if (auto name = labeled(line, "FUNCTION")) {
      if (!is_identifier(*name)) return std::nullopt;
      specs.push_back(FunctionSpec{*name, {}, {}, {}, {}});
      continue;
    }
    if (specs.empty()) continue;
    auto& spec = specs.back();
    if (auto v = labeled(line, "PURPOSE")) spec.purpose = *v;
    else if (auto v = labeled(line, "INPUTS")) spec.inputs = split_list(*v);
    else if (auto v = labeled(line, "OUTPUT")) spec.output = *v;
    else if (auto v = labeled(line, "DEPENDS")) spec.dependencies = split_list(*v);
  }
  if (specs.empty()) return std::nullopt;
  return specs;
}

std::optional<FeatureSet> parse_feature_lines(std::string_view text) {
  FeatureSet features;
  std::map<int, std::string> steps;
  for (const auto& line : lines_of(text)) {
    if (auto v = labeled(line, "CATEGORY")) {
      if (features.category_feature.empty()) features.category_feature = *v;
      continue;
    }
    std::string t = trim(line);
    if (t.size() < 5) continue;
    std::string head;
    for (std::size_t i = 0; i < 4; ++i) head += static_cast<char>(std::toupper(static_cast<unsigned char>(t[i])));
    if (head != "STEP") continue;
    std::size_t i = 4;
    while (i < t.size() && t[i] == ' ') ++i;
    std::size_t digits = i;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i == digits || i >= t.size() || t[i] != ':') continue;
    int index = std::stoi(t.substr(digits, i - digits));
    std::string body = trim(std::string_view(t).substr(i + 1));
    if (body.empty() || steps.contains(index)) return std::nullopt;
    steps[index] = body;
  }
  if (features.category_feature.empty()) return std::nullopt;
  int expected = 1;
  for (auto& [index, body] : steps) {
    if (index != expected++) return std::nullopt;
    features.step_features.push_back(std::move(body));
  }
  return features;
}

std::optional<std::string> extract_code_block(std::string_view text) {
  auto open = text.find("```");
  if (open == std::string_view::npos) return std::nullopt;
  auto body_start = text.find('\n', open);
  if (body_start == std::string_view::npos) return std::nullopt;
  ++body_start;
  auto close = text.find("```", body_start);
  if (close == std::string_view::npos) return std::nullopt;
  std::string body(text.substr(body_start, close - body_start));
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return std::nullopt;
  return body;
}

bool mentions_function(std::string_view source, std::string_view name) {
  for (std::size_t pos = source.find(name); pos != std::string_view::npos; pos = source.find(name, pos + 1)) {
    if (pos > 0 && word_char(source[pos - 1])) continue;
    std::size_t after = pos + name.size();
    while (after < source.size() && source[after] == ' ') ++after;
    if (after < source.size() && source[after] == '(') return true;
  }
  return false;
}

std::vector<std::string> find_cycle(const std::vector<FunctionSpec>& functions) {
  std::map<std::string, const FunctionSpec*> by_name;
  for (const auto& f : functions) by_name[f.name] = &f;
  enum class Mark { None, Active, Done };
  std::map<std::string, Mark> marks;
  std::vector<std::string> stack;
  std::vector<std::string> cycle;

  auto visit = [&](auto&& self, const std::string& name) -> bool {
    Mark& m = marks[name];
    if (m == Mark::Done) return false;
    if (m == Mark::Active) {
      auto it = std::find(stack.begin(), stack.end(), name);
      cycle.assign(it, stack.end());
      return true;
    }
    m = Mark::Active;
    stack.push_back(name);
    if (auto it = by_name.find(name); it != by_name.end()) {
      for (const auto& dep : it->second->dependencies) {
        if (self(self, dep)) return true;
      }
    }
    stack.pop_back();
    marks[name] = Mark::Done;
    return false;
  };
  for (const auto& f : functions) {
    if (visit(visit, f.name)) return cycle;
  }
  return {};
}

std::string render_numbered(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out += std::to_string(i + 1) + ". " + lines[i] + "\n";
  }
  return out;
}

std::string render_sketch(const SolutionSketch& sketch) {
  std::string out;
  auto join = [](const std::vector<std::string>& items) {
    std::string s;
    for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + items[i];
    return s;
  };
  for (const auto& f : sketch.functions) {
    out += f.name + "(" + join(f.inputs) + ") -> " + (f.output.empty() ? "value" : f.output);
    if (!f.purpose.empty()) out += ": " + f.purpose;
    if (!f.dependencies.empty()) out += " [uses " + join(f.dependencies) + "]";
    out += "\n";
  }
  return out;
}

}  // namespace mathlearner
