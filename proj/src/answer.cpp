#include "mathlearner/answer.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace mathlearner {

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool strip_pair(std::string_view& s, std::string_view open, std::string_view close) {
  if (s.size() >= open.size() + close.size() && s.starts_with(open) && s.ends_with(close)) {
    s = trim(s.substr(open.size(), s.size() - open.size() - close.size()));
    return true;
  }
  return false;
}

std::string_view strip_delimiters(std::string_view s) {
  s = trim(s);
  bool changed = true;
  while (changed) {
    changed = strip_pair(s, "$$", "$$") || strip_pair(s, "$", "$") ||
              strip_pair(s, "\\(", "\\)") || strip_pair(s, "\\[", "\\]");
  }
  return s;
}

// Reads one macro argument starting at pos: a balanced {...} group or a single
// non-space character. Returns false when the group is unbalanced.
bool read_argument(std::string_view s, std::size_t& pos, std::string_view& arg) {
  while (pos < s.size() && is_space(s[pos])) ++pos;
  if (pos >= s.size()) return false;
  if (s[pos] != '{') {
    std::size_t len = 1;
    if (s[pos] == '\\') {
      while (pos + len < s.size() && is_alpha(s[pos + len])) ++len;
      if (len == 1 && pos + 1 < s.size()) len = 2;
    }
    arg = s.substr(pos, len);
    pos += len;
    return true;
  }
  int depth = 0;
  for (std::size_t i = pos; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      ++i;
      continue;
    }
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) {
      arg = s.substr(pos + 1, i - pos - 1);
      pos = i + 1;
      return true;
    }
  }
  return false;
}

bool is_simple_operand(std::string_view s) {
  if (s.empty()) return false;
  if (s.front() == '\\') {
    return s.size() > 1 && std::all_of(s.begin() + 1, s.end(), is_alpha);
  }
  if (s.front() == '-') s.remove_prefix(1);
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '.';
  });
}

std::string rewrite(std::string_view s);

std::string operand(std::string_view arg) {
  std::string inner = rewrite(arg);
  if (is_simple_operand(inner)) return inner;
  return "(" + inner + ")";
}

// Command rewrites; whitespace is preserved here and squeezed afterwards.
std::string rewrite_commands(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '\\') {
      out.push_back(s[i++]);
      continue;
    }
    std::size_t end = i + 1;
    while (end < s.size() && is_alpha(s[end])) ++end;
    std::string_view word = s.substr(i + 1, end - i - 1);
    if (word == "left" || word == "right") {
      i = end;
      if (i < s.size() && s[i] == '.') ++i;
      continue;
    }
    if (word == "frac" || word == "dfrac" || word == "tfrac") {
      std::size_t pos = end;
      std::string_view num, den;
      if (read_argument(s, pos, num) && read_argument(s, pos, den)) {
        out += operand(num);
        out += '/';
        out += operand(den);
        i = pos;
        continue;
      }
    }
    if (word.empty()) {
      // escaped symbol such as \{ or \,
      out.append(s.substr(i, std::min<std::size_t>(2, s.size() - i)));
      i += 2;
      continue;
    }
    out.append(s.substr(i, end - i));
    i = end;
  }
  return out;
}

bool ends_with_command_word(const std::string& out) {
  std::size_t j = out.size();
  while (j > 0 && is_alpha(out[j - 1])) --j;
  return j < out.size() && j > 0 && out[j - 1] == '\\';
}

std::string squeeze_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (!is_space(s[i])) {
      out.push_back(s[i++]);
      continue;
    }
    while (i < s.size() && is_space(s[i])) ++i;
    if (i < s.size() && is_alpha(s[i]) && ends_with_command_word(out)) out.push_back(' ');
  }
  return out;
}

std::string rewrite(std::string_view s) { return squeeze_whitespace(rewrite_commands(trim(s))); }

std::optional<double> parse_decimal(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  bool digit = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digit = true;
    } else if (!(c == '.' || (c == '-' && i == 0))) {
      return std::nullopt;
    }
  }
  if (!digit) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

}  // namespace

std::optional<double> parse_numeric(std::string_view canonical) {
  auto slash = canonical.find('/');
  if (slash == std::string_view::npos) return parse_decimal(canonical);
  auto num = parse_decimal(canonical.substr(0, slash));
  auto den = parse_decimal(canonical.substr(slash + 1));
  if (!num || !den || *den == 0.0) return std::nullopt;
  return *num / *den;
}

Answer canonicalize_answer(std::string_view raw) {
  Answer answer;
  answer.raw = std::string(raw);
  // Every rewrite that changes the text shortens it, so this terminates.
  // Iterating keeps malformed input (e.g. \frac\left(...) idempotent.
  std::string current(raw);
  for (;;) {
    std::string next = rewrite(strip_delimiters(current));
    if (next == current) break;
    current = std::move(next);
  }
  answer.canonical = std::move(current);
  answer.numeric = parse_numeric(answer.canonical);
  return answer;
}

bool answers_equivalent(const Answer& a, const Answer& b, double tol) {
  if (a.canonical == b.canonical) return true;
  if (!a.numeric || !b.numeric) return false;
  double x = *a.numeric;
  double y = *b.numeric;
  double scale = std::max({1.0, std::abs(x), std::abs(y)});
  return std::abs(x - y) <= tol * scale;
}

}  // namespace mathlearner
