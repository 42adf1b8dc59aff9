#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace mathlearner {

/// A final answer as found in text, its normalized form, and its numeric value
/// when the normalized form is a plain number or a ratio of two numbers.
struct Answer {
  std::string raw;
  std::string canonical;
  std::optional<double> numeric;

  bool operator==(const Answer&) const = default;
};

/// Normalizes LaTeX-ish answer text. Deterministic and idempotent on its own
/// output. Rules: trim, strip $..$ / \(..\) / \[..\] delimiters, rewrite
/// \frac / \dfrac / \tfrac to a/b, drop \left and \right, remove whitespace
/// except where it separates a command word from a following letter.
Answer canonicalize_answer(std::string_view raw);

/// Parses "12", "-0.5", "3/4", "-1/2". Anything else yields nullopt.
std::optional<double> parse_numeric(std::string_view canonical);

/// Canonical text equality, else numeric closeness |a-b| <= tol * max(1,|a|,|b|).
bool answers_equivalent(const Answer& a, const Answer& b, double tol);

}  // namespace mathlearner
