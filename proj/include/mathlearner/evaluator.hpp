#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mathlearner/answer.hpp"
#include "mathlearner/solver.hpp"

namespace mathlearner {

/// Correct/incorrect x retrieved/not-retrieved partition of evaluated problems.
enum class Quadrant { CorrectRetrieved, CorrectNotRetrieved, IncorrectRetrieved, IncorrectNotRetrieved };

std::string_view to_string(Quadrant q);

struct QuadrantCounts {
  long long c_r = 0;
  long long c_nr = 0;
  long long nc_r = 0;
  long long nc_nr = 0;

  long long u() const { return c_r + c_nr + nc_r + nc_nr; }
  long long correct() const { return c_r + c_nr; }
  long long retrieved() const { return c_r + nc_r; }
  void add(Quadrant q);

  bool operator==(const QuadrantCounts&) const = default;
};

/// A missing answer counts as incorrect; retrieved means augmented mode.
Quadrant classify_trace(const SolveTrace& trace, const Answer& ground_truth, double tol);

/// Judges every trace against truth (keyed by problem id), filling
/// trace.correct, and tallies the quadrants. Throws MismatchedUniverse when a
/// trace has no ground truth.
QuadrantCounts judge_traces(std::vector<SolveTrace>& traces, const std::map<std::string, Answer>& truth, double tol);

struct MetricsReport {
  double global_accuracy = 0.0;
  double accuracy_contribution = 0.0;
  double precision_accuracy = 0.0;
  /// The three baseline-relative metrics are absent without a baseline run.
  std::optional<double> profitability;
  std::optional<double> target_achievement_rate;
  std::optional<double> cot_global_accuracy;
  QuadrantCounts counts;
  std::optional<QuadrantCounts> cot_counts;
  /// "metric: reason" for every zero-denominator (or missing-input) case.
  std::vector<std::string> degenerate;

  bool operator==(const MetricsReport&) const = default;
};

/// GA = (C&R + C&~R) / U
/// AC = C&R / (C&R + C&~R)
/// Prof = GA / GA_cot - 1
/// PA = C&R / (C&R + ~C&R)
/// TAR = (correct - cot_correct) / (U - cot_correct)
/// Zero denominators yield 0 and a degenerate flag. TAR is negative when the
/// baseline solved more problems; that case is flagged too.
MetricsReport compute_metrics(const QuadrantCounts& counts, const std::optional<QuadrantCounts>& cot_counts);

enum class ReportFormat { Text, Json, Markdown };

std::optional<ReportFormat> report_format_from_string(std::string_view name);
std::string render_report(const MetricsReport& report, ReportFormat format);
MetricsReport report_from_json(std::string_view text);

}  // namespace mathlearner
