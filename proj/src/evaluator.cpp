#include "mathlearner/evaluator.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"
#include "mathlearner/error.hpp"

namespace mathlearner {

using nlohmann::json;

std::string_view to_string(Quadrant q) {
  switch (q) {
    case Quadrant::CorrectRetrieved: return "C&R";
    case Quadrant::CorrectNotRetrieved: return "C&~R";
    case Quadrant::IncorrectRetrieved: return "~C&R";
    case Quadrant::IncorrectNotRetrieved: return "~C&~R";
  }
  return "?";
}

void QuadrantCounts::add(Quadrant q) {
  switch (q) {
    case Quadrant::CorrectRetrieved: ++c_r; break;
    case Quadrant::CorrectNotRetrieved: ++c_nr; break;
    case Quadrant::IncorrectRetrieved: ++nc_r; break;
    case Quadrant::IncorrectNotRetrieved: ++nc_nr; break;
  }
}

Quadrant classify_trace(const SolveTrace& trace, const Answer& ground_truth, double tol) {
  bool correct = trace.answer.has_value() && answers_equivalent(*trace.answer, ground_truth, tol);
  bool retrieved = trace.mode == SolveMode::Augmented;
  if (correct) return retrieved ? Quadrant::CorrectRetrieved : Quadrant::CorrectNotRetrieved;
  return retrieved ? Quadrant::IncorrectRetrieved : Quadrant::IncorrectNotRetrieved;
}

QuadrantCounts judge_traces(std::vector<SolveTrace>& traces, const std::map<std::string, Answer>& truth, double tol) {
  QuadrantCounts counts;
  for (auto& trace : traces) {
    auto it = truth.find(trace.problem_id);
    if (it == truth.end()) throw Error(ErrorCode::MismatchedUniverse, "no ground truth for " + trace.problem_id);
    Quadrant q = classify_trace(trace, it->second, tol);
    trace.correct = q == Quadrant::CorrectRetrieved || q == Quadrant::CorrectNotRetrieved;
    counts.add(q);
  }
  return counts;
}

MetricsReport compute_metrics(const QuadrantCounts& counts, const std::optional<QuadrantCounts>& cot_counts) {
  if (counts.u() <= 0) throw Error(ErrorCode::InvalidArgument, "metrics need at least one problem");
  if (cot_counts && cot_counts->u() != counts.u()) {
    throw Error(ErrorCode::MismatchedUniverse,
                "U=" + std::to_string(counts.u()) + " vs baseline U=" + std::to_string(cot_counts->u()));
  }
  MetricsReport r;
  r.counts = counts;
  r.cot_counts = cot_counts;
  const auto u = static_cast<double>(counts.u());
  const long long correct = counts.correct();

  r.global_accuracy = static_cast<double>(correct) / u;
  if (correct > 0) {
    r.accuracy_contribution = static_cast<double>(counts.c_r) / static_cast<double>(correct);
  } else {
    r.degenerate.push_back("accuracy_contribution: no correct solutions");
  }
  if (counts.retrieved() > 0) {
    r.precision_accuracy = static_cast<double>(counts.c_r) / static_cast<double>(counts.retrieved());
  } else {
    r.degenerate.push_back("precision_accuracy: no problem retrieved a similar solution");
  }

  if (!cot_counts) {
    r.degenerate.push_back("baseline: no baseline traces; profitability and target achievement rate omitted");
    return r;
  }
  const long long cot_correct = cot_counts->correct();
  r.cot_global_accuracy = static_cast<double>(cot_correct) / u;
  if (cot_correct > 0) {
    r.profitability = r.global_accuracy / *r.cot_global_accuracy - 1.0;
  } else {
    r.profitability = 0.0;
    r.degenerate.push_back("profitability: baseline solved nothing");
  }
  if (counts.u() - cot_correct > 0) {
    r.target_achievement_rate =
        static_cast<double>(correct - cot_correct) / static_cast<double>(counts.u() - cot_correct);
    if (correct < cot_correct) r.degenerate.push_back("target_achievement_rate: fewer problems solved than baseline");
  } else {
    r.target_achievement_rate = 0.0;
    r.degenerate.push_back("target_achievement_rate: baseline solved every problem");
  }
  return r;
}

std::optional<ReportFormat> report_format_from_string(std::string_view name) {
  if (name == "text" || name == "table" || name == "table-text") return ReportFormat::Text;
  if (name == "json") return ReportFormat::Json;
  if (name == "markdown" || name == "md") return ReportFormat::Markdown;
  return std::nullopt;
}

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", v * 100.0);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

bool flagged(const MetricsReport& r, std::string_view metric) {
  for (const auto& d : r.degenerate) {
    if (d.starts_with(metric)) return true;
  }
  return false;
}

struct Row {
  std::string name;
  std::string value;
  std::string formula;
};

std::vector<Row> rows_of(const MetricsReport& r) {
  const auto& c = r.counts;
  auto n = [](long long v) { return std::to_string(v); };
  auto mark = [&](std::string_view metric) { return flagged(r, metric) ? std::string(" *") : std::string(); };
  std::vector<Row> rows;
  rows.push_back({"Global Accuracy", percent(r.global_accuracy),
                  "(C&R + C&~R) / U = " + n(c.correct()) + " / " + n(c.u())});
  rows.push_back({"Accuracy Contribution", percent(r.accuracy_contribution) + mark("accuracy_contribution"),
                  "C&R / (C&R + C&~R) = " + n(c.c_r) + " / " + n(c.correct())});
  if (r.profitability && r.cot_global_accuracy) {
    rows.push_back({"Profitability (Benefit)", percent(*r.profitability) + mark("profitability"),
                    "Global Accuracy / CoT Global Accuracy - 1 = " + fixed4(r.global_accuracy) + " / " +
                        fixed4(*r.cot_global_accuracy) + " - 1"});
  }
  rows.push_back({"Precision Accuracy", percent(r.precision_accuracy) + mark("precision_accuracy"),
                  "C&R / (C&R + ~C&R) = " + n(c.c_r) + " / " + n(c.retrieved())});
  if (r.target_achievement_rate && r.cot_counts) {
    long long cot = r.cot_counts->correct();
    rows.push_back({"Target Achievement Rate", percent(*r.target_achievement_rate) + mark("target_achievement_rate"),
                    "(Correct - CoT Correct) / CoT Unresolved = (" + n(c.correct()) + " - " + n(cot) + ") / " +
                        n(c.u() - cot)});
  }
  if (r.cot_global_accuracy && r.cot_counts) {
    rows.push_back({"CoT Global Accuracy", percent(*r.cot_global_accuracy),
                    "CoT Correct / U = " + n(r.cot_counts->correct()) + " / " + n(c.u())});
  }
  return rows;
}

std::string counts_line(const QuadrantCounts& c) {
  return "C&R=" + std::to_string(c.c_r) + " C&~R=" + std::to_string(c.c_nr) + " ~C&R=" + std::to_string(c.nc_r) +
         " ~C&~R=" + std::to_string(c.nc_nr) + " U=" + std::to_string(c.u());
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

json counts_json(const QuadrantCounts& c) {
  return {{"c_r", c.c_r}, {"c_nr", c.c_nr}, {"nc_r", c.nc_r}, {"nc_nr", c.nc_nr}, {"u", c.u()}};
}

QuadrantCounts counts_from(const json& j) {
  return {j.at("c_r").get<long long>(), j.at("c_nr").get<long long>(), j.at("nc_r").get<long long>(),
          j.at("nc_nr").get<long long>()};
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string render_report(const MetricsReport& r, ReportFormat format) {
  if (format == ReportFormat::Json) {
    json formulas = json::object();
    for (const auto& row : rows_of(r)) formulas[row.name] = row.formula;
    json j = {{"global_accuracy", r.global_accuracy},
              {"accuracy_contribution", r.accuracy_contribution},
              {"precision_accuracy", r.precision_accuracy},
              {"profitability", optional_number(r.profitability)},
              {"target_achievement_rate", optional_number(r.target_achievement_rate)},
              {"cot_global_accuracy", optional_number(r.cot_global_accuracy)},
              {"counts", counts_json(r.counts)},
              {"cot_counts", r.cot_counts ? counts_json(*r.cot_counts) : json(nullptr)},
              {"degenerate", r.degenerate},
              {"formulas", formulas}};
    return j.dump(2) + "\n";
  }

  auto rows = rows_of(r);
  std::string out;
  if (format == ReportFormat::Markdown) {
    out += "| Evaluation Metrics | Value | Description |\n";
    out += "|---|---|---|\n";
    for (const auto& row : rows) out += "| " + row.name + " | " + row.value + " | " + row.formula + " |\n";
    out += "\nQuadrants: " + counts_line(r.counts) + "\n";
    if (r.cot_counts) out += "Baseline quadrants: " + counts_line(*r.cot_counts) + "\n";
    if (!r.degenerate.empty()) {
      out += "\n";
      for (const auto& d : r.degenerate) out += "\\* " + d + "\n";
    }
    return out;
  }

  std::size_t w0 = 18, w1 = 5;
  for (const auto& row : rows) {
    w0 = std::max(w0, row.name.size());
    w1 = std::max(w1, row.value.size());
  }
  out += pad("Evaluation Metrics", w0) + "  " + pad("Value", w1) + "  Description\n";
  out += std::string(w0, '-') + "  " + std::string(w1, '-') + "  " + std::string(11, '-') + "\n";
  for (const auto& row : rows) out += pad(row.name, w0) + "  " + pad(row.value, w1) + "  " + row.formula + "\n";
  out += "\nQuadrants: " + counts_line(r.counts) + "\n";
  if (r.cot_counts) out += "Baseline quadrants: " + counts_line(*r.cot_counts) + "\n";
  if (!r.degenerate.empty()) {
    out += "\n";
    for (const auto& d : r.degenerate) out += "* " + d + "\n";
  }
  return out;
}

MetricsReport report_from_json(std::string_view text) {
  try {
    json j = json::parse(text);
    MetricsReport r;
    r.global_accuracy = j.at("global_accuracy").get<double>();
    r.accuracy_contribution = j.at("accuracy_contribution").get<double>();
    r.precision_accuracy = j.at("precision_accuracy").get<double>();
    auto opt = [&](const char* key) -> std::optional<double> {
      const auto& v = j.at(key);
      return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    };
    r.profitability = opt("profitability");
    r.target_achievement_rate = opt("target_achievement_rate");
    r.cot_global_accuracy = opt("cot_global_accuracy");
    r.counts = counts_from(j.at("counts"));
    if (!j.at("cot_counts").is_null()) r.cot_counts = counts_from(j.at("cot_counts"));
    r.degenerate = j.at("degenerate").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed metrics report: ") + e.what());
  }
}

}  // namespace mathlearner
