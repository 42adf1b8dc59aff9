#pragma once

// Deterministic offline fixtures shared by the unit, integration and
// acceptance suites: scripted model replies, stub execution outcomes and the
// expected quadrant for every end-to-end test problem.

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mathlearner/dataset.hpp"
#include "mathlearner/evaluator.hpp"
#include "mathlearner/executor.hpp"
#include "mathlearner/gateway.hpp"

namespace mathlearner::testing {

inline TemplateSet load_templates() { return TemplateSet::load_directory(MATHLEARNER_TEMPLATE_DIR); }

inline std::string fenced(const std::string& code) { return "Program:\n```python\n" + code + "```\n"; }

inline std::string program_returning(const std::string& value, const std::string& tag = "") {
  std::string out = "def solve():\n";
  if (!tag.empty()) out += "    # " + tag + "\n";
  return out + "    return " + value + "\n";
}

struct Theme {
  std::string category;
  std::string step_a;
  std::string step_b;
};

inline const std::vector<Theme>& learned_themes() {
  static const std::vector<Theme> themes = {
      {"algebra: quadratic equations", "expand product", "quadratic formula"},
      {"trigonometry: angle identities", "double angle identity", "evaluate cosine"},
      {"linear algebra: determinants", "cofactor expansion", "multiply diagonal entries"},
      {"complex numbers: polar form", "convert to polar", "de moivre theorem"},
      {"vectors: dot products", "dot product definition", "solve for scalar"},
      {"sequences: geometric series", "common ratio", "sum formula"},
  };
  return themes;
}

// Token-disjoint from every learned theme.
inline const std::vector<Theme>& novel_themes() {
  static const std::vector<Theme> themes = {
      {"combinatorics: counting arrangements", "permutations", "divide by symmetry"},
      {"number theory: modular arithmetic", "reduce modulo", "chinese remainder"},
      {"probability: expected value", "linearity of expectation", "add outcomes"},
      {"geometry: circle tangents", "tangent length", "power of point"},
  };
  return themes;
}

inline std::string feature_reply(const Theme& t) {
  return "CATEGORY: " + t.category + "\nSTEP 1: " + t.step_a + "\nSTEP 2: " + t.step_b + "\n";
}

/// Everything needed to learn one problem successfully on the first attempt.
struct LearnCase {
  CorpusEntry entry;
  Theme theme;
  std::string answer_text;  // what the stub executor reports
  std::string decompose_reply;
  std::string sketch_reply;
  std::string program_source;
  std::string features_reply;
};

inline std::string boxed_solution(const std::string& boxed) {
  return "First we set up the quantities involved.\nThen we carry out the computation.\n"
         "So the answer is $\\boxed{" + boxed + "}$.";
}

inline LearnCase learn_case(const std::string& id, const std::string& statement, const std::string& category,
                            const Theme& theme, const std::string& boxed, const std::string& answer_text) {
  LearnCase c;
  c.entry.problem = {id, statement, category, "Level 2", std::nullopt};
  c.entry.solution = {id, boxed_solution(boxed), canonicalize_answer(boxed)};
  c.theme = theme;
  c.answer_text = answer_text;
  c.decompose_reply = "1. Set up using " + theme.step_a + ".\n2. Finish with " + theme.step_b + ".\n";
  c.sketch_reply =
      "FUNCTION: setup\nPURPOSE: " + theme.step_a + "\nINPUTS: none\nOUTPUT: x\nDEPENDS: none\n\n"
      "FUNCTION: finish\nPURPOSE: " + theme.step_b + "\nINPUTS: x\nOUTPUT: y\nDEPENDS: setup\n";
  c.program_source = "def setup():\n    return 0\n\ndef finish(x):\n    return x\n\ndef solve():\n    finish(setup())\n"
                     "    # " + id + "\n    return " + answer_text + "\n";
  c.features_reply = feature_reply(theme);
  return c;
}

inline void script_learning(ScriptedBackend::Script& script, const LearnCase& c) {
  const auto& id = c.entry.problem.id;
  script[Role::Decompose][id] = {c.decompose_reply};
  script[Role::Sketch][id] = {c.sketch_reply};
  script[Role::Synthesize][id] = {fenced(c.program_source)};
  script[Role::Featurize][id] = {c.features_reply};
}

inline ExecutionOutcome ok_outcome(const std::string& answer) {
  ExecutionOutcome o;
  o.status = ExecStatus::Ok;
  o.answer_text = answer;
  return o;
}

inline ExecutionOutcome failed_outcome(ExecStatus status, const std::string& stderr_text) {
  ExecutionOutcome o;
  o.status = status;
  o.stderr_excerpt = stderr_text;
  return o;
}

/// n learnable problems with ids p0..p{n-1}.
inline std::vector<LearnCase> learn_cases(int n) {
  std::vector<LearnCase> cases;
  for (int i = 0; i < n; ++i) {
    const auto& theme = learned_themes()[static_cast<std::size_t>(i) % learned_themes().size()];
    std::string value = std::to_string(10 + i);
    cases.push_back(learn_case("p" + std::to_string(i), "Batch problem number " + std::to_string(i) + ".",
                               "Precalculus", theme, value, value));
  }
  return cases;
}

struct StubEntry {
  std::string source;
  ExecutionOutcome outcome;
};

inline StubExecutor make_stub(const std::vector<StubEntry>& entries) {
  StubExecutor stub;
  for (const auto& e : entries) stub.add(e.source, e.outcome);
  return stub;
}

/// Ten test problems: six are twins of learned problems, four are novel.
/// Per-problem solve scripts fix both retrieval and correctness, so the
/// quadrant of every problem is known in advance.
struct EndToEndFixture {
  std::vector<LearnCase> learned;
  Corpus train;
  Corpus test;
  ScriptedBackend::Script learn_script;
  ScriptedBackend::Script solve_script;
  ScriptedBackend::Script baseline_script;
  std::vector<StubEntry> stub;
  std::map<std::string, Quadrant> expected;
  std::map<std::string, bool> baseline_correct;
  std::map<std::string, Answer> truth;

  QuadrantCounts expected_counts() const {
    QuadrantCounts c;
    for (const auto& [id, q] : expected) c.add(q);
    return c;
  }
  QuadrantCounts expected_baseline_counts() const {
    QuadrantCounts c;
    for (const auto& [id, ok] : baseline_correct) c.add(ok ? Quadrant::CorrectNotRetrieved : Quadrant::IncorrectNotRetrieved);
    return c;
  }
};

inline EndToEndFixture end_to_end_fixture(int max_attempts = 3) {
  EndToEndFixture f;
  const std::vector<std::pair<std::string, std::string>> learned_answers = {
      {"7", "7"}, {"\\frac{1}{2}", "0.5"}, {"-24", "-24"}, {"2", "2"}, {"3", "3"}, {"\\frac{31}{16}", "1.9375"}};
  for (std::size_t i = 0; i < 6; ++i) {
    std::string id = "learned/t" + std::to_string(i) + ".json";
    std::string statement = "Learned problem " + std::to_string(i) + ": work it out with " +
                            learned_themes()[i].step_b + ".";
    auto c = learn_case(id, statement, "Learned", learned_themes()[i], learned_answers[i].first,
                        learned_answers[i].second);
    script_learning(f.learn_script, c);
    f.stub.push_back({c.program_source, ok_outcome(c.answer_text)});
    f.train.entries.push_back(c.entry);
    f.learned.push_back(std::move(c));
  }
  f.train.recount();

  auto add_test = [&](const std::string& id, const std::string& statement, const std::string& boxed) {
    CorpusEntry e;
    e.problem = {id, statement, "Precalculus", "Level 3", std::nullopt};
    e.solution = {id, boxed_solution(boxed), canonicalize_answer(boxed)};
    f.truth[id] = e.solution.final_answer;
    f.test.entries.push_back(std::move(e));
  };

  // Twins: same statement and features as learned problem i.
  for (std::size_t i = 0; i < 6; ++i) {
    std::string id = "precalculus/q" + std::to_string(i) + ".json";
    add_test(id, f.learned[i].entry.problem.statement, learned_answers[i].first);
    f.solve_script[Role::Featurize][id] = {f.learned[i].features_reply};
    bool correct = i != 5;
    std::string value = correct ? learned_answers[i].second : "99";
    std::string src = program_returning(value, "augmented " + id);
    f.solve_script[Role::AugmentedSolve][id] = {fenced(src)};
    f.stub.push_back({src, ok_outcome(value)});
    f.expected[id] = correct ? Quadrant::CorrectRetrieved : Quadrant::IncorrectRetrieved;
  }

  // Novel: features share no token with anything learned.
  const std::vector<std::string> novel_answers = {"120", "4", "\\frac{7}{2}", "12"};
  for (std::size_t k = 0; k < 4; ++k) {
    std::string id = "precalculus/q" + std::to_string(6 + k) + ".json";
    add_test(id, "Novel problem " + std::to_string(k) + " about " + novel_themes()[k].category + ".",
             novel_answers[k]);
    f.solve_script[Role::Featurize][id] = {feature_reply(novel_themes()[k])};
    if (k < 2) {
      std::string src = program_returning(novel_answers[k], "direct " + id);
      f.solve_script[Role::DirectSolve][id] = {fenced(src)};
      f.stub.push_back({src, ok_outcome(novel_answers[k])});
      f.expected[id] = Quadrant::CorrectNotRetrieved;
    } else if (k == 2) {
      std::string src = program_returning("3", "direct " + id);
      f.solve_script[Role::DirectSolve][id] = {fenced(src)};
      f.stub.push_back({src, ok_outcome("3")});
      f.expected[id] = Quadrant::IncorrectNotRetrieved;
    } else {
      std::string src = "def solve():\n    raise ValueError('CRASH " + id + "')\n";
      f.solve_script[Role::DirectSolve][id] =
          std::vector<std::string>(static_cast<std::size_t>(max_attempts), fenced(src));
      f.stub.push_back({src, failed_outcome(ExecStatus::Exception, "ValueError: CRASH")});
      f.expected[id] = Quadrant::IncorrectNotRetrieved;
    }
  }
  f.test.recount();

  // Baseline solves q0, q1, q3, q6, q8.
  for (std::size_t j = 0; j < 10; ++j) {
    std::string id = "precalculus/q" + std::to_string(j) + ".json";
    bool correct = j == 0 || j == 1 || j == 3 || j == 6 || j == 8;
    const Answer& truth = f.truth[id];
    std::string value = correct ? truth.canonical : "-1000";
    if (correct && truth.numeric) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", *truth.numeric);
      value = buf;
    }
    std::string src = program_returning(value, "baseline " + id);
    f.baseline_script[Role::DirectSolve][id] = {fenced(src)};
    f.stub.push_back({src, ok_outcome(value)});
    f.baseline_correct[id] = correct;
  }
  return f;
}

inline nlohmann::json script_json(const ScriptedBackend::Script& script) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [role, by_key] : script) {
    for (const auto& [key, responses] : by_key) j[std::string(to_string(role))][key] = responses;
  }
  return j;
}

inline nlohmann::json stub_json(const std::vector<StubEntry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json item = {{"source", e.source}, {"status", std::string(to_string(e.outcome.status))}};
    if (e.outcome.answer_text) item["answer"] = *e.outcome.answer_text;
    if (!e.outcome.stderr_excerpt.empty()) item["stderr"] = e.outcome.stderr_excerpt;
    j.push_back(item);
  }
  return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

/// Lays the fixture out on disk: dataset/<id> record files plus script and
/// stub JSON files, as consumed by the CLI.
inline void write_fixture(const EndToEndFixture& f, const std::filesystem::path& dir) {
  auto write_entry = [&](const CorpusEntry& e) {
    nlohmann::json record = {{"problem", e.problem.statement},
                             {"level", e.problem.level},
                             {"type", e.problem.category},
                             {"solution", e.solution.solution_text}};
    write_text(dir / "dataset" / e.problem.id, record.dump(2));
  };
  for (const auto& e : f.train.entries) write_entry(e);
  for (const auto& e : f.test.entries) write_entry(e);
  write_text(dir / "learn_script.json", script_json(f.learn_script).dump(2));
  write_text(dir / "solve_script.json", script_json(f.solve_script).dump(2));
  write_text(dir / "baseline_script.json", script_json(f.baseline_script).dump(2));
  write_text(dir / "stub.json", stub_json(f.stub).dump(2));
}

/// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mathlearner-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace mathlearner::testing
