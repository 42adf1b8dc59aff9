#include "mathlearner/learner.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <chrono>
#include <thread>

#include "mathlearner/model_output.hpp"

namespace mathlearner {

namespace {

constexpr const char* kReask =
    "Your previous reply could not be parsed. Answer again using exactly the format requested above.";

std::string trimmed_text(const std::string& text) {
  auto b = text.find_first_not_of(" \t\r\n");
  auto e = text.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string() : text.substr(b, e - b + 1);
}

}  // namespace

std::string Verdict::describe() const {
  switch (kind) {
    case Kind::Pass: return "pass";
    case Kind::WrongAnswer: return "wrong answer: the program returned " + got;
    case Kind::ExecError:
      return "execution error (" + error_kind + ")" + (detail.empty() ? std::string() : ": " + detail);
  }
  return {};
}

std::string_view to_string(LearnStatus status) {
  switch (status) {
    case LearnStatus::Stored: return "stored";
    case LearnStatus::VerificationFailed: return "verification_failed";
    case LearnStatus::FeatureFailed: return "feature_failed";
    case LearnStatus::Skipped: return "skipped";
  }
  return "skipped";
}

Learner::Learner(Gateway& gateway, const TemplateSet& templates, Embedder& embedder, Executor& executor,
                 PipelineConfig config, Clock clock)
    : gateway_(gateway),
      templates_(templates),
      embedder_(embedder),
      executor_(executor),
      config_(config),
      clock_(std::move(clock)) {
  config_.validate();
  if (!clock_) {
    clock_ = [] {
      return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
}

std::vector<std::string> Learner::decompose_solution(const Problem& problem, const ReferenceSolution& solution) {
  if (solution.solution_text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "empty solution text for " + problem.id);
  }
  const auto& tmpl = templates_.get(Role::Decompose);
  Bindings bindings{{"problem", problem.statement}, {"solution", solution.solution_text}};
  if (auto steps = parse_numbered_steps(ask(tmpl, bindings, problem.id))) return *steps;
  if (auto steps = parse_numbered_steps(ask(tmpl, bindings, problem.id, kReask))) return *steps;

  // A one-line solution is already a single step.
  std::string only = trimmed_text(solution.solution_text);
  if (only.find('\n') == std::string::npos) return {only};
  throw Error(ErrorCode::UnparseableModelOutput, "decompose reply for " + problem.id + " has no numbered steps");
}

SolutionSketch Learner::sketch_from_steps(const Problem& problem, const std::vector<std::string>& steps) {
  if (steps.empty()) throw Error(ErrorCode::InvalidArgument, "sketch needs at least one step");
  const auto& tmpl = templates_.get(Role::Sketch);
  Bindings bindings{{"problem", problem.statement},
                    {"steps", render_numbered(steps)},
                    {"step_count", std::to_string(steps.size())}};

  auto parse = [&](const std::string& text) -> std::optional<std::vector<FunctionSpec>> {
    auto specs = parse_function_specs(text);
    if (!specs) return std::nullopt;
    std::erase_if(*specs, [](const FunctionSpec& f) { return f.name == kEntryPoint; });
    if (specs->size() != steps.size()) return std::nullopt;
    for (const auto& f : *specs) {
      for (const auto& dep : f.dependencies) {
        bool known = std::any_of(specs->begin(), specs->end(), [&](const FunctionSpec& g) { return g.name == dep; });
        if (!known) return std::nullopt;
      }
    }
    return specs;
  };

  auto specs = parse(ask(tmpl, bindings, problem.id));
  if (!specs) specs = parse(ask(tmpl, bindings, problem.id, kReask));
  if (!specs) {
    throw Error(ErrorCode::UnparseableModelOutput,
                "sketch reply for " + problem.id + " does not describe " + std::to_string(steps.size()) +
                    " well-formed functions");
  }
  if (auto cycle = find_cycle(*specs); !cycle.empty()) {
    std::string names;
    for (const auto& n : cycle) names += (names.empty() ? "" : " -> ") + n;
    throw Error(ErrorCode::CyclicSketch, problem.id + ": " + names);
  }

  SolutionSketch sketch;
  sketch.steps = steps;
  sketch.functions = std::move(*specs);
  FunctionSpec root{kEntryPoint, "Combine the steps and return the final answer", {}, "answer", {}};
  for (const auto& f : sketch.functions) root.dependencies.push_back(f.name);
  sketch.functions.push_back(std::move(root));
  return sketch;
}

// An empty completion is just another unparseable reply here.
std::string Learner::ask(const PromptTemplate& tmpl, const Bindings& bindings, const std::string& key,
                         std::string_view feedback) {
  try {
    return gateway_.complete(tmpl, bindings, key, feedback).text;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyCompletion) throw;
    return {};
  }
}

SolutionProgram Learner::program_from_reply(const std::string& reply, const SolutionSketch& sketch,
                                            int attempt) const {
  auto code = extract_code_block(reply);
  if (!code) throw Error(ErrorCode::UnparseableModelOutput, "reply has no fenced code block");
  for (const auto& f : sketch.functions) {
    if (!mentions_function(*code, f.name)) {
      throw Error(ErrorCode::UnparseableModelOutput, "program does not define sketch function '" + f.name + "'");
    }
  }
  SolutionProgram program;
  program.source = std::move(*code);
  program.sketch = sketch;
  program.attempts = attempt;
  return program;
}

SolutionProgram Learner::synthesize_program(const Problem& problem, const ReferenceSolution& solution,
                                            const SolutionSketch& sketch) {
  Bindings bindings{{"problem", problem.statement},
                    {"solution", solution.solution_text},
                    {"sketch", render_sketch(sketch)}};
  return program_from_reply(ask(templates_.get(Role::Synthesize), bindings, problem.id), sketch, 1);
}

Verdict Learner::verify_program(const SolutionProgram& program, const Answer& expected) {
  ExecutionRequest request;
  request.request_id = source_hash(program.source);
  request.source = program.source;
  request.entry_point = program.entry_point;
  request.timeout_s = config_.exec_timeout_s;
  request.memory_limit = config_.exec_memory_limit;

  ExecutionOutcome outcome;
  try {
    outcome = executor_.execute(request);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::RunnerSpawnFailure) throw Error(ErrorCode::ExecutorUnavailable, e.what());
    throw;
  }

  Verdict verdict;
  if (outcome.status != ExecStatus::Ok) {
    verdict.kind = Verdict::Kind::ExecError;
    verdict.error_kind = std::string(to_string(outcome.status));
    verdict.detail = outcome.stderr_excerpt;
    return verdict;
  }
  Answer got = canonicalize_answer(outcome.answer_text.value_or(""));
  if (answers_equivalent(got, expected, config_.numeric_tolerance)) {
    verdict.kind = Verdict::Kind::Pass;
  } else {
    verdict.kind = Verdict::Kind::WrongAnswer;
  }
  verdict.got = got.canonical;
  return verdict;
}

SolutionProgram Learner::repair_loop(const Problem& problem, const ReferenceSolution& solution,
                                     const SolutionSketch& sketch, int max_attempts) {
  if (max_attempts < 1) throw Error(ErrorCode::InvalidArgument, "max_attempts must be >= 1");
  std::string previous_source;
  Verdict last;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    std::string reply;
    if (attempt == 1) {
      Bindings bindings{{"problem", problem.statement},
                        {"solution", solution.solution_text},
                        {"sketch", render_sketch(sketch)}};
      reply = ask(templates_.get(Role::Synthesize), bindings, problem.id);
    } else {
      Bindings bindings{{"problem", problem.statement},
                        {"solution", solution.solution_text},
                        {"sketch", render_sketch(sketch)},
                        {"previous_source", previous_source},
                        {"verdict", last.describe()}};
      reply = ask(templates_.get(Role::Repair), bindings, problem.id);
    }

    SolutionProgram program;
    try {
      program = program_from_reply(reply, sketch, attempt);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnparseableModelOutput) throw;
      last = Verdict{Verdict::Kind::ExecError, {}, "unparseable", e.what()};
      previous_source = reply;
      continue;
    }
    last = verify_program(program, solution.final_answer);
    if (last.passed()) {
      program.verified = true;
      return program;
    }
    previous_source = program.source;
  }
  throw VerificationExhausted(last, max_attempts);
}

FeatureSet Learner::extract_features(const Problem& problem, const std::vector<std::string>& steps) {
  if (steps.empty()) throw Error(ErrorCode::InvalidArgument, "features need at least one step");
  const auto& tmpl = templates_.get(Role::Featurize);
  Bindings bindings{{"problem", problem.statement}, {"steps", render_numbered(steps)}};
  auto parse = [&](const std::string& text) -> std::optional<FeatureSet> {
    auto features = parse_feature_lines(text);
    if (!features || features->step_features.size() != steps.size()) return std::nullopt;
    return features;
  };
  auto features = parse(ask(tmpl, bindings, problem.id));
  if (!features) features = parse(ask(tmpl, bindings, problem.id, kReask));
  if (!features) {
    throw Error(ErrorCode::UnparseableModelOutput, "feature reply for " + problem.id + " needs CATEGORY and " +
                                                       std::to_string(steps.size()) + " STEP lines");
  }
  return *features;
}

LearnOutcome Learner::learn_one(const Problem& problem, const ReferenceSolution& solution, FeatureStore& store) {
  LearnOutcome outcome;
  outcome.problem_id = problem.id;
  if (store.contains_problem(problem.id)) {
    outcome.status = LearnStatus::Skipped;
    outcome.detail = "already stored";
    return outcome;
  }

  std::string stage = "decompose";
  try {
    auto steps = decompose_solution(problem, solution);
    stage = "sketch";
    auto sketch = sketch_from_steps(problem, steps);
    stage = "verify";
    SolutionProgram program;
    try {
      program = repair_loop(problem, solution, sketch, config_.max_repair_attempts);
    } catch (const VerificationExhausted& e) {
      outcome.attempts = e.attempts();
      throw;
    }
    outcome.attempts = program.attempts;
    stage = "features";
    auto features = extract_features(problem, steps);
    auto record = make_record(problem.id, std::move(features), std::move(program), embedder_, clock_());
    stage = "store";
    outcome.record_id = store.put(std::move(record));
    outcome.status = LearnStatus::Stored;
    return outcome;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::StorageFailure || e.code() == ErrorCode::ExecutorUnavailable) throw;
    outcome.stage = stage;
    outcome.detail = e.what();
    outcome.record_id.reset();
    if (stage == "features") {
      outcome.status = LearnStatus::FeatureFailed;
    } else if (stage == "store") {
      outcome.status = LearnStatus::Skipped;
    } else {
      outcome.status = LearnStatus::VerificationFailed;
    }
    return outcome;
  }
}

std::vector<LearnOutcome> Learner::learn_corpus(const Corpus& train, FeatureStore& store, int parallelism) {
  if (parallelism < 1) throw Error(ErrorCode::InvalidArgument, "parallelism must be >= 1");
  std::vector<LearnOutcome> outcomes(train.entries.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= train.entries.size()) return;
      try {
        const auto& entry = train.entries[i];
        outcomes[i] = learn_one(entry.problem, entry.solution, store);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(train.entries.size());
      }
    }
  };

  auto n = std::min<std::size_t>(static_cast<std::size_t>(parallelism), std::max<std::size_t>(1, train.entries.size()));
  {
    std::vector<std::jthread> threads;
    for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);
  return outcomes;
}

}  // namespace mathlearner
