#include "mathlearner/solver.hpp"

#include <fstream>

#include "json.hpp"
#include "mathlearner/error.hpp"
#include "mathlearner/model_output.hpp"

namespace mathlearner {

using nlohmann::json;

namespace {

constexpr const char* kPredictSteps =
    "No worked solution is available. Predict the steps you would take to solve the problem and describe each one.";
constexpr const char* kReask =
    "Your previous reply could not be parsed. Answer again using exactly the format requested above.";

json features_json(const std::optional<FeatureSet>& f) {
  if (!f) return nullptr;
  return {{"category", f->category_feature}, {"steps", f->step_features}};
}

json ref_json(const RetrievedRef& r) { return {{"record_id", r.record_id}, {"score", r.score}}; }

RetrievedRef ref_from(const json& j) { return {j.at("record_id").get<std::string>(), j.at("score").get<double>()}; }

}  // namespace

std::string_view to_string(SolveMode mode) { return mode == SolveMode::Augmented ? "augmented" : "direct"; }

std::string trace_to_json_line(const SolveTrace& t) {
  json extra = json::array();
  for (const auto& h : t.extra_hits) extra.push_back(ref_json(h));
  json j = {{"schema_version", kTraceSchemaVersion},
            {"problem_id", t.problem_id},
            {"query_features", features_json(t.query_features)},
            {"retrieved", t.retrieved ? ref_json(*t.retrieved) : json(nullptr)},
            {"extra_hits", extra},
            {"mode", std::string(to_string(t.mode))},
            {"program_source", t.program_source},
            {"execution",
             {{"status", t.execution.status}, {"output", t.execution.output}, {"stderr", t.execution.stderr_excerpt}}},
            {"answer", t.answer ? json{{"raw", t.answer->raw}, {"canonical", t.answer->canonical}} : json(nullptr)},
            {"correct", t.correct ? json(*t.correct) : json(nullptr)},
            {"attempts", t.attempts}};
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

SolveTrace trace_from_json_line(std::string_view line) {
  try {
    json j = json::parse(line);
    if (j.at("schema_version").get<int>() != kTraceSchemaVersion) {
      throw Error(ErrorCode::FormatVersionUnsupported, "trace schema_version " + j["schema_version"].dump());
    }
    SolveTrace t;
    t.problem_id = j.at("problem_id").get<std::string>();
    if (const auto& f = j.at("query_features"); !f.is_null()) {
      t.query_features = FeatureSet{f.at("category").get<std::string>(), f.at("steps").get<std::vector<std::string>>()};
    }
    if (const auto& r = j.at("retrieved"); !r.is_null()) t.retrieved = ref_from(r);
    for (const auto& h : j.at("extra_hits")) t.extra_hits.push_back(ref_from(h));
    t.mode = j.at("mode").get<std::string>() == "augmented" ? SolveMode::Augmented : SolveMode::Direct;
    t.program_source = j.at("program_source").get<std::string>();
    const auto& e = j.at("execution");
    t.execution = {e.at("status").get<std::string>(), e.at("output").get<std::string>(),
                   e.at("stderr").get<std::string>()};
    if (const auto& a = j.at("answer"); !a.is_null()) {
      Answer answer = canonicalize_answer(a.at("raw").get<std::string>());
      answer.canonical = a.at("canonical").get<std::string>();
      answer.numeric = parse_numeric(answer.canonical);
      t.answer = std::move(answer);
    }
    if (const auto& c = j.at("correct"); !c.is_null()) t.correct = c.get<bool>();
    t.attempts = j.at("attempts").get<int>();
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed trace line: ") + e.what());
  }
}

std::vector<SolveTrace> read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read trace file " + path);
  std::vector<SolveTrace> traces;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    traces.push_back(trace_from_json_line(line));
  }
  return traces;
}

Bindings build_augmented_prompt(const Problem& problem, const LearnedRecord& hit) {
  return {{"problem", problem.statement},
          {"retrieved_steps", render_numbered(hit.feature_set.step_features)},
          {"retrieved_program", hit.program.source}};
}

Solver::Solver(Gateway& gateway, const TemplateSet& templates, Embedder& embedder, Executor& executor,
               PipelineConfig config)
    : gateway_(gateway), templates_(templates), embedder_(embedder), executor_(executor), config_(config) {
  config_.validate();
}

std::optional<FeatureSet> Solver::extract_query_features(const Problem& problem) {
  if (problem.statement.empty()) throw Error(ErrorCode::InvalidArgument, "empty problem statement");
  const auto& tmpl = templates_.get(Role::Featurize);
  Bindings bindings{{"problem", problem.statement}, {"steps", kPredictSteps}};
  if (auto f = parse_feature_lines(gateway_.complete(tmpl, bindings, problem.id).text)) return f;
  return parse_feature_lines(gateway_.complete(tmpl, bindings, problem.id, kReask).text);
}

void Solver::generate_and_run(SolveTrace& trace, Role role, const Bindings& bindings, const std::string& key) {
  const auto& tmpl = templates_.get(role);
  std::string feedback;
  for (int attempt = 1; attempt <= config_.max_repair_attempts; ++attempt) {
    trace.attempts = attempt;
    std::string reply;
    try {
      reply = gateway_.complete(tmpl, bindings, key, feedback).text;
    } catch (const Error& e) {
      trace.execution = {"model_error", "", e.what()};
      return;
    }
    auto code = extract_code_block(reply);
    if (!code) {
      trace.program_source = reply;
      trace.execution = {"unparseable", "", "reply has no fenced code block"};
      feedback = "Your previous reply did not contain a fenced code block. Reply with one complete program.";
      continue;
    }
    trace.program_source = *code;

    ExecutionRequest request;
    request.request_id = key + "#" + std::to_string(attempt);
    request.source = *code;
    request.timeout_s = config_.exec_timeout_s;
    request.memory_limit = config_.exec_memory_limit;
    ExecutionOutcome outcome;
    try {
      outcome = executor_.execute(request);
    } catch (const Error& e) {
      trace.execution = {"executor_error", "", e.what()};
      return;
    }
    trace.execution = {std::string(to_string(outcome.status)), outcome.answer_text.value_or(""),
                       outcome.stderr_excerpt};
    if (outcome.status == ExecStatus::Ok) {
      trace.answer = canonicalize_answer(*outcome.answer_text);
      return;
    }
    feedback = "Your previous program failed to run (" + trace.execution.status + ")" +
               (outcome.stderr_excerpt.empty() ? std::string() : ": " + outcome.stderr_excerpt) +
               "\nReply with a corrected complete program.";
  }
}

SolveTrace Solver::solve(const Problem& problem, const FeatureStore& store) {
  SolveTrace trace;
  trace.problem_id = problem.id;
  try {
    trace.query_features = extract_query_features(problem);
  } catch (const Error&) {
    trace.query_features.reset();
  }

  std::optional<LearnedRecord> hit;
  if (trace.query_features && store.size() > 0) {
    try {
      auto hits = store.query(embed_features(embedder_, *trace.query_features), config_.top_k,
                              config_.similarity_threshold, config_.category_weight);
      if (!hits.empty()) {
        hit = store.get(hits.front().record_id);
        trace.retrieved = RetrievedRef{hits.front().record_id, hits.front().score};
        for (std::size_t i = 1; i < hits.size(); ++i) trace.extra_hits.push_back({hits[i].record_id, hits[i].score});
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::StoreUnavailable) throw;
      hit.reset();
      trace.retrieved.reset();
      trace.extra_hits.clear();
    }
  }

  if (hit) {
    trace.mode = SolveMode::Augmented;
    generate_and_run(trace, Role::AugmentedSolve, build_augmented_prompt(problem, *hit), problem.id);
  } else {
    trace.mode = SolveMode::Direct;
    generate_and_run(trace, Role::DirectSolve, {{"problem", problem.statement}}, problem.id);
  }
  return trace;
}

SolveTrace Solver::solve_direct_baseline(const Problem& problem) {
  SolveTrace trace;
  trace.problem_id = problem.id;
  trace.mode = SolveMode::Direct;
  generate_and_run(trace, Role::DirectSolve, {{"problem", problem.statement}}, problem.id);
  return trace;
}

}  // namespace mathlearner
