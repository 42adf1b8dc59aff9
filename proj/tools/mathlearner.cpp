// mathlearner: ingest, learn, solve, eval, report.
#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mathlearner/config.hpp"
#include "mathlearner/dataset.hpp"
#include "mathlearner/embedding.hpp"
#include "mathlearner/error.hpp"
#include "mathlearner/evaluator.hpp"
#include "mathlearner/executor.hpp"
#include "mathlearner/feature_store.hpp"
#include "mathlearner/gateway.hpp"
#include "mathlearner/learner.hpp"
#include "mathlearner/live_backend.hpp"
#include "mathlearner/process_executor.hpp"
#include "mathlearner/solver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mathlearner;

namespace {

// Exit codes (documented in the README).
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNotEnoughProblems = 3;
constexpr int kExitMismatchedUniverse = 4;
constexpr int kExitDegenerate = 5;
constexpr int kExitNothingStored = 6;
constexpr int kExitStoreLocked = 7;

struct CommandFailure {
  int code;
};

void write_file_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::StorageFailure, "cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw Error(ErrorCode::StorageFailure, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// One command per store directory at a time.
class StoreLock {
 public:
  explicit StoreLock(const fs::path& store_dir) {
    fs::create_directories(store_dir);
    path_ = store_dir / ".lock";
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY | O_CLOEXEC, 0644);
    if (fd < 0) {
      std::cerr << "error: store " << store_dir.string() << " is locked by another command (" << path_.string()
                << "); remove the file if no command is running\n";
      throw CommandFailure{kExitStoreLocked};
    }
    std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~StoreLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;

 private:
  fs::path path_;
};

// ---- split manifest ----

struct SplitManifest {
  std::string category;
  std::string dataset_dir;
  std::uint64_t seed = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::map<std::string, std::string> answers;  // raw boxed answer per id
};

SplitManifest read_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "malformed manifest " + path.string() + ": " + e.what());
  }
  SplitManifest m;
  m.category = j.at("category").get<std::string>();
  m.dataset_dir = j.at("dataset_dir").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
  m.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  m.answers = j.at("answers").get<std::map<std::string, std::string>>();
  return m;
}

std::vector<CorpusEntry> resolve_ids(const Corpus& corpus, const std::vector<std::string>& ids) {
  std::vector<CorpusEntry> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const CorpusEntry* e = corpus.find(id);
    if (!e) throw Error(ErrorCode::InvalidArgument, "manifest id " + id + " not found in dataset");
    out.push_back(*e);
  }
  return out;
}

Corpus load_manifest_corpus(const SplitManifest& m, const std::vector<std::string>& ids) {
  Corpus all = load_corpus(m.dataset_dir);
  Corpus c;
  c.entries = resolve_ids(all, ids);
  c.split_seed = m.seed;
  c.recount();
  return c;
}

// ---- shared runtime options ----

struct RuntimeOptions {
  std::string manifest;
  std::string store;
  std::string backend = "scripted";
  std::string executor;
  std::string runner;
  int pool_size = 0;
  std::string templates = MATHLEARNER_DEFAULT_TEMPLATES;
  std::string config_file;
  int parallelism = 1;
  std::optional<double> similarity_threshold;
  std::optional<int> top_k;
  std::optional<int> max_attempts;
  std::optional<double> category_weight;
  std::optional<int> dimension;
  std::optional<double> exec_timeout;
  std::optional<std::uint64_t> memory_limit;
  std::optional<double> tolerance;
  std::optional<std::int64_t> timestamp;
};

void add_runtime_options(CLI::App* cmd, RuntimeOptions& o) {
  cmd->add_option("--manifest", o.manifest, "Split manifest written by ingest")->required();
  cmd->add_option("--backend", o.backend, "scripted:<path> | live | hash-only")->required();
  cmd->add_option("--executor", o.executor, "stub:<path> (scripted outcomes)");
  cmd->add_option("--runner", o.runner, "Runner worker command line (process pool)");
  cmd->add_option("--pool-size", o.pool_size, "Runner workers (default: parallelism)");
  cmd->add_option("--templates", o.templates, "Prompt template directory");
  cmd->add_option("--config", o.config_file, "key = value config file");
  cmd->add_option("--parallelism", o.parallelism, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--similarity-threshold", o.similarity_threshold);
  cmd->add_option("--top-k", o.top_k);
  cmd->add_option("--max-attempts", o.max_attempts);
  cmd->add_option("--category-weight", o.category_weight);
  cmd->add_option("--dimension", o.dimension);
  cmd->add_option("--exec-timeout", o.exec_timeout);
  cmd->add_option("--memory-limit", o.memory_limit);
  cmd->add_option("--numeric-tolerance", o.tolerance);
}

struct Runtime {
  PipelineConfig config;
  std::map<std::string, std::string> file_values;
  TemplateSet templates;
  std::shared_ptr<CompletionBackend> backend;
  std::unique_ptr<Gateway> gateway;
  std::unique_ptr<Embedder> embedder;
  std::unique_ptr<Executor> executor;
};

std::string value_or(const std::map<std::string, std::string>& values, const std::string& key, std::string fallback) {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

// flags > config file > defaults
Runtime make_runtime(const RuntimeOptions& o) {
  Runtime rt;
  if (!o.config_file.empty()) {
    rt.file_values = read_key_value_file(o.config_file);
    apply_key_values(rt.config, rt.file_values);
  }
  PipelineConfig& c = rt.config;
  if (o.similarity_threshold) c.similarity_threshold = *o.similarity_threshold;
  if (o.top_k) c.top_k = *o.top_k;
  if (o.max_attempts) c.max_repair_attempts = *o.max_attempts;
  if (o.category_weight) c.category_weight = *o.category_weight;
  if (o.dimension) c.embed_dimension = *o.dimension;
  if (o.exec_timeout) c.exec_timeout_s = *o.exec_timeout;
  if (o.memory_limit) c.exec_memory_limit = *o.memory_limit;
  if (o.tolerance) c.numeric_tolerance = *o.tolerance;
  c.validate();

  rt.templates = TemplateSet::load_directory(o.templates);

  GatewayOptions gopts;
  gopts.max_in_flight = std::stoi(value_or(rt.file_values, "max_in_flight", std::to_string(std::max(4, o.parallelism))));
  gopts.requests_per_window = std::stoi(value_or(rt.file_values, "requests_per_minute", "0"));

  bool live_embedder = false;
  if (o.backend.rfind("scripted:", 0) == 0) {
    rt.backend = std::make_shared<ScriptedBackend>(ScriptedBackend::from_file(o.backend.substr(9)));
    gopts.backoff_base = std::chrono::milliseconds(0);
  } else if (o.backend == "live" || o.backend == "hash-only") {
    LiveBackendOptions lopts;
    lopts.base_url = value_or(rt.file_values, "base_url", lopts.base_url);
    lopts.model = value_or(rt.file_values, "model", lopts.model);
    lopts.embedding_model = value_or(rt.file_values, "embedding_model", lopts.embedding_model);
    lopts.api_key = api_key_from_environment();
    rt.backend = std::make_shared<LiveBackend>(lopts);
    if (o.backend == "live") {
      live_embedder = true;
      rt.embedder = std::make_unique<LiveEmbedder>(lopts, c.embed_dimension);
    }
  } else if (o.backend == "scripted") {
    throw Error(ErrorCode::InvalidArgument, "scripted backend needs a script path: --backend scripted:<path>");
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown backend '" + o.backend + "'");
  }
  if (!live_embedder) rt.embedder = std::make_unique<HashEmbedder>(c.embed_dimension);
  rt.gateway = std::make_unique<Gateway>(rt.backend, gopts);

  if (!o.executor.empty() && !o.runner.empty()) {
    throw Error(ErrorCode::InvalidArgument, "--executor and --runner are mutually exclusive");
  }
  if (o.executor.rfind("stub:", 0) == 0) {
    rt.executor = std::make_unique<StubExecutor>(StubExecutor::from_file(o.executor.substr(5)));
  } else if (!o.runner.empty()) {
    ProcessPoolOptions popts;
    std::istringstream words(o.runner);
    for (std::string w; words >> w;) popts.command.push_back(w);
    popts.command.push_back("--memory-limit");
    popts.command.push_back(std::to_string(c.exec_memory_limit));
    popts.command.push_back("--cpu-limit");
    popts.command.push_back(std::to_string(static_cast<long long>(c.exec_timeout_s) + 1));
    popts.pool_size = o.pool_size > 0 ? o.pool_size : o.parallelism;
    rt.executor = std::make_unique<ProcessPoolExecutor>(popts);
  } else {
    throw Error(ErrorCode::InvalidArgument, "choose an executor: --executor stub:<path> or --runner <command>");
  }
  return rt;
}

// ---- ingest ----

struct IngestOptions {
  std::string dataset;
  std::string category;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_ingest(const IngestOptions& o) {
  Corpus corpus = load_corpus(o.dataset, [](const std::string& w) { std::cerr << "warning: " << w << "\n"; });
  Split split = select_split(corpus, o.category, o.n_train, o.n_test, o.seed);

  json j;
  j["category"] = o.category;
  j["dataset_dir"] = o.dataset;
  j["seed"] = o.seed;
  j["train_ids"] = json::array();
  j["test_ids"] = json::array();
  j["answers"] = json::object();
  for (const auto& e : split.train.entries) {
    j["train_ids"].push_back(e.problem.id);
    j["answers"][e.problem.id] = e.solution.final_answer.raw;
  }
  for (const auto& e : split.test.entries) {
    j["test_ids"].push_back(e.problem.id);
    j["answers"][e.problem.id] = e.solution.final_answer.raw;
  }
  j["corpus"] = {{"problems", corpus.entries.size()},
                 {"skipped_missing_field", corpus.manifest.skipped_missing_field},
                 {"skipped_no_boxed_answer", corpus.manifest.skipped_no_boxed_answer},
                 {"skipped_malformed", corpus.manifest.skipped_malformed}};
  write_file_atomic(o.out, j.dump(2) + "\n");
  std::cout << "ingest: " << split.train.entries.size() << " train, " << split.test.entries.size() << " test ("
            << o.category << ", seed " << o.seed << ") -> " << o.out << "\n";
  return 0;
}

// ---- learn ----

int cmd_learn(const RuntimeOptions& o) {
  if (o.store.empty()) throw Error(ErrorCode::InvalidArgument, "--store is required");
  SplitManifest m = read_manifest(o.manifest);
  Corpus train = load_manifest_corpus(m, m.train_ids);
  if (train.entries.empty()) {
    std::cerr << "warning: train set is empty, nothing to learn\n";
    return 0;
  }
  Runtime rt = make_runtime(o);
  StoreLock lock(o.store);
  FeatureStore store = FeatureStore::open(o.store, rt.config.embed_dimension, rt.embedder->id());
  Learner::Clock clock;
  if (o.timestamp) clock = [t = *o.timestamp] { return t; };
  Learner learner(*rt.gateway, rt.templates, *rt.embedder, *rt.executor, rt.config, clock);
  auto outcomes = learner.learn_corpus(train, store, o.parallelism);

  std::map<LearnStatus, int> tally;
  for (const auto& out : outcomes) {
    ++tally[out.status];
    if (out.status != LearnStatus::Stored) {
      std::cerr << out.problem_id << ": " << to_string(out.status) << " at " << out.stage << " after "
                << out.attempts << " attempt(s): " << out.detail << "\n";
    }
  }
  std::cout << "learn: " << tally[LearnStatus::Stored] << " stored, " << tally[LearnStatus::VerificationFailed]
            << " verification_failed, " << tally[LearnStatus::FeatureFailed] << " feature_failed, "
            << tally[LearnStatus::Skipped] << " skipped; store has " << store.size() << " records\n";
  bool any_present = tally[LearnStatus::Stored] > 0 || tally[LearnStatus::Skipped] > 0;
  return any_present ? 0 : kExitNothingStored;
}

// ---- solve ----

struct SolveOptions {
  std::string out;
  bool baseline = false;
  bool resume = false;
};

int cmd_solve(const RuntimeOptions& o, const SolveOptions& s) {
  SplitManifest m = read_manifest(o.manifest);
  Corpus test = load_manifest_corpus(m, m.test_ids);
  Runtime rt = make_runtime(o);

  std::optional<StoreLock> lock;
  std::optional<FeatureStore> store;
  if (!s.baseline) {
    if (o.store.empty()) throw Error(ErrorCode::InvalidArgument, "--store is required unless --baseline");
    if (!fs::exists(fs::path(o.store) / "manifest.json")) {
      throw Error(ErrorCode::StoreUnavailable, "no store at " + o.store);
    }
    lock.emplace(o.store);
    store.emplace(FeatureStore::load(o.store));
    if (store->dimension() != rt.config.embed_dimension) {
      throw Error(ErrorCode::DimensionMismatch, "store dimension " + std::to_string(store->dimension()) +
                                                    " vs configured " + std::to_string(rt.config.embed_dimension));
    }
    if (store->embedder_id() != rt.embedder->id()) {
      throw Error(ErrorCode::EmbedderMismatch, "store uses " + store->embedder_id() + ", run uses " + rt.embedder->id());
    }
  }

  const std::size_t n = test.entries.size();
  std::vector<std::optional<std::string>> lines(n);
  if (s.resume && fs::exists(s.out)) {
    std::map<std::string, std::string> done;
    std::istringstream in(read_file(s.out));
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      try {
        SolveTrace t = trace_from_json_line(line);
        done[t.problem_id] = line;
      } catch (const Error&) {
        // a partial last line from an interrupted run
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto it = done.find(test.entries[i].problem.id);
      if (it != done.end()) lines[i] = it->second;
    }
  }

  Solver solver(*rt.gateway, rt.templates, *rt.embedder, *rt.executor, rt.config);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < n; ++i) {
    if (!lines[i]) todo.push_back(i);
  }
  std::size_t resumed = n - todo.size();

  // Completed traces are flushed in manifest order as the prefix fills in.
  fs::path out_path(s.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  fs::path partial = out_path;
  partial += ".partial";
  std::ofstream sink(partial, std::ios::binary | std::ios::trunc);
  if (!sink) throw Error(ErrorCode::StorageFailure, "cannot write " + partial.string());
  std::mutex sink_mutex;
  std::size_t flushed = 0;
  auto flush_prefix = [&] {
    while (flushed < n && lines[flushed]) {
      sink << *lines[flushed] << "\n";
      ++flushed;
    }
    sink.flush();
  };
  {
    std::lock_guard lk(sink_mutex);
    flush_prefix();
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const Problem& p = test.entries[todo[k]].problem;
      try {
        SolveTrace t = s.baseline ? solver.solve_direct_baseline(p) : solver.solve(p, *store);
        std::string line = trace_to_json_line(t);
        std::lock_guard lk(sink_mutex);
        lines[todo[k]] = std::move(line);
        flush_prefix();
      } catch (...) {
        std::lock_guard lk(sink_mutex);
        if (!failure) failure = std::current_exception();
        next = todo.size();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  int workers = std::max(1, std::min<int>(o.parallelism, static_cast<int>(todo.size())));
  for (int i = 0; i < workers; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  sink.close();
  if (failure) std::rethrow_exception(failure);
  fs::rename(partial, out_path);

  int augmented = 0;
  for (const auto& line : lines) {
    if (trace_from_json_line(*line).mode == SolveMode::Augmented) ++augmented;
  }
  std::cout << "solve" << (s.baseline ? " (baseline)" : "") << ": " << n << " traces (" << resumed << " resumed, "
            << augmented << " augmented) -> " << s.out << "\n";
  return 0;
}

// ---- eval / report ----

struct EvalOptions {
  std::string traces;
  std::string baseline_traces;
  std::string manifest;
  std::string format = "text";
  std::string out;
  bool strict = false;
  double tolerance = PipelineConfig{}.numeric_tolerance;
};

void check_universe(const std::vector<SolveTrace>& traces, const std::vector<std::string>& ids,
                    const std::string& label) {
  std::multiset<std::string> got;
  for (const auto& t : traces) got.insert(t.problem_id);
  std::multiset<std::string> want(ids.begin(), ids.end());
  if (got != want) {
    throw Error(ErrorCode::MismatchedUniverse,
                label + " cover " + std::to_string(got.size()) + " problems, manifest lists " +
                    std::to_string(want.size()) + " (ids differ)");
  }
}

ReportFormat parse_format(const std::string& name) {
  auto f = report_format_from_string(name);
  if (!f) throw Error(ErrorCode::InvalidArgument, "unknown format '" + name + "'");
  return *f;
}

int emit_report(const MetricsReport& report, ReportFormat format, const std::string& out, bool strict) {
  std::string text = render_report(report, format);
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
    std::cout << "report -> " << out << "\n";
  }
  if (strict && !report.degenerate.empty()) {
    for (const auto& d : report.degenerate) std::cerr << "degenerate: " << d << "\n";
    return kExitDegenerate;
  }
  return 0;
}

int cmd_eval(const EvalOptions& o) {
  ReportFormat format = parse_format(o.format);
  SplitManifest m = read_manifest(o.manifest);
  std::map<std::string, Answer> truth;
  for (const auto& id : m.test_ids) {
    auto it = m.answers.find(id);
    if (it == m.answers.end()) throw Error(ErrorCode::MismatchedUniverse, "manifest has no answer for " + id);
    truth[id] = canonicalize_answer(it->second);
  }

  auto traces = read_trace_file(o.traces);
  check_universe(traces, m.test_ids, "traces");
  QuadrantCounts counts = judge_traces(traces, truth, o.tolerance);

  std::optional<QuadrantCounts> cot;
  if (!o.baseline_traces.empty()) {
    auto base = read_trace_file(o.baseline_traces);
    check_universe(base, m.test_ids, "baseline traces");
    cot = judge_traces(base, truth, o.tolerance);
  }
  return emit_report(compute_metrics(counts, cot), format, o.out, o.strict);
}

int cmd_report(const std::string& in, const std::string& format, const std::string& out, bool strict) {
  return emit_report(report_from_json(read_file(in)), parse_format(format), out, strict);
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::NotEnoughProblems:
      return kExitNotEnoughProblems;
    case ErrorCode::MismatchedUniverse:
      return kExitMismatchedUniverse;
    default:
      return kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented math problem solving: learn verified programs, solve, evaluate."};
  app.require_subcommand(1);

  IngestOptions ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Load a dataset and write a train/test split manifest");
  ingest_cmd->add_option("--dataset", ingest.dataset, "Dataset file or directory")->required();
  ingest_cmd->add_option("--category", ingest.category, "Problem type to sample, e.g. Precalculus")->required();
  ingest_cmd->add_option("--n-train", ingest.n_train, "Problems to learn from")->required();
  ingest_cmd->add_option("--n-test", ingest.n_test, "Problems to solve")->required();
  ingest_cmd->add_option("--seed", ingest.seed, "Split seed")->required();
  ingest_cmd->add_option("--out", ingest.out, "Manifest path")->required();

  RuntimeOptions learn;
  auto* learn_cmd = app.add_subcommand("learn", "Learn verified programs and features into a store");
  add_runtime_options(learn_cmd, learn);
  learn_cmd->add_option("--store", learn.store, "Store directory")->required();
  learn_cmd->add_option("--timestamp", learn.timestamp, "Fixed created_at (unix seconds) for reproducible stores");

  RuntimeOptions solve;
  SolveOptions solve_opts;
  auto* solve_cmd = app.add_subcommand("solve", "Solve the test split and write one trace line per problem");
  add_runtime_options(solve_cmd, solve);
  solve_cmd->add_option("--store", solve.store, "Store directory (not needed with --baseline)");
  solve_cmd->add_option("--out", solve_opts.out, "Trace file")->required();
  solve_cmd->add_flag("--baseline", solve_opts.baseline, "Direct chain-of-thought baseline, no retrieval");
  solve_cmd->add_flag("--resume", solve_opts.resume, "Keep traces already present in --out");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Judge traces and compute metrics");
  eval_cmd->add_option("--traces", eval.traces, "Trace file from solve")->required();
  eval_cmd->add_option("--baseline-traces", eval.baseline_traces, "Trace file from solve --baseline");
  eval_cmd->add_option("--manifest", eval.manifest, "Split manifest with ground-truth answers")->required();
  eval_cmd->add_option("--format", eval.format, "text | json | markdown");
  eval_cmd->add_option("--out", eval.out, "Report path (default: stdout)");
  eval_cmd->add_option("--numeric-tolerance", eval.tolerance);
  eval_cmd->add_flag("--strict", eval.strict, "Exit nonzero when any metric is degenerate");

  std::string report_in, report_format = "text", report_out;
  bool report_strict = false;
  auto* report_cmd = app.add_subcommand("report", "Re-render a JSON metrics report");
  report_cmd->add_option("--in", report_in, "Report written with eval --format json")->required();
  report_cmd->add_option("--format", report_format, "text | json | markdown");
  report_cmd->add_option("--out", report_out, "Output path (default: stdout)");
  report_cmd->add_flag("--strict", report_strict, "Exit nonzero when any metric is degenerate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*ingest_cmd) return cmd_ingest(ingest);
    if (*learn_cmd) return cmd_learn(learn);
    if (*solve_cmd) return cmd_solve(solve, solve_opts);
    if (*eval_cmd) return cmd_eval(eval);
    if (*report_cmd) return cmd_report(report_in, report_format, report_out, report_strict);
  } catch (const CommandFailure& f) {
    return f.code;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
