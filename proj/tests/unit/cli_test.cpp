#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fixture.hpp"
#include "json.hpp"
#include "mathlearner/solver.hpp"

namespace mathlearner {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Result {
  int code;
  std::string output;
};

Result run(const TempDir& dir, const std::string& args, const std::string& env = "") {
  fs::path log = dir.path() / "cli.log";
  std::string cmd = env + " " + std::string(MATHLEARNER_CLI) + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    fixture = testing::end_to_end_fixture();
    testing::write_fixture(fixture, dir.path());
    data = dir.path() / "dataset";
  }

  Result ingest(const std::string& category, int n_train, int n_test, const fs::path& out, int seed = 7) {
    return run(dir, "ingest --dataset " + q(data) + " --category " + category + " --n-train " +
                        std::to_string(n_train) + " --n-test " + std::to_string(n_test) + " --seed " +
                        std::to_string(seed) + " --out " + q(out));
  }

  std::string common(const fs::path& manifest, const std::string& script) {
    return " --manifest " + q(manifest) + " --backend scripted:" + q(dir.path() / script) + " --executor stub:" +
           q(dir.path() / "stub.json");
  }

  // train manifest: the six learned problems; test manifest: the ten precalculus ones.
  void ingest_both() {
    ASSERT_EQ(ingest("Learned", 6, 0, train_manifest()).code, 0);
    ASSERT_EQ(ingest("Precalculus", 0, 10, test_manifest()).code, 0);
  }
  fs::path train_manifest() const { return dir.path() / "train.json"; }
  fs::path test_manifest() const { return dir.path() / "test.json"; }
  fs::path store() const { return dir.path() / "store"; }

  TempDir dir{"cli"};
  testing::EndToEndFixture fixture;
  fs::path data;
};

TEST_F(CliTest, IngestIsDeterministic) {
  auto a = ingest("Precalculus", 0, 10, dir.path() / "a.json");
  ASSERT_EQ(a.code, 0) << a.output;
  ASSERT_EQ(ingest("Precalculus", 0, 10, dir.path() / "b.json").code, 0);
  EXPECT_EQ(slurp(dir.path() / "a.json"), slurp(dir.path() / "b.json"));
  auto m = nlohmann::json::parse(slurp(dir.path() / "a.json"));
  EXPECT_EQ(m["test_ids"].size(), 10u);
  EXPECT_EQ(m["train_ids"].size(), 0u);
  EXPECT_EQ(m["answers"]["precalculus/q1.json"], "\\frac{1}{2}");
  ASSERT_EQ(ingest("Precalculus", 0, 10, dir.path() / "c.json", 8).code, 0);
  EXPECT_NE(slurp(dir.path() / "a.json"), slurp(dir.path() / "c.json"));
}

TEST_F(CliTest, IngestNotEnoughProblems) {
  auto r = ingest("Precalculus", 1, 10, dir.path() / "m.json");
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("NotEnoughProblems"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir.path() / "m.json"));
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run(dir, "").code, 2);
  EXPECT_EQ(run(dir, "ingest --dataset x").code, 2);
  EXPECT_EQ(run(dir, "--help").code, 0);
}

TEST_F(CliTest, FullOfflinePipeline) {
  ingest_both();
  auto learn = run(dir, "learn" + common(train_manifest(), "learn_script.json") + " --store " + q(store()) +
                            " --parallelism 3 --timestamp 1700000000");
  ASSERT_EQ(learn.code, 0) << learn.output;
  EXPECT_NE(learn.output.find("6 stored"), std::string::npos) << learn.output;
  EXPECT_FALSE(fs::exists(store() / ".lock"));

  auto solve = [&](const std::string& out, const std::string& extra = "") {
    return run(dir, "solve" + common(test_manifest(), "solve_script.json") + " --store " + q(store()) + " --out " +
                        q(dir.path() / out) + extra);
  };
  auto s1 = solve("traces.jsonl", " --parallelism 4");
  ASSERT_EQ(s1.code, 0) << s1.output;
  ASSERT_EQ(solve("traces2.jsonl").code, 0);
  EXPECT_EQ(slurp(dir.path() / "traces.jsonl"), slurp(dir.path() / "traces2.jsonl"));

  // One trace line per test id, in manifest order.
  auto m = nlohmann::json::parse(slurp(test_manifest()));
  auto traces = read_trace_file((dir.path() / "traces.jsonl").string());
  ASSERT_EQ(traces.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(traces[i].problem_id, m["test_ids"][i]);

  auto base = run(dir, "solve --baseline" + common(test_manifest(), "baseline_script.json") + " --out " +
                           q(dir.path() / "baseline.jsonl"));
  ASSERT_EQ(base.code, 0) << base.output;
  for (const auto& t : read_trace_file((dir.path() / "baseline.jsonl").string())) EXPECT_EQ(t.mode, SolveMode::Direct);

  auto eval = run(dir, "eval --traces " + q(dir.path() / "traces.jsonl") + " --baseline-traces " +
                           q(dir.path() / "baseline.jsonl") + " --manifest " + q(test_manifest()) +
                           " --format json --out " + q(dir.path() / "metrics.json"));
  ASSERT_EQ(eval.code, 0) << eval.output;
  auto metrics = nlohmann::json::parse(slurp(dir.path() / "metrics.json"));
  auto want = fixture.expected_counts();
  EXPECT_EQ(metrics["counts"]["c_r"], want.c_r);
  EXPECT_EQ(metrics["counts"]["c_nr"], want.c_nr);
  EXPECT_EQ(metrics["counts"]["nc_r"], want.nc_r);
  EXPECT_EQ(metrics["counts"]["nc_nr"], want.nc_nr);
  EXPECT_EQ(metrics["cot_counts"]["c_nr"], fixture.expected_baseline_counts().c_nr);
  EXPECT_NEAR(metrics["global_accuracy"].get<double>(), 0.7, 1e-12);
  EXPECT_NEAR(metrics["target_achievement_rate"].get<double>(), 0.4, 1e-12);

  auto text = run(dir, "report --in " + q(dir.path() / "metrics.json"));
  ASSERT_EQ(text.code, 0) << text.output;
  EXPECT_NE(text.output.find("Global Accuracy          70.00%"), std::string::npos) << text.output;
  EXPECT_NE(text.output.find("Profitability (Benefit)  40.00%"), std::string::npos) << text.output;
  auto direct = run(dir, "eval --traces " + q(dir.path() / "traces.jsonl") + " --baseline-traces " +
                             q(dir.path() / "baseline.jsonl") + " --manifest " + q(test_manifest()));
  EXPECT_EQ(direct.output, text.output);

  // Learning again is idempotent: everything is already stored.
  auto again = run(dir, "learn" + common(train_manifest(), "learn_script.json") + " --store " + q(store()));
  EXPECT_EQ(again.code, 0) << again.output;
  EXPECT_NE(again.output.find("6 skipped"), std::string::npos) << again.output;
}

TEST_F(CliTest, ResumeSkipsTracedProblems) {
  ingest_both();
  ASSERT_EQ(run(dir, "learn" + common(train_manifest(), "learn_script.json") + " --store " + q(store())).code, 0);
  auto full = dir.path() / "full.jsonl";
  ASSERT_EQ(run(dir, "solve" + common(test_manifest(), "solve_script.json") + " --store " + q(store()) + " --out " + q(full))
                .code,
            0);
  std::string text = slurp(full);
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);

  // Three complete lines plus half of the fourth, as after an interrupted run.
  auto partial = dir.path() / "partial.jsonl";
  testing::write_text(partial, lines[0] + "\n" + lines[1] + "\n" + lines[2] + "\n" + lines[3].substr(0, 40));

  // A script without the first three problems: resolving them again would fail.
  auto m = nlohmann::json::parse(slurp(test_manifest()));
  auto script = fixture.solve_script;
  for (int i = 0; i < 3; ++i) {
    for (auto& [role, by_key] : script) by_key.erase(m["test_ids"][i].get<std::string>());
  }
  testing::write_text(dir.path() / "resume_script.json", testing::script_json(script).dump());
  auto r = run(dir, "solve --resume" + common(test_manifest(), "resume_script.json") + " --store " + q(store()) +
                        " --out " + q(partial));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("3 resumed"), std::string::npos) << r.output;
  EXPECT_EQ(slurp(partial), text);
}

TEST_F(CliTest, LearnExitCodes) {
  ingest_both();
  auto empty = dir.path() / "empty.json";
  ASSERT_EQ(ingest("Precalculus", 0, 1, empty).code, 0);
  auto r = run(dir, "learn" + common(empty, "learn_script.json") + " --store " + q(store()));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("warning"), std::string::npos);

  // Every program returns a wrong answer.
  auto bad = fixture.stub;
  for (auto& e : bad) e.outcome = testing::ok_outcome("-12345");
  testing::write_text(dir.path() / "bad_stub.json", testing::stub_json(bad).dump());
  auto failing = run(dir, "learn --manifest " + q(train_manifest()) + " --backend scripted:" +
                              q(dir.path() / "learn_script.json") + " --executor stub:" +
                              q(dir.path() / "bad_stub.json") + " --store " + q(dir.path() / "store2"));
  EXPECT_EQ(failing.code, 6) << failing.output;
  EXPECT_NE(failing.output.find("0 stored, 6 verification_failed"), std::string::npos) << failing.output;
}

TEST_F(CliTest, StoreLockIsExclusive) {
  ingest_both();
  fs::create_directories(store());
  testing::write_text(store() / ".lock", "12345\n");
  auto r = run(dir, "learn" + common(train_manifest(), "learn_script.json") + " --store " + q(store()));
  EXPECT_EQ(r.code, 7) << r.output;
  EXPECT_TRUE(fs::exists(store() / ".lock"));
}

TEST_F(CliTest, LiveBackendNeedsCredential) {
  ingest_both();
  auto r = run(dir,
               "learn --manifest " + q(train_manifest()) + " --backend live --executor stub:" +
                   q(dir.path() / "stub.json") + " --store " + q(store()),
               "env -u MATHLEARNER_API_KEY");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("MATHLEARNER_API_KEY"), std::string::npos) << r.output;
}

TEST_F(CliTest, ConfigPrecedence) {
  ingest_both();
  ASSERT_EQ(run(dir, "learn" + common(train_manifest(), "learn_script.json") + " --store " + q(store())).code, 0);
  testing::write_text(dir.path() / "loose.conf", "# retrieve everything\nsimilarity_threshold = 0.0\n");
  auto conf = " --config " + q(dir.path() / "loose.conf");

  ASSERT_EQ(run(dir, "solve" + common(test_manifest(), "solve_script.json") + " --store " + q(store()) + conf +
                         " --out " + q(dir.path() / "loose.jsonl"))
                .code,
            0);
  for (const auto& t : read_trace_file((dir.path() / "loose.jsonl").string())) {
    EXPECT_EQ(t.mode, SolveMode::Augmented) << t.problem_id;
  }

  ASSERT_EQ(run(dir, "solve" + common(test_manifest(), "solve_script.json") + " --store " + q(store()) + conf +
                         " --similarity-threshold 0.8 --out " + q(dir.path() / "strict.jsonl"))
                .code,
            0);
  int augmented = 0;
  for (const auto& t : read_trace_file((dir.path() / "strict.jsonl").string())) {
    augmented += t.mode == SolveMode::Augmented;
  }
  EXPECT_EQ(augmented, 6);
}

TEST_F(CliTest, EvalRejectsMismatchedUniverseAndStrictFlags) {
  ingest_both();
  ASSERT_EQ(run(dir, "learn" + common(train_manifest(), "learn_script.json") + " --store " + q(store())).code, 0);
  auto traces = dir.path() / "t.jsonl";
  ASSERT_EQ(run(dir, "solve" + common(test_manifest(), "solve_script.json") + " --store " + q(store()) + " --out " +
                         q(traces))
                .code,
            0);
  std::string text = slurp(traces);
  testing::write_text(dir.path() / "short.jsonl", text.substr(0, text.find('\n') + 1));
  auto mismatch = run(dir, "eval --traces " + q(dir.path() / "short.jsonl") + " --manifest " + q(test_manifest()));
  EXPECT_EQ(mismatch.code, 4) << mismatch.output;

  auto lax = run(dir, "eval --traces " + q(traces) + " --manifest " + q(test_manifest()) + " --format markdown");
  EXPECT_EQ(lax.code, 0) << lax.output;
  EXPECT_NE(lax.output.find("\\* baseline"), std::string::npos) << lax.output;
  auto strict = run(dir, "eval --strict --traces " + q(traces) + " --manifest " + q(test_manifest()));
  EXPECT_EQ(strict.code, 5) << strict.output;
}

}  // namespace
}  // namespace mathlearner
