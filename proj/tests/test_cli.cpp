#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "tamp/bench.hpp"

namespace fs = std::filesystem;
using namespace tamp;

namespace {

const std::string kCli = TAMP_CLI_PATH;

int runCli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tamp_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tinyConfig() {
  RunConfig c;
  c.learner.outerIters = 3;
  c.learner.innerIters = 1;
  c.learner.nGradEst = 1;
  c.learner.candidateBudget = 8;
  c.learner.seed = 4;
  c.nTrainTasks = 2;
  c.nEvalTasks = 1;
  c.nObjects = 1;
  c.trainProblemsPerTask = 2;
  c.testProblemsPerTask = 2;
  c.nEvalProblems = 3;
  c.probeProblems = 2;
  c.probeEvery = 1;
  c.adaptItersAD = 2;
  c.adaptBatchSS = 1;
  c.wallSeconds = 0.0;
  return c;
}

// Runs the whole command sequence into `dir`.
void pipeline(const fs::path& dir, const fs::path& config) {
  const std::string d = dir.string();
  const std::string cfg = " --config " + config.string();
  ASSERT_EQ(runCli("gen-tasks --seed 1 --out " + d + "/suite" + cfg), 0);
  ASSERT_EQ(runCli("train-meta --learner ad --checkpoint-out " + d + "/meta_ad.json" + cfg), 0);
  ASSERT_EQ(runCli("train-meta --learner ss --checkpoint-out " + d + "/meta_ss.json" + cfg), 0);
  // Task 2 is the single evaluation task of the tiny suite.
  ASSERT_EQ(runCli("adapt --checkpoint " + d + "/meta_ad.json --task 2 --out " + d + "/adapted_ad.json" + cfg), 0);
  ASSERT_EQ(runCli("adapt --learner ss --checkpoint " + d + "/meta_ss.json --task 2 --out " + d +
                   "/adapted_ss.json" + cfg),
            0);
  ASSERT_EQ(runCli("eval --system random --task 2 --n 4 --seed 3 --out " + d + "/eval/random.csv" + cfg), 0);
  ASSERT_EQ(runCli("eval --system hand --task 2 --n 4 --seed 3 --out " + d + "/eval/hand.csv" + cfg), 0);
  ASSERT_EQ(runCli("eval --system checkpoint --checkpoint " + d + "/adapted_ad.json --task 2 --n 4 --seed 3 --out " +
                   d + "/eval/adapted_ad.csv" + cfg),
            0);
  ASSERT_EQ(runCli("report --runs-dir " + d + " --csv " + d + "/report.csv --svg " + d + "/report.svg"), 0);
}

std::vector<fs::path> filesUnder(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const fs::path base = fresh("det");
  const fs::path config = base / "config.json";
  writeFile(config, nlohmann::json(tinyConfig()).dump(2));
  pipeline(base / "a", config);
  pipeline(base / "b", config);

  const std::vector<fs::path> a = filesUnder(base / "a");
  const std::vector<fs::path> b = filesUnder(base / "b");
  ASSERT_EQ(a, b);
  for (const char* expected : {"suite/tasks.json", "meta_ad.json", "meta_ad.curve.csv", "meta_ad.trace.jsonl",
                               "meta_ss.json", "adapted_ad.json", "adapted_ss.json", "eval/random.csv",
                               "eval/hand.csv", "eval/adapted_ad.csv", "report.csv", "report.svg", "manifest.json"})
    EXPECT_NE(std::find(a.begin(), a.end(), fs::path(expected)), a.end()) << expected;
  for (const fs::path& f : a) EXPECT_EQ(readFile(base / "a" / f), readFile(base / "b" / f)) << f;
  fs::remove_all(base);
}

TEST(Cli, OutputsHaveTheDocumentedShape) {
  const fs::path base = fresh("shape");
  const fs::path config = base / "config.json";
  writeFile(config, nlohmann::json(tinyConfig()).dump(2));
  pipeline(base, config);

  const TaskSuite suite = nlohmann::json::parse(readFile(base / "suite/tasks.json")).get<TaskSuite>();
  EXPECT_EQ(suite.train.size(), 2u);
  EXPECT_EQ(suite.eval.size(), 1u);

  const SpecializerPool ad = nlohmann::json::parse(readFile(base / "meta_ad.json")).get<SpecializerPool>();
  EXPECT_EQ(ad.sizes(), defaultPoolSizes());
  const SpecializerPool ss = nlohmann::json::parse(readFile(base / "adapted_ss.json")).get<SpecializerPool>();
  EXPECT_EQ(ss.sizes(), (std::array<int, 4>{1, 1, 1, 1}));

  const auto curve = parseCurveCsv(readFile(base / "meta_ad.curve.csv"));
  ASSERT_EQ(curve.size(), 4u);
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_GT(curve[i].iteration, curve[i - 1].iteration);

  const std::string report = readFile(base / "report.csv");
  EXPECT_EQ(report.substr(0, report.find('\n')), kTableHeader);
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 4);
  EXPECT_NE(report.find(",Random,"), std::string::npos);
  EXPECT_NE(report.find(",HandCrafted,"), std::string::npos);

  const auto manifest = nlohmann::json::parse(readFile(base / "manifest.json"));
  const auto& cmds = manifest.at("commands");
  EXPECT_TRUE(cmds.contains("train-meta ad"));
  // Eval manifests live next to their CSV.
  EXPECT_FALSE(cmds.contains("eval random task 2"));
  const auto evalManifest = nlohmann::json::parse(readFile(base / "eval/manifest.json"));
  EXPECT_EQ(evalManifest.at("commands").at("eval random task 2").at("evalSeed"), 3);
  const auto& entry = cmds.at("train-meta ad");
  EXPECT_EQ(entry.at("configHash"), hex64(fnv1a(entry.at("config").dump())));
  EXPECT_EQ(entry.at("seeds").at("learner"), 4);
  fs::remove_all(base);
}

TEST(Cli, FullRunCommandWritesTheTable) {
  const fs::path base = fresh("run");
  const fs::path config = base / "config.json";
  writeFile(config, nlohmann::json(tinyConfig()).dump(2));
  ASSERT_EQ(runCli("run --config " + config.string() + " --out " + (base / "out").string()), 0);
  for (const char* f : {"table.csv", "curve_ad.csv", "curve_ss.csv", "meta_ad.json", "meta_ss.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(base / "out" / f)) << f;
  const std::string first = readFile(base / "out/table.csv");
  ASSERT_EQ(runCli("run --config " + config.string() + " --out " + (base / "out").string()), 0);
  EXPECT_EQ(readFile(base / "out/table.csv"), first);
  fs::remove_all(base);
}

TEST(Cli, ErrorsExitNonzero) {
  const fs::path base = fresh("err");
  EXPECT_NE(runCli(""), 0);
  EXPECT_NE(runCli("train-meta --learner xx --checkpoint-out " + (base / "x.json").string()), 0);
  EXPECT_NE(runCli("eval --system hand --task 99 --n 2"), 0);
  EXPECT_NE(runCli("eval --system checkpoint --task 0 --n 2"), 0);
  writeFile(base / "bad.json", "{\"nTrainTasks\": 0}");
  EXPECT_NE(runCli("gen-tasks --out " + base.string() + " --config " + (base / "bad.json").string()), 0);
  fs::remove_all(base);
}
