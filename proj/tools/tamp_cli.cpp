// tamp_cli: task suites, meta-training, adaptation, evaluation and reports.
//
// Every command that writes files also merges an entry into manifest.json
// next to its output, keyed by command, with the config hash and seeds.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "tamp/bench.hpp"

namespace fs = std::filesystem;
using namespace tamp;

namespace {

RunConfig loadConfig(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return nlohmann::json::parse(readFile(path)).get<RunConfig>();
}

void recordManifest(const fs::path& dir, const std::string& key, const RunConfig& cfg,
                    nlohmann::json extra = nlohmann::json::object()) {
  const fs::path file = dir / "manifest.json";
  nlohmann::json m = fs::exists(file) ? nlohmann::json::parse(readFile(file)) : nlohmann::json::object();
  nlohmann::json config = cfg;
  config.erase("outDir");
  extra["config"] = config;
  extra["configHash"] = hex64(fnv1a(config.dump()));
  extra["seeds"]["suite"] = cfg.suiteSeed;
  extra["seeds"]["learner"] = cfg.learner.seed;
  m["commands"][key] = std::move(extra);
  writeFile(file, m.dump(2) + "\n");
}

fs::path dirOf(const std::string& file) {
  const fs::path p(file);
  return p.has_parent_path() ? p.parent_path() : fs::path(".");
}

Learner parseLearner(const std::string& s) { return s == "ss" ? Learner::SS : Learner::AD; }

const TaskSpec& findTask(const TaskSuite& suite, int id) {
  for (const auto* part : {&suite.train, &suite.eval})
    for (const TaskSpec& t : *part)
      if (t.taskId == id) return t;
  throw std::invalid_argument("no task with id " + std::to_string(id));
}

SpecializerPool loadPool(const std::string& path) {
  return nlohmann::json::parse(readFile(path)).get<SpecializerPool>();
}

// Adaptation data for a task, drawn exactly as the experiment driver does.
TaskDataset datasetFor(const RunConfig& cfg, const TaskSpec& t) {
  return makeDataset(t, cfg.trainProblemsPerTask, cfg.testProblemsPerTask,
                     combineSeed(cfg.suiteSeed, 100 + t.taskId));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-learned specializers for tabletop task and motion planning"};
  app.require_subcommand(1);

  std::string configPath;
  auto addConfig = [&](CLI::App* c) {
    c->add_option("--config", configPath, "RunConfig JSON (defaults when omitted)")->check(CLI::ExistingFile);
  };

  // gen-tasks
  std::uint64_t genSeed = 1;
  std::string genOut;
  auto* gen = app.add_subcommand("gen-tasks", "Generate the train/eval task suite");
  gen->add_option("--seed", genSeed, "Suite seed (overrides the config)");
  gen->add_option("--out", genOut, "Output directory")->required();
  addConfig(gen);

  // train-meta
  std::string learnerName = "ad";
  std::string ckptOut;
  auto* train = app.add_subcommand("train-meta", "Meta-train a specializer pool");
  addConfig(train);
  train->add_option("--learner", learnerName)->check(CLI::IsMember({"ad", "ss"}))->required();
  train->add_option("--checkpoint-out", ckptOut, "Checkpoint JSON path")->required();

  // adapt
  std::string ckptIn;
  int taskId = -1;
  std::string adaptOut;
  auto* adapt = app.add_subcommand("adapt", "Adapt a checkpoint to one task");
  addConfig(adapt);
  adapt->add_option("--checkpoint", ckptIn)->required()->check(CLI::ExistingFile);
  adapt->add_option("--task", taskId)->required();
  adapt->add_option("--out", adaptOut, "Adapted checkpoint JSON path")->required();
  adapt->add_option("--learner", learnerName, "ad: gradient steps, ss: subset selection")
      ->check(CLI::IsMember({"ad", "ss"}));

  // eval
  std::string systemName;
  int nProblems = 50;
  std::uint64_t evalSeed = 0;
  std::string evalOut;
  auto* ev = app.add_subcommand("eval", "Evaluate a planning system on one task");
  addConfig(ev);
  ev->add_option("--system", systemName)->check(CLI::IsMember({"random", "hand", "checkpoint"}))->required();
  ev->add_option("--task", taskId)->required();
  ev->add_option("--n", nProblems)->check(CLI::PositiveNumber);
  ev->add_option("--seed", evalSeed);
  ev->add_option("--checkpoint", ckptIn, "Pool for --system checkpoint")->check(CLI::ExistingFile);
  ev->add_option("--out", evalOut, "CSV path (stdout when omitted)");

  // report
  std::string runsDir;
  std::string csvOut;
  std::string svgOut;
  auto* report = app.add_subcommand("report", "Merge evaluation CSVs and plot learning curves");
  report->add_option("--runs-dir", runsDir)->required()->check(CLI::ExistingDirectory);
  report->add_option("--csv", csvOut)->required();
  report->add_option("--svg", svgOut);

  // run
  std::string runOut;
  auto* run = app.add_subcommand("run", "Full pipeline: suite, meta-training, adaptation, evaluation");
  addConfig(run);
  run->add_option("--out", runOut, "Run directory (overrides the config)");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = loadConfig(configPath);

    if (gen->parsed()) {
      if (gen->count("--seed") > 0) cfg.suiteSeed = genSeed;
      const TaskSuite suite = genTaskSuite(cfg.suiteSeed, cfg.nTrainTasks, cfg.nEvalTasks, cfg.nObjects, cfg.suite);
      writeFile(fs::path(genOut) / "tasks.json", nlohmann::json(suite).dump(2) + "\n");
      recordManifest(genOut, "gen-tasks", cfg);
      return 0;
    }

    if (train->parsed()) {
      const Learner learner = parseLearner(learnerName);
      const Workspace ws = prepare(cfg);
      const std::uint64_t seed = combineSeed(combineSeed(cfg.suiteSeed, cfg.learner.seed), learner == Learner::AD ? 1 : 2);
      const MetaRun r = metaTrain(ws, cfg, learner, seed);
      const fs::path out(ckptOut);
      writeFile(out, nlohmann::json(r.pool).dump() + "\n");
      fs::path curve = out;
      curve.replace_extension(".curve.csv");
      writeFile(curve, curveCsv(r.curve));
      fs::path trace = out;
      trace.replace_extension(".trace.jsonl");
      std::ostringstream os;
      for (const MetaRecord& m : r.log)
        os << nlohmann::json{{"t", m.iter}, {"taskId", m.taskId}, {"loss", m.testLoss}}.dump() << '\n';
      writeFile(trace, os.str());
      recordManifest(dirOf(ckptOut), "train-meta " + learnerName, cfg, {{"checkpoint", out.filename().string()}});
      std::cout << "trained " << learnerName << " for " << cfg.learner.outerIters << " outer iterations ("
                << fmt(r.seconds, 1) << " s)\n";
      return 0;
    }

    if (adapt->parsed()) {
      const TaskSuite suite = genTaskSuite(cfg.suiteSeed, cfg.nTrainTasks, cfg.nEvalTasks, cfg.nObjects, cfg.suite);
      const TaskDataset data = datasetFor(cfg, findTask(suite, taskId));
      const SpecializerPool prior = loadPool(ckptIn);
      const std::uint64_t seed = combineSeed(cfg.suiteSeed, 900 + static_cast<std::uint64_t>(taskId));
      const SpecializerPool adapted = parseLearner(learnerName) == Learner::AD
                                          ? adaptAD(prior, data, cfg, seed)
                                          : extractSubset(prior, adaptSS(prior, data, cfg, seed));
      writeFile(adaptOut, nlohmann::json(adapted).dump() + "\n");
      recordManifest(dirOf(adaptOut), "adapt " + learnerName + " task " + std::to_string(taskId), cfg,
                     {{"checkpoint", fs::path(adaptOut).filename().string()}});
      return 0;
    }

    if (ev->parsed()) {
      const TaskSuite suite = genTaskSuite(cfg.suiteSeed, cfg.nTrainTasks, cfg.nEvalTasks, cfg.nObjects, cfg.suite);
      const TaskSpec& task = findTask(suite, taskId);
      const std::vector<Problem> problems = sampleProblems(task, nProblems, combineSeed(evalSeed, 500 + taskId));
      EvalReport r;
      std::string name;
      if (systemName == "random") {
        r = evaluateRandom(problems, cfg.search(), evalSeed);
        name = "Random";
      } else if (systemName == "hand") {
        r = evaluate(HandCraftedPool{}, problems, cfg.search(), evalSeed);
        name = "HandCrafted";
      } else {
        if (ckptIn.empty()) throw std::invalid_argument("--system checkpoint needs --checkpoint");
        r = evaluate(loadPool(ckptIn), problems, cfg.search(), evalSeed);
        name = fs::path(ckptIn).stem().string();
      }
      const std::string csv = tableCsv({{std::to_string(task.nObjects) + " obj", name, r, std::nullopt}});
      if (evalOut.empty()) {
        std::cout << csv;
      } else {
        writeFile(evalOut, csv);
        recordManifest(dirOf(evalOut), "eval " + systemName + " task " + std::to_string(taskId), cfg,
                       {{"evalSeed", evalSeed}, {"n", nProblems}});
      }
      return 0;
    }

    if (report->parsed()) {
      // Rows from every evaluation CSV, curves from every curve CSV; sorted
      // paths keep the output independent of directory order.
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(runsDir))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      const fs::path csvPath = fs::absolute(csvOut).lexically_normal();
      std::string rows;
      std::vector<Series> series;
      for (const fs::path& f : files) {
        if (fs::absolute(f).lexically_normal() == csvPath) continue;
        const std::string text = readFile(f);
        const std::string header = text.substr(0, text.find('\n'));
        if (header == kTableHeader) {
          rows += text.substr(header.size() + 1);
        } else if (header == "iteration,evalSolvePct") {
          series.push_back({fs::relative(f, runsDir).string(), parseCurveCsv(text)});
        }
      }
      writeFile(csvOut, std::string(kTableHeader) + "\n" + rows);
      if (!svgOut.empty()) writeFile(svgOut, curvesSvg(series, "Eval solve rate during meta-training"));
      return 0;
    }

    if (run->parsed()) {
      if (!runOut.empty()) cfg.outDir = runOut;
      const ExperimentResult res = runExperiment(cfg);
      std::cout << tableCsv(res.rows);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
