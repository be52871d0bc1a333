#pragma once

// Task suites, evaluation of the four planning systems, and the experiment
// driver that writes the result table, learning curves and checkpoints.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamp/learn.hpp"

namespace tamp {

struct TaskSpec {
  int taskId = 0;
  int nObjects = 3;
  std::array<double, 3> kindMix{1.0 / 3, 1.0 / 3, 1.0 / 3};  // cylinder, bowl, vase
  double radiusLo = 0.3;
  double radiusHi = 0.45;
  double radiusScale = 1.0;  // fixed per task
  double lipScale = 1.0;     // fixed per task
  // Fraction of the start table's extent (per axis) objects are drawn in.
  double placementDensity = 1.0;
  std::uint64_t geometrySeed = 0;
  bool evalTask = false;

  void validate() const {
    if (nObjects < 1 || nObjects > kMaxObjects) throw std::invalid_argument("TaskSpec: bad nObjects");
    double sum = 0.0;
    for (double p : kindMix) {
      if (p < 0.0) throw std::invalid_argument("TaskSpec: negative kind probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("TaskSpec: kindMix must sum to 1");
    if (!(radiusLo > 0.0) || !(radiusHi >= radiusLo) || !(radiusScale > 0.0) || !(lipScale > 0.0))
      throw std::invalid_argument("TaskSpec: geometry parameters must be positive");
    if (!(placementDensity > 0.0 && placementDensity <= 1.0))
      throw std::invalid_argument("TaskSpec: placementDensity must lie in (0, 1]");
  }
};

/// The task's fixed object set: kinds and radii are a pure function of the
/// spec, so every problem of a task shares them.
inline std::vector<ObjectSpec> taskObjects(const TaskSpec& t) {
  t.validate();
  Rng rng(t.geometrySeed);
  std::discrete_distribution<int> kind(t.kindMix.begin(), t.kindMix.end());
  std::uniform_real_distribution<double> radius(t.radiusLo, t.radiusHi);
  std::vector<ObjectSpec> out;
  for (int id = 1; id <= t.nObjects; ++id) {
    const ObjectKind k = static_cast<ObjectKind>(kind(rng));
    const double r = radius(rng) * t.radiusScale;
    out.push_back(makeObject(id, k, r, t.lipScale));
  }
  return out;
}

/// Stratum-centered values in [lo, hi]: S equal strata, value at the center.
inline double stratumValue(int idx, int S, double lo, double hi) {
  return lo + (hi - lo) * (idx + 0.5) / S;
}

struct SuiteParams {
  std::array<double, 3> kindMix{1.0 / 3, 1.0 / 3, 1.0 / 3};
  double radiusLo = 0.3;
  double radiusHi = 0.45;
  double radiusScaleLo = 0.8;
  double radiusScaleHi = 1.3;
  double lipScaleLo = 0.7;
  double lipScaleHi = 1.3;
  double placementDensity = 1.0;
};

struct TaskSuite {
  std::vector<TaskSpec> train;
  std::vector<TaskSpec> eval;
};

/// Deterministic suite. Radius and lip scales come from nTrain + nEval
/// disjoint strata each; evaluation tasks take evenly spaced interior
/// radius strata, so their geometry lies between training tasks but never
/// coincides with one.
inline TaskSuite genTaskSuite(std::uint64_t seed, int nTrain, int nEval, int nObjects,
                              const SuiteParams& sp = {}) {
  if (nTrain < 1 || nEval < 1) throw std::invalid_argument("genTaskSuite: counts must be >= 1");
  const int S = nTrain + nEval;
  std::vector<int> evalStrata;
  for (int e = 0; e < nEval; ++e)
    evalStrata.push_back(static_cast<int>(std::floor((e + 0.5) * S / nEval)));
  Rng rng(seed);
  std::vector<int> lipOrder(static_cast<std::size_t>(S));
  std::iota(lipOrder.begin(), lipOrder.end(), 0);
  std::shuffle(lipOrder.begin(), lipOrder.end(), rng);

  TaskSuite suite;
  for (int s = 0; s < S; ++s) {
    TaskSpec t;
    t.nObjects = nObjects;
    t.kindMix = sp.kindMix;
    t.radiusLo = sp.radiusLo;
    t.radiusHi = sp.radiusHi;
    t.radiusScale = stratumValue(s, S, sp.radiusScaleLo, sp.radiusScaleHi);
    t.lipScale = stratumValue(lipOrder[static_cast<std::size_t>(s)], S, sp.lipScaleLo, sp.lipScaleHi);
    t.placementDensity = sp.placementDensity;
    t.geometrySeed = combineSeed(seed, static_cast<std::uint64_t>(s) + 1000);
    t.evalTask = std::find(evalStrata.begin(), evalStrata.end(), s) != evalStrata.end();
    (t.evalTask ? suite.eval : suite.train).push_back(t);
  }
  int id = 0;
  for (TaskSpec& t : suite.train) t.taskId = id++;
  for (TaskSpec& t : suite.eval) t.taskId = id++;
  return suite;
}

/// Rejection-samples a non-overlapping layout on the start table, gripper
/// at home; the goal is every object on the goal table.
inline Problem sampleProblem(const TaskSpec& task, Rng& rng) {
  const std::vector<ObjectSpec> specs = taskObjects(task);
  const Rect& table = world::kStartTable;
  const Pose2 c = table.center();
  const Pose2 h = task.placementDensity * table.halfExtents();
  const Rect area{c.x - h.x, c.y - h.y, c.x + h.x, c.y + h.y};
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    WorldState w;
    bool ok = true;
    for (const ObjectSpec& s : specs) {
      const Rect r = area.eroded(s.radius);
      if (!r.valid()) {
        ok = false;
        break;
      }
      std::uniform_real_distribution<double> ux(r.xmin, r.xmax);
      std::uniform_real_distribution<double> uy(r.ymin, r.ymax);
      const double x = ux(rng);
      const Pose2 p{x, uy(rng)};
      for (const ObjectState& o : w.objects)
        if (dist(o.pose, p) < o.spec.radius + s.radius) ok = false;
      if (!ok) break;
      w.objects.push_back({s, p, Surface::StartTable});
    }
    if (ok) return {w, allOnGoal(w)};
  }
  throw std::runtime_error("sampleProblem: no layout found in 1000 attempts (density too high)");
}

inline std::vector<Problem> sampleProblems(const TaskSpec& task, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Problem> out;
  for (int i = 0; i < n; ++i) out.push_back(sampleProblem(task, rng));
  return out;
}

inline TaskDataset makeDataset(const TaskSpec& task, int nTrain, int nTest, std::uint64_t seed) {
  TaskDataset d;
  d.taskId = task.taskId;
  d.train = sampleProblems(task, nTrain, combineSeed(seed, 1));
  d.test = sampleProblems(task, nTest, combineSeed(seed, 2));
  return d;
}

// Evaluation --------------------------------------------------------------------

struct ProblemTrace {
  bool solved = false;
  int searchEffort = 0;
};

struct EvalReport {
  double solvePct = 0.0;
  double searchEffort = 0.0;  // mean over solved problems
  std::optional<int> trainItersTo50;
  double wallTrainSeconds = 0.0;
  std::vector<ProblemTrace> perProblem;
};

inline EvalReport summarize(std::vector<ProblemTrace> traces) {
  EvalReport r;
  int solved = 0;
  long effort = 0;
  for (const ProblemTrace& t : traces)
    if (t.solved) {
      ++solved;
      effort += t.searchEffort;
    }
  if (!traces.empty()) r.solvePct = 100.0 * solved / static_cast<double>(traces.size());
  if (solved > 0) r.searchEffort = static_cast<double>(effort) / solved;
  r.perProblem = std::move(traces);
  return r;
}

/// A problem only counts as solved if the returned plan survives replay.
inline ProblemTrace traceOf(const Problem& p, const PlanOutcome& o, const MotionBudget& mb) {
  ProblemTrace t;
  t.searchEffort = o.searchEffort;
  t.solved = o.plan.has_value() && validateSolution(p, *o.plan, o.paths, mb);
  return t;
}

template <ThetaSource S>
EvalReport evaluate(const S& system, const std::vector<Problem>& problems, const SearchOptions& opt,
                    std::uint64_t seed) {
  if (problems.empty()) throw std::invalid_argument("evaluate: no problems");
  std::vector<ProblemTrace> traces;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    Rng rng(combineSeed(seed, i));
    traces.push_back(traceOf(problems[i], plan(tabletopDomain(), problems[i], system, opt, rng), opt.motion));
  }
  return summarize(std::move(traces));
}

inline EvalReport evaluateRandom(const std::vector<Problem>& problems, const SearchOptions& opt,
                                 std::uint64_t seed) {
  if (problems.empty()) throw std::invalid_argument("evaluate: no problems");
  std::vector<ProblemTrace> traces;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    Rng rng(combineSeed(seed, i));
    traces.push_back(traceOf(problems[i], planRandom(tabletopDomain(), problems[i], opt, rng), opt.motion));
  }
  return summarize(std::move(traces));
}

// Experiment ------------------------------------------------------------------

struct RunConfig {
  LearnerConfig learner;
  std::uint64_t suiteSeed = 1;
  int nTrainTasks = 6;
  int nEvalTasks = 3;
  int nObjects = 3;
  SuiteParams suite;
  int trainProblemsPerTask = 16;
  int testProblemsPerTask = 16;
  int nEvalProblems = 50;
  int probeProblems = 12;
  int probeEvery = 50;
  int adaptItersAD = 10;
  int adaptBatchSS = 4;
  double wallSeconds = 30.0;
  bool recordWallTime = false;
  bool svg = false;
  std::string outDir = "run";

  void validate() const {
    learner.validate();
    if (nTrainTasks < 1 || nEvalTasks < 1) throw std::invalid_argument("RunConfig: need >= 1 task");
    if (trainProblemsPerTask < 1 || testProblemsPerTask < 1 || nEvalProblems < 1 || probeProblems < 1)
      throw std::invalid_argument("RunConfig: problem counts must be >= 1");
    if (adaptItersAD < 0 || adaptBatchSS < 1 || probeEvery < 0)
      throw std::invalid_argument("RunConfig: bad adaptation settings");
  }

  SearchOptions search() const {
    return {learner.candidateBudget, learner.motion, learner.maxPlanLength, wallSeconds};
  }
};

inline void to_json(nlohmann::json& j, const SuiteParams& s) {
  j = {{"kindMix", s.kindMix},           {"radiusLo", s.radiusLo},
       {"radiusHi", s.radiusHi},         {"radiusScaleLo", s.radiusScaleLo},
       {"radiusScaleHi", s.radiusScaleHi}, {"lipScaleLo", s.lipScaleLo},
       {"lipScaleHi", s.lipScaleHi},     {"placementDensity", s.placementDensity}};
}
inline void from_json(const nlohmann::json& j, SuiteParams& s) {
  const SuiteParams d;
  s.kindMix = j.value("kindMix", d.kindMix);
  s.radiusLo = j.value("radiusLo", d.radiusLo);
  s.radiusHi = j.value("radiusHi", d.radiusHi);
  s.radiusScaleLo = j.value("radiusScaleLo", d.radiusScaleLo);
  s.radiusScaleHi = j.value("radiusScaleHi", d.radiusScaleHi);
  s.lipScaleLo = j.value("lipScaleLo", d.lipScaleLo);
  s.lipScaleHi = j.value("lipScaleHi", d.lipScaleHi);
  s.placementDensity = j.value("placementDensity", d.placementDensity);
}

inline void to_json(nlohmann::json& j, const TaskSpec& t) {
  j = {{"taskId", t.taskId},         {"nObjects", t.nObjects},
       {"kindMix", t.kindMix},       {"radiusRange", {t.radiusLo, t.radiusHi}},
       {"geometryJitter", {{"radiusScale", t.radiusScale}, {"lipScale", t.lipScale}}},
       {"placementDensity", t.placementDensity},
       {"geometrySeed", t.geometrySeed}, {"evalTask", t.evalTask}};
}
inline void from_json(const nlohmann::json& j, TaskSpec& t) {
  t.taskId = j.at("taskId").get<int>();
  t.nObjects = j.at("nObjects").get<int>();
  t.kindMix = j.at("kindMix").get<std::array<double, 3>>();
  const auto rr = j.at("radiusRange").get<std::array<double, 2>>();
  t.radiusLo = rr[0];
  t.radiusHi = rr[1];
  t.radiusScale = j.at("geometryJitter").at("radiusScale").get<double>();
  t.lipScale = j.at("geometryJitter").at("lipScale").get<double>();
  t.placementDensity = j.at("placementDensity").get<double>();
  t.geometrySeed = j.at("geometrySeed").get<std::uint64_t>();
  t.evalTask = j.value("evalTask", false);
  t.validate();
}

inline void to_json(nlohmann::json& j, const TaskSuite& s) { j = {{"train", s.train}, {"eval", s.eval}}; }
inline void from_json(const nlohmann::json& j, TaskSuite& s) {
  s.train = j.at("train").get<std::vector<TaskSpec>>();
  s.eval = j.at("eval").get<std::vector<TaskSpec>>();
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"learner", c.learner},
       {"suiteSeed", c.suiteSeed},
       {"nTrainTasks", c.nTrainTasks},
       {"nEvalTasks", c.nEvalTasks},
       {"nObjects", c.nObjects},
       {"suite", c.suite},
       {"trainProblemsPerTask", c.trainProblemsPerTask},
       {"testProblemsPerTask", c.testProblemsPerTask},
       {"nEvalProblems", c.nEvalProblems},
       {"probeProblems", c.probeProblems},
       {"probeEvery", c.probeEvery},
       {"adaptItersAD", c.adaptItersAD},
       {"adaptBatchSS", c.adaptBatchSS},
       {"wallSeconds", c.wallSeconds},
       {"recordWallTime", c.recordWallTime},
       {"svg", c.svg},
       {"outDir", c.outDir}};
}
inline void from_json(const nlohmann::json& j, RunConfig& c) {
  const RunConfig d;
  c.learner = j.value("learner", d.learner);
  c.suiteSeed = j.value("suiteSeed", d.suiteSeed);
  c.nTrainTasks = j.value("nTrainTasks", d.nTrainTasks);
  c.nEvalTasks = j.value("nEvalTasks", d.nEvalTasks);
  c.nObjects = j.value("nObjects", d.nObjects);
  c.suite = j.value("suite", d.suite);
  c.trainProblemsPerTask = j.value("trainProblemsPerTask", d.trainProblemsPerTask);
  c.testProblemsPerTask = j.value("testProblemsPerTask", d.testProblemsPerTask);
  c.nEvalProblems = j.value("nEvalProblems", d.nEvalProblems);
  c.probeProblems = j.value("probeProblems", d.probeProblems);
  c.probeEvery = j.value("probeEvery", d.probeEvery);
  c.adaptItersAD = j.value("adaptItersAD", d.adaptItersAD);
  c.adaptBatchSS = j.value("adaptBatchSS", d.adaptBatchSS);
  c.wallSeconds = j.value("wallSeconds", d.wallSeconds);
  c.recordWallTime = j.value("recordWallTime", d.recordWallTime);
  c.svg = j.value("svg", d.svg);
  c.outDir = j.value("outDir", d.outDir);
  c.validate();
}

/// 64-bit FNV-1a; used for manifest config hashes.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Everything derived from a RunConfig before training.
struct Workspace {
  TaskSuite suite;
  std::vector<TaskDataset> trainData;
  std::vector<TaskDataset> evalData;  // train split = final-task adaptation data
  std::vector<std::vector<Problem>> evalProblems;  // per eval task
  std::vector<Problem> probeProblems;
};

inline Workspace prepare(const RunConfig& cfg) {
  Workspace ws;
  ws.suite = genTaskSuite(cfg.suiteSeed, cfg.nTrainTasks, cfg.nEvalTasks, cfg.nObjects, cfg.suite);
  for (const TaskSpec& t : ws.suite.train)
    ws.trainData.push_back(makeDataset(t, cfg.trainProblemsPerTask, cfg.testProblemsPerTask,
                                       combineSeed(cfg.suiteSeed, 100 + t.taskId)));
  const int nE = static_cast<int>(ws.suite.eval.size());
  for (int e = 0; e < nE; ++e) {
    const TaskSpec& t = ws.suite.eval[static_cast<std::size_t>(e)];
    ws.evalData.push_back(makeDataset(t, cfg.trainProblemsPerTask, cfg.testProblemsPerTask,
                                      combineSeed(cfg.suiteSeed, 100 + t.taskId)));
    const int n = cfg.nEvalProblems / nE + (e < cfg.nEvalProblems % nE ? 1 : 0);
    ws.evalProblems.push_back(sampleProblems(t, n, combineSeed(cfg.suiteSeed, 500 + t.taskId)));
    const int m = cfg.probeProblems / nE + (e < cfg.probeProblems % nE ? 1 : 0);
    std::vector<Problem> probes = sampleProblems(t, m, combineSeed(cfg.suiteSeed, 700 + t.taskId));
    ws.probeProblems.insert(ws.probeProblems.end(), probes.begin(), probes.end());
  }
  return ws;
}

inline std::vector<Problem> flatten(const std::vector<std::vector<Problem>>& v) {
  std::vector<Problem> out;
  for (const auto& x : v) out.insert(out.end(), x.begin(), x.end());
  return out;
}

/// Merges per-task reports into one, weighting by problem count.
inline EvalReport mergeReports(const std::vector<EvalReport>& parts) {
  std::vector<ProblemTrace> all;
  for (const EvalReport& r : parts) all.insert(all.end(), r.perProblem.begin(), r.perProblem.end());
  return summarize(std::move(all));
}

/// Final-task AD adaptation: adaptItersAD batches of the task's train split.
inline SpecializerPool adaptAD(const SpecializerPool& prior, const TaskDataset& task,
                               const RunConfig& cfg, std::uint64_t seed) {
  LearnerConfig lc = cfg.learner;
  lc.nIters = cfg.adaptItersAD;
  Rng rng(seed);
  if (lc.nIters == 0) return prior;
  return adLearn(tabletopDomain(), task.train, prior, lc, rng, nullptr, task.taskId);
}

/// Final-task SS adaptation on one batch of the task's train split.
inline Subset adaptSS(const SpecializerPool& prior, const TaskDataset& task, const RunConfig& cfg,
                      std::uint64_t seed) {
  const std::size_t n = std::min<std::size_t>(task.train.size(), static_cast<std::size_t>(cfg.adaptBatchSS));
  const std::vector<Problem> batch(task.train.begin(), task.train.begin() + static_cast<std::ptrdiff_t>(n));
  return ssLearn(tabletopDomain(), batch, prior, cfg.learner.k, cfg.search(), seed).subset;
}

inline EvalReport evaluateAdapted(const SpecializerPool& prior, Learner learner, const Workspace& ws,
                                  const RunConfig& cfg, std::uint64_t seed) {
  std::vector<EvalReport> parts;
  for (std::size_t e = 0; e < ws.evalData.size(); ++e) {
    const std::uint64_t s = combineSeed(seed, e);
    if (learner == Learner::AD) {
      const SpecializerPool adapted = adaptAD(prior, ws.evalData[e], cfg, combineSeed(s, 1));
      parts.push_back(evaluate(adapted, ws.evalProblems[e], cfg.search(), combineSeed(s, 2)));
    } else {
      const Subset sub = adaptSS(prior, ws.evalData[e], cfg, combineSeed(s, 1));
      parts.push_back(evaluate(SubsetView(prior, sub), ws.evalProblems[e], cfg.search(), combineSeed(s, 2)));
    }
  }
  return mergeReports(parts);
}

struct CurvePoint {
  int iteration = 0;
  double evalSolvePct = 0.0;
};

struct MetaRun {
  SpecializerPool pool;
  std::vector<CurvePoint> curve;
  std::vector<MetaRecord> log;
  double seconds = 0.0;
};

/// Meta-trains from a seeded random pool, probing the current weights on
/// the probe problems (without adaptation) every probeEvery iterations.
inline MetaRun metaTrain(const Workspace& ws, const RunConfig& cfg, Learner learner,
                         std::uint64_t seed) {
  MetaRun run;
  Rng initRng(combineSeed(seed, 11));
  const SpecializerPool init = SpecializerPool::random(initRng);
  Rng rng(combineSeed(seed, 12));
  const SearchOptions probeOpt{cfg.learner.candidateBudget, cfg.learner.motion, cfg.learner.maxPlanLength, 0.0};
  const MetaProbe probe = [&](int iter, const SpecializerPool& pool) {
    run.curve.push_back({iter, evaluate(pool, ws.probeProblems, probeOpt, combineSeed(seed, 13)).solvePct});
  };
  const auto t0 = std::chrono::steady_clock::now();
  run.pool = metaLearn(tabletopDomain(), ws.trainData, init, cfg.learner, learner, rng, &run.log,
                       probe, cfg.probeEvery);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

inline std::optional<int> itersTo50(const std::vector<CurvePoint>& curve) {
  for (const CurvePoint& p : curve)
    if (p.evalSolvePct >= 50.0) return p.iteration;
  return std::nullopt;
}

// Output ------------------------------------------------------------------------

inline std::string fmt(double v, int prec = 1) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

struct TableRow {
  std::string setting;
  std::string system;
  EvalReport report;
  std::optional<double> trainHours;
};

inline constexpr const char* kTableHeader =
    "Setting,System,SolvePct,TrainItersTo50,SearchEffort,TrainHours";

inline std::string tableCsv(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os << kTableHeader << '\n';
  for (const TableRow& r : rows) {
    os << r.setting << ',' << r.system << ',' << fmt(r.report.solvePct) << ','
       << (r.report.trainItersTo50 ? std::to_string(*r.report.trainItersTo50) : "N/A") << ','
       << (r.report.perProblem.empty() || r.report.solvePct == 0.0 ? "N/A" : fmt(r.report.searchEffort, 2))
       << ',' << (r.trainHours ? fmt(*r.trainHours, 4) : "N/A") << '\n';
  }
  return os.str();
}

inline std::string curveCsv(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << "iteration,evalSolvePct\n";
  for (const CurvePoint& p : curve) os << p.iteration << ',' << fmt(p.evalSolvePct) << '\n';
  return os.str();
}

/// Parses a curve CSV written by curveCsv.
inline std::vector<CurvePoint> parseCurveCsv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  if (line != "iteration,evalSolvePct") throw std::invalid_argument("not a curve CSV");
  std::vector<CurvePoint> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("bad curve row: " + line);
    out.push_back({std::stoi(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
  }
  return out;
}

struct Series {
  std::string name;
  std::vector<CurvePoint> points;
};

/// Minimal line plot: one polyline per series, y axis 0..100 %.
inline std::string curvesSvg(const std::vector<Series>& series, const std::string& title) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  int xmax = 1;
  for (const Series& s : series)
    for (const CurvePoint& p : s.points) xmax = std::max(xmax, p.iteration);
  auto sx = [&](double x) { return L + (W - L - R) * x / xmax; };
  auto sy = [&](double y) { return H - B - (H - T - B) * y / 100.0; };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\">"
     << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << sy(0) << "\" x2=\"" << W - R << "\" y2=\"" << sy(0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << sy(0) << "\" x2=\"" << L << "\" y2=\"" << sy(100)
     << "\" stroke=\"black\"/>\n";
  for (int y = 0; y <= 100; y += 25)
    os << "<text x=\"" << L - 8 << "\" y=\"" << sy(y) + 4
       << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << y << "</text>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">iteration (max "
     << xmax << ")</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kColors[i % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const CurvePoint& p : series[i].points) os << fmt(sx(p.iteration), 2) << ',' << fmt(sy(p.evalSolvePct), 2) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 16 * (i + 1)
       << "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\" fill=\"" << color
       << "\">" << series[i].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void writeFile(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

inline std::string readFile(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

struct ExperimentResult {
  std::vector<TableRow> rows;
  std::vector<CurvePoint> curveAD;
  std::vector<CurvePoint> curveSS;
  SpecializerPool metaAD;
  SpecializerPool metaSS;
};

/// Suite generation, meta-training of both learners, final-task adaptation
/// and evaluation of all four systems. Writes table.csv, curve_ad.csv,
/// curve_ss.csv, meta_ad.json, meta_ss.json and manifest.json to outDir
/// (when non-empty).
inline ExperimentResult runExperiment(const RunConfig& cfg) {
  cfg.validate();
  const Workspace ws = prepare(cfg);
  const std::uint64_t seed = combineSeed(cfg.suiteSeed, cfg.learner.seed);
  const std::string setting = std::to_string(cfg.nObjects) + " obj";
  const std::vector<Problem> evalAll = flatten(ws.evalProblems);

  ExperimentResult res;
  const MetaRun ad = metaTrain(ws, cfg, Learner::AD, combineSeed(seed, 1));
  const MetaRun ss = metaTrain(ws, cfg, Learner::SS, combineSeed(seed, 2));
  res.curveAD = ad.curve;
  res.curveSS = ss.curve;
  res.metaAD = ad.pool;
  res.metaSS = ss.pool;

  const std::uint64_t evalSeed = combineSeed(seed, 3);
  EvalReport rnd = evaluateRandom(evalAll, cfg.search(), evalSeed);
  EvalReport hand = evaluate(HandCraftedPool{}, evalAll, cfg.search(), evalSeed);
  EvalReport mss = evaluateAdapted(ss.pool, Learner::SS, ws, cfg, evalSeed);
  EvalReport mad = evaluateAdapted(ad.pool, Learner::AD, ws, cfg, evalSeed);
  mss.trainItersTo50 = itersTo50(ss.curve);
  mad.trainItersTo50 = itersTo50(ad.curve);
  mss.wallTrainSeconds = ss.seconds;
  mad.wallTrainSeconds = ad.seconds;
  auto hours = [&](double s) -> std::optional<double> {
    if (!cfg.recordWallTime) return std::nullopt;
    return s / 3600.0;
  };
  res.rows = {{setting, "Random", rnd, std::nullopt},
              {setting, "HandCrafted", hand, std::nullopt},
              {setting, "MetaSS", mss, hours(ss.seconds)},
              {setting, "MetaAD", mad, hours(ad.seconds)}};

  if (!cfg.outDir.empty()) {
    const std::filesystem::path dir(cfg.outDir);
    writeFile(dir / "table.csv", tableCsv(res.rows));
    writeFile(dir / "curve_ad.csv", curveCsv(ad.curve));
    writeFile(dir / "curve_ss.csv", curveCsv(ss.curve));
    writeFile(dir / "meta_ad.json", nlohmann::json(ad.pool).dump() + "\n");
    writeFile(dir / "meta_ss.json", nlohmann::json(ss.pool).dump() + "\n");
    if (cfg.svg)
      writeFile(dir / "curves.svg", curvesSvg({{"meta-AD", ad.curve}, {"meta-SS", ss.curve}},
                                              "Eval solve rate during meta-training"));
    const nlohmann::json config = cfg;
    const nlohmann::json manifest = {{"command", "run"},
                                     {"config", config},
                                     {"configHash", hex64(fnv1a(config.dump()))},
                                     {"seeds", {{"suite", cfg.suiteSeed}, {"learner", cfg.learner.seed}}}};
    writeFile(dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return res;
}

}  // namespace tamp
