#pragma once

// Planners over a specializer pool (strict search, annealed PlanT, and the
// random-sampling baseline) and the learners built on them: alternating
// descent, subset selection and first-order meta-learning.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamp/losses.hpp"
#include "tamp/motion.hpp"
#include "tamp/nn.hpp"
#include "tamp/specializer.hpp"
#include "tamp/symbolic.hpp"
#include "tamp/world.hpp"

namespace tamp {

struct Problem {
  WorldState init;
  PlanningState goal;
};

struct TaskDataset {
  int taskId = 0;
  std::vector<Problem> train;
  std::vector<Problem> test;
};

struct LearnerConfig {
  int nIters = 200;  // AD iterations when run standalone
  int nPlans = 8;
  double T0 = 1.0;
  double tempDecay = 0.999;
  double tempFloor = 1e-3;
  double alpha = 1e-2;  // inner (AD) learning rate
  double beta = 1e-3;   // outer (meta) learning rate
  int nGradEst = 4;
  int k = 1;
  int candidateBudget = 64;
  std::uint64_t seed = 0;
  int batchSize = 1;     // problems averaged per AD step
  int innerIters = 10;   // AD steps inside metaLearn
  int outerIters = 2000;
  int maxPlanLength = -1;  // negative: lower bound + 4
  MotionBudget motion;

  void validate() const {
    if (nIters < 0 || nPlans < 1 || nGradEst < 1 || k < 1 || candidateBudget < 0 || batchSize < 1 ||
        innerIters < 0 || outerIters < 0)
      throw std::invalid_argument("LearnerConfig: counts out of range");
    if (!(T0 > 0.0) || !(tempFloor > 0.0) || !(alpha > 0.0) || !(beta > 0.0))
      throw std::invalid_argument("LearnerConfig: rates must be positive");
    if (!(tempDecay > 0.0 && tempDecay < 1.0))
      throw std::invalid_argument("LearnerConfig: tempDecay must lie in (0, 1)");
  }
};

class NoFeasiblePlan : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// T(t) = max(T0 * decay^t, floor).
inline double temperature(long t, const LearnerConfig& cfg) {
  if (t < 1) throw std::invalid_argument("temperature: t must be >= 1");
  return std::max(cfg.T0 * std::pow(cfg.tempDecay, static_cast<double>(t)), cfg.tempFloor);
}

// Binding ---------------------------------------------------------------------

/// Memoizes motion queries within one planning call. Keys hash the full
/// query geometry, which also seeds the planner, so a hit returns exactly
/// what a fresh query would.
class MotionCache {
 public:
  MotionCache(MotionBudget budget, std::uint64_t base) : budget_(budget), base_(base) {}

  const MotionResult& query(const WorldState& w, const ActionInstance& a) {
    const Obstacles obs = stepObstacles(w, a);
    const double fp = footprintOf(w);
    const std::uint64_t key = querySeed(base_, w.eeConf, a.theta, fp, obs);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Rng rng(key);
    return cache_.emplace(key, rrtConnect(obs, w.eeConf, a.theta, fp, budget_, rng)).first->second;
  }

 private:
  MotionBudget budget_;
  std::uint64_t base_;
  std::unordered_map<std::uint64_t, MotionResult> cache_;
};

struct Binding {
  Plan plan;  // bound prefix; complete unless failedStep != 0
  std::vector<std::vector<Pose2>> paths;
  double loss = 0.0;
  int failedStep = 0;  // 1-based step that stopped the binding, 0 if none
  bool motionFailed = false;
  WorldState final;
};

/// Binds theta for every step of `skeleton` with `src`, checking motion
/// before the step's loss. Strict mode stops at the first nonzero loss;
/// otherwise losses accumulate and only motion failures stop. Motion is
/// only checked while every earlier step was legal: past that point the
/// optimistic rollout is not a world the robot can be in.
template <ThetaSource S>
Binding bindSkeleton(const Domain& domain, const Problem& p, const Plan& skeleton, const S& src,
                     bool strict, MotionCache& motion, const PredicateLossRegistry& registry) {
  const std::vector<int> objects = objectsOf(abstractState(p.init));
  Binding b;
  WorldState w = p.init;
  bool legalSoFar = true;
  for (std::size_t k = 0; k < skeleton.size(); ++k) {
    const PlanStep& s = skeleton[k];
    const int j = static_cast<int>(k) + 1;
    const ActionInstance a{s.schema, s.obj, src.propose(s.schema, s.spec, w, s.obj, j)};
    PlanStep bound = s;
    bound.theta = a.theta;
    b.plan.push_back(bound);
    if (legalSoFar) {
      const MotionResult& m = motion.query(w, a);
      if (!m.feasible) {
        b.failedStep = j;
        b.motionFailed = true;
        break;
      }
      b.paths.push_back(m.path);
    } else {
      b.paths.emplace_back();
    }
    double stepLoss = 0.0;
    for (const Fluent& f : ground(domain, s.schema, s.obj, objects).add.fluents())
      stepLoss += registry.at(f.predicate)(w, a).value;
    b.loss += stepLoss;
    if (stepLoss > 0.0) {
      legalSoFar = false;
      if (strict) {
        b.failedStep = j;
        break;
      }
    }
    w = applyAction(w, a);
  }
  b.final = std::move(w);
  return b;
}

inline const Domain& tabletopDomain() {
  static const Domain d = buildTabletopDomain();
  return d;
}

inline const PredicateLossRegistry& domainLosses() {
  static const PredicateLossRegistry r = registerDomainLosses();
  return r;
}

template <ThetaSource S>
std::array<int, kNumSchemas> specCounts(const S& src) {
  std::array<int, kNumSchemas> c{};
  for (Schema s : kAllSchemas) c[static_cast<int>(s)] = src.count(s);
  return c;
}

// Plan ------------------------------------------------------------------------

struct SearchOptions {
  int candidateBudget = 64;
  MotionBudget motion;
  int maxPlanLength = -1;
  double wallSeconds = 0.0;  // 0 disables the wall-clock limit
};

struct PlanOutcome {
  std::optional<Plan> plan;
  std::vector<std::vector<Pose2>> paths;
  int searchEffort = 0;
};

class WallClock {
 public:
  explicit WallClock(double limitSeconds)
      : limit_(limitSeconds), start_(std::chrono::steady_clock::now()) {}
  bool expired() const {
    if (limit_ <= 0.0) return false;
    const std::chrono::duration<double> e = std::chrono::steady_clock::now() - start_;
    return e.count() > limit_;
  }

 private:
  double limit_;
  std::chrono::steady_clock::time_point start_;
};

/// Returns the first enumerated candidate whose binding has zero loss and
/// feasible motion. Search effort counts the candidates examined. A
/// candidate that fails at step j rules out every plan sharing its first j
/// steps, since bindings depend only on the prefix.
template <ThetaSource S>
PlanOutcome plan(const Domain& domain, const Problem& p, const S& src, const SearchOptions& opt,
                 Rng& rng) {
  PlanOutcome out;
  MotionCache motion(opt.motion, rng());
  PlanGenerator gen(domain, specCounts(src), abstractState(p.init), p.goal,
                    PlanGenerator::Options{opt.maxPlanLength});
  const WallClock clock(opt.wallSeconds);
  while (out.searchEffort < opt.candidateBudget && !clock.expired()) {
    const std::optional<Plan> skeleton = gen.next();
    if (!skeleton.has_value()) break;
    ++out.searchEffort;
    Binding b = bindSkeleton(domain, p, *skeleton, src, true, motion, domainLosses());
    if (b.failedStep == 0) {
      out.plan = std::move(b.plan);
      out.paths = std::move(b.paths);
      return out;
    }
    gen.pruneLastPrefix(static_cast<std::size_t>(b.failedStep));
  }
  return out;
}

/// Backtracking search that binds each step with up to `samplesPerNode`
/// draws of the uniform sampler. Every draw is motion-checked and counts as
/// one candidate against the budget.
inline PlanOutcome planRandom(const Domain& domain, const Problem& p, const SearchOptions& opt,
                              Rng& rng, int samplesPerNode = 3) {
  PlanOutcome out;
  MotionCache motion(opt.motion, rng());
  PlanGenerator gen(domain, {1, 1, 1, 1}, abstractState(p.init), p.goal,
                    PlanGenerator::Options{opt.maxPlanLength});
  const WallClock clock(opt.wallSeconds);
  const PredicateLossRegistry& registry = domainLosses();
  const std::vector<int> objects = objectsOf(abstractState(p.init));

  Plan bound;
  std::vector<std::vector<Pose2>> paths;
  bool stop = false;
  std::function<bool(const Plan&, std::size_t, const WorldState&)> dfs =
      [&](const Plan& sk, std::size_t k, const WorldState& w) -> bool {
    if (k == sk.size()) return true;
    const PlanStep& s = sk[k];
    for (int draw = 0; draw < samplesPerNode; ++draw) {
      if (out.searchEffort >= opt.candidateBudget || clock.expired()) {
        stop = true;
        return false;
      }
      const ActionInstance a{s.schema, s.obj, randomSampler(w, s.obj, s.schema, rng)};
      const MotionResult& m = motion.query(w, a);
      ++out.searchEffort;
      double loss = 0.0;
      if (m.feasible)
        for (const Fluent& f : ground(domain, s.schema, s.obj, objects).add.fluents())
          loss += registry.at(f.predicate)(w, a).value;
      if (!m.feasible || loss > 0.0) continue;
      PlanStep st = s;
      st.theta = a.theta;
      bound.push_back(st);
      paths.push_back(m.path);
      if (dfs(sk, k + 1, applyAction(w, a))) return true;
      bound.pop_back();
      paths.pop_back();
      if (stop) return false;
    }
    return false;
  };

  while (!stop && out.searchEffort < opt.candidateBudget) {
    const std::optional<Plan> sk = gen.next();
    if (!sk.has_value()) break;
    bound.clear();
    paths.clear();
    if (dfs(*sk, 0, p.init)) {
      out.plan = bound;
      out.paths = paths;
      return out;
    }
  }
  return out;
}

/// Independent check of a returned solution: replays the plan in the world
/// model, requires every action legal and the goal reached, and re-checks
/// each path segment for collisions.
inline bool validateSolution(const Problem& p, const Plan& plan,
                             const std::vector<std::vector<Pose2>>& paths,
                             const MotionBudget& budget = {}) {
  if (!fullyBound(plan) || paths.size() != plan.size()) return false;
  WorldState w = p.init;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const ActionInstance a{plan[k].schema, plan[k].obj, *plan[k].theta};
    if (!w.find(a.obj)) return false;
    const bool holdsOk = isGraspType(a.schema) ? !w.held.has_value() : w.held == a.obj;
    if (!holdsOk || !actionLegal(w, a)) return false;
    const std::vector<Pose2>& path = paths[k];
    if (path.empty() || !(path.front() == w.eeConf) || !(path.back() == a.theta)) return false;
    const Obstacles obs = stepObstacles(w, a);
    const double fp = footprintOf(w);
    for (std::size_t i = 1; i < path.size(); ++i)
      if (!segmentClear(obs, path[i - 1], path[i], fp, budget.stepSize / 2.0)) return false;
    w = applyAction(w, a);
  }
  return solved(w) && abstractState(w).includes(p.goal);
}

// PlanT -----------------------------------------------------------------------

/// Index drawn with probability proportional to exp(-loss / T). Ties and
/// underflow resolve toward the lowest index.
inline int boltzmannSample(const std::vector<double>& losses, double T, Rng& rng) {
  if (losses.empty()) throw std::invalid_argument("boltzmannSample: no candidates");
  const double lo = *std::min_element(losses.begin(), losses.end());
  std::vector<double> w(losses.size());
  double z = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    w[i] = std::exp(-(losses[i] - lo) / T);
    z += w[i];
  }
  std::uniform_real_distribution<double> u(0.0, z);
  const double r = u(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (r < acc) return static_cast<int>(i);
  }
  return static_cast<int>(std::min_element(losses.begin(), losses.end()) - losses.begin());
}

struct PlanTOptions {
  int nPlans = 8;
  int candidateBudget = 64;  // skeletons examined per round
  double tempFloor = 1e-3;
  int maxReinitRounds = 10;
  int maxPlanLength = -1;
  MotionBudget motion;
};

inline PlanTOptions planTOptions(const LearnerConfig& cfg) {
  return {cfg.nPlans, cfg.candidateBudget, cfg.tempFloor, 10, cfg.maxPlanLength, cfg.motion};
}

struct PlanTResult {
  Plan plan;
  double loss = 0.0;
  int chosen = 0;
  std::vector<Plan> candidates;
  std::vector<double> losses;
  int reinitRounds = 0;
};

/// Draws up to nPlans motion-feasible bound plans, scores each by its
/// trajectory loss and samples one at temperature T; at or below the floor
/// it returns the first minimum. Specializer indices are visited in a fresh
/// random order each call. When nothing is scored, the highest-index
/// specializer of each schema with alternatives is re-initialized and the
/// round repeats.
inline PlanTResult planT(const Domain& domain, const Problem& p, SpecializerPool& pool, double T,
                         const PlanTOptions& opt, Rng& rng) {
  if (opt.nPlans < 1) throw std::invalid_argument("planT: nPlans must be >= 1");
  PlanTResult res;
  for (int round = 0; round <= opt.maxReinitRounds; ++round) {
    std::array<std::vector<int>, kNumSchemas> perm;
    for (Schema s : kAllSchemas) {
      auto& v = perm[static_cast<int>(s)];
      v.resize(static_cast<std::size_t>(pool.count(s)));
      for (int i = 0; i < pool.count(s); ++i) v[static_cast<std::size_t>(i)] = i;
      std::shuffle(v.begin(), v.end(), rng);
    }
    const SubsetView view(pool, perm);
    MotionCache motion(opt.motion, rng());
    PlanGenerator gen(domain, pool.sizes(), abstractState(p.init), p.goal,
                      PlanGenerator::Options{opt.maxPlanLength});
    res.candidates.clear();
    res.losses.clear();
    for (int examined = 0; examined < opt.candidateBudget &&
                           static_cast<int>(res.candidates.size()) < opt.nPlans;
         ++examined) {
      const std::optional<Plan> sk = gen.next();
      if (!sk.has_value()) break;
      Binding b = bindSkeleton(domain, p, *sk, view, false, motion, domainLosses());
      if (b.motionFailed) {
        gen.pruneLastPrefix(static_cast<std::size_t>(b.failedStep));
        continue;
      }
      for (PlanStep& st : b.plan) st.spec = view.poolIndex(st.schema, st.spec);
      res.candidates.push_back(std::move(b.plan));
      res.losses.push_back(b.loss);
    }
    if (!res.candidates.empty()) {
      if (T <= opt.tempFloor)
        res.chosen = static_cast<int>(std::min_element(res.losses.begin(), res.losses.end()) -
                                      res.losses.begin());
      else
        res.chosen = boltzmannSample(res.losses, T, rng);
      res.plan = res.candidates[static_cast<std::size_t>(res.chosen)];
      res.loss = res.losses[static_cast<std::size_t>(res.chosen)];
      return res;
    }
    if (round == opt.maxReinitRounds) break;
    ++res.reinitRounds;
    bool any = false;
    for (Schema s : kAllSchemas) {
      if (pool.count(s) >= 2) {
        pool.reinit(s, pool.count(s) - 1, rng);
        any = true;
      }
    }
    if (!any)
      for (Schema s : kAllSchemas) pool.reinit(s, pool.count(s) - 1, rng);
  }
  throw NoFeasiblePlan("planT: no motion-feasible candidate after " +
                       std::to_string(opt.maxReinitRounds) + " re-initialization rounds");
}

// AD-Learn ----------------------------------------------------------------------

struct TraceRecord {
  long t = 0;
  int taskId = 0;
  double loss = 0.0;
  bool solved = false;
};

inline void to_json(nlohmann::json& j, const TraceRecord& r) {
  j = {{"t", r.t}, {"taskId", r.taskId}, {"loss", r.loss}, {"solved", r.solved}};
}

inline void writeTrace(std::ostream& os, const std::vector<TraceRecord>& trace) {
  for (const TraceRecord& r : trace) os << nlohmann::json(r).dump() << '\n';
}

/// Alternating descent with persistent optimizer state, one step at a time.
class AdTrainer {
 public:
  AdTrainer(SpecializerPool pool, const LearnerConfig& cfg, long tStart = 0)
      : pool_(std::move(pool)), cfg_(cfg), adam_(AdamState::forSize(pool_.weights.size(), cfg.alpha)),
        t_(tStart) {}

  /// One AD iteration: PlanT on batchSize sampled problems, then an Adam
  /// step on the mean trajectory-loss gradient.
  TraceRecord step(const Domain& domain, const std::vector<Problem>& data, int taskId, Rng& rng) {
    if (data.empty()) throw std::invalid_argument("adLearn: empty dataset");
    ++t_;
    const double T = temperature(t_, cfg_);
    std::vector<double> grad(pool_.weights.size(), 0.0);
    double loss = 0.0;
    bool allSolved = true;
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    for (int b = 0; b < cfg_.batchSize; ++b) {
      const Problem& p = data[pick(rng)];
      const PlanTResult r = planT(domain, p, pool_, T, planTOptions(cfg_), rng);
      const TrajectoryLossReport rep = trajectoryLoss(pool_, p.init, r.plan, domain, domainLosses());
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += rep.gradW[i];
      loss += rep.total;
      allSolved = allSolved && rep.total == 0.0;
    }
    const double inv = 1.0 / cfg_.batchSize;
    for (double& g : grad) g *= inv;
    adamStepInPlace(adam_, pool_.weights, grad);
    return {t_, taskId, loss * inv, allSolved};
  }

  const SpecializerPool& pool() const { return pool_; }
  SpecializerPool& pool() { return pool_; }
  long t() const { return t_; }

 private:
  SpecializerPool pool_;
  LearnerConfig cfg_;
  AdamState adam_;
  long t_;
};

inline SpecializerPool adLearn(const Domain& domain, const std::vector<Problem>& data,
                               const SpecializerPool& pool, const LearnerConfig& cfg, Rng& rng,
                               std::vector<TraceRecord>* trace = nullptr, int taskId = 0,
                               long tStart = 0) {
  if (data.empty()) throw std::invalid_argument("adLearn: empty dataset");
  AdTrainer tr(pool, cfg, tStart);
  for (int i = 0; i < cfg.nIters; ++i) {
    const TraceRecord rec = tr.step(domain, data, taskId, rng);
    if (!std::isfinite(rec.loss)) throw std::domain_error("adLearn: non-finite loss");
    if (trace != nullptr) trace->push_back(rec);
  }
  return std::move(tr.pool());
}

// SS-Learn --------------------------------------------------------------------

/// All size-k index combinations of 0..n-1, in lexicographic order.
inline std::vector<std::vector<int>> combinations(int n, int k) {
  std::vector<std::vector<int>> out;
  if (k < 0 || k > n) return out;
  std::vector<int> c(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) c[static_cast<std::size_t>(i)] = i;
  while (true) {
    out.push_back(c);
    int i = k - 1;
    while (i >= 0 && c[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++c[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

/// Every per-schema choice of min(k, size) specializers, lexicographic in
/// (moveToGrasp, grasp, moveToPlace, place).
inline std::vector<Subset> allSubsets(const std::array<int, kNumSchemas>& sizes, int k) {
  std::vector<Subset> out{Subset{}};
  for (int s = 0; s < kNumSchemas; ++s) {
    const auto combos = combinations(sizes[static_cast<std::size_t>(s)],
                                     std::min(k, sizes[static_cast<std::size_t>(s)]));
    std::vector<Subset> next;
    for (const Subset& prefix : out)
      for (const auto& c : combos) {
        Subset x = prefix;
        x[static_cast<std::size_t>(s)] = c;
        next.push_back(std::move(x));
      }
    out = std::move(next);
  }
  return out;
}

struct SsResult {
  Subset subset;
  double loss = 0.0;  // fraction of problems not solved
  int combinationsEvaluated = 0;
};

/// Exhaustive subset selection on the 0-1 planning loss. A combination is
/// abandoned once its failures exceed the best so far, which cannot change
/// the argmin. Each problem is planned with its own seed, shared by all
/// combinations.
inline SsResult ssLearn(const Domain& domain, const std::vector<Problem>& data,
                        const SpecializerPool& pool, int k, const SearchOptions& opt,
                        std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("ssLearn: k must be >= 1");
  if (data.empty()) throw std::invalid_argument("ssLearn: empty dataset");
  SsResult best;
  int bestFailures = std::numeric_limits<int>::max();
  for (const Subset& sub : allSubsets(pool.sizes(), k)) {
    ++best.combinationsEvaluated;
    const SubsetView view(pool, sub);
    int failures = 0;
    for (std::size_t i = 0; i < data.size() && failures <= bestFailures; ++i) {
      Rng rng(combineSeed(seed, i));
      if (!plan(domain, data[i], view, opt, rng).plan.has_value()) ++failures;
    }
    if (failures < bestFailures) {
      bestFailures = failures;
      best.subset = sub;
    }
  }
  best.loss = static_cast<double>(bestFailures) / static_cast<double>(data.size());
  return best;
}

/// Copies the selected specializers into a standalone pool.
inline SpecializerPool extractSubset(const SpecializerPool& pool, const Subset& sub) {
  std::array<int, kNumSchemas> sizes{};
  for (int s = 0; s < kNumSchemas; ++s) sizes[static_cast<std::size_t>(s)] = static_cast<int>(sub[static_cast<std::size_t>(s)].size());
  SpecializerPool out(sizes, pool.shape());
  for (Schema s : kAllSchemas)
    for (int i = 0; i < out.count(s); ++i) {
      const auto src = pool.slice(s, sub[static_cast<int>(s)][static_cast<std::size_t>(i)]);
      std::copy(src.begin(), src.end(), out.slice(s, i).begin());
    }
  return out;
}

// Meta-learning -----------------------------------------------------------------

/// Sum over nGradEst sampled test problems of the trajectory-loss gradient
/// of the plan PlanT picks at the temperature floor, with the candidate
/// budget standing in for an unbounded candidate count.
inline std::vector<double> estimateTestGrad(const Domain& domain, const std::vector<Problem>& test,
                                            SpecializerPool& pool, int nGradEst,
                                            const LearnerConfig& cfg, Rng& rng,
                                            std::vector<Plan>* plansUsed = nullptr,
                                            double* lossOut = nullptr) {
  if (nGradEst < 1) throw std::invalid_argument("estimateTestGrad: nGradEst must be >= 1");
  if (test.empty()) throw std::invalid_argument("estimateTestGrad: empty test set");
  PlanTOptions opt = planTOptions(cfg);
  opt.nPlans = std::max(1, cfg.candidateBudget);
  std::vector<double> grad(pool.weights.size(), 0.0);
  double loss = 0.0;
  std::uniform_int_distribution<std::size_t> pick(0, test.size() - 1);
  for (int t = 0; t < nGradEst; ++t) {
    const Problem& p = test[pick(rng)];
    const PlanTResult r = planT(domain, p, pool, cfg.tempFloor, opt, rng);
    const TrajectoryLossReport rep = trajectoryLoss(pool, p.init, r.plan, domain, domainLosses());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += rep.gradW[i];
    loss += rep.total;
    if (plansUsed != nullptr) plansUsed->push_back(r.plan);
  }
  if (lossOut != nullptr) *lossOut = loss;
  return grad;
}

enum class Learner { AD, SS };

struct MetaRecord {
  int iter = 0;
  int taskId = 0;
  double testLoss = 0.0;
};

using MetaProbe = std::function<void(int iter, const SpecializerPool& pool)>;

/// First-order meta-learning. Each outer step adapts a copy of the pool on
/// one task's train split, estimates the test-loss gradient at the adapted
/// weights and applies it to the shared weights with Adam (step size beta).
/// With SS, adaptation is subset selection on one batch of the task's
/// train split and only the selected specializers move. `probe` runs once
/// before training and after every `probeEvery` outer steps.
inline SpecializerPool metaLearn(const Domain& domain, const std::vector<TaskDataset>& tasks,
                                 const SpecializerPool& init, const LearnerConfig& cfg,
                                 Learner learner, Rng& rng, std::vector<MetaRecord>* log = nullptr,
                                 const MetaProbe& probe = {}, int probeEvery = 0) {
  cfg.validate();
  if (tasks.empty()) throw std::invalid_argument("metaLearn: no tasks");
  SpecializerPool pool = init;
  AdamState outer = AdamState::forSize(pool.weights.size(), cfg.beta);
  LearnerConfig inner = cfg;
  inner.nIters = cfg.innerIters;
  const SearchOptions ssOpt{cfg.candidateBudget, cfg.motion, cfg.maxPlanLength, 0.0};
  std::uniform_int_distribution<std::size_t> pickTask(0, tasks.size() - 1);
  if (probe) probe(0, pool);
  for (int it = 1; it <= cfg.outerIters; ++it) {
    const TaskDataset& task = tasks[pickTask(rng)];
    double testLoss = 0.0;
    std::vector<double> grad;
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    if (learner == Learner::AD) {
      SpecializerPool adapted =
          inner.nIters > 0
              ? adLearn(domain, task.train, pool, inner, rng, nullptr, task.taskId,
                        static_cast<long>(it - 1) * inner.nIters)
              : pool;
      grad = estimateTestGrad(domain, task.test, adapted, cfg.nGradEst, cfg, rng, nullptr, &testLoss);
    } else {
      std::vector<Problem> batch;
      std::uniform_int_distribution<std::size_t> pick(0, task.train.size() - 1);
      for (int b = 0; b < cfg.batchSize; ++b) batch.push_back(task.train[pick(rng)]);
      const SsResult sel = ssLearn(domain, batch, pool, cfg.k, ssOpt, rng());
      SpecializerPool sub = extractSubset(pool, sel.subset);
      const std::vector<double> g =
          estimateTestGrad(domain, task.test, sub, cfg.nGradEst, cfg, rng, nullptr, &testLoss);
      grad.assign(pool.weights.size(), 0.0);
      for (Schema s : kAllSchemas)
        for (int i = 0; i < sub.count(s); ++i) {
          const auto [lo, hi] = pool.range(s, sel.subset[static_cast<int>(s)][static_cast<std::size_t>(i)]);
          const std::size_t from = sub.offset(s, i);
          std::copy(g.begin() + static_cast<std::ptrdiff_t>(from),
                    g.begin() + static_cast<std::ptrdiff_t>(from + (hi - lo)),
                    grad.begin() + static_cast<std::ptrdiff_t>(lo));
          ranges.emplace_back(lo, hi);
        }
      std::sort(ranges.begin(), ranges.end());
    }
    try {
      adamStepInPlace(outer, pool.weights, grad, ranges);
    } catch (const std::domain_error& e) {
      throw std::domain_error("metaLearn: outer iteration " + std::to_string(it) + " task " +
                              std::to_string(task.taskId) + ": " + e.what());
    }
    if (log != nullptr) log->push_back({it, task.taskId, testLoss});
    if (probe && probeEvery > 0 && it % probeEvery == 0) probe(it, pool);
  }
  return pool;
}

// JSON ------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const MotionBudget& m) {
  j = {{"maxRestarts", m.maxRestarts}, {"maxNodesPerTree", m.maxNodesPerTree},
       {"stepSize", m.stepSize},       {"goalTol", m.goalTol},
       {"shortcutAttempts", m.shortcutAttempts}};
}
inline void from_json(const nlohmann::json& j, MotionBudget& m) {
  const MotionBudget d;
  m.maxRestarts = j.value("maxRestarts", d.maxRestarts);
  m.maxNodesPerTree = j.value("maxNodesPerTree", d.maxNodesPerTree);
  m.stepSize = j.value("stepSize", d.stepSize);
  m.goalTol = j.value("goalTol", d.goalTol);
  m.shortcutAttempts = j.value("shortcutAttempts", d.shortcutAttempts);
}

inline void to_json(nlohmann::json& j, const LearnerConfig& c) {
  j = {{"nIters", c.nIters},       {"nPlans", c.nPlans},
       {"T0", c.T0},               {"tempDecay", c.tempDecay},
       {"tempFloor", c.tempFloor}, {"alpha", c.alpha},
       {"beta", c.beta},           {"nGradEst", c.nGradEst},
       {"k", c.k},                 {"candidateBudget", c.candidateBudget},
       {"seed", c.seed},           {"batchSize", c.batchSize},
       {"innerIters", c.innerIters}, {"outerIters", c.outerIters},
       {"maxPlanLength", c.maxPlanLength}, {"motion", c.motion}};
}
inline void from_json(const nlohmann::json& j, LearnerConfig& c) {
  const LearnerConfig d;
  c.nIters = j.value("nIters", d.nIters);
  c.nPlans = j.value("nPlans", d.nPlans);
  c.T0 = j.value("T0", d.T0);
  c.tempDecay = j.value("tempDecay", d.tempDecay);
  c.tempFloor = j.value("tempFloor", d.tempFloor);
  c.alpha = j.value("alpha", d.alpha);
  c.beta = j.value("beta", d.beta);
  c.nGradEst = j.value("nGradEst", d.nGradEst);
  c.k = j.value("k", d.k);
  c.candidateBudget = j.value("candidateBudget", d.candidateBudget);
  c.seed = j.value("seed", d.seed);
  c.batchSize = j.value("batchSize", d.batchSize);
  c.innerIters = j.value("innerIters", d.innerIters);
  c.outerIters = j.value("outerIters", d.outerIters);
  c.maxPlanLength = j.value("maxPlanLength", d.maxPlanLength);
  c.motion = j.value("motion", d.motion);
  c.validate();
}

}  // namespace tamp
