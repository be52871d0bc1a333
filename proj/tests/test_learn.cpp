#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "pool_util.hpp"
#include "tamp/learn.hpp"
#include "test_util.hpp"

using namespace tamp;
using namespace tamp::testing;

namespace {

const Domain& kDomain = tabletopDomain();

ObjectSpec cylinder(int id, double r = 0.3) { return makeObject(id, ObjectKind::Cylinder, r); }

Problem problemOf(WorldState w) {
  const PlanningState goal = allOnGoal(w);
  return {std::move(w), goal};
}

Problem oneCylinder(Pose2 at = {2, 5}) { return problemOf(worldWith({onStart(cylinder(1), at)})); }

std::vector<Problem> randomProblems(std::uint64_t seed, int n, int count) {
  Rng rng(seed);
  std::vector<Problem> out;
  for (int i = 0; i < count; ++i) out.push_back(problemOf(randomStartWorld(rng, n)));
  return out;
}

// Problems that keep a 0.4 m side grasp from -x legal: cylinders of radius
// 0.3 spread along y.
std::vector<Problem> cylinderProblems(std::uint64_t seed, int n, int count) {
  Rng rng(seed);
  std::uniform_real_distribution<double> ux(1.2, 3.5);
  std::vector<Problem> out;
  for (int i = 0; i < count; ++i) {
    std::vector<ObjectState> objs;
    for (int o = 1; o <= n; ++o) objs.push_back(onStart(cylinder(o), {ux(rng), 3.5 + 1.2 * (o - 1)}));
    out.push_back(problemOf(worldWith(objs)));
  }
  return out;
}

double chiSquare(const std::vector<int>& observed, const std::vector<double>& expected) {
  double x = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - expected[i];
    x += d * d / expected[i];
  }
  return x;
}

// Upper 5% points of the chi-square distribution.
double chi2Critical95(int dof) {
  static const std::map<int, double> table{{3, 7.815}, {7, 14.067}};
  return table.at(dof);
}

std::vector<int> specKey(const Plan& p) {
  std::vector<int> k;
  for (const PlanStep& s : p) k.push_back(s.spec);
  return k;
}

double meanFloorLoss(const std::vector<Problem>& data, SpecializerPool pool, const LearnerConfig& cfg) {
  Rng rng(12345);
  double total = 0.0;
  for (const Problem& p : data) total += planT(kDomain, p, pool, cfg.tempFloor, planTOptions(cfg), rng).loss;
  return total / static_cast<double>(data.size());
}

std::size_t changedSlices(const SpecializerPool& a, const SpecializerPool& b) {
  std::size_t n = 0;
  for (Schema s : kAllSchemas)
    for (int i = 0; i < a.count(s); ++i) {
      const auto x = a.slice(s, i);
      const auto y = b.slice(s, i);
      n += !std::equal(x.begin(), x.end(), y.begin());
    }
  return n;
}

}  // namespace

TEST(Temperature, Schedule) {
  LearnerConfig cfg;
  EXPECT_DOUBLE_EQ(temperature(1, cfg), 0.999);
  EXPECT_NEAR(temperature(1000, cfg), std::pow(0.999, 1000), 1e-15);
  EXPECT_DOUBLE_EQ(temperature(100000, cfg), 1e-3);
  EXPECT_THROW(temperature(0, cfg), std::invalid_argument);
  for (long t = 1; t < 20000; t += 37) EXPECT_GE(temperature(t, cfg), temperature(t + 1, cfg));
}

TEST(LearnerConfig, ValidationAndJson) {
  LearnerConfig cfg;
  cfg.k = 2;
  cfg.motion.maxRestarts = 5;
  const LearnerConfig back = nlohmann::json(cfg).get<LearnerConfig>();
  EXPECT_EQ(back.k, 2);
  EXPECT_EQ(back.motion.maxRestarts, 5);
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(cfg));
  LearnerConfig bad;
  bad.tempDecay = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = {};
  bad.alpha = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW((nlohmann::json{{"nPlans", 0}}.get<LearnerConfig>()), std::invalid_argument);
}

TEST(BindSkeleton, StrictStopsAtFirstNonzeroLoss) {
  const Problem p = oneCylinder();
  const SpecializerPool bad = constantPool({0, 0}, {7, 5});  // gripper inside the object
  MotionCache motion({}, 1);
  const Binding b = bindSkeleton(kDomain, p, Plan{{Schema::MoveToGrasp, 1, 0, {}}, {Schema::Grasp, 1, 0, {}},
                                                   {Schema::MoveToPlace, 1, 0, {}}, {Schema::Place, 1, 0, {}}},
                                 bad, true, motion, domainLosses());
  EXPECT_EQ(b.failedStep, 1);
  EXPECT_FALSE(b.motionFailed);
  EXPECT_EQ(b.plan.size(), 1u);
  EXPECT_GT(b.loss, 0.0);
}

TEST(BindSkeleton, RelaxedAccumulatesAndSkipsMotionAfterIllegalStep) {
  const Problem p = oneCylinder();
  const SpecializerPool bad = constantPool({0, 0}, {5, 5});
  const Plan sk{{Schema::MoveToGrasp, 1, 0, {}}, {Schema::Grasp, 1, 0, {}}, {Schema::MoveToPlace, 1, 0, {}},
                {Schema::Place, 1, 0, {}}};
  MotionCache motion({}, 1);
  const Binding b = bindSkeleton(kDomain, p, sk, bad, false, motion, domainLosses());
  EXPECT_EQ(b.failedStep, 0);
  ASSERT_EQ(b.plan.size(), 4u);
  ASSERT_EQ(b.paths.size(), 4u);
  EXPECT_FALSE(b.paths[0].empty());
  for (std::size_t k = 1; k < 4; ++k) EXPECT_TRUE(b.paths[k].empty());
  EXPECT_NEAR(b.loss, trajectoryLoss(bad, p.init, sk).total, 1e-12);
  EXPECT_FALSE(b.final.legal);
}

TEST(BindSkeleton, MotionFailureStops) {
  // A gripper outside the workspace cannot move anywhere.
  WorldState w = worldWith({onStart(cylinder(1), {2, 5}), onStart(cylinder(2), {2.7, 5})});
  w.eeConf = {-1, 5};
  const Problem p = problemOf(w);
  const SpecializerPool pool = constantPool({-0.4, 0}, {7, 5});
  MotionCache motion({}, 1);
  const Binding b = bindSkeleton(kDomain, p, Plan{{Schema::MoveToGrasp, 2, 0, {}}}, pool, false, motion,
                                 domainLosses());
  EXPECT_TRUE(b.motionFailed);
  EXPECT_EQ(b.failedStep, 1);
}

TEST(Plan, PerfectSourceSolvesWithOneCandidate) {
  const Problem p = oneCylinder();
  const SpecializerPool pool = constantPool({-0.4, 0}, {7, 5});
  Rng rng(1);
  const SearchOptions opt;
  const PlanOutcome out = plan(kDomain, p, pool, opt, rng);
  ASSERT_TRUE(out.plan.has_value());
  EXPECT_EQ(out.searchEffort, 1);
  EXPECT_EQ(out.plan->size(), 4u);
  EXPECT_TRUE(validateSolution(p, *out.plan, out.paths));
}

TEST(Plan, OracleSourceSolvesRandomProblems) {
  int solved = 0;
  for (const Problem& p : cylinderProblems(3, 3, 10)) {
    Rng rng(7);
    const PlanOutcome out = plan(kDomain, p, OracleSource{}, {}, rng);
    if (!out.plan.has_value()) continue;
    EXPECT_TRUE(validateSolution(p, *out.plan, out.paths));
    ++solved;
  }
  EXPECT_GE(solved, 8);
}

TEST(Plan, IllegalGraspExhaustsBudget) {
  Problem p = problemOf(worldWith({onStart(cylinder(1), {2, 4}), onStart(cylinder(2), {2, 6})}));
  const SpecializerPool bad = constantPool({0, 0}, {7, 5}, {3, 3, 3, 1});
  Rng rng(1);
  SearchOptions opt;
  opt.candidateBudget = 4;
  const PlanOutcome out = plan(kDomain, p, bad, opt, rng);
  EXPECT_FALSE(out.plan.has_value());
  EXPECT_EQ(out.searchEffort, 4);

  // Without a binding budget, pruning rules out everything after the six
  // distinct first steps.
  opt.candidateBudget = 1000;
  Rng again(1);
  const PlanOutcome all = plan(kDomain, p, bad, opt, again);
  EXPECT_FALSE(all.plan.has_value());
  EXPECT_EQ(all.searchEffort, 6);
}

TEST(Plan, ZeroBudgetFindsNothing) {
  Rng rng(1);
  SearchOptions opt;
  opt.candidateBudget = 0;
  const PlanOutcome out = plan(kDomain, oneCylinder(), constantPool({-0.4, 0}, {7, 5}), opt, rng);
  EXPECT_FALSE(out.plan.has_value());
  EXPECT_EQ(out.searchEffort, 0);
}

TEST(PlanRandom, SolvesSomeOneObjectProblemsWithinBudget) {
  int solved = 0;
  SearchOptions opt;
  opt.candidateBudget = 32;
  for (const Problem& p : randomProblems(5, 1, 50)) {
    Rng rng(solved + 100);
    const PlanOutcome out = planRandom(kDomain, p, opt, rng);
    EXPECT_LE(out.searchEffort, opt.candidateBudget);
    if (!out.plan.has_value()) continue;
    EXPECT_TRUE(validateSolution(p, *out.plan, out.paths));
    ++solved;
  }
  EXPECT_GE(solved, 1);
}

TEST(ValidateSolution, RejectsTampering) {
  const Problem p = oneCylinder();
  Rng rng(1);
  const PlanOutcome out = plan(kDomain, p, constantPool({-0.4, 0}, {7, 5}), {}, rng);
  ASSERT_TRUE(out.plan.has_value());
  ASSERT_TRUE(validateSolution(p, *out.plan, out.paths));

  Plan moved = *out.plan;
  moved[3].theta = Pose2{5, 5};
  EXPECT_FALSE(validateSolution(p, moved, out.paths));

  auto paths = out.paths;
  paths[2].pop_back();
  EXPECT_FALSE(validateSolution(p, *out.plan, paths));

  Plan shorter(out.plan->begin(), out.plan->begin() + 2);
  EXPECT_FALSE(validateSolution(p, shorter, {out.paths[0], out.paths[1]}));

  // A path through another object is rejected.
  Problem blocked = p;
  blocked.init.objects.push_back(onStart(cylinder(2), {3.5, 3.2}));
  blocked.goal = allOnGoal(blocked.init);
  std::vector<std::vector<Pose2>> straight{{blocked.init.eeConf, Pose2{1.6, 5}}};
  EXPECT_FALSE(validateSolution(blocked, Plan{(*out.plan)[0]}, straight));
}

TEST(Boltzmann, MatchesExponentialWeights) {
  const std::vector<double> losses{0.0, 0.5, 1.0, 2.0};
  const double T = 1.0;
  Rng rng(99);
  std::vector<int> counts(4, 0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(boltzmannSample(losses, T, rng))];
  double z = 0.0;
  for (double l : losses) z += std::exp(-l / T);
  std::vector<double> expected;
  for (double l : losses) expected.push_back(n * std::exp(-l / T) / z);
  EXPECT_LT(chiSquare(counts, expected), chi2Critical95(3));
}

TEST(Boltzmann, LowTemperaturePicksArgmin) {
  Rng rng(3);
  int hits = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) hits += boltzmannSample({0.3, 0.2, 0.5}, 1e-3, rng) == 1;
  EXPECT_GE(hits, static_cast<int>(0.999 * n));
  EXPECT_THROW(boltzmannSample({}, 1.0, rng), std::invalid_argument);
}

TEST(PlanT, HighTemperatureIsUniformOverCandidates) {
  // Two specializers for each grasp-type schema and moveToPlace give eight
  // one-object candidates.
  const Problem p = oneCylinder();
  Rng init(4);
  SpecializerPool pool = SpecializerPool::random(init, {2, 2, 2, 1}, smallShape());
  PlanTOptions opt;
  opt.nPlans = 8;
  std::map<std::vector<int>, int> freq;
  Rng rng(17);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const PlanTResult r = planT(kDomain, p, pool, 1e6, opt, rng);
    ASSERT_EQ(r.candidates.size(), 8u);
    ++freq[specKey(r.plan)];
  }
  ASSERT_EQ(freq.size(), 8u);
  std::vector<int> obs;
  for (const auto& [k, c] : freq) obs.push_back(c);
  EXPECT_LT(chiSquare(obs, std::vector<double>(8, n / 8.0)), chi2Critical95(7));
}

TEST(PlanT, FloorTemperatureReturnsMinimum) {
  Rng init(5);
  SpecializerPool pool = SpecializerPool::random(init, {3, 3, 3, 1}, smallShape());
  const std::vector<Problem> probs = randomProblems(8, 2, 20);
  PlanTOptions opt;
  Rng rng(6);
  int argmin = 0;
  int total = 0;
  for (int rep = 0; rep < 50; ++rep)
    for (const Problem& p : probs) {
      const PlanTResult r = planT(kDomain, p, pool, opt.tempFloor, opt, rng);
      argmin += r.loss == *std::min_element(r.losses.begin(), r.losses.end());
      ++total;
    }
  EXPECT_GE(argmin, 0.999 * total);
}

TEST(PlanT, SingleCandidateIsAlwaysChosen) {
  const Problem p = oneCylinder();
  Rng init(2);
  SpecializerPool pool = SpecializerPool::random(init, {3, 3, 3, 1}, smallShape());
  PlanTOptions opt;
  opt.nPlans = 1;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const PlanTResult r = planT(kDomain, p, pool, 1e6, opt, rng);
    ASSERT_EQ(r.candidates.size(), 1u);
    EXPECT_EQ(r.chosen, 0);
    EXPECT_EQ(r.plan, r.candidates[0]);
  }
}

TEST(PlanT, CandidatesCarryPoolIndicesAndLosses) {
  const Problem p = oneCylinder();
  Rng init(2);
  SpecializerPool pool = SpecializerPool::random(init, {3, 3, 3, 1}, smallShape());
  Rng rng(3);
  const PlanTResult r = planT(kDomain, p, pool, 1.0, PlanTOptions{}, rng);
  ASSERT_EQ(r.candidates.size(), r.losses.size());
  for (std::size_t i = 0; i < r.candidates.size(); ++i)
    EXPECT_NEAR(r.losses[i], trajectoryLoss(pool, p.init, r.candidates[i]).total, 1e-12);
}

TEST(PlanT, NoFeasiblePlanAfterReinitRounds) {
  WorldState w = worldWith({onStart(cylinder(1), {2, 5}), onStart(cylinder(2), {2.7, 5})});
  w.eeConf = {-1, 5};
  const Problem p = problemOf(w);
  Rng init(2);
  SpecializerPool pool = SpecializerPool::random(init, {3, 3, 3, 1}, smallShape());
  const SpecializerPool before = pool;
  Rng rng(3);
  EXPECT_THROW(planT(kDomain, p, pool, 1.0, PlanTOptions{}, rng), NoFeasiblePlan);
  // Only the highest-index specializer of schemas with alternatives moved.
  for (Schema s : kAllSchemas)
    for (int i = 0; i < pool.count(s); ++i) {
      const bool moved = !std::equal(pool.slice(s, i).begin(), pool.slice(s, i).end(), before.slice(s, i).begin());
      EXPECT_EQ(moved, pool.count(s) >= 2 && i == pool.count(s) - 1) << schemaName(s) << i;
    }
}

TEST(AdLearn, PerfectPoolIsAFixedPoint) {
  const SpecializerPool pool = constantPool({-0.4, 0}, {7, 5});
  LearnerConfig cfg;
  cfg.nIters = 5;
  Rng rng(1);
  std::vector<TraceRecord> trace;
  const SpecializerPool out = adLearn(kDomain, {oneCylinder()}, pool, cfg, rng, &trace);
  EXPECT_EQ(out.weights, pool.weights);
  ASSERT_EQ(trace.size(), 5u);
  for (const TraceRecord& r : trace) {
    EXPECT_EQ(r.loss, 0.0);
    EXPECT_TRUE(r.solved);
  }
  EXPECT_EQ(trace.back().t, 5);
}

TEST(AdLearn, OneStepMovesOnlyUsedSpecializers) {
  Rng init(3);
  const SpecializerPool pool = SpecializerPool::random(init, {3, 3, 3, 1}, smallShape());
  LearnerConfig cfg;
  cfg.nIters = 1;
  Rng rng(4);
  const SpecializerPool out = adLearn(kDomain, {oneCylinder()}, pool, cfg, rng);
  const std::size_t moved = changedSlices(pool, out);
  EXPECT_GE(moved, 1u);
  EXPECT_LE(moved, 4u);
}

TEST(AdLearn, ReducesTrajectoryLoss) {
  const std::vector<Problem> data = randomProblems(21, 2, 8);
  Rng init(22);
  const SpecializerPool pool = SpecializerPool::random(init);
  LearnerConfig cfg;
  Rng rng(23);
  std::vector<TraceRecord> trace;
  const SpecializerPool out = adLearn(kDomain, data, pool, cfg, rng, &trace);
  ASSERT_EQ(trace.size(), 200u);
  const double before = meanFloorLoss(data, pool, cfg);
  const double after = meanFloorLoss(data, out, cfg);
  ASSERT_GT(before, 0.0);
  EXPECT_LE(after, 0.5 * before) << before << " -> " << after;

  std::ostringstream os;
  writeTrace(os, trace);
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("t"), ++lines);
  }
  EXPECT_EQ(lines, 200);
}

TEST(AdLearn, TraceLossFallsOnAFixedProblem) {
  const std::vector<Problem> data{oneCylinder({2.5, 4.5})};
  LearnerConfig cfg;
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng init(seed);
    Rng rng(seed + 100);
    std::vector<TraceRecord> trace;
    adLearn(kDomain, data, SpecializerPool::random(init), cfg, rng, &trace);
    double first = 0.0;
    double last = 0.0;
    for (int i = 0; i < 20; ++i) {
      first += trace[static_cast<std::size_t>(i)].loss;
      last += trace[trace.size() - 20 + static_cast<std::size_t>(i)].loss;
    }
    decreased += last < first;
  }
  EXPECT_GE(decreased, 4);
}

TEST(AdLearn, Reproducible) {
  const std::vector<Problem> data = randomProblems(1, 2, 4);
  Rng init(2);
  const SpecializerPool pool = SpecializerPool::random(init, {3, 3, 3, 1}, smallShape());
  LearnerConfig cfg;
  cfg.nIters = 20;
  Rng a(5);
  Rng b(5);
  EXPECT_EQ(adLearn(kDomain, data, pool, cfg, a).weights, adLearn(kDomain, data, pool, cfg, b).weights);
  EXPECT_THROW(adLearn(kDomain, {}, pool, cfg, a), std::invalid_argument);
}

TEST(Subsets, Combinations) {
  EXPECT_EQ(combinations(3, 1), (std::vector<std::vector<int>>{{0}, {1}, {2}}));
  EXPECT_EQ(combinations(4, 2).size(), 6u);
  EXPECT_EQ(combinations(4, 2)[1], (std::vector<int>{0, 2}));
  EXPECT_TRUE(combinations(2, 3).empty());
  EXPECT_EQ(allSubsets({3, 3, 3, 1}, 1).size(), 27u);
  EXPECT_EQ(allSubsets({3, 3, 3, 1}, 2).size(), 27u);
  EXPECT_EQ(allSubsets({3, 3, 3, 1}, 5).size(), 1u);
}

TEST(SsLearn, MatchesBruteForceArgmin) {
  const std::vector<Problem> data = cylinderProblems(31, 2, 6);
  SearchOptions opt;
  opt.candidateBudget = 16;
  Rng rng(32);
  std::uniform_real_distribution<double> a(0.0, 2 * M_PI);
  std::uniform_real_distribution<double> d(0.3, 0.5);
  std::uniform_real_distribution<double> px(5.5, 9.5);
  for (int trial = 0; trial < 6; ++trial) {
    // Pools mixing legal and illegal constants.
    SpecializerPool pool({3, 3, 3, 1}, smallShape());
    for (Schema s : kAllSchemas)
      for (int i = 0; i < pool.count(s); ++i) {
        const double ang = i == 0 ? M_PI : a(rng);
        const double r = d(rng);
        setConstant(pool, s, i,
                    isGraspType(s) ? Pose2{r * std::cos(ang), r * std::sin(ang)} : Pose2{px(rng), 3.5 + 3 * (rng() % 2)});
      }
    const std::uint64_t seed = 40 + trial;
    const SsResult got = ssLearn(kDomain, data, pool, 1, opt, seed);
    EXPECT_EQ(got.combinationsEvaluated, 27);

    // Brute force without early abandonment.
    int best = 1 << 30;
    Subset arg;
    for (const Subset& sub : allSubsets(pool.sizes(), 1)) {
      const SubsetView view(pool, sub);
      int fails = 0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        Rng r(combineSeed(seed, i));
        fails += !plan(kDomain, data[i], view, opt, r).plan.has_value();
      }
      if (fails < best) {
        best = fails;
        arg = sub;
      }
    }
    EXPECT_EQ(got.subset, arg) << "trial " << trial;
    EXPECT_DOUBLE_EQ(got.loss, static_cast<double>(best) / data.size());
  }
}

TEST(SsLearn, PicksTheLegalGrasp) {
  SpecializerPool pool({1, 3, 1, 1}, smallShape());
  setConstant(pool, Schema::MoveToGrasp, 0, {-0.4, 0});
  setConstant(pool, Schema::Grasp, 0, {0, 0});
  setConstant(pool, Schema::Grasp, 1, {0.05, 0.1});
  setConstant(pool, Schema::Grasp, 2, {-0.4, 0});
  setConstant(pool, Schema::MoveToPlace, 0, {7, 5});
  setConstant(pool, Schema::Place, 0, {7, 5});
  const SsResult r = ssLearn(kDomain, {oneCylinder(), oneCylinder({3, 4})}, pool, 1, {}, 1);
  EXPECT_EQ(r.subset[1], (std::vector<int>{2}));
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.combinationsEvaluated, 3);

  const SpecializerPool sub = extractSubset(pool, r.subset);
  EXPECT_EQ(sub.sizes(), (std::array<int, 4>{1, 1, 1, 1}));
  EXPECT_TRUE(std::equal(sub.slice(Schema::Grasp, 0).begin(), sub.slice(Schema::Grasp, 0).end(),
                         pool.slice(Schema::Grasp, 2).begin()));
}

TEST(SsLearn, KAtLeastSizeSelectsEverything) {
  Rng init(1);
  const SpecializerPool pool = SpecializerPool::random(init, {3, 3, 3, 1}, smallShape());
  const SsResult r = ssLearn(kDomain, {oneCylinder()}, pool, 3, {}, 1);
  EXPECT_EQ(r.combinationsEvaluated, 1);
  EXPECT_EQ(r.subset[0], (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(r.subset[3], (std::vector<int>{0}));
  EXPECT_THROW(ssLearn(kDomain, {oneCylinder()}, pool, 0, {}, 1), std::invalid_argument);
}

TEST(EstimateTestGrad, EqualsSumOfLoggedPlanGradients) {
  const std::vector<Problem> test = randomProblems(51, 2, 5);
  Rng init(52);
  SpecializerPool pool = SpecializerPool::random(init, {3, 3, 3, 1}, smallShape());
  LearnerConfig cfg;
  cfg.candidateBudget = 16;
  Rng rng(53);
  std::vector<Plan> used;
  double loss = 0.0;
  const SpecializerPool frozen = pool;
  const std::vector<double> g = estimateTestGrad(kDomain, test, pool, 6, cfg, rng, &used, &loss);
  ASSERT_EQ(used.size(), 6u);
  ASSERT_EQ(pool.weights, frozen.weights);

  // The problem for each logged plan is recovered by replaying the same draws.
  Rng replay(53);
  std::uniform_int_distribution<std::size_t> pick(0, test.size() - 1);
  std::vector<double> sum(pool.weights.size(), 0.0);
  double sumLoss = 0.0;
  PlanTOptions opt = planTOptions(cfg);
  opt.nPlans = cfg.candidateBudget;
  for (int t = 0; t < 6; ++t) {
    const Problem& p = test[pick(replay)];
    SpecializerPool scratch = pool;
    planT(kDomain, p, scratch, cfg.tempFloor, opt, replay);
    const TrajectoryLossReport rep = trajectoryLoss(pool, p.init, used[static_cast<std::size_t>(t)]);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += rep.gradW[i];
    sumLoss += rep.total;
  }
  for (std::size_t i = 0; i < sum.size(); ++i) ASSERT_NEAR(g[i], sum[i], 1e-12 * (1 + std::abs(sum[i])));
  EXPECT_NEAR(loss, sumLoss, 1e-9);
}

TEST(EstimateTestGrad, PerfectPoolGivesZero) {
  SpecializerPool pool = constantPool({-0.4, 0}, {7, 5});
  LearnerConfig cfg;
  Rng rng(1);
  double loss = -1.0;
  const std::vector<double> g = estimateTestGrad(kDomain, {oneCylinder()}, pool, 4, cfg, rng, nullptr, &loss);
  EXPECT_EQ(loss, 0.0);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(MetaLearn, ZeroInnerStepsIsTestLossDescent) {
  std::vector<TaskDataset> tasks{{0, randomProblems(61, 2, 3), randomProblems(62, 2, 3)},
                                 {1, randomProblems(63, 1, 3), randomProblems(64, 1, 3)}};
  Rng init(65);
  const SpecializerPool pool = SpecializerPool::random(init, {3, 3, 3, 1}, smallShape());
  LearnerConfig cfg;
  cfg.innerIters = 0;
  cfg.outerIters = 3;
  cfg.nGradEst = 2;
  cfg.candidateBudget = 16;
  cfg.beta = 1e-2;
  Rng rng(66);
  const SpecializerPool meta = metaLearn(kDomain, tasks, pool, cfg, Learner::AD, rng);

  Rng r(66);
  SpecializerPool w = pool;
  AdamState adam = AdamState::forSize(w.weights.size(), cfg.beta);
  std::uniform_int_distribution<std::size_t> pickTask(0, tasks.size() - 1);
  for (int it = 0; it < cfg.outerIters; ++it) {
    const TaskDataset& task = tasks[pickTask(r)];
    SpecializerPool copy = w;
    const std::vector<double> g = estimateTestGrad(kDomain, task.test, copy, cfg.nGradEst, cfg, r);
    adamStepInPlace(adam, w.weights, g);
  }
  EXPECT_EQ(meta.weights, w.weights);
  EXPECT_NE(meta.weights, pool.weights);
}

TEST(MetaLearn, SsMovesOnlyTheSelectedSubset) {
  std::vector<TaskDataset> tasks{{0, randomProblems(71, 1, 4), randomProblems(72, 1, 4)}};
  Rng init(73);
  const SpecializerPool pool = SpecializerPool::random(init, {3, 3, 3, 1}, smallShape());
  LearnerConfig cfg;
  cfg.outerIters = 1;
  cfg.candidateBudget = 8;
  cfg.batchSize = 2;
  Rng rng(74);
  std::vector<MetaRecord> log;
  const SpecializerPool meta = metaLearn(kDomain, tasks, pool, cfg, Learner::SS, rng, &log);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_GT(log[0].testLoss, 0.0);
  for (Schema s : kAllSchemas) {
    int moved = 0;
    for (int i = 0; i < pool.count(s); ++i)
      moved += !std::equal(pool.slice(s, i).begin(), pool.slice(s, i).end(), meta.slice(s, i).begin());
    EXPECT_LE(moved, 1) << schemaName(s);
  }
  EXPECT_GE(changedSlices(pool, meta), 1u);
}

TEST(MetaLearn, ReproducibleAndProbed) {
  std::vector<TaskDataset> tasks{{0, randomProblems(81, 1, 3), randomProblems(82, 1, 3)},
                                 {1, randomProblems(83, 2, 3), randomProblems(84, 2, 3)}};
  Rng init(85);
  const SpecializerPool pool = SpecializerPool::random(init, {3, 3, 3, 1}, smallShape());
  LearnerConfig cfg;
  cfg.outerIters = 4;
  cfg.innerIters = 2;
  cfg.candidateBudget = 8;
  std::vector<int> probed;
  const MetaProbe probe = [&](int it, const SpecializerPool&) { probed.push_back(it); };
  for (Learner l : {Learner::AD, Learner::SS}) {
    probed.clear();
    Rng a(86);
    Rng b(86);
    const SpecializerPool x = metaLearn(kDomain, tasks, pool, cfg, l, a, nullptr, probe, 2);
    const SpecializerPool y = metaLearn(kDomain, tasks, pool, cfg, l, b);
    EXPECT_EQ(x.weights, y.weights);
    EXPECT_EQ(probed, (std::vector<int>{0, 2, 4}));
  }
  EXPECT_THROW(metaLearn(kDomain, {}, pool, cfg, Learner::AD, *std::make_unique<Rng>(1)), std::invalid_argument);
}
