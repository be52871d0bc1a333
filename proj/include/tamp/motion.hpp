#pragma once

// Collision-free gripper paths: swept-disc checks, RRT-Connect with a
// restart budget, and whole-plan motion feasibility.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "tamp/geometry.hpp"
#include "tamp/symbolic.hpp"
#include "tamp/world.hpp"

namespace tamp {

struct MotionBudget {
  int maxRestarts = 3;
  int maxNodesPerTree = 500;
  double stepSize = 0.2;
  double goalTol = 1e-6;
  int shortcutAttempts = 50;
};

struct MotionResult {
  std::vector<Pose2> path;
  bool feasible = false;
};

using Obstacles = std::vector<Disc>;

/// Every non-held object of `w`, except `excludeId` (0 excludes nothing).
inline Obstacles obstaclesOf(const WorldState& w, int excludeId = 0) {
  Obstacles obs;
  obs.reserve(w.objects.size());
  for (const ObjectState& o : w.objects) {
    if (o.surface == Surface::InHand || o.spec.id == excludeId) continue;
    obs.push_back({o.pose, o.spec.radius});
  }
  return obs;
}

inline bool configFree(const Obstacles& obs, Pose2 c, double footprint) {
  if (!world::kWorkspace.contains(c)) return false;
  for (const Disc& d : obs) {
    const Pose2 v = c - d.center;
    const double rr = d.radius + footprint;
    if (dot(v, v) < rr * rr) return false;
  }
  return true;
}

/// True iff the disc of radius `footprint` swept along c1->c2 touches no
/// obstacle, checked at points spaced at most `resolution` apart.
inline bool segmentClear(const Obstacles& obs, Pose2 c1, Pose2 c2, double footprint,
                         double resolution = 0.1) {
  const double len = dist(c1, c2);
  const int n = std::max(1, static_cast<int>(std::ceil(len / resolution)));
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    if (!configFree(obs, c1 + t * (c2 - c1), footprint)) return false;
  }
  return true;
}

inline bool segmentClear(const WorldState& w, Pose2 c1, Pose2 c2, double footprint,
                         double resolution = 0.1) {
  return segmentClear(obstaclesOf(w), c1, c2, footprint, resolution);
}

namespace detail {

struct Tree {
  std::vector<Pose2> nodes;
  std::vector<int> parent;

  int nearest(Pose2 q) const {
    int best = 0;
    double bestD = std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
      const Pose2 v = nodes[i] - q;
      const double d2 = dot(v, v);
      if (d2 < bestD) {
        bestD = d2;
        best = i;
      }
    }
    return best;
  }
  int add(Pose2 p, int par) {
    nodes.push_back(p);
    parent.push_back(par);
    return static_cast<int>(nodes.size()) - 1;
  }
  std::vector<Pose2> branch(int i) const {
    std::vector<Pose2> out;
    for (; i >= 0; i = parent[i]) out.push_back(nodes[i]);
    return out;  // leaf first
  }
};

enum class Extend { Trapped, Advanced, Reached };

struct Query {
  const Obstacles& obs;
  double footprint;
  const MotionBudget& budget;
  double resolution() const { return budget.stepSize / 2.0; }
};

inline Extend extend(const Query& q, Tree& tree, Pose2 target, int& newIndex) {
  const int near = tree.nearest(target);
  const Pose2 from = tree.nodes[near];
  const double d = dist(from, target);
  Pose2 to = target;
  bool reached = true;
  if (d > q.budget.stepSize) {
    to = from + (q.budget.stepSize / d) * (target - from);
    reached = false;
  } else if (d <= q.budget.goalTol) {
    newIndex = near;
    return Extend::Reached;
  }
  if (!segmentClear(q.obs, from, to, q.footprint, q.resolution())) return Extend::Trapped;
  newIndex = tree.add(to, near);
  return reached ? Extend::Reached : Extend::Advanced;
}

inline Extend connect(const Query& q, Tree& tree, Pose2 target, int& lastIndex) {
  Extend e = Extend::Advanced;
  while (e == Extend::Advanced && static_cast<int>(tree.nodes.size()) < q.budget.maxNodesPerTree)
    e = extend(q, tree, target, lastIndex);
  return e;
}

inline std::vector<Pose2> densify(const std::vector<Pose2>& path, double step) {
  std::vector<Pose2> out;
  if (path.empty()) return out;
  out.push_back(path.front());
  for (std::size_t i = 1; i < path.size(); ++i) {
    const Pose2 a = path[i - 1];
    const Pose2 b = path[i];
    const int n = std::max(1, static_cast<int>(std::ceil(dist(a, b) / step)));
    for (int k = 1; k < n; ++k) out.push_back(a + (static_cast<double>(k) / n) * (b - a));
    out.push_back(b);
  }
  return out;
}

// Checks a long segment piece by piece, exactly as it will appear after
// densification, so returned paths re-validate with segmentClear.
inline bool segmentValid(const Query& q, Pose2 a, Pose2 b) {
  const std::vector<Pose2> pieces = densify({a, b}, q.budget.stepSize);
  for (std::size_t i = 1; i < pieces.size(); ++i)
    if (!segmentClear(q.obs, pieces[i - 1], pieces[i], q.footprint, q.resolution())) return false;
  return true;
}

inline std::vector<Pose2> shortcut(const Query& q, std::vector<Pose2> path, Rng& rng) {
  for (int attempt = 0; attempt < q.budget.shortcutAttempts && path.size() > 2; ++attempt) {
    std::uniform_int_distribution<std::size_t> pick(0, path.size() - 1);
    std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    if (i > j) std::swap(i, j);
    if (j - i < 2) continue;
    if (segmentValid(q, path[i], path[j]))
      path.erase(path.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                 path.begin() + static_cast<std::ptrdiff_t>(j));
  }
  return path;
}

}  // namespace detail

/// Bidirectional RRT-Connect between gripper configurations. Each restart
/// draws from its own sub-seed of one base seed, so raising the budget
/// only appends restarts. Returns the 2-waypoint straight line, flagged
/// infeasible, once the budget is spent.
inline MotionResult rrtConnect(const Obstacles& obs, Pose2 c1, Pose2 c2, double footprint,
                               const MotionBudget& budget, Rng& rng) {
  const std::uint64_t base = rng();
  MotionResult infeasible{{c1, c2}, false};
  if (!configFree(obs, c1, footprint) || !configFree(obs, c2, footprint)) return infeasible;

  const detail::Query q{obs, footprint, budget};
  if (detail::segmentValid(q, c1, c2))
    return {detail::densify({c1, c2}, budget.stepSize), true};

  std::uniform_real_distribution<double> ux(world::kWorkspace.xmin, world::kWorkspace.xmax);
  std::uniform_real_distribution<double> uy(world::kWorkspace.ymin, world::kWorkspace.ymax);
  for (int restart = 0; restart < budget.maxRestarts; ++restart) {
    Rng local(combineSeed(base, static_cast<std::uint64_t>(restart)));
    detail::Tree start;
    detail::Tree goal;
    start.add(c1, -1);
    goal.add(c2, -1);
    detail::Tree* a = &start;
    detail::Tree* b = &goal;
    // Samples that extend nothing still count, so an enclosed start ends.
    const int maxSamples = 4 * budget.maxNodesPerTree;
    for (int sampleCount = 0;
         sampleCount < maxSamples && (static_cast<int>(a->nodes.size()) < budget.maxNodesPerTree ||
                                      static_cast<int>(b->nodes.size()) < budget.maxNodesPerTree);
         ++sampleCount) {
      if (static_cast<int>(a->nodes.size()) >= budget.maxNodesPerTree) std::swap(a, b);
      const Pose2 sample{ux(local), uy(local)};
      int newA = -1;
      if (detail::extend(q, *a, sample, newA) != detail::Extend::Trapped) {
        int lastB = -1;
        if (detail::connect(q, *b, a->nodes[newA], lastB) == detail::Extend::Reached) {
          std::vector<Pose2> fromA = a->branch(newA);
          std::vector<Pose2> fromB = b->branch(lastB);
          std::reverse(fromA.begin(), fromA.end());
          fromA.insert(fromA.end(), fromB.begin() + 1, fromB.end());
          if (a != &start) std::reverse(fromA.begin(), fromA.end());
          std::vector<Pose2> path = detail::shortcut(q, std::move(fromA), local);
          return {detail::densify(path, budget.stepSize), true};
        }
      }
      std::swap(a, b);
    }
  }
  return infeasible;
}

inline MotionResult rrtConnect(const WorldState& w, Pose2 c1, Pose2 c2, double footprint,
                               const MotionBudget& budget, Rng& rng) {
  return rrtConnect(obstaclesOf(w), c1, c2, footprint, budget, rng);
}

/// Gripper footprint in `w`: the bare gripper, grown to the held object's radius.
inline double footprintOf(const WorldState& w) {
  if (!w.held.has_value()) return world::kEeFootprint;
  return std::max(world::kEeFootprint, w.object(*w.held).spec.radius);
}

/// Obstacles for the motion executing `a` from `w`. The manipulated object
/// is not an obstacle for the grasp approach, and objects already touching
/// the gripper at the start are left behind vertically before moving.
inline Obstacles stepObstacles(const WorldState& w, const ActionInstance& a) {
  const int exclude = isGraspType(a.schema) ? a.obj : 0;
  const double fp = footprintOf(w);
  Obstacles obs;
  for (const Disc& d : obstaclesOf(w, exclude)) {
    const double rr = d.radius + fp;
    const Pose2 v = w.eeConf - d.center;
    if (dot(v, v) < rr * rr) continue;
    obs.push_back(d);
  }
  return obs;
}

/// Seed for one motion query, a pure function of the query and `base`.
inline std::uint64_t querySeed(std::uint64_t base, Pose2 c1, Pose2 c2, double footprint,
                               const Obstacles& obs) {
  std::uint64_t h = combineSeed(base, doubleBits(c1.x));
  h = combineSeed(h, doubleBits(c1.y));
  h = combineSeed(h, doubleBits(c2.x));
  h = combineSeed(h, doubleBits(c2.y));
  h = combineSeed(h, doubleBits(footprint));
  for (const Disc& d : obs) {
    h = combineSeed(h, doubleBits(d.center.x));
    h = combineSeed(h, doubleBits(d.center.y));
    h = combineSeed(h, doubleBits(d.radius));
  }
  return h;
}

/// Motion query for one plan step taken from `w`.
inline MotionResult stepMotion(const WorldState& w, const ActionInstance& a,
                               const MotionBudget& budget, std::uint64_t baseSeed) {
  const Obstacles obs = stepObstacles(w, a);
  const double fp = footprintOf(w);
  Rng rng(querySeed(baseSeed, w.eeConf, a.theta, fp, obs));
  return rrtConnect(obs, w.eeConf, a.theta, fp, budget, rng);
}

struct MotionCheck {
  bool feasible = true;
  std::vector<MotionResult> perStep;
};

/// Replays a fully bound plan and plans a gripper path for every step.
/// Stops at the first infeasible step.
inline MotionCheck motionPlansExist(const WorldState& w0, const Plan& plan,
                                    const MotionBudget& budget, Rng& rng) {
  const std::uint64_t base = rng();
  MotionCheck out;
  WorldState w = w0;
  for (const PlanStep& step : plan) {
    if (!step.theta.has_value()) throw std::invalid_argument("motionPlansExist needs bound theta");
    const ActionInstance a{step.schema, step.obj, *step.theta};
    out.perStep.push_back(stepMotion(w, a, budget, base));
    if (!out.perStep.back().feasible) {
      out.feasible = false;
      return out;
    }
    w = applyAction(w, a);
  }
  return out;
}

}  // namespace tamp
