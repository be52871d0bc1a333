#pragma once

// Predicate losses and the trajectory loss of a plan skeleton bound by a
// specializer pool, with gradients into the pool's flat weights.

#include <array>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamp/specializer.hpp"
#include "tamp/symbolic.hpp"
#include "tamp/world.hpp"

namespace tamp {

/// L_p for the positive effect of `a` applied in `w` (the pre-state).
using PredicateLoss = std::function<Residual(const WorldState& w, const ActionInstance& a)>;

class PredicateLossRegistry {
 public:
  void add(Predicate p, PredicateLoss f) { table_[p] = std::move(f); }
  bool has(Predicate p) const { return table_.count(p) != 0; }
  const PredicateLoss& at(Predicate p) const {
    auto it = table_.find(p);
    if (it == table_.end())
      throw std::out_of_range(std::string("no loss registered for ") + predicateName(p));
    return it->second;
  }

 private:
  std::map<Predicate, PredicateLoss> table_;
};

inline PredicateLossRegistry registerDomainLosses() {
  PredicateLossRegistry r;
  const PredicateLoss grasp = [](const WorldState& w, const ActionInstance& a) {
    return graspResidualWithGrad(w, a.obj, a.theta);
  };
  r.add(Predicate::ReadyToGrasp, grasp);
  r.add(Predicate::Holding, grasp);
  r.add(Predicate::ReadyToPlace, [](const WorldState& w, const ActionInstance& a) {
    return placeResidualWithGrad(w, a.obj, a.theta, true);
  });
  r.add(Predicate::OnGoal, [](const WorldState& w, const ActionInstance& a) {
    return placeResidualWithGrad(w, a.obj, a.theta, false);
  });
  r.add(Predicate::HandEmpty, [](const WorldState&, const ActionInstance&) { return Residual{}; });
  r.add(Predicate::OnStart, [](const WorldState&, const ActionInstance&) { return Residual{}; });
  return r;
}

struct StepLoss {
  int step = 0;  // 1-based
  Fluent fluent;
  double value = 0.0;
};

struct TrajectoryLossReport {
  double total = 0.0;
  std::vector<StepLoss> perStep;
  std::vector<double> gradW;  // aligned with pool.weights
  std::vector<Pose2> thetas;  // theta bound at each step
};

/// Rolls `plan` forward from `w0`, binding theta_j with the pool's
/// specializers, and sums the positive-effect losses of every step.
/// The gradient treats each step's pre-state as a constant.
inline TrajectoryLossReport trajectoryLoss(const SpecializerPool& pool, const WorldState& w0,
                                           const Plan& plan, const Domain& domain,
                                           const PredicateLossRegistry& registry,
                                           bool withGrad = true) {
  const PlanningState s0 = abstractState(w0);
  if (!replaySymbolic(domain, s0, plan).has_value())
    throw std::invalid_argument("trajectoryLoss: plan is not applicable");
  const std::vector<int> objects = objectsOf(s0);

  TrajectoryLossReport rep;
  if (withGrad) rep.gradW.assign(pool.weights.size(), 0.0);
  WorldState w = w0;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const PlanStep& step = plan[k];
    const int j = static_cast<int>(k) + 1;
    ActionInstance a{step.schema, step.obj, pool.propose(step.schema, step.spec, w, step.obj, j)};
    const PlanningState add = ground(domain, step.schema, step.obj, objects).add;
    Pose2 dTheta;
    for (const Fluent& f : add.fluents()) {
      const Residual r = registry.at(f.predicate)(w, a);
      rep.perStep.push_back({j, f, r.value});
      rep.total += r.value;
      dTheta += r.grad;
    }
    if (withGrad && (dTheta.x != 0.0 || dTheta.y != 0.0))
      pool.proposeBackward(step.schema, step.spec, w, step.obj, j, dTheta, rep.gradW);
    rep.thetas.push_back(a.theta);
    w = applyAction(w, a);
  }
  return rep;
}

inline TrajectoryLossReport trajectoryLoss(const SpecializerPool& pool, const WorldState& w0,
                                           const Plan& plan) {
  static const Domain domain = buildTabletopDomain();
  static const PredicateLossRegistry registry = registerDomainLosses();
  return trajectoryLoss(pool, w0, plan, domain, registry);
}

/// Per-step losses without the (large) gradient.
inline void to_json(nlohmann::json& j, const TrajectoryLossReport& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (const StepLoss& s : r.perStep)
    steps.push_back({{"step", s.step}, {"fluent", toString(s.fluent)}, {"value", s.value}});
  j = {{"total", r.total}, {"perStep", std::move(steps)}};
}

}  // namespace tamp
