#pragma once

// STRIPS-style fluent layer for the tabletop domain and a lazy enumerator
// of symbolic plans over actions crossed with specializer indices.

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamp/world.hpp"

namespace tamp {

enum class Predicate { HandEmpty = 0, Holding, OnStart, OnGoal, ReadyToGrasp, ReadyToPlace };
inline constexpr int kNumPredicates = 6;
inline constexpr int kMaxObjects = 7;  // object ids are 1..kMaxObjects

inline const char* predicateName(Predicate p) {
  switch (p) {
    case Predicate::HandEmpty: return "HandEmpty";
    case Predicate::Holding: return "Holding";
    case Predicate::OnStart: return "OnStart";
    case Predicate::OnGoal: return "OnGoal";
    case Predicate::ReadyToGrasp: return "ReadyToGrasp";
    case Predicate::ReadyToPlace: return "ReadyToPlace";
  }
  return "?";
}

/// An instantiated predicate. `obj` is 0 for the object-free HandEmpty.
struct Fluent {
  Predicate predicate = Predicate::HandEmpty;
  int obj = 0;
  friend auto operator<=>(const Fluent&, const Fluent&) = default;
};

inline std::string toString(const Fluent& f) {
  if (f.predicate == Predicate::HandEmpty) return predicateName(f.predicate);
  return std::string(predicateName(f.predicate)) + "(o" + std::to_string(f.obj) + ")";
}

/// Closed-world set of fluents, packed one bit per (predicate, object slot).
class PlanningState {
 public:
  PlanningState() = default;
  PlanningState(std::initializer_list<Fluent> fluents) {
    for (const Fluent& f : fluents) insert(f);
  }

  static int bitOf(const Fluent& f) {
    if (f.obj < 0 || f.obj > kMaxObjects) throw std::out_of_range("object id out of range");
    return static_cast<int>(f.predicate) * 8 + f.obj;
  }

  bool contains(const Fluent& f) const { return (bits_ >> bitOf(f)) & 1ULL; }
  void insert(const Fluent& f) { bits_ |= 1ULL << bitOf(f); }
  void erase(const Fluent& f) { bits_ &= ~(1ULL << bitOf(f)); }
  bool includes(const PlanningState& sub) const { return (sub.bits_ & ~bits_) == 0; }
  bool empty() const { return bits_ == 0; }
  std::uint64_t bits() const { return bits_; }

  std::vector<Fluent> fluents() const {
    std::vector<Fluent> out;
    for (int b = 0; b < 64; ++b)
      if ((bits_ >> b) & 1ULL) out.push_back({static_cast<Predicate>(b / 8), b % 8});
    return out;
  }

  PlanningState& operator|=(const PlanningState& o) {
    bits_ |= o.bits_;
    return *this;
  }
  PlanningState& operator-=(const PlanningState& o) {
    bits_ &= ~o.bits_;
    return *this;
  }
  friend bool operator==(const PlanningState&, const PlanningState&) = default;

 private:
  std::uint64_t bits_ = 0;
};

/// Which objects a fluent template ranges over, relative to the action's object.
enum class ArgRef { None, Self, Others, All };

struct FluentTemplate {
  Predicate predicate;
  ArgRef arg;
};

struct ActionSchema {
  Schema schema;
  std::string name;
  int discreteArity = 1;
  int continuousArity = 1;  // one Pose2
  std::vector<FluentTemplate> pre;
  std::vector<FluentTemplate> effPlus;
  std::vector<FluentTemplate> effMinus;
};

using Domain = std::array<ActionSchema, kNumSchemas>;

inline Domain buildTabletopDomain() {
  using P = Predicate;
  using A = ArgRef;
  Domain d;
  d[0] = {Schema::MoveToGrasp, "moveToGrasp", 1, 1,
          {{P::HandEmpty, A::None}, {P::OnStart, A::Self}},
          {{P::ReadyToGrasp, A::Self}},
          {{P::ReadyToGrasp, A::Others}, {P::ReadyToPlace, A::All}}};
  d[1] = {Schema::Grasp, "grasp", 1, 1,
          {{P::HandEmpty, A::None}, {P::ReadyToGrasp, A::Self}},
          {{P::Holding, A::Self}},
          {{P::HandEmpty, A::None}, {P::OnStart, A::Self}, {P::ReadyToGrasp, A::Self}}};
  d[2] = {Schema::MoveToPlace, "moveToPlace", 1, 1,
          {{P::Holding, A::Self}},
          {{P::ReadyToPlace, A::Self}},
          {{P::ReadyToPlace, A::Others}, {P::ReadyToGrasp, A::All}}};
  d[3] = {Schema::Place, "place", 1, 1,
          {{P::Holding, A::Self}, {P::ReadyToPlace, A::Self}},
          {{P::OnGoal, A::Self}, {P::HandEmpty, A::None}},
          {{P::Holding, A::Self}, {P::ReadyToPlace, A::Self}}};
  return d;
}

/// An action schema bound to one object, as three fluent masks.
struct GroundAction {
  Schema schema;
  int obj;
  PlanningState pre;
  PlanningState add;
  PlanningState del;
};

inline PlanningState instantiate(const std::vector<FluentTemplate>& templates, int obj,
                                 const std::vector<int>& objects) {
  PlanningState s;
  for (const FluentTemplate& t : templates) {
    switch (t.arg) {
      case ArgRef::None: s.insert({t.predicate, 0}); break;
      case ArgRef::Self: s.insert({t.predicate, obj}); break;
      case ArgRef::Others:
      case ArgRef::All:
        for (int o : objects)
          if (t.arg == ArgRef::All || o != obj) s.insert({t.predicate, o});
        break;
    }
  }
  return s;
}

inline GroundAction ground(const Domain& domain, Schema schema, int obj,
                           const std::vector<int>& objects) {
  const ActionSchema& a = domain[static_cast<int>(schema)];
  return {schema, obj, instantiate(a.pre, obj, objects), instantiate(a.effPlus, obj, objects),
          instantiate(a.effMinus, obj, objects)};
}

inline bool applicable(const PlanningState& s, const GroundAction& a) { return s.includes(a.pre); }

inline PlanningState successor(const PlanningState& s, const GroundAction& a) {
  if (!applicable(s, a))
    throw std::logic_error(std::string("successor: ") + schemaName(a.schema) + "(o" +
                           std::to_string(a.obj) + ") is not applicable");
  PlanningState next = s;
  next |= a.add;
  next -= a.del;
  return next;
}

/// Objects mentioned by the basis fluents of `s`, ascending.
inline std::vector<int> objectsOf(const PlanningState& s) {
  std::vector<int> ids;
  for (int o = 1; o <= kMaxObjects; ++o) {
    if (s.contains({Predicate::OnStart, o}) || s.contains({Predicate::OnGoal, o}) ||
        s.contains({Predicate::Holding, o}))
      ids.push_back(o);
  }
  return ids;
}

/// Symbolic abstraction of a world state (Ready* fluents are not derivable
/// from geometry and are left false).
inline PlanningState abstractState(const WorldState& w) {
  PlanningState s;
  if (w.held.has_value()) s.insert({Predicate::Holding, *w.held});
  else s.insert({Predicate::HandEmpty, 0});
  for (const ObjectState& o : w.objects) {
    if (o.spec.id < 1 || o.spec.id > kMaxObjects) throw std::out_of_range("object id out of range");
    if (o.surface == Surface::StartTable) s.insert({Predicate::OnStart, o.spec.id});
    else if (o.surface == Surface::GoalTable) s.insert({Predicate::OnGoal, o.spec.id});
  }
  return s;
}

/// The pick-and-place goal: every object of `w` on the goal table.
inline PlanningState allOnGoal(const WorldState& w) {
  PlanningState g;
  for (const ObjectState& o : w.objects) g.insert({Predicate::OnGoal, o.spec.id});
  return g;
}

/// Admissible lower bound on the number of steps needed to reach `goal`.
inline int stepsLowerBound(const PlanningState& s, const PlanningState& goal) {
  constexpr int kUnreachable = std::numeric_limits<int>::max() / 4;
  int total = 0;
  for (const Fluent& f : goal.fluents()) {
    if (s.contains(f)) continue;
    if (f.predicate == Predicate::OnGoal) {
      const int o = f.obj;
      if (s.contains({Predicate::Holding, o}))
        total += s.contains({Predicate::ReadyToPlace, o}) ? 1 : 2;
      else if (s.contains({Predicate::OnStart, o}))
        total += s.contains({Predicate::ReadyToGrasp, o}) ? 3 : 4;
      else
        return kUnreachable;
    } else if (f.predicate == Predicate::OnStart) {
      // Nothing ever puts an object back on the start table.
      return kUnreachable;
    } else {
      total = std::max(total, 1);
    }
  }
  return total;
}

/// One step of a plan skeleton (theta unset) or of a plan (theta bound).
/// `spec` is the 0-based specializer index used for the step.
struct PlanStep {
  Schema schema = Schema::MoveToGrasp;
  int obj = 0;
  int spec = 0;
  std::optional<Pose2> theta;
  friend bool operator==(const PlanStep&, const PlanStep&) = default;
};

using Plan = std::vector<PlanStep>;

inline bool fullyBound(const Plan& p) {
  for (const PlanStep& s : p)
    if (!s.theta.has_value()) return false;
  return true;
}

/// Replays the discrete projection of `plan`; returns the final state, or
/// nullopt if some step is not applicable.
inline std::optional<PlanningState> replaySymbolic(const Domain& domain, const PlanningState& init,
                                                   const Plan& plan) {
  const std::vector<int> objects = objectsOf(init);
  PlanningState s = init;
  for (const PlanStep& step : plan) {
    const GroundAction a = ground(domain, step.schema, step.obj, objects);
    if (!applicable(s, a)) return std::nullopt;
    s = successor(s, a);
  }
  return s;
}

inline void to_json(nlohmann::json& j, const PlanStep& s) {
  j = {{"op", schemaName(s.schema)}, {"obj", s.obj}, {"spec", s.spec}};
  if (s.theta.has_value()) j["theta"] = *s.theta;
}
inline void from_json(const nlohmann::json& j, PlanStep& s) {
  s.schema = schemaFromName(j.at("op").get<std::string>());
  s.obj = j.at("obj").get<int>();
  s.spec = j.at("spec").get<int>();
  s.theta.reset();
  if (j.contains("theta") && !j.at("theta").is_null()) s.theta = j.at("theta").get<Pose2>();
}

/// Prunes every plan using action (schema, obj, spec) at 0-based step `step`.
struct BlockEntry {
  Schema schema;
  int obj;
  int spec;
  int step;
  friend auto operator<=>(const BlockEntry&, const BlockEntry&) = default;
};

/// Lazy, deterministic enumeration of discrete-level solutions over
/// A(Sigma): plans come in nondecreasing length; within a length they are
/// ordered lexicographically by step, comparing (object id, schema, spec
/// index) at each step. Iterative deepening with an admissible bound.
///
/// Besides the blocklist, the consumer may declare the prefix of the last
/// yielded plan dead; every later plan sharing it is skipped.
class PlanGenerator {
 public:
  struct Options {
    // Longest plan length to enumerate; negative means lower bound + 4.
    int maxLength = -1;
  };

  PlanGenerator(const Domain& domain, const std::array<int, kNumSchemas>& specCounts,
                const PlanningState& init, const PlanningState& goal, Options opts)
      : init_(init), goal_(goal) {
    const std::vector<int> objects = objectsOf(init);
    for (int o : objects) {
      for (Schema s : kAllSchemas) {
        const GroundAction g = ground(domain, s, o, objects);
        for (int i = 0; i < specCounts[static_cast<int>(s)]; ++i) actions_.push_back({g, i});
      }
    }
    const int lb = stepsLowerBound(init, goal);
    length_ = lb;
    maxLength_ = opts.maxLength >= 0 ? opts.maxLength : lb + 4;
  }

  PlanGenerator(const Domain& domain, const std::array<int, kNumSchemas>& specCounts,
                const PlanningState& init, const PlanningState& goal)
      : PlanGenerator(domain, specCounts, init, goal, Options{}) {}

  std::optional<Plan> next() {
    while (length_ <= maxLength_) {
      if (fresh_) {
        fresh_ = false;
        prefix_.clear();
        stack_.clear();
        if (length_ == 0) {
          ++length_;
          fresh_ = true;
          if (init_.includes(goal_)) {
            last_.clear();
            return Plan{};
          }
          continue;
        }
        stack_.push_back({init_, 0});
      }
      while (!stack_.empty()) {
        Frame& f = stack_.back();
        const std::size_t depth = stack_.size() - 1;
        std::size_t a = f.next;
        while (a < actions_.size() && !expandable(f.state, a, depth)) ++a;
        if (a == actions_.size()) {
          stack_.pop_back();
          if (!prefix_.empty()) prefix_.pop_back();
          continue;
        }
        f.next = a + 1;
        const PlanningState succ = successor(f.state, actions_[a].action);
        prefix_.push_back(a);
        if (dead_.count(prefix_) != 0) {
          prefix_.pop_back();
          continue;
        }
        const int reached = static_cast<int>(depth) + 1;
        if (reached == length_) {
          const bool done = succ.includes(goal_);
          if (done) {
            last_ = prefix_;
            Plan plan = toPlan(prefix_);
            prefix_.pop_back();
            return plan;
          }
          prefix_.pop_back();
          continue;
        }
        if (reached + stepsLowerBound(succ, goal_) > length_) {
          prefix_.pop_back();
          continue;
        }
        stack_.push_back({succ, 0});
      }
      ++length_;
      fresh_ = true;
    }
    return std::nullopt;
  }

  void block(const BlockEntry& e) { blocked_.insert(e); }

  /// Skips every future plan whose first `length` steps equal those of the
  /// most recently yielded plan.
  void pruneLastPrefix(std::size_t length) {
    if (length == 0 || length > last_.size()) return;
    dead_.insert(std::vector<std::size_t>(last_.begin(), last_.begin() + length));
    // Unwind the current search path so it resumes after the dead step.
    if (prefix_.size() + 1 == last_.size() && stack_.size() == last_.size() &&
        std::equal(prefix_.begin(), prefix_.end(), last_.begin()) && length <= stack_.size()) {
      stack_.resize(length);
      prefix_.resize(length - 1);
    }
  }

  int currentLength() const { return length_; }

 private:
  struct IndexedAction {
    GroundAction action;
    int spec;
  };
  struct Frame {
    PlanningState state;
    std::size_t next;
  };

  bool expandable(const PlanningState& s, std::size_t a, std::size_t depth) const {
    const IndexedAction& ia = actions_[a];
    if (!applicable(s, ia.action)) return false;
    if (!blocked_.empty() &&
        blocked_.count({ia.action.schema, ia.action.obj, ia.spec, static_cast<int>(depth)}) != 0)
      return false;
    return true;
  }

  Plan toPlan(const std::vector<std::size_t>& idx) const {
    Plan p;
    p.reserve(idx.size());
    for (std::size_t a : idx)
      p.push_back({actions_[a].action.schema, actions_[a].action.obj, actions_[a].spec, {}});
    return p;
  }

  PlanningState init_;
  PlanningState goal_;
  std::vector<IndexedAction> actions_;
  int length_ = 0;
  int maxLength_ = 0;
  bool fresh_ = true;
  std::vector<Frame> stack_;
  std::vector<std::size_t> prefix_;
  std::vector<std::size_t> last_;
  std::set<BlockEntry> blocked_;
  std::set<std::vector<std::size_t>> dead_;
};

}  // namespace tamp
