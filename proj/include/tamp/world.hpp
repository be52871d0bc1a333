#pragma once

// Deterministic 2.5-D tabletop world: a free-flying disc gripper moves
// cylinders, bowls and vases from a start table to a goal table.
//
// Legality of grasps and placements is expressed through nonnegative
// squared-hinge residuals that are zero exactly on the legal sets, so the
// same functions serve as legality oracles and as differentiable losses.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamp/geometry.hpp"

namespace tamp {

namespace world {
inline constexpr Rect kWorkspace{0.0, 0.0, 10.0, 10.0};
inline constexpr Rect kStartTable{0.5, 3.0, 4.0, 7.0};
inline constexpr Rect kGoalTable{6.0, 3.0, 9.5, 7.0};
inline constexpr Pose2 kHome{5.0, 1.0};
inline constexpr double kEeFootprint = 0.15;

inline constexpr double kCylinderStandoff = 0.1;
inline constexpr double kCylinderTol = 0.05;
inline constexpr double kBowlLipFraction = 0.9;
inline constexpr double kBowlLipTol = 0.08;
inline constexpr double kVaseLipFraction = 0.5;
inline constexpr double kVaseLipTol = 0.04;
// Top grasps need every other object center at least radius + this away.
inline constexpr double kTopClearance = 0.25;
// Slack on the non-overlap invariant.
inline constexpr double kOverlapSlack = 1e-9;
}  // namespace world

enum class ObjectKind { Cylinder, Bowl, Vase };
enum class Surface { StartTable, GoalTable, InHand };

/// The four domain operators. Order matters: it is the schema tie-break of
/// the symbolic plan enumeration and the index into per-schema arrays.
enum class Schema { MoveToGrasp = 0, Grasp = 1, MoveToPlace = 2, Place = 3 };
inline constexpr int kNumSchemas = 4;
inline constexpr Schema kAllSchemas[kNumSchemas] = {Schema::MoveToGrasp, Schema::Grasp,
                                                    Schema::MoveToPlace, Schema::Place};

inline bool isGraspType(Schema s) { return s == Schema::MoveToGrasp || s == Schema::Grasp; }

inline const char* schemaName(Schema s) {
  switch (s) {
    case Schema::MoveToGrasp: return "moveToGrasp";
    case Schema::Grasp: return "grasp";
    case Schema::MoveToPlace: return "moveToPlace";
    case Schema::Place: return "place";
  }
  return "?";
}

inline Schema schemaFromName(const std::string& name) {
  for (Schema s : kAllSchemas)
    if (name == schemaName(s)) return s;
  throw std::invalid_argument("unknown schema: " + name);
}

struct ObjectSpec {
  int id = 0;
  ObjectKind kind = ObjectKind::Cylinder;
  double radius = 0.3;
  double lipRadius = 0.0;  // unused for cylinders
  double lipTol = world::kCylinderTol;
  double height = 0.3;
  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

/// Builds a spec with the nominal grasp band for its kind. `lipScale`
/// rescales the lip radius of bowls and vases (capped at the radius).
inline ObjectSpec makeObject(int id, ObjectKind kind, double radius, double lipScale = 1.0,
                             double height = 0.3) {
  ObjectSpec s{id, kind, radius, 0.0, world::kCylinderTol, height};
  if (kind == ObjectKind::Bowl) {
    s.lipRadius = std::min(radius, world::kBowlLipFraction * lipScale * radius);
    s.lipTol = world::kBowlLipTol;
  } else if (kind == ObjectKind::Vase) {
    s.lipRadius = std::min(radius, world::kVaseLipFraction * lipScale * radius);
    s.lipTol = world::kVaseLipTol;
  }
  return s;
}

struct ObjectState {
  ObjectSpec spec;
  Pose2 pose;
  Surface surface = Surface::StartTable;
  friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

struct WorldState {
  Pose2 eeConf = world::kHome;
  std::vector<ObjectState> objects;  // sorted by id
  std::optional<int> held;
  Rect startTable = world::kStartTable;
  Rect goalTable = world::kGoalTable;
  // Cleared as soon as an executed grasp or place has a nonzero residual.
  bool legal = true;

  friend bool operator==(const WorldState&, const WorldState&) = default;

  const ObjectState* find(int id) const {
    for (const auto& o : objects)
      if (o.spec.id == id) return &o;
    return nullptr;
  }
  ObjectState* find(int id) {
    for (auto& o : objects)
      if (o.spec.id == id) return &o;
    return nullptr;
  }
  const ObjectState& object(int id) const {
    const ObjectState* o = find(id);
    if (o == nullptr) throw std::invalid_argument("unknown object id " + std::to_string(id));
    return *o;
  }
  std::vector<int> objectIds() const {
    std::vector<int> ids;
    ids.reserve(objects.size());
    for (const auto& o : objects) ids.push_back(o.spec.id);
    return ids;
  }
};

/// A residual together with its gradient in the queried pose.
struct Residual {
  double value = 0.0;
  Pose2 grad;
};

/// Grasp legality residual for gripper pose `ee` on object `objId`.
///
/// Cylinders are grasped from the side: the gripper must sit in the band
/// |dist - (radius + standoff)| <= tol and the approach corridor from the
/// gripper to the contact point, inflated by the gripper footprint, must
/// clear every other object. Bowls and vases are grasped from above on the
/// lip: |dist - lipRadius| <= lipTol, and no other object center may lie
/// within radius + kTopClearance.
inline Residual graspResidualWithGrad(const WorldState& w, int objId, Pose2 ee) {
  const ObjectState& target = w.object(objId);
  if (w.held.has_value()) {
    if (*w.held == objId) throw std::logic_error("graspResidual on the held object");
    throw std::logic_error("graspResidual while the hand is full");
  }
  const Pose2 c = target.pose;
  const double r = target.spec.radius;
  const Pose2 v = ee - c;
  const double d = norm(v);
  const Pose2 u = d > 0.0 ? (1.0 / d) * v : Pose2{1.0, 0.0};

  Residual out;
  const bool side = target.spec.kind == ObjectKind::Cylinder;
  const double bandCenter = side ? r + world::kCylinderStandoff : target.spec.lipRadius;
  const double tol = side ? world::kCylinderTol : target.spec.lipTol;
  const Hinge band = squaredHinge(std::abs(d - bandCenter) - tol);
  out.value += band.value;
  if (band.value > 0.0 && d > 0.0) {
    const double sgn = d >= bandCenter ? 1.0 : -1.0;
    out.grad += (band.slope * sgn) * u;
  }

  for (const auto& other : w.objects) {
    if (other.spec.id == objId || other.surface == Surface::InHand) continue;
    const Pose2 q = other.pose;
    if (side) {
      const Pose2 contact = c + r * u;
      const SegmentProjection proj = projectOntoSegment(q, ee, contact);
      const Pose2 dvec = q - proj.point;
      const double dd = norm(dvec);
      const Hinge pen = squaredHinge(other.spec.radius + world::kEeFootprint - dd);
      if (pen.value <= 0.0) continue;
      out.value += pen.value;
      if (dd > 0.0 && d > 0.0) {
        const Pose2 n = (1.0 / dd) * dvec;
        const Pose2 tangential = n - dot(u, n) * u;
        const Pose2 dpen = (1.0 - proj.t) * n + (proj.t * r / d) * tangential;
        out.grad += pen.slope * dpen;
      }
    } else {
      const Hinge pen = squaredHinge(r + world::kTopClearance - dist(q, c));
      out.value += pen.value;
    }
  }
  return out;
}

inline double graspResidual(const WorldState& w, int objId, Pose2 ee) {
  return graspResidualWithGrad(w, objId, ee).value;
}

/// Placement residual for putting the held object `objId` at `target`.
/// The full residual asks for the object disc to lie inside the goal table
/// and to overlap no placed object; the relaxed one keeps the region term.
inline Residual placeResidualWithGrad(const WorldState& w, int objId, Pose2 target,
                                      bool relaxed = false) {
  if (!w.held.has_value() || *w.held != objId)
    throw std::logic_error("placeResidual on an object that is not held");
  const ObjectState& obj = w.object(objId);
  const double r = obj.spec.radius;

  Residual out;
  const RectDistance rd = squaredDistanceToRect(target, w.goalTable.eroded(r));
  out.value = rd.sq;
  out.grad = rd.grad;
  if (relaxed) return out;

  for (const auto& other : w.objects) {
    if (other.spec.id == objId || other.surface != Surface::GoalTable) continue;
    const Pose2 dvec = target - other.pose;
    const double dd = norm(dvec);
    const Hinge pen = squaredHinge(r + other.spec.radius - dd);
    if (pen.value <= 0.0) continue;
    out.value += pen.value;
    if (dd > 0.0) out.grad += (-pen.slope / dd) * dvec;
  }
  return out;
}

inline double placeResidual(const WorldState& w, int objId, Pose2 target, bool relaxed = false) {
  return placeResidualWithGrad(w, objId, target, relaxed).value;
}

struct ActionInstance {
  Schema schema = Schema::MoveToGrasp;
  int obj = 0;
  Pose2 theta;
  friend bool operator==(const ActionInstance&, const ActionInstance&) = default;
};

/// Residual of the positive effect of `a` in `w` (the state it is applied to).
/// Zero iff the action is legal there.
inline Residual actionResidualWithGrad(const WorldState& w, const ActionInstance& a) {
  switch (a.schema) {
    case Schema::MoveToGrasp:
    case Schema::Grasp: return graspResidualWithGrad(w, a.obj, a.theta);
    case Schema::MoveToPlace: return placeResidualWithGrad(w, a.obj, a.theta, true);
    case Schema::Place: return placeResidualWithGrad(w, a.obj, a.theta, false);
  }
  return {};
}

inline bool actionLegal(const WorldState& w, const ActionInstance& a) {
  return actionResidualWithGrad(w, a).value == 0.0;
}

/// Applies `a` optimistically: the transition happens even if the action is
/// illegal; illegal grasps and placements clear `legal`.
///
/// Every operator moves the gripper to theta. A grasp snaps the object to
/// the gripper; the held object tracks the gripper until it is placed at theta.
inline WorldState applyAction(const WorldState& w, const ActionInstance& a) {
  WorldState next = w;
  ObjectState* obj = next.find(a.obj);
  if (obj == nullptr) throw std::invalid_argument("unknown object id " + std::to_string(a.obj));

  switch (a.schema) {
    case Schema::MoveToGrasp:
    case Schema::MoveToPlace:
      next.eeConf = a.theta;
      break;
    case Schema::Grasp:
      if (w.held.has_value()) throw std::logic_error("grasp while holding an object");
      if (graspResidual(w, a.obj, a.theta) != 0.0) next.legal = false;
      next.eeConf = a.theta;
      next.held = a.obj;
      obj->surface = Surface::InHand;
      break;
    case Schema::Place:
      if (!w.held.has_value()) throw std::logic_error("place while the hand is empty");
      if (*w.held != a.obj) throw std::logic_error("place of an object that is not held");
      if (placeResidual(w, a.obj, a.theta) != 0.0) next.legal = false;
      next.eeConf = a.theta;
      obj->pose = a.theta;
      obj->surface = Surface::GoalTable;
      next.held.reset();
      break;
  }
  if (next.held.has_value()) next.find(*next.held)->pose = next.eeConf;
  return next;
}

/// True iff every object is on the goal table and every executed grasp and
/// place along the way was legal.
inline bool solved(const WorldState& w) {
  if (!w.legal || w.held.has_value()) return false;
  return std::all_of(w.objects.begin(), w.objects.end(),
                     [](const ObjectState& o) { return o.surface == Surface::GoalTable; });
}

/// Returns an empty string if `w` satisfies the world-state invariants,
/// otherwise a description of the first violation.
inline std::string invariantViolation(const WorldState& w) {
  int inHand = 0;
  for (std::size_t i = 0; i < w.objects.size(); ++i) {
    const ObjectState& o = w.objects[i];
    const ObjectSpec& s = o.spec;
    if (i > 0 && w.objects[i - 1].spec.id >= s.id) return "objects not sorted by id";
    if (!(s.radius > 0.0) || !(s.lipTol > 0.0) || !(s.height > 0.0)) return "bad geometry";
    if (s.kind != ObjectKind::Cylinder && !(s.lipRadius > 0.0 && s.lipRadius <= s.radius))
      return "bad lip radius";
    if (!isFinite(o.pose)) return "non-finite pose";
    if (o.surface == Surface::InHand) {
      ++inHand;
      if (!w.held.has_value() || *w.held != s.id) return "in-hand object is not the held one";
      continue;
    }
    const Rect& table = o.surface == Surface::StartTable ? w.startTable : w.goalTable;
    if (!table.eroded(s.radius).contains(o.pose)) return "object outside its table";
    for (std::size_t j = i + 1; j < w.objects.size(); ++j) {
      const ObjectState& p = w.objects[j];
      if (p.surface == Surface::InHand) continue;
      if (dist(o.pose, p.pose) < s.radius + p.spec.radius - world::kOverlapSlack)
        return "objects overlap";
    }
  }
  if (inHand > 1) return "more than one object in hand";
  if (w.held.has_value() && inHand != 1) return "held id without an in-hand object";
  return {};
}

// JSON -----------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const Pose2& p) { j = nlohmann::json::array({p.x, p.y}); }
inline void from_json(const nlohmann::json& j, Pose2& p) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("pose must be [x, y]");
  p.x = j.at(0).get<double>();
  p.y = j.at(1).get<double>();
}

inline void to_json(nlohmann::json& j, const Rect& r) {
  j = {{"xmin", r.xmin}, {"ymin", r.ymin}, {"xmax", r.xmax}, {"ymax", r.ymax}};
}
inline void from_json(const nlohmann::json& j, Rect& r) {
  r = {j.at("xmin").get<double>(), j.at("ymin").get<double>(), j.at("xmax").get<double>(),
       j.at("ymax").get<double>()};
}

NLOHMANN_JSON_SERIALIZE_ENUM(ObjectKind, {{ObjectKind::Cylinder, "cylinder"},
                                          {ObjectKind::Bowl, "bowl"},
                                          {ObjectKind::Vase, "vase"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Surface, {{Surface::StartTable, "startTable"},
                                       {Surface::GoalTable, "goalTable"},
                                       {Surface::InHand, "inHand"}})

inline void to_json(nlohmann::json& j, const ObjectSpec& s) {
  j = {{"id", s.id},         {"kind", s.kind},     {"radius", s.radius},
       {"lipRadius", s.lipRadius}, {"lipTol", s.lipTol}, {"height", s.height}};
}
inline void from_json(const nlohmann::json& j, ObjectSpec& s) {
  s.id = j.at("id").get<int>();
  s.kind = j.at("kind").get<ObjectKind>();
  s.radius = j.at("radius").get<double>();
  s.lipRadius = j.at("lipRadius").get<double>();
  s.lipTol = j.at("lipTol").get<double>();
  s.height = j.at("height").get<double>();
}

inline void to_json(nlohmann::json& j, const ObjectState& o) {
  j = {{"spec", o.spec}, {"pose", o.pose}, {"surface", o.surface}};
}
inline void from_json(const nlohmann::json& j, ObjectState& o) {
  o.spec = j.at("spec").get<ObjectSpec>();
  o.pose = j.at("pose").get<Pose2>();
  o.surface = j.at("surface").get<Surface>();
}

inline void to_json(nlohmann::json& j, const WorldState& w) {
  j = {{"eeConf", w.eeConf},         {"objects", w.objects},
       {"held", nullptr},            {"startTable", w.startTable},
       {"goalTable", w.goalTable},   {"legal", w.legal}};
  if (w.held.has_value()) j["held"] = *w.held;
}
inline void from_json(const nlohmann::json& j, WorldState& w) {
  w.eeConf = j.at("eeConf").get<Pose2>();
  w.objects = j.at("objects").get<std::vector<ObjectState>>();
  w.held.reset();
  if (j.contains("held") && !j.at("held").is_null()) w.held = j.at("held").get<int>();
  w.startTable = j.at("startTable").get<Rect>();
  w.goalTable = j.at("goalTable").get<Rect>();
  w.legal = j.value("legal", true);
  std::sort(w.objects.begin(), w.objects.end(),
            [](const ObjectState& a, const ObjectState& b) { return a.spec.id < b.spec.id; });
}

}  // namespace tamp
