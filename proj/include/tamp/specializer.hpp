#pragma once

// Specializers map (world state, target object, step index) to a gripper
// pose. Learned ones are small MLPs sharing one flat weight array; the
// hand-crafted pool and the uniform sampler are the non-learning baselines.

#include <array>
#include <cmath>
#include <concepts>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamp/geometry.hpp"
#include "tamp/nn.hpp"
#include "tamp/symbolic.hpp"
#include "tamp/world.hpp"

namespace tamp {

inline constexpr int kFeatureSize = 2 + 7 * kMaxObjects + (kMaxObjects + 1) + kMaxObjects + 1;
inline constexpr int kMaxSteps = 28;  // k_max: four steps per object
inline constexpr double kPositionScale = 5.0;

enum class Frame { ObjectRelative, WorldAbsolute };

NLOHMANN_JSON_SERIALIZE_ENUM(Frame, {{Frame::ObjectRelative, "objectRelative"},
                                     {Frame::WorldAbsolute, "worldAbsolute"}})

inline Frame frameOf(Schema s) { return isGraspType(s) ? Frame::ObjectRelative : Frame::WorldAbsolute; }

/// Layout: ee (2) | per-object slots by id, each [x, y, cylinder, bowl,
/// vase, radius, lipRadius] | held one-hot, index 0 = none | target one-hot
/// | j / kMax. Positions are (p - origin) / kPositionScale.
inline std::vector<double> featurize(const WorldState& w, int obj, int j, int kMax = kMaxSteps,
                                     Pose2 origin = world::kWorkspace.center()) {
  if (static_cast<int>(w.objects.size()) > kMaxObjects)
    throw std::invalid_argument("featurize: more than " + std::to_string(kMaxObjects) + " objects");
  if (j < 1) throw std::invalid_argument("featurize: step index must be >= 1");
  if (obj < 1 || obj > kMaxObjects) throw std::invalid_argument("featurize: bad target id");
  std::vector<double> f(kFeatureSize, 0.0);
  f[0] = (w.eeConf.x - origin.x) / kPositionScale;
  f[1] = (w.eeConf.y - origin.y) / kPositionScale;
  for (std::size_t slot = 0; slot < w.objects.size(); ++slot) {
    const ObjectState& o = w.objects[slot];
    double* s = f.data() + 2 + 7 * slot;
    s[0] = (o.pose.x - origin.x) / kPositionScale;
    s[1] = (o.pose.y - origin.y) / kPositionScale;
    s[2 + static_cast<int>(o.spec.kind)] = 1.0;
    s[5] = o.spec.radius;
    s[6] = o.spec.lipRadius;
  }
  const int heldBase = 2 + 7 * kMaxObjects;
  if (w.held.has_value()) {
    if (*w.held < 1 || *w.held > kMaxObjects) throw std::invalid_argument("featurize: bad held id");
    f[heldBase + *w.held] = 1.0;
  } else {
    f[heldBase] = 1.0;
  }
  const int targetBase = heldBase + kMaxObjects + 1;
  f[targetBase + obj - 1] = 1.0;
  f[kFeatureSize - 1] = static_cast<double>(j) / kMax;
  return f;
}

inline MlpShape defaultSpecializerShape() { return {{kFeatureSize, 100, 50, 20, 2}, Activation::Relu}; }

// worldAbsolute outputs stay strictly inside the workspace.
inline constexpr double kSquashMargin = 1e-6;

/// Maps a raw network output to theta; `jac` receives dtheta/draw (diagonal).
inline Pose2 outputToTheta(Frame frame, const WorldState& w, int obj, std::span<const double> raw,
                           Pose2* jac = nullptr) {
  if (frame == Frame::ObjectRelative) {
    if (jac != nullptr) *jac = {1.0, 1.0};
    return w.object(obj).pose + Pose2{raw[0], raw[1]};
  }
  const Pose2 c = world::kWorkspace.center();
  const Pose2 h = world::kWorkspace.halfExtents() - Pose2{kSquashMargin, kSquashMargin};
  const double tx = std::tanh(raw[0]);
  const double ty = std::tanh(raw[1]);
  if (jac != nullptr) *jac = {h.x * (1.0 - tx * tx), h.y * (1.0 - ty * ty)};
  return {c.x + tx * h.x, c.y + ty * h.y};
}

inline Pose2 featureOrigin(Frame frame, const WorldState& w, int obj) {
  return frame == Frame::ObjectRelative ? w.object(obj).pose : world::kWorkspace.center();
}

/// A single network-backed specializer.
struct Specializer {
  Schema schema = Schema::MoveToGrasp;
  int index = 0;
  Mlp net;
  Frame frame = Frame::ObjectRelative;
};

inline Pose2 specialize(const MlpShape& shape, std::span<const double> w, Frame frame,
                        const WorldState& ws, int obj, int j, int kMax = kMaxSteps) {
  const std::vector<double> x = featurize(ws, obj, j, kMax, featureOrigin(frame, ws, obj));
  const std::vector<double> raw = forward(shape, w, x);
  return outputToTheta(frame, ws, obj, raw);
}

inline Pose2 specialize(const Specializer& s, const WorldState& ws, int obj, int j,
                        int kMax = kMaxSteps) {
  return specialize(s.net.shape, s.net.weights, s.frame, ws, obj, j, kMax);
}

/// Adds (dtheta/dW)^T upstream into `gradW` and returns theta.
inline Pose2 specializeBackward(const MlpShape& shape, std::span<const double> w, Frame frame,
                                const WorldState& ws, int obj, int j, Pose2 upstream,
                                std::span<double> gradW, int kMax = kMaxSteps) {
  const std::vector<double> x = featurize(ws, obj, j, kMax, featureOrigin(frame, ws, obj));
  const std::vector<double> raw = forward(shape, w, x);
  Pose2 jac;
  const Pose2 theta = outputToTheta(frame, ws, obj, raw, &jac);
  const std::array<double, 2> up{upstream.x * jac.x, upstream.y * jac.y};
  if (up[0] != 0.0 || up[1] != 0.0) backwardInto(shape, w, x, up, gradW);
  return theta;
}

/// Anything that proposes a theta for (schema, index, state, object, step).
/// Step indices are 1-based.
template <typename S>
concept ThetaSource = requires(const S& s, Schema schema, int i, const WorldState& w, int obj, int j) {
  { s.count(schema) } -> std::convertible_to<int>;
  { s.propose(schema, i, w, obj, j) } -> std::convertible_to<Pose2>;
};

inline std::array<int, kNumSchemas> defaultPoolSizes() { return {3, 3, 3, 1}; }

/// The learned pool: every specializer shares one topology and owns a
/// contiguous slice of `weights`, ordered by schema then index.
class SpecializerPool {
 public:
  SpecializerPool() = default;
  SpecializerPool(std::array<int, kNumSchemas> sizes, MlpShape shape)
      : sizes_(sizes), shape_(std::move(shape)) {
    shape_.validate();
    if (shape_.inputSize() != kFeatureSize || shape_.outputSize() != 2)
      throw std::invalid_argument("specializer nets map features to a pose");
    for (int n : sizes_)
      if (n < 1) throw std::invalid_argument("every schema needs a specializer");
    weights.assign(totalCount() * shape_.weightCount(), 0.0);
  }

  /// Glorot-initialized pool.
  static SpecializerPool random(Rng& rng, std::array<int, kNumSchemas> sizes = defaultPoolSizes(),
                                MlpShape shape = defaultSpecializerShape()) {
    SpecializerPool p(sizes, std::move(shape));
    for (Schema s : kAllSchemas)
      for (int i = 0; i < p.count(s); ++i) p.reinit(s, i, rng);
    return p;
  }

  int count(Schema s) const { return sizes_[static_cast<int>(s)]; }
  const std::array<int, kNumSchemas>& sizes() const { return sizes_; }
  const MlpShape& shape() const { return shape_; }
  std::size_t totalCount() const {
    std::size_t n = 0;
    for (int c : sizes_) n += static_cast<std::size_t>(c);
    return n;
  }

  std::size_t offset(Schema s, int i) const {
    checkIndex(s, i);
    std::size_t k = 0;
    for (int a = 0; a < static_cast<int>(s); ++a) k += static_cast<std::size_t>(sizes_[a]);
    return (k + static_cast<std::size_t>(i)) * shape_.weightCount();
  }
  std::pair<std::size_t, std::size_t> range(Schema s, int i) const {
    const std::size_t lo = offset(s, i);
    return {lo, lo + shape_.weightCount()};
  }
  std::span<const double> slice(Schema s, int i) const {
    return std::span<const double>(weights).subspan(offset(s, i), shape_.weightCount());
  }
  std::span<double> slice(Schema s, int i) {
    return std::span<double>(weights).subspan(offset(s, i), shape_.weightCount());
  }

  void reinit(Schema s, int i, Rng& rng) { initGlorot(shape_, slice(s, i), rng); }

  Specializer specializer(Schema s, int i) const {
    Mlp net(shape_);
    const auto sl = slice(s, i);
    net.weights.assign(sl.begin(), sl.end());
    return {s, i, std::move(net), frameOf(s)};
  }

  Pose2 propose(Schema s, int i, const WorldState& w, int obj, int j) const {
    return specialize(shape_, slice(s, i), frameOf(s), w, obj, j);
  }

  /// Adds dtheta/dW^T upstream into the matching slice of `gradW`.
  Pose2 proposeBackward(Schema s, int i, const WorldState& w, int obj, int j, Pose2 upstream,
                        std::span<double> gradW) const {
    if (gradW.size() != weights.size()) throw std::invalid_argument("gradient buffer size mismatch");
    return specializeBackward(shape_, slice(s, i), frameOf(s), w, obj, j, upstream,
                              gradW.subspan(offset(s, i), shape_.weightCount()));
  }

  std::vector<double> weights;

 private:
  void checkIndex(Schema s, int i) const {
    if (i < 0 || i >= count(s))
      throw std::out_of_range(std::string("no specializer ") + schemaName(s) + "[" +
                              std::to_string(i) + "]");
  }

  std::array<int, kNumSchemas> sizes_{};
  MlpShape shape_;
};

/// Per-schema selected pool indices.
using Subset = std::array<std::vector<int>, kNumSchemas>;

/// A pool restricted to a subset; index i means the i-th selected one.
class SubsetView {
 public:
  SubsetView(const SpecializerPool& pool, Subset subset) : pool_(&pool), subset_(std::move(subset)) {
    for (Schema s : kAllSchemas) {
      const auto& sel = subset_[static_cast<int>(s)];
      if (sel.empty()) throw std::invalid_argument("subset leaves a schema without specializers");
      for (int i : sel)
        if (i < 0 || i >= pool.count(s)) throw std::out_of_range("subset index out of range");
    }
  }
  int count(Schema s) const { return static_cast<int>(subset_[static_cast<int>(s)].size()); }
  int poolIndex(Schema s, int i) const { return subset_[static_cast<int>(s)].at(static_cast<std::size_t>(i)); }
  Pose2 propose(Schema s, int i, const WorldState& w, int obj, int j) const {
    return pool_->propose(s, poolIndex(s, i), w, obj, j);
  }
  const SpecializerPool& pool() const { return *pool_; }
  const Subset& subset() const { return subset_; }

 private:
  const SpecializerPool* pool_;
  Subset subset_;
};

inline Subset fullSubset(const SpecializerPool& pool) {
  Subset s;
  for (Schema a : kAllSchemas)
    for (int i = 0; i < pool.count(a); ++i) s[static_cast<int>(a)].push_back(i);
  return s;
}

/// Task-agnostic rules that look only at the target object's nominal
/// geometry and the step index, never at neighbors. Grasps use the nominal
/// band center of the object's kind from one of three fixed directions,
/// -x first; placements walk a fixed scanline grid from the front-left
/// corner of the goal table, one cell per four plan steps.
class HandCraftedPool {
 public:
  static constexpr double kGridPitch = 1.0;
  static constexpr int kGridRows = 4;

  int count(Schema s) const { return isGraspType(s) ? 3 : 1; }

  Pose2 propose(Schema s, int i, const WorldState& w, int obj, int j) const {
    if (i < 0 || i >= count(s)) throw std::out_of_range("hand-crafted index out of range");
    const ObjectState& o = w.object(obj);
    if (isGraspType(s)) {
      static constexpr Pose2 kDirs[3] = {{-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}};
      return o.pose + nominalBandCenter(o.spec) * kDirs[i];
    }
    return gridCell(w.goalTable, (j - 1) / 4);
  }

  static double nominalBandCenter(const ObjectSpec& s) {
    switch (s.kind) {
      case ObjectKind::Cylinder: return s.radius + world::kCylinderStandoff;
      case ObjectKind::Bowl: return world::kBowlLipFraction * s.radius;
      case ObjectKind::Vase: return world::kVaseLipFraction * s.radius;
    }
    return s.radius;
  }

  /// Cell `cell` of the grid: rows run along y, then the scan steps back in x.
  static Pose2 gridCell(const Rect& table, int cell) {
    if (cell < 0) cell = 0;
    const double half = 0.5 * kGridPitch;
    return {table.xmin + half + kGridPitch * (cell / kGridRows),
            table.ymin + half + kGridPitch * (cell % kGridRows)};
  }
};

/// Uniform sampler on the legal set's easy part: the grasp band for
/// grasp-type operators, the eroded goal table for place-type ones.
inline Pose2 randomSampler(const WorldState& w, int obj, Schema schema, Rng& rng) {
  const ObjectState& o = w.object(obj);
  if (isGraspType(schema)) {
    const bool side = o.spec.kind == ObjectKind::Cylinder;
    const double center = side ? o.spec.radius + world::kCylinderStandoff : o.spec.lipRadius;
    const double tol = side ? world::kCylinderTol : o.spec.lipTol;
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> rad(std::max(0.0, center - tol), center + tol);
    const double a = angle(rng);
    const double r = rad(rng);
    return o.pose + Pose2{r * std::cos(a), r * std::sin(a)};
  }
  const Rect region = w.goalTable.eroded(o.spec.radius);
  if (!region.valid()) return w.goalTable.center();
  std::uniform_real_distribution<double> ux(region.xmin, region.xmax);
  std::uniform_real_distribution<double> uy(region.ymin, region.ymax);
  const double x = ux(rng);
  return {x, uy(rng)};
}

// JSON -----------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const Specializer& s) {
  j = {{"schema", schemaName(s.schema)}, {"index", s.index}, {"frame", s.frame}, {"net", s.net}};
}

/// {schemaName: [ {schema, index, frame, net}, ... ], ...}
inline void to_json(nlohmann::json& j, const SpecializerPool& pool) {
  j = nlohmann::json::object();
  for (Schema s : kAllSchemas) {
    nlohmann::json arr = nlohmann::json::array();
    for (int i = 0; i < pool.count(s); ++i) arr.push_back(pool.specializer(s, i));
    j[schemaName(s)] = std::move(arr);
  }
}

inline void from_json(const nlohmann::json& j, SpecializerPool& pool) {
  std::array<int, kNumSchemas> sizes{};
  MlpShape shape;
  bool haveShape = false;
  for (Schema s : kAllSchemas) {
    const nlohmann::json& arr = j.at(schemaName(s));
    sizes[static_cast<int>(s)] = static_cast<int>(arr.size());
    for (const auto& rec : arr) {
      const Mlp net = rec.at("net").get<Mlp>();
      if (!haveShape) {
        shape = net.shape;
        haveShape = true;
      } else if (!(net.shape == shape)) {
        throw std::invalid_argument("pool specializers must share one topology");
      }
    }
  }
  if (!haveShape) throw std::invalid_argument("empty pool checkpoint");
  SpecializerPool p(sizes, shape);
  for (Schema s : kAllSchemas) {
    const nlohmann::json& arr = j.at(schemaName(s));
    for (const auto& rec : arr) {
      const int i = rec.at("index").get<int>();
      if (rec.at("schema").get<std::string>() != schemaName(s))
        throw std::invalid_argument("specializer record under the wrong schema");
      if (rec.at("frame").get<Frame>() != frameOf(s)) throw std::invalid_argument("frame mismatch");
      const Mlp net = rec.at("net").get<Mlp>();
      auto sl = p.slice(s, i);
      std::copy(net.weights.begin(), net.weights.end(), sl.begin());
    }
  }
  pool = std::move(p);
}

}  // namespace tamp
