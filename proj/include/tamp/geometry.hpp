#pragma once

// Planar geometry primitives shared by the world model, the motion planner
// and the specializers.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace tamp {

using Rng = std::mt19937_64;

/// A planar pose (position only; the gripper is rotation-free).
struct Pose2 {
  double x = 0.0;
  double y = 0.0;

  friend Pose2 operator+(Pose2 a, Pose2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Pose2 operator-(Pose2 a, Pose2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Pose2 operator*(double s, Pose2 a) { return {s * a.x, s * a.y}; }
  friend Pose2 operator*(Pose2 a, double s) { return {s * a.x, s * a.y}; }
  Pose2& operator+=(Pose2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

inline double dot(Pose2 a, Pose2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Pose2 a) { return std::hypot(a.x, a.y); }
inline double dist(Pose2 a, Pose2 b) { return norm(a - b); }
inline bool isFinite(Pose2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

/// Axis-aligned rectangle.
struct Rect {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  bool valid() const { return xmin < xmax && ymin < ymax; }
  bool contains(Pose2 p) const {
    return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
  }
  Pose2 center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }
  Pose2 halfExtents() const { return {0.5 * (xmax - xmin), 0.5 * (ymax - ymin)}; }

  /// Shrinks every side by `margin`. The result may be empty (invalid).
  Rect eroded(double margin) const {
    return {xmin + margin, ymin + margin, xmax - margin, ymax - margin};
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// A disc obstacle or footprint.
struct Disc {
  Pose2 center;
  double radius = 0.0;
};

/// Closest point on segment [a,b] to q, with its segment parameter.
struct SegmentProjection {
  Pose2 point;
  double t = 0.0;
};

inline SegmentProjection projectOntoSegment(Pose2 q, Pose2 a, Pose2 b) {
  const Pose2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 <= 0.0) return {a, 0.0};
  const double t = std::clamp(dot(q - a, ab) / len2, 0.0, 1.0);
  return {a + t * ab, t};
}

/// Signed squared-hinge helper: max(0, v)^2 and its derivative in v.
struct Hinge {
  double value = 0.0;
  double slope = 0.0;
};

inline Hinge squaredHinge(double v) {
  if (v <= 0.0) return {0.0, 0.0};
  return {v * v, 2.0 * v};
}

/// Squared distance from p to rectangle r (zero inside), with gradient in p.
struct RectDistance {
  double sq = 0.0;
  Pose2 grad;
};

inline RectDistance squaredDistanceToRect(Pose2 p, const Rect& r) {
  RectDistance out;
  double dx = 0.0;
  double dy = 0.0;
  if (p.x < r.xmin) dx = p.x - r.xmin;
  else if (p.x > r.xmax) dx = p.x - r.xmax;
  if (p.y < r.ymin) dy = p.y - r.ymin;
  else if (p.y > r.ymax) dy = p.y - r.ymax;
  // An eroded rect may have collapsed; project onto its (degenerate) center line.
  if (r.xmin > r.xmax) dx = p.x - 0.5 * (r.xmin + r.xmax);
  if (r.ymin > r.ymax) dy = p.y - 0.5 * (r.ymin + r.ymax);
  out.sq = dx * dx + dy * dy;
  out.grad = {2.0 * dx, 2.0 * dy};
  return out;
}

// splitmix64 finalizer; used to derive reproducible sub-seeds.
inline std::uint64_t mixSeed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t combineSeed(std::uint64_t seed, std::uint64_t value) {
  return mixSeed(seed ^ mixSeed(value));
}

inline std::uint64_t doubleBits(double v) {
  return std::bit_cast<std::uint64_t>(v);
}

}  // namespace tamp
