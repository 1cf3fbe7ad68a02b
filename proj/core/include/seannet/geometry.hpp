#pragma once

#include <array>
#include <cmath>

namespace seannet {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  bool operator==(const Vec3&) const = default;
};

// Box rotated about the vertical axis: center, half-extents, yaw (radians).
struct OrientedBox3 {
  Vec3 center;
  Vec3 half;
  double yaw = 0.0;

  bool operator==(const OrientedBox3&) const = default;

  // Radius of the smallest sphere bounding the box (centered at center).
  double bounding_radius() const { return half.norm(); }

  std::array<Vec3, 8> corners() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    std::array<Vec3, 8> out;
    int k = 0;
    for (int sx : {-1, 1})
      for (int sy : {-1, 1})
        for (int sz : {-1, 1}) {
          const double lx = sx * half.x, ly = sy * half.y;
          out[k++] = {center.x + c * lx - s * ly, center.y + s * lx + c * ly,
                      center.z + sz * half.z};
        }
    return out;
  }

  // World point into the box frame.
  Vec3 to_local(const Vec3& p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const Vec3 d = p - center;
    return {c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
  }

  // Closed containment: a point exactly on a face counts as inside.
  bool contains(const Vec3& p, double tol = 1e-9) const {
    const Vec3 l = to_local(p);
    return std::abs(l.x) <= half.x + tol && std::abs(l.y) <= half.y + tol &&
           std::abs(l.z) <= half.z + tol;
  }

  double top_z() const { return center.z + half.z; }

  // True when (x, y) falls inside the box footprint.
  bool footprint_contains(double x, double y, double tol = 0.0) const {
    const Vec3 l = to_local({x, y, center.z});
    return std::abs(l.x) <= half.x + tol && std::abs(l.y) <= half.y + tol;
  }
};

inline double center_distance(const OrientedBox3& a, const OrientedBox3& b) {
  return (a.center - b.center).norm();
}

// Conservative footprint-disc overlap test used during placement.
inline bool footprints_overlap(const OrientedBox3& a, const OrientedBox3& b) {
  const double dx = a.center.x - b.center.x;
  const double dy = a.center.y - b.center.y;
  const double ra = std::hypot(a.half.x, a.half.y);
  const double rb = std::hypot(b.half.x, b.half.y);
  return std::hypot(dx, dy) < ra + rb;
}

// Image-plane box, pixel corners (u1, v1) lower-left-most, (u2, v2) opposite.
struct BBox2 {
  double u1 = 0.0;
  double v1 = 0.0;
  double u2 = 0.0;
  double v2 = 0.0;

  bool operator==(const BBox2&) const = default;
};

}  // namespace seannet
