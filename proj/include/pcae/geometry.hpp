#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pcae/rng.hpp"

namespace pcae {

using Vec3 = std::array<double, 3>;
using Vec2 = std::array<double, 2>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross3(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}
inline double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Frame { raw, unit_cube };

/// Maps unit-cube coordinates back to the raw frame: raw = scale * p + offset.
struct Denormalization {
  double scale = 1.0;
  Vec3 offset{0, 0, 0};

  Vec3 apply(const Vec3& p) const { return scale * p + offset; }
};

struct PointCloud {
  std::vector<Vec3> points;
  Frame frame = Frame::raw;
  std::optional<Denormalization> denorm;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> triangles;
};

enum class UVMode { random, lloyd };

struct UVSampleSet {
  std::vector<Vec2> samples;
  UVMode mode = UVMode::random;
};

/// Regular partition of [-0.5, 0.5]^3 into G^3 cells. Linear cell index is
/// (ix * G + iy) * G + iz, matching a [C, G, G, G] feature tensor whose
/// spatial axes are x, y, z in that order.
struct GridSpec {
  std::size_t resolution = 32;

  double cell_width() const { return 1.0 / static_cast<double>(resolution); }
  std::size_t cell_count() const { return resolution * resolution * resolution; }

  /// Half-open cell intervals; the upper boundary of the last cell is closed.
  std::size_t axis_cell(double c) const {
    const double f = std::floor((c + 0.5) * static_cast<double>(resolution));
    if (f < 0) return 0;
    return std::min(static_cast<std::size_t>(f), resolution - 1);
  }
  std::size_t cell_of(const Vec3& p) const {
    return (axis_cell(p[0]) * resolution + axis_cell(p[1])) * resolution + axis_cell(p[2]);
  }
  Vec3 center(std::size_t ix, std::size_t iy, std::size_t iz) const {
    const double h = cell_width();
    return {-0.5 + (static_cast<double>(ix) + 0.5) * h, -0.5 + (static_cast<double>(iy) + 0.5) * h,
            -0.5 + (static_cast<double>(iz) + 0.5) * h};
  }
  Vec3 center(std::size_t linear) const {
    return center(linear / (resolution * resolution), (linear / resolution) % resolution, linear % resolution);
  }
};

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * norm3(cross3(b - a, c - a)); }

/// Area-weighted triangle selection with uniform barycentric placement.
inline PointCloud sample_surface_uniform(const Mesh& mesh, std::size_t count, Rng& rng) {
  if (count == 0) throw GeometryError("sample_surface_uniform: count must be >= 1");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    total += triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    cumulative[i] = total;
  }
  if (!(total > 0)) throw GeometryError("sample_surface_uniform: mesh has zero total area");
  PointCloud pc;
  pc.points.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double r = rng.uniform() * total;
    // upper_bound skips zero-area triangles, whose cumulative value repeats.
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    if (it == cumulative.end()) it = std::prev(cumulative.end());
    const auto& t = mesh.triangles[static_cast<std::size_t>(it - cumulative.begin())];
    double u = rng.uniform(), v = rng.uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Vec3& a = mesh.vertices[t[0]];
    pc.points.push_back(a + u * (mesh.vertices[t[1]] - a) + v * (mesh.vertices[t[2]] - a));
  }
  return pc;
}

/// Greedy farthest point sampling. The first point is drawn from `rng`; each
/// following pick maximizes the distance to the chosen set, ties to the
/// lowest index. Output is in selection order.
inline PointCloud farthest_point_sample(const PointCloud& pc, std::size_t k, Rng& rng) {
  const std::size_t n = pc.size();
  if (k > n) throw GeometryError("farthest_point_sample: k exceeds point count");
  PointCloud out;
  out.frame = pc.frame;
  out.denorm = pc.denorm;
  if (k == 0) return out;
  out.points.reserve(k);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::size_t current = rng.index(n);
  for (std::size_t s = 0; s < k; ++s) {
    out.points.push_back(pc.points[current]);
    min_d[current] = -1.0;  // chosen
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d[i] < 0) continue;
      min_d[i] = std::min(min_d[i], squared_distance(pc.points[i], pc.points[current]));
      if (min_d[i] > best_d) {
        best_d = min_d[i];
        best = i;
      }
    }
    current = best;
  }
  return out;
}

/// Centers the bounding box at the origin and scales the longest edge to 1.
inline PointCloud normalize_unit_cube(const PointCloud& pc) {
  if (pc.empty()) throw GeometryError("normalize_unit_cube: empty cloud");
  Vec3 lo = pc.points[0], hi = pc.points[0];
  for (const auto& p : pc.points)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  const double longest = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  if (!(longest > 0)) throw GeometryError("normalize_unit_cube: all points identical");
  Denormalization dn;
  dn.scale = longest;
  dn.offset = {0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])};
  PointCloud out;
  out.frame = Frame::unit_cube;
  out.denorm = dn;
  out.points.reserve(pc.size());
  for (const auto& p : pc.points) {
    Vec3 q = (1.0 / longest) * (p - dn.offset);
    for (auto& c : q) c = std::clamp(c, -0.5, 0.5);
    out.points.push_back(q);
  }
  return out;
}

/// Applies a cloud's recorded denormalization; identity for raw clouds.
inline PointCloud denormalize(const PointCloud& pc) {
  if (pc.frame == Frame::raw) return pc;
  if (!pc.denorm) throw GeometryError("denormalize: unit-cube cloud without denormalization record");
  PointCloud out;
  out.points.reserve(pc.size());
  for (const auto& p : pc.points) out.points.push_back(pc.denorm->apply(p));
  return out;
}

/// Expresses a raw cloud in the unit-cube frame of a reference normalization.
inline PointCloud apply_normalization(const PointCloud& raw, const Denormalization& dn) {
  PointCloud out;
  out.frame = Frame::unit_cube;
  out.denorm = dn;
  out.points.reserve(raw.size());
  for (const auto& p : raw.points) out.points.push_back((1.0 / dn.scale) * (p - dn.offset));
  return out;
}

}  // namespace pcae
