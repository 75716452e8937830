#pragma once

// Synthetic shape families standing in for a mesh collection, plus loading of
// pre-sampled clouds from a directory.

#include <algorithm>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "pcae/geometry.hpp"
#include "pcae/io.hpp"

namespace pcae {

enum class ShapeKind { sphere, cube, torus, cylinder };

inline constexpr double kTorusMajor = 1.0;
inline constexpr double kTorusMinor = 0.35;

inline ShapeKind parse_shape_kind(const std::string& s) {
  if (s == "sphere") return ShapeKind::sphere;
  if (s == "cube") return ShapeKind::cube;
  if (s == "torus") return ShapeKind::torus;
  if (s == "cylinder") return ShapeKind::cylinder;
  throw std::invalid_argument("unknown shape kind '" + s + "'");
}
inline std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::cube: return "cube";
    case ShapeKind::torus: return "torus";
    case ShapeKind::cylinder: return "cylinder";
  }
  return "?";
}

/// Area-uniform samples on a canonical surface: unit sphere, surface of
/// [-1,1]^3, torus (R = 1, r = 0.35) around z, closed cylinder of radius 1 and
/// height 2 along z.
inline std::vector<Vec3> sample_primitive(ShapeKind kind, std::size_t count, Rng& rng) {
  constexpr double two_pi = 2 * std::numbers::pi;
  std::vector<Vec3> out;
  out.reserve(count);
  while (out.size() < count) {
    switch (kind) {
      case ShapeKind::sphere: {
        Vec3 v{rng.normal(), rng.normal(), rng.normal()};
        const double n = norm3(v);
        if (n < 1e-12) continue;
        out.push_back((1.0 / n) * v);
        break;
      }
      case ShapeKind::cube: {
        const std::size_t face = rng.index(6);
        const double u = rng.uniform(-1, 1), v = rng.uniform(-1, 1);
        const double s = face % 2 ? 1.0 : -1.0;
        const std::size_t axis = face / 2;
        Vec3 p{};
        p[axis] = s;
        p[(axis + 1) % 3] = u;
        p[(axis + 2) % 3] = v;
        out.push_back(p);
        break;
      }
      case ShapeKind::torus: {
        // Area element is r (R + r cos phi); accept phi by rejection.
        const double theta = rng.uniform(0, two_pi), phi = rng.uniform(0, two_pi);
        const double w = (kTorusMajor + kTorusMinor * std::cos(phi)) / (kTorusMajor + kTorusMinor);
        if (rng.uniform() > w) continue;
        const double ring = kTorusMajor + kTorusMinor * std::cos(phi);
        out.push_back({ring * std::cos(theta), ring * std::sin(theta), kTorusMinor * std::sin(phi)});
        break;
      }
      case ShapeKind::cylinder: {
        // Side area 4 pi, each cap pi.
        const double a = rng.uniform(0, 6.0);
        const double theta = rng.uniform(0, two_pi);
        if (a < 4.0) {
          out.push_back({std::cos(theta), std::sin(theta), rng.uniform(-1, 1)});
        } else {
          const double rad = std::sqrt(rng.uniform());
          out.push_back({rad * std::cos(theta), rad * std::sin(theta), a < 5.0 ? -1.0 : 1.0});
        }
        break;
      }
    }
  }
  return out;
}

/// One training/evaluation shape. Both clouds are in the unit-cube frame of
/// the dense reference and carry its denormalization.
struct DatasetShape {
  std::string name;
  PointCloud dense;  // reference sampling
  PointCloud input;  // subsampled encoder input and reconstruction target
};

struct Dataset {
  std::vector<DatasetShape> shapes;
};

enum class Subsampling { fps, random };

inline PointCloud random_subset(const PointCloud& pc, std::size_t k, Rng& rng) {
  if (k > pc.size()) throw GeometryError("random_subset: k exceeds point count");
  std::vector<std::size_t> idx(pc.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(pc.size() - i)]);
  PointCloud out;
  out.frame = pc.frame;
  out.denorm = pc.denorm;
  for (std::size_t i = 0; i < k; ++i) out.points.push_back(pc.points[idx[i]]);
  return out;
}

inline DatasetShape make_dataset_shape(std::string name, const PointCloud& raw_dense, std::size_t n_in,
                                       Subsampling mode, Rng& rng) {
  DatasetShape s;
  s.name = std::move(name);
  s.dense = normalize_unit_cube(raw_dense);
  s.input = mode == Subsampling::fps ? farthest_point_sample(s.dense, n_in, rng) : random_subset(s.dense, n_in, rng);
  return s;
}

/// `kind` is a shape family or "mixed" (families in rotation). Each shape gets
/// an independent anisotropic scale in [0.5, 1] per axis.
inline Dataset make_synthetic_dataset(const std::string& kind, std::size_t count, std::size_t points_per_shape,
                                      std::uint64_t seed, std::size_t dense_points = 16000,
                                      Subsampling mode = Subsampling::fps) {
  if (points_per_shape > dense_points) throw std::invalid_argument("synthetic dataset: points exceed dense count");
  const bool mixed = kind == "mixed";
  const ShapeKind fixed = mixed ? ShapeKind::sphere : parse_shape_kind(kind);
  Rng rng(seed);
  Dataset ds;
  for (std::size_t i = 0; i < count; ++i) {
    const ShapeKind k = mixed ? static_cast<ShapeKind>(i % 4) : fixed;
    const Vec3 scale{rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0)};
    PointCloud raw;
    raw.points = sample_primitive(k, dense_points, rng);
    for (auto& p : raw.points)
      for (int a = 0; a < 3; ++a) p[a] *= scale[a];
    char name[32];
    std::snprintf(name, sizeof name, "%s_%03zu", to_string(k).c_str(), i);
    ds.shapes.push_back(make_dataset_shape(name, raw, points_per_shape, mode, rng));
  }
  return ds;
}

/// Every .ply / .xyz file of a directory (sorted by name), each treated as a
/// raw dense reference.
inline Dataset load_directory_dataset(const std::string& dir, std::size_t points_per_shape, std::uint64_t seed,
                                      Subsampling mode = Subsampling::fps) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".ply" || ext == ".xyz")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .ply or .xyz clouds in " + dir);
  Rng rng(seed);
  Dataset ds;
  for (const auto& f : files) {
    const PointCloud raw = read_cloud(f.string());
    if (raw.size() < points_per_shape)
      throw IoError(f.string() + ": " + std::to_string(raw.size()) + " points, need at least " +
                    std::to_string(points_per_shape));
    ds.shapes.push_back(make_dataset_shape(f.stem().string(), raw, points_per_shape, mode, rng));
  }
  return ds;
}

}  // namespace pcae
