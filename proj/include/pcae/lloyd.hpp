#pragma once

#include <vector>

#include "pcae/geometry.hpp"
#include "pcae/kdtree.hpp"

namespace pcae {

inline constexpr std::size_t kDefaultLloydRaster = 128;

namespace detail {

inline std::vector<Vec3> lift(const std::vector<Vec2>& s) {
  std::vector<Vec3> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = {s[i][0], s[i][1], 0.0};
  return out;
}

inline Vec3 probe(std::size_t i, std::size_t j, std::size_t raster) {
  const double h = 1.0 / static_cast<double>(raster);
  return {(static_cast<double>(i) + 0.5) * h, (static_cast<double>(j) + 0.5) * h, 0.0};
}

}  // namespace detail

/// Mean squared distance from the probe raster to the nearest sample.
inline double quantization_energy(const UVSampleSet& uv, std::size_t raster = kDefaultLloydRaster) {
  if (uv.samples.empty()) throw GeometryError("quantization_energy: no samples");
  const KdTree tree(detail::lift(uv.samples));
  double e = 0;
  for (std::size_t i = 0; i < raster; ++i)
    for (std::size_t j = 0; j < raster; ++j) e += tree.nearest(detail::probe(i, j, raster)).distance_sq;
  return e / static_cast<double>(raster * raster);
}

/// Discrete Lloyd relaxation on [0,1]^2: each iteration assigns every probe
/// of a raster x raster grid to its nearest sample and moves each sample to
/// the centroid of its probes. Samples that own no probe stay where they are.
inline UVSampleSet lloyd_relax_2d(const UVSampleSet& uv, std::size_t iterations,
                                  std::size_t raster = kDefaultLloydRaster) {
  if (uv.samples.empty()) throw GeometryError("lloyd_relax_2d: no samples");
  UVSampleSet out = uv;
  out.mode = UVMode::lloyd;
  const std::size_t m = out.samples.size();
  std::vector<double> sx(m), sy(m);
  std::vector<std::size_t> cnt(m);
  for (std::size_t it = 0; it < iterations; ++it) {
    const KdTree tree(detail::lift(out.samples));
    std::fill(sx.begin(), sx.end(), 0.0);
    std::fill(sy.begin(), sy.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), 0);
    for (std::size_t i = 0; i < raster; ++i)
      for (std::size_t j = 0; j < raster; ++j) {
        const Vec3 p = detail::probe(i, j, raster);
        const std::size_t k = tree.nearest(p).index;
        sx[k] += p[0];
        sy[k] += p[1];
        ++cnt[k];
      }
    for (std::size_t k = 0; k < m; ++k)
      if (cnt[k]) out.samples[k] = {sx[k] / static_cast<double>(cnt[k]), sy[k] / static_cast<double>(cnt[k])};
  }
  return out;
}

inline UVSampleSet random_uv(std::size_t m, Rng& rng) {
  UVSampleSet uv;
  uv.samples.resize(m);
  for (auto& s : uv.samples) s = {rng.uniform(), rng.uniform()};
  return uv;
}

}  // namespace pcae
