#pragma once

// Reconstruction metrics. Reported Chamfer values are L_c x 1000 between
// clouds of equal size (2500 by default) in the shapes' raw coordinates.

#include <cstdio>
#include <string>
#include <vector>

#include "pcae/dataset.hpp"
#include "pcae/losses.hpp"
#include "pcae/model.hpp"

namespace pcae {

inline constexpr double kChamferReportScale = 1000.0;

/// Chamfer x 1000 between two clouds after mapping both back to raw
/// coordinates.
inline double reported_chamfer(const PointCloud& a, const PointCloud& b) {
  return kChamferReportScale * chamfer(denormalize(a).points, denormalize(b).points).value;
}

/// Fixed reference subset of a shape's dense sampling used for evaluation.
inline PointCloud evaluation_reference(const DatasetShape& s, std::size_t n) {
  if (n >= s.dense.size()) return s.dense;
  Rng rng(0);
  return farthest_point_sample(s.dense, n, rng);
}

struct EvalEntry {
  std::string name;
  double chamfer = 0;  // x 1000, raw frame
};

struct EvalReport {
  std::vector<EvalEntry> shapes;
  double mean = 0;
  std::size_t points = 0;      // decoded points per shape
  std::size_t reference = 0;   // reference points per shape

  std::string format() const {
    std::string out;
    char line[256];
    for (const auto& e : shapes) {
      std::snprintf(line, sizeof line, "%s\t%.9g\n", e.name.c_str(), e.chamfer);
      out += line;
    }
    std::snprintf(line, sizeof line, "mean\t%.9g\t(%zu shapes, %zu decoded points, %zu reference points)\n", mean,
                  shapes.size(), points, reference);
    return out + line;
  }
};

/// Encodes each shape's input cloud, decodes `n` points in inference mode and
/// compares against an `n`-point reference from the dense sampling.
template <class T>
EvalReport evaluate(Autoencoder<T>& model, const Dataset& data, std::size_t n, std::uint64_t seed = 0) {
  EvalReport r;
  r.points = n;
  for (const auto& s : data.shapes) {
    const PointCloud recon = model.reconstruct(s.input, n, seed);
    const PointCloud ref = evaluation_reference(s, n);
    r.reference = ref.size();
    r.shapes.push_back({s.name, reported_chamfer(recon, ref)});
  }
  double sum = 0;
  for (const auto& e : r.shapes) sum += e.chamfer;
  r.mean = r.shapes.empty() ? 0.0 : sum / static_cast<double>(r.shapes.size());
  return r;
}

}  // namespace pcae
