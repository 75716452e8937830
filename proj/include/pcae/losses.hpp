#pragma once

// Training losses. Each returns its value and the exact gradient with
// respect to the generated quantity (points, offsets, densities, logits).
// Nearest-neighbor assignments are held constant in the backward pass.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "pcae/geometry.hpp"
#include "pcae/kdtree.hpp"
#include "pcae/ops.hpp"

namespace pcae {

struct LossResult {
  double value = 0;
  std::vector<double> grad;  // flattened; 3 per point for point losses
};

namespace detail {

inline void require_nonempty(std::span<const Vec3> x, std::span<const Vec3> y, const char* what) {
  if (x.empty() || y.empty()) throw GeometryError(std::string(what) + ": empty point cloud");
}

struct NearestPairs {
  std::vector<KdTree::Hit> x_to_y;  // per x: nearest y
  std::vector<KdTree::Hit> y_to_x;  // per y: nearest x
};

inline NearestPairs nearest_pairs(std::span<const Vec3> x, std::span<const Vec3> y) {
  NearestPairs np;
  const KdTree ty(y), tx(x);
  np.x_to_y.reserve(x.size());
  np.y_to_x.reserve(y.size());
  for (const auto& p : x) np.x_to_y.push_back(ty.nearest(p));
  for (const auto& p : y) np.y_to_x.push_back(tx.nearest(p));
  return np;
}

}  // namespace detail

/// L_c = 1/n sum_x d(x,Y)^2 + 1/m sum_y d(y,X)^2; gradient w.r.t. Y.
inline LossResult chamfer(std::span<const Vec3> x, std::span<const Vec3> y) {
  detail::require_nonempty(x, y, "chamfer");
  const auto np = detail::nearest_pairs(x, y);
  const double inv_n = 1.0 / static_cast<double>(x.size()), inv_m = 1.0 / static_cast<double>(y.size());
  LossResult r;
  r.grad.assign(3 * y.size(), 0.0);
  double a = 0, b = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& h = np.x_to_y[i];
    a += h.distance_sq;
    for (int c = 0; c < 3; ++c) r.grad[3 * h.index + c] += 2.0 * inv_n * (y[h.index][c] - x[i][c]);
  }
  for (std::size_t j = 0; j < y.size(); ++j) {
    const auto& h = np.y_to_x[j];
    b += h.distance_sq;
    for (int c = 0; c < 3; ++c) r.grad[3 * j + c] += 2.0 * inv_m * (y[j][c] - x[h.index][c]);
  }
  r.value = a * inv_n + b * inv_m;
  return r;
}

/// Sharpened Chamfer:
///   L_p = 1/n (sum_x d(x,Y)^p)^(1/p) + 1/m (sum_y d(y,X)^p)^(1/p)
/// with the count normalizations outside the roots.
inline LossResult p_chamfer(std::span<const Vec3> x, std::span<const Vec3> y, double p) {
  detail::require_nonempty(x, y, "p_chamfer");
  if (p < 1.0) throw std::invalid_argument("p_chamfer: exponent must be >= 1");
  const auto np = detail::nearest_pairs(x, y);
  LossResult r;
  r.grad.assign(3 * y.size(), 0.0);

  // One direction of the sum; `src_is_y` marks which side of each pair is
  // the generated point.
  auto term = [&](std::span<const Vec3> src, const std::vector<KdTree::Hit>& hits, bool src_is_y) {
    const double inv = 1.0 / static_cast<double>(src.size());
    double sum = 0;
    for (const auto& h : hits) sum += std::pow(h.distance(), p);
    if (sum == 0.0) return 0.0;
    const double root = std::pow(sum, 1.0 / p);
    // d/dd_i of sum^(1/p) = sum^(1/p - 1) * d_i^(p-1); chain with d d_i / d y.
    const double outer = inv * root / sum;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double d = hits[i].distance();
      if (d == 0.0) continue;
      const double w = outer * std::pow(d, p - 2.0);
      const std::size_t yi = src_is_y ? i : hits[i].index;
      const Vec3& yp = y[yi];
      const Vec3& xp = src_is_y ? x[hits[i].index] : x[i];
      for (int c = 0; c < 3; ++c) r.grad[3 * yi + c] += w * (yp[c] - xp[c]);
    }
    return inv * root;
  };
  r.value = term(x, np.x_to_y, false) + term(y, np.y_to_x, true);
  return r;
}

/// L_o = sum_s max(|o_s| - margin, 0) over per-point offsets from the
/// generating cell center, in cell-width units. Subgradient 0 at the kink.
inline LossResult offset_penalty(std::span<const Vec3> offsets, double margin) {
  LossResult r;
  r.grad.assign(3 * offsets.size(), 0.0);
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const double len = norm3(offsets[i]);
    if (len > margin) {
      r.value += len - margin;
      for (int c = 0; c < 3; ++c) r.grad[3 * i + c] = offsets[i][c] / len;
    }
  }
  return r;
}

/// L_d = 1/N sum_c (delta_c - target_c)^2 over all N grid cells.
inline LossResult density_mse(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size())
    throw std::invalid_argument("density_mse: resolution mismatch (" + std::to_string(predicted.size()) + " vs " +
                                std::to_string(target.size()) + " cells)");
  LossResult r;
  r.grad.resize(predicted.size());
  const double inv = 1.0 / static_cast<double>(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double e = predicted[i] - target[i];
    r.value += e * e;
    r.grad[i] = 2.0 * e * inv;
  }
  r.value *= inv;
  return r;
}

/// L_f = -1/N sum_c [t log p + (1-t) log(1-p)] with p = sigmoid(logit),
/// evaluated as softplus(l) - t*l. Gradient is w.r.t. the logits.
inline LossResult occupancy_bce_logits(std::span<const double> logits, std::span<const double> target) {
  if (logits.size() != target.size()) throw std::invalid_argument("occupancy_bce: resolution mismatch");
  LossResult r;
  r.grad.resize(logits.size());
  const double inv = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double l = logits[i];
    r.value += std::max(l, 0.0) - l * target[i] + std::log1p(std::exp(-std::abs(l)));
    r.grad[i] = (ops::sigmoid(l) - target[i]) * inv;
  }
  r.value *= inv;
  return r;
}

inline constexpr double kProbabilityClamp = 1e-7;

/// Same loss from probabilities, clamped to [1e-7, 1 - 1e-7]; gradient is
/// w.r.t. the (unclamped) probabilities and zero where the clamp is active.
inline LossResult occupancy_bce(std::span<const double> p, std::span<const double> target) {
  if (p.size() != target.size()) throw std::invalid_argument("occupancy_bce: resolution mismatch");
  LossResult r;
  r.grad.resize(p.size());
  const double inv = 1.0 / static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double t = target[i];
    r.value -= t * std::log(q) + (1.0 - t) * std::log1p(-q);
    r.grad[i] = (q == p[i]) ? inv * (-t / q + (1.0 - t) / (1.0 - q)) : 0.0;
  }
  r.value *= inv;
  return r;
}

/// Per-cell ground truth at the decoder's grid resolution.
struct CellGroundTruth {
  std::vector<double> occupancy;  // p-hat in {0, 1}
  std::vector<double> density;    // delta-hat, sums to 1
};

inline CellGroundTruth ground_truth_cells(std::span<const Vec3> x, const GridSpec& grid) {
  if (x.empty()) throw GeometryError("ground_truth_cells: empty cloud");
  CellGroundTruth gt;
  std::vector<std::size_t> counts(grid.cell_count(), 0);
  for (const auto& p : x) ++counts[grid.cell_of(p)];
  gt.density.resize(counts.size());
  gt.occupancy.resize(counts.size());
  const double n = static_cast<double>(x.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    gt.density[c] = static_cast<double>(counts[c]) / n;
    gt.occupancy[c] = counts[c] > 0 ? 1.0 : 0.0;
  }
  return gt;
}

struct LossWeights {
  double chamfer = 1e3;
  double p_chamfer = 1e1;
  double density = 1e10;
  double occupancy = 1e2;
  double offset = 1.0;
  double p = 5.0;
  double offset_margin = 1.7320508075688772;  // sqrt(3) cell widths
};

/// Which terms participate; disabled terms are still evaluated for logging
/// but contribute neither value nor gradient.
struct LossToggles {
  bool chamfer = true, p_chamfer = true, density = true, occupancy = true, offset = true;
};

struct LossTerms {
  double chamfer = 0, p_chamfer = 0, density = 0, occupancy = 0, offset = 0;
};

inline double total_loss(const LossTerms& t, const LossWeights& w, const LossToggles& on = {}) {
  double v = 0;
  if (on.chamfer) v += w.chamfer * t.chamfer;
  if (on.p_chamfer) v += w.p_chamfer * t.p_chamfer;
  if (on.density) v += w.density * t.density;
  if (on.occupancy) v += w.occupancy * t.occupancy;
  if (on.offset) v += w.offset * t.offset;
  return v;
}

/// Effective coefficient of each term in the total, zero when disabled.
inline LossWeights effective_weights(const LossWeights& w, const LossToggles& on) {
  LossWeights e = w;
  e.chamfer = on.chamfer ? w.chamfer : 0.0;
  e.p_chamfer = on.p_chamfer ? w.p_chamfer : 0.0;
  e.density = on.density ? w.density : 0.0;
  e.occupancy = on.occupancy ? w.occupancy : 0.0;
  e.offset = on.offset ? w.offset : 0.0;
  return e;
}

}  // namespace pcae
