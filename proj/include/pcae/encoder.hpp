#pragma once

// Point cloud -> latent code. Points are gathered into a voxel grid, each
// cell's neighborhood is summarized by a small PointNet with mean pooling,
// and the resulting feature grid is reduced by a 3D CNN.

#include <bit>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pcae/geometry.hpp"
#include "pcae/layers.hpp"

namespace pcae {

struct EncoderConfig {
  std::size_t grid = 32;
  std::size_t feature_channels = 32;                        // eta
  std::vector<std::size_t> pointnet_hidden{8, 16, 32};       // final width is feature_channels
  std::vector<std::vector<std::size_t>> stages{{64, 64, 64}, {128, 128}, {256, 256}, {512, 512}};  // each + MP
  std::vector<std::size_t> tail{512};                        // 3^3 convs on the 2^3 grid
  std::size_t latent = 1024;                                 // final 2^3 conv, no padding
  double radius_cells = 0.8660254037844386;                  // sqrt(3)/2 cell widths
  std::size_t cell_point_cap = 64;

  void validate() const {
    if (grid < 4 || !std::has_single_bit(grid)) throw std::invalid_argument("encoder grid must be a power of two >= 4");
    const auto expected = static_cast<std::size_t>(std::countr_zero(grid)) - 1;
    if (stages.size() != expected)
      throw std::invalid_argument("encoder: grid " + std::to_string(grid) + " needs " + std::to_string(expected) +
                                  " pooling stages, got " + std::to_string(stages.size()));
    for (const auto& s : stages)
      if (s.empty()) throw std::invalid_argument("encoder: empty CNN stage");
    if (feature_channels == 0 || latent == 0 || cell_point_cap == 0 || !(radius_cells > 0))
      throw std::invalid_argument("encoder: invalid configuration");
  }
};

template <class T>
struct VoxelFeatureGrid {
  GridSpec spec;
  BasicTensor<T> features;  // [B, eta, G, G, G]; empty cells hold zeros
};

/// Local neighborhoods of every cell: offsets from the cell center divided
/// by the gather radius, so coordinates lie in the unit ball.
struct CellNeighborhoods {
  GridSpec spec;
  std::vector<std::vector<Vec3>> cells;
};

/// Points within radius_cells * h of each cell center (inclusive). Cells
/// holding more than `cap` points keep a farthest-point subset seeded at the
/// point nearest the center.
inline CellNeighborhoods gather_cell_neighborhoods(const PointCloud& pc, std::size_t grid, double radius_cells,
                                                   std::size_t cap) {
  if (pc.frame != Frame::unit_cube) throw GeometryError("gather_cell_neighborhoods: cloud must be unit-cube normalized");
  CellNeighborhoods nb{GridSpec{grid}, std::vector<std::vector<Vec3>>(GridSpec{grid}.cell_count())};
  const GridSpec& g = nb.spec;
  const double h = g.cell_width();
  const double r = radius_cells * h;
  const double r2 = r * r * (1.0 + 1e-12);  // inclusive boundary, robust to rounding of r
  const long reach = static_cast<long>(std::ceil(radius_cells + 0.5));
  const long G = static_cast<long>(grid);
  std::vector<std::vector<std::size_t>> members(g.cell_count());
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const Vec3& p = pc.points[i];
    const long cx = static_cast<long>(g.axis_cell(p[0])), cy = static_cast<long>(g.axis_cell(p[1])),
               cz = static_cast<long>(g.axis_cell(p[2]));
    for (long x = std::max(0L, cx - reach); x <= std::min(G - 1, cx + reach); ++x)
      for (long y = std::max(0L, cy - reach); y <= std::min(G - 1, cy + reach); ++y)
        for (long z = std::max(0L, cz - reach); z <= std::min(G - 1, cz + reach); ++z) {
          const Vec3 c = g.center(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z));
          if (squared_distance(p, c) <= r2)
            members[(static_cast<std::size_t>(x) * grid + static_cast<std::size_t>(y)) * grid +
                    static_cast<std::size_t>(z)]
                .push_back(i);
        }
  }
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& idx = members[c];
    if (idx.empty()) continue;
    const Vec3 center = g.center(c);
    if (idx.size() > cap) {
      std::vector<double> md(idx.size());
      std::size_t cur = 0;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        md[k] = squared_distance(pc.points[idx[k]], center);
        if (md[k] < md[cur]) cur = k;
      }
      std::fill(md.begin(), md.end(), std::numeric_limits<double>::infinity());
      std::vector<std::size_t> kept;
      for (std::size_t s = 0; s < cap; ++s) {
        kept.push_back(idx[cur]);
        md[cur] = -1;
        std::size_t best = cur;
        double bd = -1;
        for (std::size_t k = 0; k < idx.size(); ++k) {
          if (md[k] < 0) continue;
          md[k] = std::min(md[k], squared_distance(pc.points[idx[k]], pc.points[idx[cur]]));
          if (md[k] > bd) {
            bd = md[k];
            best = k;
          }
        }
        cur = best;
      }
      std::sort(kept.begin(), kept.end());
      idx = std::move(kept);
    }
    auto& out = nb.cells[c];
    out.reserve(idx.size());
    for (auto i : idx) out.push_back((1.0 / r) * (pc.points[i] - center));
  }
  return nb;
}

template <class T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    auto widths = cfg.pointnet_hidden;
    widths.push_back(cfg.feature_channels);
    pointnet_ = Mlp<T>("encoder.pointnet", 3, widths, {.bias = false, .batchnorm = true, .norm_last = true}, rng);
    std::size_t in = cfg.feature_channels, idx = 0;
    auto add_conv = [&](std::size_t out, std::size_t k, std::size_t pad) {
      const std::string name = "encoder.cnn.c" + std::to_string(idx++);
      blocks_.push_back(ConvBlock{Conv3d<T>(name, in, out, k, pad, rng), BatchNorm<T>(name + ".bn", out), {}});
      in = out;
    };
    for (const auto& stage : cfg.stages) {
      for (auto w : stage) add_conv(w, 3, 1);
      pool_after_.push_back(blocks_.size() - 1);
    }
    for (auto w : cfg.tail) add_conv(w, 3, 1);
    add_conv(cfg.latent, 2, 0);
    pools_.resize(pool_after_.size());
  }

  const EncoderConfig& config() const { return cfg_; }
  GridSpec grid() const { return GridSpec{cfg_.grid}; }

  /// Per-cell PointNet with mean pooling over a batch of unit-cube clouds.
  /// Batchnorm statistics span every gathered point of every cell in the batch.
  VoxelFeatureGrid<T> embed(std::span<const PointCloud* const> clouds, bool training) {
    const GridSpec g = grid();
    const std::size_t cells = g.cell_count(), eta = cfg_.feature_channels, B = clouds.size();
    segments_.clear();
    std::vector<T> rows;
    for (std::size_t b = 0; b < B; ++b) {
      const auto nb = gather_cell_neighborhoods(*clouds[b], cfg_.grid, cfg_.radius_cells, cfg_.cell_point_cap);
      for (std::size_t c = 0; c < cells; ++c) {
        if (nb.cells[c].empty()) continue;
        segments_.push_back({b * cells + c, rows.size() / 3, nb.cells[c].size()});
        for (const auto& p : nb.cells[c]) rows.insert(rows.end(), {T(p[0]), T(p[1]), T(p[2])});
      }
    }
    batch_ = B;
    VoxelFeatureGrid<T> out{g, BasicTensor<T>({B, eta, cfg_.grid, cfg_.grid, cfg_.grid})};
    if (rows.empty()) return out;
    const std::size_t n = rows.size() / 3;
    const BasicTensor<T> feats = pointnet_.forward(BasicTensor<T>({n, 3}, std::move(rows)), training);
    for (const auto& s : segments_) {
      const std::size_t b = s.slot / cells, c = s.slot % cells;
      for (std::size_t f = 0; f < eta; ++f) {
        T acc = 0;
        for (std::size_t r = 0; r < s.count; ++r) acc += feats[(s.first + r) * eta + f];
        out.features[(b * eta + f) * cells + c] = acc / T(s.count);
      }
    }
    return out;
  }

  void embed_backward(const BasicTensor<T>& dgrid) {
    if (segments_.empty()) return;
    const std::size_t cells = grid().cell_count(), eta = cfg_.feature_channels;
    const auto& last = segments_.back();
    BasicTensor<T> drows({last.first + last.count, eta});
    for (const auto& s : segments_) {
      const std::size_t b = s.slot / cells, c = s.slot % cells;
      for (std::size_t f = 0; f < eta; ++f) {
        const T g = dgrid[(b * eta + f) * cells + c] / T(s.count);
        for (std::size_t r = 0; r < s.count; ++r) drows[(s.first + r) * eta + f] = g;
      }
    }
    pointnet_.backward(drows);
  }

  /// 3D CNN over the feature grid; returns z as [B, latent].
  BasicTensor<T> cnn_forward(const BasicTensor<T>& grid_features, bool training) {
    BasicTensor<T> h = grid_features;
    std::size_t pool = 0;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      auto& blk = blocks_[i];
      h = blk.elu.forward(blk.norm.forward(blk.conv.forward(h), training));
      if (pool < pool_after_.size() && pool_after_[pool] == i) h = pools_[pool++].forward(h);
    }
    if (h.dim(2) != 1 || h.dim(3) != 1 || h.dim(4) != 1)
      throw ShapeError("encoder: grid resolution inconsistent with stage count, final extent " + shape_str(h.shape()));
    return h.reshaped({h.dim(0), h.dim(1)});
  }

  /// Returns the gradient w.r.t. the feature grid.
  BasicTensor<T> cnn_backward(const BasicTensor<T>& dz) {
    BasicTensor<T> g = dz.reshaped({dz.dim(0), dz.dim(1), 1, 1, 1});
    std::size_t pool = pool_after_.size();
    for (std::size_t i = blocks_.size(); i-- > 0;) {
      if (pool > 0 && pool_after_[pool - 1] == i) g = pools_[--pool].backward(g);
      auto& blk = blocks_[i];
      g = blk.conv.backward(blk.norm.backward(blk.elu.backward(g)));
    }
    return g;
  }

  BasicTensor<T> forward(std::span<const PointCloud* const> clouds, bool training) {
    return cnn_forward(embed(clouds, training).features, training);
  }
  void backward(const BasicTensor<T>& dz) { embed_backward(cnn_backward(dz)); }

  void collect(Registry<T>& r) {
    pointnet_.collect(r);
    for (auto& b : blocks_) {
      b.conv.collect(r);
      b.norm.collect(r);
    }
  }

  Mlp<T>& pointnet() { return pointnet_; }

 private:
  struct ConvBlock {
    Conv3d<T> conv;
    BatchNorm<T> norm;
    Elu<T> elu;
  };
  struct Segment {
    std::size_t slot, first, count;  // slot = b * cells + cell
  };

  EncoderConfig cfg_;
  Mlp<T> pointnet_;
  std::vector<ConvBlock> blocks_;
  std::vector<std::size_t> pool_after_;
  std::vector<MaxPool3d<T>> pools_;
  std::vector<Segment> segments_;
  std::size_t batch_ = 0;
};

}  // namespace pcae
