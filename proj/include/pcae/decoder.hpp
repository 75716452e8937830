#pragma once

// Latent code -> point cloud.
//
//   z --dense--> w = [(s_1,t_1), ..., (s_k,t_k)]
//   P -> [dropout, norm, ELU] -> C -> ... -> U -> C -> ... -> feature grid
//
// Normalization site i applies (s_i, t_i) when i < affine_sites and plain
// instance normalization otherwise. Per-cell heads predict occupancy and
// density; the requested point budget is split over occupied cells, and a
// per-cell MLP maps 2D samples concatenated with the cell feature to 3D
// offsets (in cell widths) around the cell center.

#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pcae/geometry.hpp"
#include "pcae/layers.hpp"
#include "pcae/lloyd.hpp"

namespace pcae {

struct DecoderConfig {
  std::size_t latent = 1024;
  std::size_t p_channels = 512;  // P is p_channels x 2 x 2 x 2
  std::vector<std::size_t> pre_convs{512};
  std::vector<std::vector<std::size_t>> blocks{{512, 256}, {256, 128}, {128, 64}, {64, 62}};  // each after an upsample
  std::size_t affine_sites = 3;
  bool adain = true;  // false: z -> dense -> reshape replaces P, no affine sites
  double dropout = 0.2;
  UVMode uv_mode = UVMode::lloyd;  // inference-time 2D samples
  double occupancy_threshold = 0.5;
  std::size_t lloyd_iterations = 10;
  std::size_t lloyd_raster = kDefaultLloydRaster;
  std::vector<std::size_t> head_hidden{16, 8, 4};
  std::vector<std::size_t> generator_hidden{64, 64, 32, 32, 16, 16, 8};

  std::vector<std::size_t> conv_widths() const {
    std::vector<std::size_t> w = pre_convs;
    for (const auto& b : blocks) w.insert(w.end(), b.begin(), b.end());
    return w;
  }
  /// Channel width of every normalization site in stack order.
  std::vector<std::size_t> site_dims() const {
    std::vector<std::size_t> d{p_channels};
    for (auto w : conv_widths()) d.push_back(w);
    return d;
  }
  std::size_t site_count() const { return 1 + conv_widths().size(); }
  std::size_t active_affine_sites() const { return adain ? affine_sites : 0; }
  std::size_t style_size() const {
    const auto d = site_dims();
    std::size_t n = 0;
    for (std::size_t i = 0; i < active_affine_sites(); ++i) n += 2 * d[i];
    return n;
  }
  std::size_t output_resolution() const { return std::size_t{2} << blocks.size(); }
  std::size_t feature_channels() const { return conv_widths().back(); }

  void validate() const {
    if (blocks.empty() || conv_widths().empty()) throw std::invalid_argument("decoder: empty convolution stack");
    for (const auto& b : blocks)
      if (b.empty()) throw std::invalid_argument("decoder: empty upsampling block");
    if (affine_sites > site_count())
      throw std::invalid_argument("decoder: affine_sites " + std::to_string(affine_sites) + " exceeds " +
                                  std::to_string(site_count()) + " normalization sites");
    if (dropout < 0 || dropout >= 1) throw std::invalid_argument("decoder: dropout must lie in [0, 1)");
  }
};

/// Concatenated (s_i, t_i) per affine site, sliced by `site_dims`.
template <class T>
struct StyleVector {
  BasicTensor<T> w;                   // [B, sum 2 d_i]
  std::vector<std::size_t> site_dims;  // affine sites only

  std::size_t offset(std::size_t site) const {
    std::size_t o = 0;
    for (std::size_t i = 0; i < site; ++i) o += 2 * site_dims[i];
    return o;
  }
  /// [B, d] slice: scale when `shift` is false, translation otherwise.
  BasicTensor<T> slice(std::size_t site, bool shift) const {
    const std::size_t B = w.dim(0), d = site_dims[site], width = w.dim(1);
    const std::size_t o = offset(site) + (shift ? d : 0);
    BasicTensor<T> out({B, d});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < d; ++i) out[b * d + i] = w[b * width + o + i];
    return out;
  }
};

struct CellPrediction {
  double occupancy = 0.5;  // p in (0, 1)
  double density = 0;      // raw head output; clamped at 0 for allocation
};

/// Largest-remainder split of `n` points over cells with p > threshold,
/// proportional to max(density, 0). Remainders go to the largest fractional
/// parts, ties to the lowest cell index. With no usable cell, every point goes
/// to the cell with the largest density (lowest index on ties).
inline std::vector<std::size_t> allocate_points(std::span<const CellPrediction> cells, std::size_t n,
                                                double threshold = 0.5) {
  if (cells.empty()) throw std::invalid_argument("allocate_points: no cells");
  std::vector<std::size_t> counts(cells.size(), 0);
  if (n == 0) return counts;
  std::vector<std::size_t> filled;
  long double total = 0;
  for (std::size_t c = 0; c < cells.size(); ++c)
    if (cells[c].occupancy > threshold) {
      filled.push_back(c);
      total += std::max(cells[c].density, 0.0);
    }
  if (filled.empty() || !(total > 0)) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cells.size(); ++c)
      if (cells[c].density > cells[best].density) best = c;
    counts[best] = n;
    return counts;
  }
  std::vector<long double> frac(cells.size(), -1.0L);
  std::size_t assigned = 0;
  for (auto c : filled) {
    const long double q = static_cast<long double>(n) * std::max(cells[c].density, 0.0) / total;
    const auto f = static_cast<std::size_t>(std::floor(q));
    counts[c] = f;
    frac[c] = q - static_cast<long double>(f);
    assigned += f;
  }
  std::vector<std::size_t> order = filled;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  // Rounding in the quotas can leave the floors one unit over n.
  for (auto it = order.rbegin(); assigned > n && it != order.rend(); ++it)
    if (counts[*it] > 0) {
      --counts[*it];
      --assigned;
    }
  for (std::size_t i = 0; assigned < n; i = (i + 1) % order.size()) {
    ++counts[order[i]];
    ++assigned;
  }
  return counts;
}

/// Inference-time 2D sample sets, Lloyd-relaxed once per size and cached.
class UVCache {
 public:
  UVCache(std::size_t iterations = 10, std::size_t raster = kDefaultLloydRaster, std::uint64_t seed = 0x5eed)
      : iterations_(iterations), raster_(raster), seed_(seed) {}

  const UVSampleSet& get(std::size_t m) {
    auto it = cache_.find(m);
    if (it != cache_.end()) return it->second;
    Rng rng(seed_ + m);
    return cache_.emplace(m, lloyd_relax_2d(random_uv(m, rng), iterations_, raster_)).first->second;
  }

 private:
  std::size_t iterations_, raster_;
  std::uint64_t seed_;
  std::map<std::size_t, UVSampleSet> cache_;
};

/// One generated shape: points plus the bookkeeping the losses need.
struct GeneratedCloud {
  PointCloud cloud;                  // unit-cube frame
  std::vector<std::size_t> cell;     // generating cell per point
  std::vector<Vec3> offsets;         // MLP output per point, cell-width units
  std::vector<std::size_t> counts;   // points per cell
};

inline constexpr double kHeadInitScale = 0.01;

template <class T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const DecoderConfig& cfg, Rng& rng)
      : cfg_(cfg), uv_cache_(cfg.lloyd_iterations, cfg.lloyd_raster) {
    cfg_.validate();
    const auto widths = cfg.conv_widths();
    if (cfg.adain) {
      block_ = Parameter<T>("decoder.P", BasicTensor<T>({cfg.p_channels, 2, 2, 2}));
      for (auto& v : block_.value.values()) v = T(0.02 * rng.normal());
      if (cfg.style_size() > 0) {
        mapping_ = Dense<T>("decoder.map_latent", cfg.latent, cfg.style_size(), true, rng);
        // Scale halves of the bias start at 1 so every site begins as a plain
        // instance normalization rather than zeroing its features.
        const auto dims = cfg.site_dims();
        std::size_t o = 0;
        for (std::size_t s = 0; s < cfg.active_affine_sites(); ++s) {
          for (std::size_t i = 0; i < dims[s]; ++i) mapping_.bias->value[o + i] = T(1);
          o += 2 * dims[s];
        }
      }
    } else {
      seed_dense_ = Dense<T>("decoder.seed", cfg.latent, cfg.p_channels * 8, true, rng);
    }
    std::size_t in = cfg.p_channels;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      convs_.emplace_back("decoder.c" + std::to_string(i), in, widths[i], 3, 1, rng);
      in = widths[i];
    }
    sites_.assign(cfg.site_count(), Site{Dropout<T>(cfg.dropout), {}, {}});
    upsample_before_.assign(widths.size(), false);
    std::size_t idx = cfg.pre_convs.size();
    for (const auto& b : cfg.blocks) {
      upsample_before_[idx] = true;
      idx += b.size();
    }
    upsamples_.resize(cfg.blocks.size());
    heads_ = Mlp<T>("decoder.heads", cfg.feature_channels(), with_last(cfg.head_hidden, 2), {.bias = true, .batchnorm = true},
                    rng);
    // Small initial head outputs: p near 0.5 and densities near 0, so the
    // density term does not start orders of magnitude above its working range.
    heads_.layer(heads_.depth() - 1).weight.value *= T(kHeadInitScale);
    generator_ = Mlp<T>("decoder.generator", 2 + cfg.feature_channels(), with_last(cfg.generator_hidden, 3),
                        {.bias = true, .batchnorm = false}, rng);
  }

  const DecoderConfig& config() const { return cfg_; }
  GridSpec grid() const { return GridSpec{cfg_.output_resolution()}; }

  StyleVector<T> map_latent(const BasicTensor<T>& z) {
    StyleVector<T> sv;
    const auto dims = cfg_.site_dims();
    sv.site_dims.assign(dims.begin(), dims.begin() + static_cast<long>(cfg_.active_affine_sites()));
    if (cfg_.style_size() == 0) {
      sv.w = BasicTensor<T>();
      return sv;
    }
    if (z.rank() != 2 || z.dim(1) != cfg_.latent)
      throw ShapeError("map_latent: expected [B, " + std::to_string(cfg_.latent) + "], got " + shape_str(z.shape()));
    sv.w = mapping_.forward(z);
    return sv;
  }

  /// Feature grid [B, C, G, G, G]. `z` is consulted only by the non-AdaIN
  /// variant; with AdaIN, shape information enters solely through `style`.
  BasicTensor<T> decode_grid(const StyleVector<T>& style, const BasicTensor<T>& z, std::size_t batch, bool training,
                             Rng& rng) {
    const auto affine = cfg_.active_affine_sites();
    if (affine > 0 && (style.w.rank() != 2 || style.w.dim(0) != batch || style.w.dim(1) != cfg_.style_size()))
      throw ShapeError("decode_grid: style vector must be [" + std::to_string(batch) + ", " +
                       std::to_string(cfg_.style_size()) + "]");
    batch_ = batch;
    BasicTensor<T> h;
    if (cfg_.adain) {
      h = BasicTensor<T>({batch, cfg_.p_channels, 2, 2, 2});
      const std::size_t bs = block_.value.size();
      for (std::size_t b = 0; b < batch; ++b)
        std::copy(block_.value.values().begin(), block_.value.values().end(), h.data() + b * bs);
    } else {
      h = seed_dense_.forward(z).reshaped({batch, cfg_.p_channels, 2, 2, 2});
    }
    std::size_t up = 0;
    for (std::size_t s = 0; s < sites_.size(); ++s) {
      if (s > 0) {
        const std::size_t ci = s - 1;
        if (upsample_before_[ci]) h = upsamples_[up++].forward(h);
        h = convs_[ci].forward(h);
      }
      Site& site = sites_[s];
      h = site.dropout.forward(h, training, rng);
      if (s < affine) {
        const auto sc = style.slice(s, false), sh = style.slice(s, true);
        h = site.norm.forward(h, &sc, &sh);
      } else {
        h = site.norm.forward(h, nullptr, nullptr);
      }
      h = site.elu.forward(h);
    }
    return h;
  }

  /// Backward through the convolutional stack. Returns d(w) (empty when no
  /// affine sites) and accumulates into `dz` for the non-AdaIN variant.
  BasicTensor<T> decode_grid_backward(const BasicTensor<T>& dgrid, BasicTensor<T>* dz) {
    const auto affine = cfg_.active_affine_sites();
    const auto dims = cfg_.site_dims();
    BasicTensor<T> dw = affine > 0 ? BasicTensor<T>({batch_, cfg_.style_size()}) : BasicTensor<T>();
    BasicTensor<T> g = dgrid;
    std::size_t up = upsamples_.size();
    std::size_t offset = cfg_.style_size();
    for (std::size_t s = sites_.size(); s-- > 0;) {
      Site& site = sites_[s];
      g = site.elu.backward(g);
      if (s < affine) {
        const std::size_t d = dims[s];
        offset -= 2 * d;
        BasicTensor<T> ds({batch_, d}), dt({batch_, d});
        g = site.norm.backward(g, &ds, &dt);
        for (std::size_t b = 0; b < batch_; ++b)
          for (std::size_t i = 0; i < d; ++i) {
            dw[b * cfg_.style_size() + offset + i] += ds[b * d + i];
            dw[b * cfg_.style_size() + offset + d + i] += dt[b * d + i];
          }
      } else {
        g = site.norm.backward(g, nullptr, nullptr);
      }
      g = site.dropout.backward(g);
      if (s > 0) {
        const std::size_t ci = s - 1;
        g = convs_[ci].backward(g);
        if (upsample_before_[ci]) g = upsamples_[--up].backward(g);
      }
    }
    if (cfg_.adain) {
      const std::size_t bs = block_.value.size();
      for (std::size_t b = 0; b < batch_; ++b)
        for (std::size_t i = 0; i < bs; ++i) block_.grad[i] += g[b * bs + i];
    } else {
      const auto dzz = seed_dense_.backward(g.reshaped({batch_, cfg_.p_channels * 8}));
      if (dz) *dz += dzz;
    }
    return dw;
  }

  /// Backward of map_latent; returns d(z).
  BasicTensor<T> map_latent_backward(const BasicTensor<T>& dw) { return mapping_.backward(dw); }

  /// Heads over every cell of every shape: rows [B * G^3, 2] of
  /// (occupancy logit, raw density).
  BasicTensor<T> heads_forward(const BasicTensor<T>& grid_features, bool training) {
    return heads_.forward(grid_to_rows(grid_features), training);
  }
  BasicTensor<T> heads_backward(const BasicTensor<T>& drows) {
    return rows_to_grid(heads_.backward(drows), batch_, cfg_.feature_channels(), grid().resolution);
  }

  /// Generates points for shape `b`. `uv` supplies 2D samples per cell of the
  /// requested size. The generator's inputs are cached for backward across
  /// all shapes passed to `generate_batch`.
  template <class UVSource>
  std::vector<GeneratedCloud> generate_batch(const BasicTensor<T>& grid_features,
                                             const std::vector<std::vector<std::size_t>>& counts, UVSource&& uv) {
    const GridSpec g = grid();
    const std::size_t cells = g.cell_count(), C = cfg_.feature_channels(), B = counts.size();
    const double h = g.cell_width();
    std::size_t total = 0;
    for (const auto& c : counts) total += std::accumulate(c.begin(), c.end(), std::size_t{0});
    gen_rows_.clear();
    batch_ = B;
    std::vector<GeneratedCloud> out(B);
    if (total == 0) return out;
    BasicTensor<T> input({total, 2 + C});
    std::size_t row = 0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < cells; ++c) {
        const std::size_t m = counts[b][c];
        if (m == 0) continue;
        const UVSampleSet& set = uv(m);
        for (std::size_t k = 0; k < m; ++k, ++row) {
          T* r = input.data() + row * (2 + C);
          r[0] = T(set.samples[k][0]);
          r[1] = T(set.samples[k][1]);
          for (std::size_t f = 0; f < C; ++f) r[2 + f] = grid_features[(b * C + f) * cells + c];
          gen_rows_.push_back({b, c});
        }
      }
    const BasicTensor<T> offsets = generator_.forward(input, false);
    row = 0;
    for (std::size_t b = 0; b < B; ++b) {
      auto& gc = out[b];
      gc.counts = counts[b];
      gc.cloud.frame = Frame::unit_cube;
      gc.cloud.denorm = Denormalization{};
      for (std::size_t c = 0; c < cells; ++c) {
        const Vec3 center = g.center(c);
        for (std::size_t k = 0; k < counts[b][c]; ++k, ++row) {
          const Vec3 o{double(offsets[row * 3]), double(offsets[row * 3 + 1]), double(offsets[row * 3 + 2])};
          gc.offsets.push_back(o);
          gc.cell.push_back(c);
          gc.cloud.points.push_back(center + h * o);
        }
      }
    }
    return out;
  }

  /// `doffsets` is [total, 3] in generation order. Returns d(grid features).
  BasicTensor<T> generate_backward(const BasicTensor<T>& doffsets) {
    const std::size_t cells = grid().cell_count(), C = cfg_.feature_channels(), G = grid().resolution;
    BasicTensor<T> dgrid({batch_, C, G, G, G});
    if (gen_rows_.empty()) return dgrid;
    const BasicTensor<T> din = generator_.backward(doffsets);
    for (std::size_t r = 0; r < gen_rows_.size(); ++r) {
      const auto [b, c] = gen_rows_[r];
      for (std::size_t f = 0; f < C; ++f) dgrid[(b * C + f) * cells + c] += din[r * (2 + C) + 2 + f];
    }
    return dgrid;
  }

  UVCache& uv_cache() { return uv_cache_; }
  Parameter<T>& constant_block() { return block_; }
  Mlp<T>& heads() { return heads_; }
  Mlp<T>& generator() { return generator_; }

  void set_dropout_frozen(bool frozen) {
    for (auto& s : sites_) s.dropout.freeze_mask = frozen;
  }

  void collect(Registry<T>& r) {
    if (cfg_.adain) {
      r.add(block_);
      if (cfg_.style_size() > 0) mapping_.collect(r);
    } else {
      seed_dense_.collect(r);
    }
    for (auto& c : convs_) c.collect(r);
    heads_.collect(r);
    generator_.collect(r);
  }

  static BasicTensor<T> grid_to_rows(const BasicTensor<T>& grid) {
    const std::size_t B = grid.dim(0), C = grid.dim(1), S = grid.size() / (B * C);
    BasicTensor<T> rows({B * S, C});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t s = 0; s < S; ++s) rows[(b * S + s) * C + c] = grid[(b * C + c) * S + s];
    return rows;
  }
  static BasicTensor<T> rows_to_grid(const BasicTensor<T>& rows, std::size_t B, std::size_t C, std::size_t G) {
    const std::size_t S = G * G * G;
    BasicTensor<T> grid({B, C, G, G, G});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t s = 0; s < S; ++s) grid[(b * C + c) * S + s] = rows[(b * S + s) * C + c];
    return grid;
  }

 private:
  struct Site {
    Dropout<T> dropout;
    InstanceNorm<T> norm;
    Elu<T> elu;
  };

  static std::vector<std::size_t> with_last(std::vector<std::size_t> v, std::size_t last) {
    v.push_back(last);
    return v;
  }

  DecoderConfig cfg_;
  UVCache uv_cache_;
  Parameter<T> block_;
  Dense<T> mapping_, seed_dense_;
  std::vector<Conv3d<T>> convs_;
  std::vector<Site> sites_;
  std::vector<bool> upsample_before_;
  std::vector<Upsample<T>> upsamples_;
  Mlp<T> heads_, generator_;
  std::vector<std::pair<std::size_t, std::size_t>> gen_rows_;  // (shape, cell) per generated row
  std::size_t batch_ = 0;
};

}  // namespace pcae
