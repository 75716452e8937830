#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcae/decoder.hpp"
#include "pcae/encoder.hpp"
#include "pcae/losses.hpp"

namespace pcae {

enum class Preset { paper, desk };

inline Preset parse_preset(const std::string& s) {
  if (s == "paper") return Preset::paper;
  if (s == "desk") return Preset::desk;
  throw std::invalid_argument("unknown preset '" + s + "' (expected paper or desk)");
}
inline std::string to_string(Preset p) { return p == Preset::paper ? "paper" : "desk"; }

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
};

/// Full-size architecture: 32^3 grids, eta = 32, z in R^1024, 62 feature
/// channels per decoder cell, three affine sites.
inline ModelConfig paper_config() { return ModelConfig{}; }

/// Reduced architecture for single-core experiments: 8^3 grids, eta = 16,
/// encoder 16-16-MP-32-32-MP-64 -> 128, decoder P 64x2^3 with 64,64,32,30.
inline ModelConfig desk_config() {
  ModelConfig m;
  m.encoder.grid = 8;
  m.encoder.feature_channels = 16;
  m.encoder.stages = {{16, 16}, {32, 32}};
  m.encoder.tail = {64};
  m.encoder.latent = 128;
  m.decoder.latent = 128;
  m.decoder.p_channels = 64;
  m.decoder.pre_convs = {64};
  m.decoder.blocks = {{64, 32}, {30}};
  m.decoder.affine_sites = 2;
  return m;
}

inline ModelConfig preset_config(Preset p) { return p == Preset::paper ? paper_config() : desk_config(); }

struct BatchLoss {
  LossTerms terms;  // means over the batch
  double total = 0;
};

template <class T>
class Autoencoder {
 public:
  Autoencoder(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.encoder.latent != cfg.decoder.latent) throw std::invalid_argument("encoder/decoder latent width mismatch");
    Rng rng(seed);
    encoder = Encoder<T>(cfg.encoder, rng);
    decoder = Decoder<T>(cfg.decoder, rng);
  }

  const ModelConfig& config() const { return cfg_; }

  Registry<T> registry() {
    Registry<T> r;
    encoder.collect(r);
    decoder.collect(r);
    return r;
  }
  void zero_grad() {
    for (auto* p : registry().params) p->zero_grad();
  }

  /// Encodes unit-cube clouds; z is [B, latent].
  BasicTensor<T> encode(std::span<const PointCloud* const> clouds, bool training) {
    return encoder.forward(clouds, training);
  }

  /// Inference decode of z [B, latent] into n points per shape.
  std::vector<GeneratedCloud> decode(const BasicTensor<T>& z, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t B = z.dim(0);
    const auto style = decoder.map_latent(z);
    const auto grid = decoder.decode_grid(style, z, B, false, rng);
    const auto heads = decoder.heads_forward(grid, false);
    const auto counts = allocations(heads, B, n);
    const bool lloyd = cfg_.decoder.uv_mode == UVMode::lloyd;
    UVSampleSet scratch;
    return decoder.generate_batch(grid, counts, [&](std::size_t m) -> const UVSampleSet& {
      if (lloyd) return decoder.uv_cache().get(m);
      scratch = random_uv(m, rng);
      return scratch;
    });
  }

  /// Reconstructs a unit-cube cloud with n points; the result carries the
  /// input's denormalization so it can be mapped back to raw coordinates.
  PointCloud reconstruct(const PointCloud& input, std::size_t n, std::uint64_t seed = 0) {
    const PointCloud* one[] = {&input};
    const auto z = encode(one, false);
    PointCloud out = std::move(decode(z, n, seed).front().cloud);
    out.denorm = input.denorm;
    return out;
  }

  /// Per-shape point budgets from head outputs [B * G^3, 2].
  std::vector<std::vector<std::size_t>> allocations(const BasicTensor<T>& heads, std::size_t B, std::size_t n) const {
    const std::size_t cells = decoder.grid().cell_count();
    std::vector<std::vector<std::size_t>> counts(B);
    std::vector<CellPrediction> pred(cells);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < cells; ++c) {
        const std::size_t r = b * cells + c;
        pred[c] = {ops::sigmoid(double(heads[2 * r])), double(heads[2 * r + 1])};
      }
      counts[b] = allocate_points(pred, n, cfg_.decoder.occupancy_threshold);
    }
    return counts;
  }

  /// One training-mode forward pass over a batch of unit-cube clouds, each
  /// serving as encoder input and reconstruction target, followed (when
  /// `backward`) by accumulation of every parameter gradient of the mean
  /// weighted loss. Training samples the 2D domain uniformly at random.
  BatchLoss forward_backward(std::span<const PointCloud* const> clouds, std::size_t n_out, const LossWeights& weights,
                             const LossToggles& toggles, Rng& rng, bool backward = true) {
    const std::size_t B = clouds.size();
    const GridSpec g = decoder.grid();
    const std::size_t cells = g.cell_count();
    const auto z = encode(clouds, true);
    const auto style = decoder.map_latent(z);
    const auto grid = decoder.decode_grid(style, z, B, true, rng);
    const auto heads = decoder.heads_forward(grid, true);
    const auto counts = allocations(heads, B, n_out);
    UVSampleSet scratch;
    const auto gen = decoder.generate_batch(grid, counts, [&](std::size_t m) -> const UVSampleSet& {
      scratch = random_uv(m, rng);
      return scratch;
    });

    const LossWeights eff = effective_weights(weights, toggles);
    const double inv_b = 1.0 / static_cast<double>(B);
    BatchLoss out;
    std::size_t total_pts = 0;
    for (const auto& gc : gen) total_pts += gc.cloud.size();
    BasicTensor<T> doff({std::max<std::size_t>(total_pts, 1), 3});
    BasicTensor<T> dheads(heads.shape());
    std::size_t row = 0;
    const double h = g.cell_width();
    for (std::size_t b = 0; b < B; ++b) {
      const auto& x = clouds[b]->points;
      const auto& y = gen[b].cloud.points;
      const auto gt = ground_truth_cells(x, g);
      std::vector<double> logits(cells), dens(cells);
      for (std::size_t c = 0; c < cells; ++c) {
        logits[c] = double(heads[2 * (b * cells + c)]);
        dens[c] = double(heads[2 * (b * cells + c) + 1]);
      }
      const auto lc = chamfer(x, y);
      const auto lp = p_chamfer(x, y, weights.p);
      const auto lo = offset_penalty(gen[b].offsets, weights.offset_margin);
      const auto ld = density_mse(dens, gt.density);
      const auto lf = occupancy_bce_logits(logits, gt.occupancy);
      out.terms.chamfer += inv_b * lc.value;
      out.terms.p_chamfer += inv_b * lp.value;
      out.terms.offset += inv_b * lo.value;
      out.terms.density += inv_b * ld.value;
      out.terms.occupancy += inv_b * lf.value;
      if (!backward) {
        row += y.size();
        continue;
      }
      for (std::size_t i = 0; i < y.size(); ++i, ++row)
        for (int c = 0; c < 3; ++c) {
          const double dp = eff.chamfer * lc.grad[3 * i + c] + eff.p_chamfer * lp.grad[3 * i + c];
          doff[3 * row + c] = T(inv_b * (h * dp + eff.offset * lo.grad[3 * i + c]));
        }
      for (std::size_t c = 0; c < cells; ++c) {
        dheads[2 * (b * cells + c)] = T(inv_b * eff.occupancy * lf.grad[c]);
        dheads[2 * (b * cells + c) + 1] = T(inv_b * eff.density * ld.grad[c]);
      }
    }
    out.total = total_loss(out.terms, weights, toggles);
    if (!std::isfinite(out.total)) throw NumericError("non-finite training loss");
    if (!backward) return out;

    BasicTensor<T> dgrid = decoder.heads_backward(dheads);
    if (total_pts > 0) dgrid += decoder.generate_backward(doff.reshaped({total_pts, 3}));
    BasicTensor<T> dz(z.shape());
    const auto dw = decoder.decode_grid_backward(dgrid, &dz);
    if (!dw.empty()) dz += decoder.map_latent_backward(dw);
    encoder.backward(dz);
    return out;
  }

  Encoder<T> encoder;
  Decoder<T> decoder;

 private:
  ModelConfig cfg_;
};

}  // namespace pcae
