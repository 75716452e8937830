#pragma once

// Central finite-difference verification of every differentiable operator,
// always in double precision. Tensor-valued operators are reduced to the
// scalar sum(w * y) with random weights w, whose backward pass is the
// operator's backward with upstream gradient w.
//
// Error per entry: |a - n| / max(|a|, |n|, floor), floor = 1e-3 * max|a|
// (at least 1e-10), so entries whose true gradient is orders of magnitude
// below the tensor's scale are measured against that scale.

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pcae/layers.hpp"
#include "pcae/losses.hpp"

namespace pcae {

inline constexpr double kGradTolLinear = 1e-6;
inline constexpr double kGradTolNonlinear = 1e-5;

struct GradCheckResult {
  std::string op;
  std::uint64_t seed = 0;
  std::size_t entries = 0;
  double max_error = 0;      // relative, as defined above
  double max_abs_error = 0;
  double tolerance = 0;
  bool passed() const { return max_error <= tolerance; }
};

/// One checked input: the tensor perturbed in place and its analytic gradient.
struct GradTarget {
  TensorD* value;
  TensorD analytic;
};

inline GradCheckResult finite_difference_check(const std::string& op, std::uint64_t seed, bool linear,
                                               std::vector<GradTarget> targets, const std::function<double()>& f) {
  GradCheckResult r{op, seed, 0, 0, 0, linear ? kGradTolLinear : kGradTolNonlinear};
  double scale = 0;
  for (const auto& t : targets)
    for (double a : t.analytic.values()) scale = std::max(scale, std::abs(a));
  const double floor = std::max(1e-3 * scale, 1e-10);
  // Piecewise-linear operators have no truncation error, so a wider step only
  // reduces rounding error; smooth ones use a narrower step.
  const double step = linear ? 1e-4 : 1e-5;
  for (auto& t : targets) {
    for (std::size_t i = 0; i < t.value->size(); ++i) {
      double& x = (*t.value)[i];
      const double x0 = x, h = step * std::max(std::abs(x0), 1.0);
      x = x0 + h;
      const double fp = f();
      x = x0 - h;
      const double fm = f();
      x = x0;
      const double numeric = (fp - fm) / (2 * h), a = t.analytic[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      r.max_error = std::max(r.max_error, err);
      r.max_abs_error = std::max(r.max_abs_error, std::abs(a - numeric));
      ++r.entries;
    }
  }
  return r;
}

namespace gradcheck_detail {

inline TensorD random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  TensorD t(std::move(s));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

inline double weighted_sum(const TensorD& y, const TensorD& w) { return dot<double>(y.values(), w.values()); }

inline std::vector<Vec3> to_points(const TensorD& t) {
  std::vector<Vec3> p(t.dim(0));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = {t[3 * i], t[3 * i + 1], t[3 * i + 2]};
  return p;
}

inline TensorD from_vector(const std::vector<double>& g, Shape s) { return TensorD(std::move(s), g); }

}  // namespace gradcheck_detail

inline GradCheckResult gradcheck_dense(std::uint64_t seed) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  TensorD x = random_tensor({4, 5}, rng), W = random_tensor({3, 5}, rng), b = random_tensor({3}, rng);
  const TensorD w = random_tensor({4, 3}, rng);
  TensorD gW(W.shape()), gb(b.shape());
  const TensorD dx = ops::dense_backward(x, W, w, gW, &gb);
  return finite_difference_check("dense", seed, true, {{&x, dx}, {&W, gW}, {&b, gb}},
                                 [&] { return weighted_sum(ops::dense_forward(x, W, &b), w); });
}

inline GradCheckResult gradcheck_conv3d(std::uint64_t seed, std::size_t kernel) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  const std::size_t pad = kernel == 3 ? 1 : 0, ext = kernel == 3 ? 4 : 3;
  TensorD x = random_tensor({2, 2, ext, ext, ext}, rng), W = random_tensor({3, 2, kernel, kernel, kernel}, rng);
  const TensorD y0 = ops::conv3d_forward(x, W, pad);
  const TensorD w = random_tensor(y0.shape(), rng);
  TensorD gW(W.shape());
  const TensorD dx = ops::conv3d_backward(x, W, pad, w, gW);
  return finite_difference_check("conv3d_k" + std::to_string(kernel), seed, true, {{&x, dx}, {&W, gW}},
                                 [&] { return weighted_sum(ops::conv3d_forward(x, W, pad), w); });
}

inline GradCheckResult gradcheck_maxpool3d(std::uint64_t seed) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  TensorD x = random_tensor({2, 2, 4, 4, 4}, rng);
  auto r = ops::maxpool3d_forward(x);
  const TensorD w = random_tensor(r.output.shape(), rng);
  const TensorD dx = ops::maxpool3d_backward(x.shape(), r.argmax, w);
  return finite_difference_check("maxpool3d", seed, true, {{&x, dx}},
                                 [&] { return weighted_sum(ops::maxpool3d_forward(x).output, w); });
}

inline GradCheckResult gradcheck_upsample(std::uint64_t seed) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  TensorD x = random_tensor({2, 2, 3, 3, 3}, rng);
  const TensorD w = random_tensor({2, 2, 6, 6, 6}, rng);
  const TensorD dx = ops::upsample_trilinear_backward(x.shape(), w);
  return finite_difference_check("upsample_trilinear", seed, true, {{&x, dx}},
                                 [&] { return weighted_sum(ops::upsample_trilinear_forward(x), w); });
}

inline GradCheckResult gradcheck_batchnorm(std::uint64_t seed) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  BatchNorm<double> bn("bn", 3);
  TensorD x = random_tensor({3, 3, 2, 2, 2}, rng);
  bn.gamma.value = random_tensor({3}, rng);
  bn.beta.value = random_tensor({3}, rng);
  const TensorD w = random_tensor(x.shape(), rng);
  bn.forward(x, true);
  const TensorD dx = bn.backward(w);
  return finite_difference_check("batchnorm", seed, false,
                                 {{&x, dx}, {&bn.gamma.value, bn.gamma.grad}, {&bn.beta.value, bn.beta.grad}},
                                 [&] { return weighted_sum(bn.forward(x, true), w); });
}

inline GradCheckResult gradcheck_instance_norm_adain(std::uint64_t seed) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  InstanceNorm<double> in;
  TensorD x = random_tensor({2, 3, 2, 2, 2}, rng), s = random_tensor({2, 3}, rng), t = random_tensor({2, 3}, rng);
  const TensorD w = random_tensor(x.shape(), rng);
  in.forward(x, &s, &t);
  TensorD gs(s.shape()), gt(t.shape());
  const TensorD dx = in.backward(w, &gs, &gt);
  return finite_difference_check("instance_norm_adain", seed, false, {{&x, dx}, {&s, gs}, {&t, gt}},
                                 [&] { return weighted_sum(ops::instance_norm_forward<double>(x, &s, &t, 1e-5, nullptr), w); });
}

inline GradCheckResult gradcheck_elu(std::uint64_t seed) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  TensorD x({40});
  // Keep clear of the kink at 0.
  for (auto& v : x.values()) {
    const double m = rng.uniform(0.01, 3.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  const TensorD w = random_tensor(x.shape(), rng);
  const TensorD dx = ops::elu_backward(ops::elu_forward(x), w);
  return finite_difference_check("elu", seed, false, {{&x, dx}},
                                 [&] { return weighted_sum(ops::elu_forward(x), w); });
}

inline GradCheckResult gradcheck_dropout(std::uint64_t seed) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  Dropout<double> d(0.3);
  TensorD x = random_tensor({40}, rng);
  const TensorD w = random_tensor(x.shape(), rng);
  d.forward(x, true, rng);
  d.freeze_mask = true;
  const TensorD dx = d.backward(w);
  return finite_difference_check("dropout", seed, true, {{&x, dx}},
                                 [&] { return weighted_sum(d.forward(x, true, rng), w); });
}

namespace gradcheck_detail {

inline GradCheckResult check_mlp(const std::string& op, std::uint64_t seed, Mlp<double>& mlp, TensorD x, Rng& rng,
                                 bool training) {
  Registry<double> reg;
  mlp.collect(reg);
  for (auto* p : reg.params)  // move biases and batchnorm affines off their defaults
    if (p->value.rank() == 1)
      for (auto& v : p->value.values()) v += 0.3 * rng.normal();
  const TensorD y0 = mlp.forward(x, training);
  const TensorD w = random_tensor(y0.shape(), rng);
  for (auto* p : reg.params) p->zero_grad();
  mlp.forward(x, training);
  std::vector<GradTarget> targets{{&x, mlp.backward(w)}};
  for (auto* p : reg.params) targets.push_back({&p->value, p->grad});
  return finite_difference_check(op, seed, false, std::move(targets),
                                 [&] { return weighted_sum(mlp.forward(x, training), w); });
}

}  // namespace gradcheck_detail

/// Occupancy/density heads: 16-8-4-2 with batchnorm and ELU, training mode.
inline GradCheckResult gradcheck_heads_mlp(std::uint64_t seed) {
  Rng rng(seed);
  Mlp<double> mlp("heads", 6, {16, 8, 4, 2}, {.bias = true, .batchnorm = true}, rng);
  TensorD x = gradcheck_detail::random_tensor({10, 6}, rng);
  return gradcheck_detail::check_mlp("heads_mlp", seed, mlp, x, rng, true);
}

/// 2D -> 3D generator: (uv, cell feature) through 64-64-32-32-16-16-8-3.
inline GradCheckResult gradcheck_generator_mlp(std::uint64_t seed) {
  Rng rng(seed);
  Mlp<double> mlp("generator", 2 + 6, {64, 64, 32, 32, 16, 16, 8, 3}, {.bias = true, .batchnorm = false}, rng);
  TensorD x = gradcheck_detail::random_tensor({6, 8}, rng);
  return gradcheck_detail::check_mlp("generator_mlp", seed, mlp, x, rng, false);
}

inline GradCheckResult gradcheck_chamfer(std::uint64_t seed, bool sharpened) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  const TensorD xs = random_tensor({15, 3}, rng, 0.3);
  TensorD ys = random_tensor({12, 3}, rng, 0.3);
  const auto X = to_points(xs);
  auto loss = [&] {
    const auto Y = to_points(ys);
    return sharpened ? p_chamfer(X, Y, 5.0) : chamfer(X, Y);
  };
  const TensorD g = from_vector(loss().grad, ys.shape());
  return finite_difference_check(sharpened ? "p_chamfer" : "chamfer", seed, false, {{&ys, g}},
                                 [&] { return loss().value; });
}

inline GradCheckResult gradcheck_offset_penalty(std::uint64_t seed) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  const double margin = std::sqrt(3.0);
  TensorD o({20, 3});
  for (std::size_t i = 0; i < 20; ++i) {
    Vec3 d{rng.normal(), rng.normal(), rng.normal()};
    double len = rng.uniform(0.2, 3.0);
    if (std::abs(len - margin) < 0.01) len = margin + 0.5;  // stay off the hinge
    d = (len / norm3(d)) * d;
    for (int c = 0; c < 3; ++c) o[3 * i + c] = d[c];
  }
  auto loss = [&] { return offset_penalty(to_points(o), margin); };
  const TensorD g = from_vector(loss().grad, o.shape());
  return finite_difference_check("offset_penalty", seed, false, {{&o, g}}, [&] { return loss().value; });
}

inline GradCheckResult gradcheck_density_mse(std::uint64_t seed) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  TensorD pred = random_tensor({27}, rng, 0.1);
  std::vector<double> target(27);
  for (auto& t : target) t = rng.uniform();
  auto loss = [&] { return density_mse(pred.values(), target); };
  const TensorD g = from_vector(loss().grad, pred.shape());
  return finite_difference_check("density_mse", seed, false, {{&pred, g}}, [&] { return loss().value; });
}

inline GradCheckResult gradcheck_occupancy_bce(std::uint64_t seed) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  TensorD logits = random_tensor({27}, rng, 2.0);
  std::vector<double> target(27);
  for (auto& t : target) t = rng.uniform() < 0.5 ? 0.0 : 1.0;
  auto loss = [&] { return occupancy_bce_logits(logits.values(), target); };
  const TensorD g = from_vector(loss().grad, logits.shape());
  return finite_difference_check("occupancy_bce", seed, false, {{&logits, g}}, [&] { return loss().value; });
}

inline const std::vector<std::pair<std::string, std::function<GradCheckResult(std::uint64_t)>>>& gradcheck_suite() {
  static const std::vector<std::pair<std::string, std::function<GradCheckResult(std::uint64_t)>>> suite = {
      {"dense", gradcheck_dense},
      {"conv3d_k3", [](std::uint64_t s) { return gradcheck_conv3d(s, 3); }},
      {"conv3d_k2", [](std::uint64_t s) { return gradcheck_conv3d(s, 2); }},
      {"maxpool3d", gradcheck_maxpool3d},
      {"upsample_trilinear", gradcheck_upsample},
      {"batchnorm", gradcheck_batchnorm},
      {"instance_norm_adain", gradcheck_instance_norm_adain},
      {"elu", gradcheck_elu},
      {"dropout", gradcheck_dropout},
      {"heads_mlp", gradcheck_heads_mlp},
      {"generator_mlp", gradcheck_generator_mlp},
      {"chamfer", [](std::uint64_t s) { return gradcheck_chamfer(s, false); }},
      {"p_chamfer", [](std::uint64_t s) { return gradcheck_chamfer(s, true); }},
      {"offset_penalty", gradcheck_offset_penalty},
      {"density_mse", gradcheck_density_mse},
      {"occupancy_bce", gradcheck_occupancy_bce},
  };
  return suite;
}

/// Worst result per operator over `seeds` seeds (1..seeds).
inline std::vector<GradCheckResult> run_gradcheck_suite(std::size_t seeds = 5) {
  std::vector<GradCheckResult> out;
  for (const auto& [name, fn] : gradcheck_suite()) {
    GradCheckResult worst;
    for (std::uint64_t s = 1; s <= seeds; ++s) {
      GradCheckResult r = fn(s);
      if (s == 1 || r.max_error > worst.max_error) {
        const std::size_t entries = worst.entries;
        worst = r;
        worst.entries += s == 1 ? 0 : entries;
      } else {
        worst.entries += r.entries;
      }
    }
    out.push_back(worst);
  }
  return out;
}

}  // namespace pcae
