#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "pcae/gradcheck.hpp"
#include "pcae/losses.hpp"

using namespace pcae;

namespace {

std::vector<Vec3> random_points(std::size_t n, Rng& rng) {
  std::vector<Vec3> p(n);
  for (auto& v : p) v = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
  return p;
}

// O(nm) scan; ties to the lowest index.
std::size_t brute_nearest(const Vec3& q, const std::vector<Vec3>& pts) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (squared_distance(q, pts[i]) < squared_distance(q, pts[best])) best = i;
  return best;
}

LossResult brute_chamfer(const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
  LossResult r;
  r.grad.assign(3 * y.size(), 0.0);
  const double n = double(x.size()), m = double(y.size());
  for (const auto& p : x) {
    const std::size_t j = brute_nearest(p, y);
    r.value += squared_distance(p, y[j]) / n;
    for (int a = 0; a < 3; ++a) r.grad[3 * j + a] += 2 * (y[j][a] - p[a]) / n;
  }
  for (std::size_t j = 0; j < y.size(); ++j) {
    const Vec3& q = x[brute_nearest(y[j], x)];
    r.value += squared_distance(y[j], q) / m;
    for (int a = 0; a < 3; ++a) r.grad[3 * j + a] += 2 * (y[j][a] - q[a]) / m;
  }
  return r;
}

double brute_p_chamfer(const std::vector<Vec3>& x, const std::vector<Vec3>& y, double p) {
  double sx = 0, sy = 0;
  for (const auto& a : x) sx += std::pow(std::sqrt(squared_distance(a, y[brute_nearest(a, y)])), p);
  for (const auto& b : y) sy += std::pow(std::sqrt(squared_distance(b, x[brute_nearest(b, x)])), p);
  return std::pow(sx, 1 / p) / double(x.size()) + std::pow(sy, 1 / p) / double(y.size());
}

}  // namespace

TEST(Chamfer, IdentityAndSinglePair) {
  Rng rng(1);
  const auto x = random_points(50, rng);
  EXPECT_EQ(chamfer(x, x).value, 0.0);
  const std::vector<Vec3> a{{0, 0, 0}}, b{{1, 0, 0}};
  const auto r = chamfer(a, b);
  EXPECT_EQ(r.value, 2.0);
  EXPECT_EQ(r.grad, (std::vector<double>{4, 0, 0}));
  EXPECT_THROW(chamfer(a, std::vector<Vec3>{}), GeometryError);
}

TEST(Chamfer, MatchesBruteForce) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto x = random_points(t == 0 ? 200 : 40, rng), y = random_points(t == 0 ? 300 : 55, rng);
    const auto fast = chamfer(x, y), slow = brute_chamfer(x, y);
    EXPECT_NEAR(fast.value, slow.value, 1e-10);
    for (std::size_t i = 0; i < fast.grad.size(); ++i) EXPECT_NEAR(fast.grad[i], slow.grad[i], 1e-10);
    EXPECT_NEAR(chamfer(y, x).value, fast.value, 1e-12);  // symmetric by value
  }
}

TEST(Chamfer, GradientCheck) {
  for (std::uint64_t s = 1; s <= 3; ++s) EXPECT_TRUE(gradcheck_chamfer(s, false).passed());
}

TEST(PChamfer, IdentityAndClosedForms) {
  Rng rng(3);
  const auto x = random_points(30, rng);
  const auto r = p_chamfer(x, x, 5);
  EXPECT_EQ(r.value, 0.0);
  for (double g : r.grad) EXPECT_EQ(g, 0.0);
  const std::vector<Vec3> a{{0, 0, 0}}, b{{1, 0, 0}};
  EXPECT_NEAR(p_chamfer(a, b, 2).value, 2.0, 1e-15);
  const std::vector<Vec3> c{{0.3, -0.4, 0}};  // distance 0.5
  for (double p : {1.0, 2.0, 5.0, 9.0}) EXPECT_NEAR(p_chamfer(a, c, p).value, 1.0, 1e-14);
  EXPECT_THROW(p_chamfer(a, c, 0.5), std::invalid_argument);
}

TEST(PChamfer, MatchesBruteForceAndDiffersFromChamfer) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto x = random_points(35, rng), y = random_points(45, rng);
    EXPECT_NEAR(p_chamfer(x, y, 5).value, brute_p_chamfer(x, y, 5), 1e-10);
    EXPECT_NEAR(p_chamfer(x, y, 5).value, p_chamfer(y, x, 5).value, 1e-12);
  }
  const auto x = random_points(40, rng), y = random_points(40, rng);
  EXPECT_GT(std::abs(p_chamfer(x, y, 2).value - chamfer(x, y).value), 1e-3);
}

TEST(PChamfer, GradientCheck) {
  for (std::uint64_t s = 1; s <= 3; ++s) EXPECT_TRUE(gradcheck_chamfer(s, true).passed());
}

TEST(OffsetPenalty, HingeValues) {
  const std::vector<Vec3> centered(5, Vec3{0, 0, 0});
  EXPECT_EQ(offset_penalty(centered, std::sqrt(3.0)).value, 0.0);
  const double d = std::sqrt(3.0) + 1;
  const std::vector<Vec3> one{{d, 0, 0}, {0.5, 0.5, 0.5}};
  const auto r = offset_penalty(one, std::sqrt(3.0));
  EXPECT_NEAR(r.value, 1.0, 1e-15);
  EXPECT_EQ(r.grad, (std::vector<double>{1, 0, 0, 0, 0, 0}));
  const std::vector<Vec3> kink{{std::sqrt(3.0), 0, 0}};
  EXPECT_EQ(offset_penalty(kink, std::sqrt(3.0)).grad, (std::vector<double>{0, 0, 0}));
}

TEST(OffsetPenalty, GradientCheck) {
  for (std::uint64_t s = 1; s <= 3; ++s) EXPECT_LE(gradcheck_offset_penalty(s).max_error, 1e-6);
}

TEST(DensityMse, ValuesAndGradient) {
  std::vector<double> t(8, 0.125), p = t;
  EXPECT_EQ(density_mse(p, t).value, 0.0);
  p[3] += 0.2;
  const auto r = density_mse(p, t);
  EXPECT_NEAR(r.value, 0.04 / 8, 1e-17);
  EXPECT_NEAR(r.grad[3], 2 * 0.2 / 8, 1e-17);
  EXPECT_THROW(density_mse(p, std::vector<double>(27)), std::invalid_argument);
  for (std::uint64_t s = 1; s <= 3; ++s) EXPECT_LE(gradcheck_density_mse(s).max_error, 1e-8);
}

TEST(OccupancyBce, ValuesAndStability) {
  const std::vector<double> t{1, 0, 1, 0};
  EXPECT_NEAR(occupancy_bce(std::vector<double>(4, 0.5), t).value, std::log(2.0), 1e-15);
  EXPECT_NEAR(occupancy_bce_logits(std::vector<double>(4, 0.0), t).value, 0.6931, 1e-4);
  double prev = INFINITY;
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    const double v = occupancy_bce(std::vector<double>{1 - eps, eps, 1 - eps, eps}, t).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-5);
  const auto big = occupancy_bce_logits(std::vector<double>{800, -800, -800, 800}, t);
  EXPECT_TRUE(std::isfinite(big.value));
  EXPECT_NEAR(big.value, 400, 1e-9);
  const auto clamped = occupancy_bce(std::vector<double>{0, 1, 1, 0}, t);
  EXPECT_TRUE(std::isfinite(clamped.value));
}

TEST(OccupancyBce, LogitAndProbabilityFormsAgree) {
  Rng rng(5);
  std::vector<double> l(30), p(30), t(30);
  for (std::size_t i = 0; i < 30; ++i) {
    l[i] = rng.uniform(-4, 4);
    p[i] = ops::sigmoid(l[i]);
    t[i] = rng.uniform() < 0.5;
  }
  EXPECT_NEAR(occupancy_bce_logits(l, t).value, occupancy_bce(p, t).value, 1e-12);
  for (std::uint64_t s = 1; s <= 3; ++s) EXPECT_LE(gradcheck_occupancy_bce(s).max_error, 1e-6);
}

TEST(GroundTruth, SingleCellAndBoundary) {
  const GridSpec g{4};
  const std::vector<Vec3> same(10, Vec3{0.1, 0.1, 0.1});
  auto gt = ground_truth_cells(same, g);
  EXPECT_EQ(gt.density[g.cell_of(same[0])], 1.0);
  EXPECT_EQ(std::accumulate(gt.occupancy.begin(), gt.occupancy.end(), 0.0), 1.0);
  gt = ground_truth_cells(std::vector<Vec3>{{0.5, 0.5, 0.5}}, g);
  EXPECT_EQ(gt.density[g.cell_count() - 1], 1.0);
}

TEST(GroundTruth, HistogramOracle) {
  Rng rng(6);
  const GridSpec g{8};
  const auto x = random_points(777, rng);
  const auto gt = ground_truth_cells(x, g);
  std::vector<std::size_t> counts(512, 0);
  for (const auto& p : x) {
    std::size_t idx[3];
    for (int a = 0; a < 3; ++a) idx[a] = std::min<std::size_t>(std::size_t((p[a] + 0.5) * 8), 7);
    ++counts[(idx[0] * 8 + idx[1]) * 8 + idx[2]];
  }
  double sum = 0;
  for (std::size_t c = 0; c < 512; ++c) {
    EXPECT_EQ(gt.density[c], counts[c] / 777.0);
    EXPECT_EQ(gt.occupancy[c], gt.density[c] > 0 ? 1.0 : 0.0);
    sum += gt.density[c];
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(TotalLoss, WeightsAndToggles) {
  LossTerms t;
  EXPECT_EQ(total_loss(t, LossWeights{}), 0.0);
  t.chamfer = 0.001;
  EXPECT_DOUBLE_EQ(total_loss(t, LossWeights{}), 1.0);
  t = {0.1, 0.2, 0.3, 0.4, 0.5};
  const LossWeights w;
  EXPECT_DOUBLE_EQ(total_loss(t, w), 1e3 * 0.1 + 1e1 * 0.2 + 1e10 * 0.3 + 1e2 * 0.4 + 0.5);
  LossToggles off;
  off.density = false;
  EXPECT_DOUBLE_EQ(total_loss(t, w, off), 1e3 * 0.1 + 1e1 * 0.2 + 1e2 * 0.4 + 0.5);
  EXPECT_EQ(effective_weights(w, off).density, 0.0);
  EXPECT_EQ(w.p, 5.0);
  EXPECT_NEAR(w.offset_margin, std::sqrt(3.0), 1e-15);
}

TEST(TotalLoss, GradientIsWeightedSumOfComponents) {
  Rng rng(7);
  const auto x = random_points(60, rng), y = random_points(50, rng);
  const LossWeights w;
  const auto lc = chamfer(x, y), lp = p_chamfer(x, y, w.p);
  // Total over the point terms, differentiated by linearity of the pieces.
  std::vector<double> combined(lc.grad.size());
  for (std::size_t i = 0; i < combined.size(); ++i) combined[i] = w.chamfer * lc.grad[i] + w.p_chamfer * lp.grad[i];
  const double h = 1e-7;
  for (std::size_t i = 0; i < 12; ++i) {
    auto yp = y, ym = y;
    yp[i / 3][i % 3] += h;
    ym[i / 3][i % 3] -= h;
    auto total = [&](const std::vector<Vec3>& q) {
      LossTerms t;
      t.chamfer = chamfer(x, q).value;
      t.p_chamfer = p_chamfer(x, q, w.p).value;
      LossToggles on;
      on.density = on.occupancy = on.offset = false;
      return total_loss(t, w, on);
    };
    EXPECT_NEAR((total(yp) - total(ym)) / (2 * h), combined[i], 1e-4 * std::max(1.0, std::abs(combined[i])));
  }
}
