#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "pcae/dataset.hpp"
#include "pcae/encoder.hpp"
#include "pcae/gradcheck.hpp"
#include "pcae/model.hpp"

using namespace pcae;

namespace {

PointCloud unit_cloud(std::vector<Vec3> pts) {
  PointCloud pc;
  pc.points = std::move(pts);
  pc.frame = Frame::unit_cube;
  pc.denorm = Denormalization{};
  return pc;
}

PointCloud random_unit_cloud(std::size_t n, Rng& rng) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
  return unit_cloud(std::move(pts));
}

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.grid = 4;
  c.feature_channels = 4;
  c.pointnet_hidden = {4, 4};
  c.stages = {{4}};
  c.tail = {};
  c.latent = 5;
  return c;
}

std::vector<double> row(const TensorD& z, std::size_t b) {
  const std::size_t w = z.dim(1);
  return {z.values().begin() + long(b * w), z.values().begin() + long((b + 1) * w)};
}

}  // namespace

TEST(Gather, CenterPointHasZeroLocalCoordinate) {
  const GridSpec g{8};
  const Vec3 c = g.center(3, 4, 5);
  const auto nb = gather_cell_neighborhoods(unit_cloud({c}), 8, std::sqrt(3.0) / 2, 64);
  const auto& cell = nb.cells[g.cell_of(c)];
  ASSERT_EQ(cell.size(), 1u);
  EXPECT_EQ(cell[0], (Vec3{0, 0, 0}));
  std::size_t total = 0;
  for (const auto& l : nb.cells) total += l.size();
  EXPECT_EQ(total, 1u);  // half-diagonal radius reaches no other center
}

TEST(Gather, CornerPointIsSharedByAdjacentCells) {
  // The corner at (0,0,0) lies exactly sqrt(3)/2 cell widths from eight centers.
  const auto nb = gather_cell_neighborhoods(unit_cloud({{0, 0, 0}}), 4, std::sqrt(3.0) / 2, 64);
  std::size_t cells_with_point = 0;
  for (const auto& l : nb.cells)
    if (!l.empty()) {
      ++cells_with_point;
      EXPECT_NEAR(norm3(l[0]), 1.0, 1e-12);
    }
  EXPECT_EQ(cells_with_point, 8u);
}

TEST(Gather, MatchesBruteForceAndContainsOwnCell) {
  Rng rng(1);
  const auto pc = random_unit_cloud(1000, rng);
  const GridSpec g{8};
  const double r = std::sqrt(3.0) / 2 / 8;
  const auto nb = gather_cell_neighborhoods(pc, 8, std::sqrt(3.0) / 2, 100000);
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    std::vector<Vec3> expect;
    for (const auto& p : pc.points)
      if (squared_distance(p, g.center(c)) <= r * r) expect.push_back((1.0 / r) * (p - g.center(c)));
    ASSERT_EQ(nb.cells[c].size(), expect.size()) << "cell " << c;
    for (std::size_t i = 0; i < expect.size(); ++i)
      for (int a = 0; a < 3; ++a) EXPECT_NEAR(nb.cells[c][i][a], expect[i][a], 1e-12);
  }
  for (const auto& p : pc.points) {
    const Vec3 local = (1.0 / r) * (p - g.center(g.cell_of(p)));
    const auto& l = nb.cells[g.cell_of(p)];
    EXPECT_NE(std::find_if(l.begin(), l.end(), [&](const Vec3& q) { return squared_distance(q, local) < 1e-20; }),
              l.end());
  }
}

TEST(Gather, CapKeepsSpreadSubset) {
  Rng rng(2);
  std::vector<Vec3> pts;
  for (int i = 0; i < 300; ++i) pts.push_back({rng.uniform(0, 0.1), rng.uniform(0, 0.1), rng.uniform(0, 0.1)});
  const auto nb = gather_cell_neighborhoods(unit_cloud(pts), 4, std::sqrt(3.0) / 2, 64);
  for (const auto& l : nb.cells) EXPECT_LE(l.size(), 64u);
  for (const auto& l : nb.cells)
    for (const auto& p : l) EXPECT_LE(norm3(p), 1 + 1e-12);
}

TEST(Gather, RejectsRawClouds) {
  PointCloud raw;
  raw.points = {{0, 0, 0}};
  EXPECT_THROW(gather_cell_neighborhoods(raw, 4, 0.8, 64), GeometryError);
}

TEST(PointNet, EmptyCellsAreZero) {
  Rng rng(3);
  Encoder<double> enc(desk_config().encoder, rng);
  const auto pc = unit_cloud({{0.3, 0.3, 0.3}, {0.31, 0.3, 0.29}});
  const PointCloud* one[] = {&pc};
  const auto grid = enc.embed(one, false);
  const GridSpec g{8};
  const std::size_t occupied = g.cell_of(pc.points[0]);
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    bool any = false;
    for (std::size_t f = 0; f < 16; ++f) any = any || grid.features[f * g.cell_count() + c] != 0;
    if (c == occupied) EXPECT_TRUE(any);
    // Only cells whose center is within the radius of a point can be non-zero.
    if (squared_distance(g.center(c), pc.points[0]) > 0.02 && squared_distance(g.center(c), pc.points[1]) > 0.02)
      EXPECT_FALSE(any) << c;
  }
}

TEST(Encoder, PermutationAndDuplicationInvariant) {
  Rng rng(4);
  Encoder<double> enc(desk_config().encoder, rng);
  const auto pc = random_unit_cloud(300, rng);
  auto perm = pc;
  std::shuffle(perm.points.begin(), perm.points.end(), rng.engine());
  auto dup = pc;
  dup.points.insert(dup.points.end(), pc.points.begin(), pc.points.end());
  const PointCloud* a[] = {&pc};
  const PointCloud* b[] = {&perm};
  const PointCloud* c[] = {&dup};
  const auto za = enc.forward(a, false), zb = enc.forward(b, false), zc = enc.forward(c, false);
  for (std::size_t i = 0; i < za.size(); ++i) {
    EXPECT_NEAR(za[i], zb[i], 1e-10);
    EXPECT_NEAR(za[i], zc[i], 1e-10);
  }
}

TEST(Encoder, DeskShapeAndFinite) {
  Rng rng(5);
  Encoder<double> enc(desk_config().encoder, rng);
  const auto pc = random_unit_cloud(500, rng);
  const auto single = unit_cloud({{0.1, -0.2, 0.3}});
  const PointCloud* batch[] = {&pc, &single};
  const auto z = enc.forward(batch, false);
  EXPECT_EQ(z.shape(), (Shape{2, 128}));
  EXPECT_TRUE(all_finite(z));
}

TEST(Encoder, ZeroGridGivesFiniteOutput) {
  Rng rng(6);
  Encoder<double> enc(desk_config().encoder, rng);
  const auto z = enc.cnn_forward(TensorD({2, 16, 8, 8, 8}), true);
  EXPECT_EQ(z.shape(), (Shape{2, 128}));
  EXPECT_TRUE(all_finite(z));
}

TEST(Encoder, PaperPresetLatentWidth) {
  Rng rng(7);
  Encoder<float> enc(paper_config().encoder, rng);
  Rng data(8);
  const auto pc = sample_primitive(ShapeKind::torus, 2000, data);
  PointCloud raw;
  raw.points = pc;
  const auto norm = normalize_unit_cube(raw);
  const PointCloud* one[] = {&norm};
  const auto z = enc.forward(one, false);
  EXPECT_EQ(z.shape(), (Shape{1, 1024}));
  EXPECT_TRUE(all_finite(z));
}

TEST(Encoder, DistinguishesShapesDifferingInOneOctant) {
  Rng rng(9);
  Encoder<double> enc(desk_config().encoder, rng);
  auto a = random_unit_cloud(400, rng);
  auto b = a;
  for (auto& p : b.points)
    if (p[0] > 0 && p[1] > 0 && p[2] > 0) p = {p[0] * 0.5, p[1], p[2]};
  const PointCloud* batch[] = {&a, &b};
  const auto z = enc.forward(batch, false);
  const auto za = row(z, 0), zb = row(z, 1);
  double diff = 0;
  for (std::size_t i = 0; i < za.size(); ++i) diff = std::max(diff, std::abs(za[i] - zb[i]));
  EXPECT_GT(diff, 1e-6);
}

TEST(Encoder, BadStageCountRejected) {
  EncoderConfig c = desk_config().encoder;
  c.stages.push_back({8});
  Rng rng(1);
  EXPECT_THROW(Encoder<double>(c, rng), std::invalid_argument);
  c = desk_config().encoder;
  c.grid = 12;
  EXPECT_THROW(Encoder<double>(c, rng), std::invalid_argument);
}

TEST(Encoder, GradientCheckOnFourCubedGrid) {
  Rng rng(10);
  Encoder<double> enc(tiny_encoder(), rng);
  Registry<double> reg;
  enc.collect(reg);
  const auto a = random_unit_cloud(40, rng), b = random_unit_cloud(25, rng);
  const PointCloud* batch[] = {&a, &b};
  const TensorD w = gradcheck_detail::random_tensor({2, 5}, rng);
  for (auto* p : reg.params) p->zero_grad();
  enc.forward(batch, true);
  enc.backward(w);
  std::vector<GradTarget> targets;
  for (auto* p : reg.params) targets.push_back({&p->value, p->grad});
  const auto r = finite_difference_check("encoder", 10, false, targets, [&] {
    return gradcheck_detail::weighted_sum(enc.forward(batch, true), w);
  });
  EXPECT_TRUE(r.passed()) << r.max_error;
  EXPECT_GT(r.entries, 100u);
}
