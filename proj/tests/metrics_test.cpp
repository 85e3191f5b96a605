#include <gtest/gtest.h>

#include <cmath>

#include "gmq/error.hpp"
#include "gmq/metrics.hpp"
#include "gmq/protocols.hpp"
#include "support/gradcheck.hpp"
#include "support/tempdir.hpp"

namespace gmq {
namespace {

using V = std::vector<double>;

TEST(Rae, Examples) {
  EXPECT_EQ(rae(V{0.2, 0.8}, V{0.2, 0.8}, 10), 0.0);
  EXPECT_NEAR(rae(V{0.5, 0.5}, V{0.6, 0.4}, 1000), 0.1998002, 1e-6);
  EXPECT_TRUE(std::isfinite(rae(V{0, 1}, V{1, 0}, 1)));
  EXPECT_DOUBLE_EQ(rae_epsilon(1000), 0.0005);
  EXPECT_THROW(rae(V{1}, V{0.5, 0.5}, 3), ContractViolation);
}

TEST(Nmd, Examples) {
  EXPECT_EQ(nmd(V{0.2, 0.8}, V{0.2, 0.8}), 0.0);
  EXPECT_EQ(nmd(V{1, 0, 0, 0, 0}, V{0, 0, 0, 0, 1}), 1.0);
  EXPECT_NEAR(nmd(V{0.2, 0.5, 0.3}, V{0.3, 0.4, 0.3}), 0.05, 1e-12);
  EXPECT_THROW(nmd(V{1}, V{1}), ContractViolation);
}

TEST(Ae, Examples) {
  EXPECT_EQ(ae(V{0.3, 0.7}, V{0.3, 0.7}), 0.0);
  EXPECT_EQ(ae(V{1, 0}, V{0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(ae(V{0.5, 0.5}, V{0.75, 0.25}), 0.25);
  EXPECT_THROW(ae(V{1}, V{0.5, 0.5}), ContractViolation);
}

TEST(Hellinger, Examples) {
  EXPECT_EQ(hellinger(V{0.25, 0.75}, V{0.25, 0.75}), 0.0);
  EXPECT_DOUBLE_EQ(hellinger(V{1, 0}, V{0, 1}), 1.0);
  const double hand = std::sqrt(std::pow(std::sqrt(0.5) - 1.0, 2) + 0.5) / std::sqrt(2.0);
  EXPECT_NEAR(hellinger(V{0.5, 0.5}, V{1, 0}), hand, 1e-15);
  EXPECT_NEAR(hand, 0.5412, 1e-4);
  EXPECT_THROW(hellinger(V{0.5, 0.6}, V{1, 0}), ContractViolation);
}

TEST(Properties, RaeNonnegativeZeroOnlyAtEquality) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto p = kraemer_sample(4, rng), q = kraemer_sample(4, rng);
    EXPECT_GT(rae(p.values(), q.values(), 50), 0.0);
    EXPECT_EQ(rae(p.values(), p.values(), 50), 0.0);
  }
}

TEST(Properties, NmdBoundedAndReversalInvariant) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t l = 2 + rng.uniform_int(5);
    V p = kraemer_sample(l, rng).values(), q = kraemer_sample(l, rng).values();
    const double v = nmd(p, q);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    std::reverse(p.begin(), p.end());
    std::reverse(q.begin(), q.end());
    EXPECT_NEAR(nmd(p, q), v, 1e-12);
  }
}

TEST(Properties, HellingerSymmetricAndTriangle) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t b = 2 + rng.uniform_int(10);
    const V a = kraemer_sample(b, rng).values(), c = kraemer_sample(b, rng).values(), e = kraemer_sample(b, rng).values();
    EXPECT_EQ(hellinger(a, c), hellinger(c, a));
    EXPECT_LE(hellinger(a, e), hellinger(a, c) + hellinger(c, e) + 1e-12);
  }
}

TEST(Differentiable, ValueParityOnRandomPairs) {
  Rng rng(4);
  for (LossKind kind : {LossKind::Rae, LossKind::Nmd, LossKind::Ae}) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const std::size_t l = 2 + rng.uniform_int(6), m = 1 + rng.uniform_int(500);
      const auto p = kraemer_sample(l, rng), q = kraemer_sample(l, rng);
      Graph g;
      const NodeId loss = differentiable_loss(g, kind, p.values(), g.constant(Tensor::vector(q.values())), m);
      worst = std::max(worst, std::abs(g.value(loss).item() - loss_value(kind, p.values(), q.values(), m)));
    }
    EXPECT_LT(worst, 1e-12) << loss_name(kind);
  }
}

TEST(Differentiable, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  for (LossKind kind : {LossKind::Rae, LossKind::Nmd, LossKind::Ae}) {
    for (int i = 0; i < 20; ++i) {
      const auto p = kraemer_sample(4, rng);
      Graph g;
      const NodeId logits = g.variable(testing::random_tensor({4}, rng));
      const NodeId loss = differentiable_loss(g, kind, p.values(), g.softmax(logits), 100);
      EXPECT_LT(testing::max_leaf_error(g, {logits}, loss), 1e-4) << loss_name(kind);
    }
  }
}

TEST(Differentiable, NmdBackwardAtEquality) {
  Graph g;
  const V p{0.2, 0.3, 0.5};
  const NodeId q = g.variable(Tensor::vector(p));
  const NodeId loss = differentiable_loss(g, LossKind::Nmd, p, q, 10);
  ASSERT_NO_THROW(g.backward(loss));
  for (double v : g.grad(q).storage()) EXPECT_EQ(v, 0.0);
}

TEST(Report, MeanAndStdRecomputable) {
  const auto r = EvalReport::from_losses({0.1, 0.4, 0.2, 0.3});
  EXPECT_EQ(r.n, 4u);
  EXPECT_NEAR(r.mean, 0.25, 1e-12);
  EXPECT_NEAR(r.std, std::sqrt(0.0125), 1e-12);
}

TEST(Report, SaveAndLoadSummary) {
  testing::TempDir dir;
  const auto r = EvalReport::from_losses({0.5, 0.25});
  save_report(dir.path(), r, "cc", LossKind::Ae);
  const auto s = load_summary(dir / "summary.json");
  EXPECT_EQ(s.method, "cc");
  EXPECT_EQ(s.loss, "ae");
  EXPECT_EQ(s.mean, r.mean);
  EXPECT_EQ(s.n, 2u);
  EXPECT_EQ(testing::read_file(dir / "per_bag.csv"), "bag_id,loss\n0,0.5\n1,0.25\n");
}

TEST(LossKindNames, RoundTrip) {
  for (LossKind k : {LossKind::Rae, LossKind::Nmd, LossKind::Ae}) EXPECT_EQ(parse_loss_kind(loss_name(k)), k);
  EXPECT_THROW(parse_loss_kind("kld"), ConfigError);
}

}  // namespace
}  // namespace gmq
