#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>

#include "gmq/adam.hpp"
#include "gmq/error.hpp"
#include "gmq/graph.hpp"
#include "support/gradcheck.hpp"
#include "support/op_cases.hpp"

namespace gmq {
namespace {

using testing::max_leaf_error;
using testing::op_cases;
using testing::scalarize;
using testing::random_tensor;

TEST(Forward, SigmoidOfZeroIsHalf) {
  Graph g;
  const NodeId y = g.sigmoid(g.constant(Tensor::scalar(0.0)));
  EXPECT_DOUBLE_EQ(g.value(y).item(), 0.5);
}

TEST(Forward, SoftmaxOfZerosIsUniform) {
  Graph g;
  const NodeId y = g.softmax(g.constant(Tensor::vector({0, 0, 0})));
  for (double v : g.value(y).storage()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Forward, IdentityMatmul) {
  Graph g;
  const Tensor a = Tensor::matrix({{1.5, -2}, {3, 4.25}});
  const NodeId y = g.matmul(g.constant(Tensor::matrix({{1, 0}, {0, 1}})), g.constant(a));
  EXPECT_EQ(g.value(y), a);
}

TEST(Forward, NonFiniteValueNamesTheNode) {
  Graph g;
  const NodeId x = g.constant(Tensor::vector({1.0, -1.0}));
  try {
    g.log(x);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("log at node 1"), std::string::npos) << e.what();
  }
}

TEST(Forward, ShapeMismatchReportsBothShapes) {
  Graph g;
  const NodeId a = g.constant(Tensor({2, 3}));
  const NodeId b = g.constant(Tensor({2, 3}));
  try {
    g.matmul(a, b);
    FAIL() << "expected ContractViolation";
  } catch (const ContractViolation& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,3) vs (2,3)"), std::string::npos) << msg;
  }
  EXPECT_THROW(g.add(a, g.constant(Tensor({3, 2}))), ContractViolation);
}

TEST(Forward, ReEvaluationTracksLeafChanges) {
  Graph g;
  const NodeId x = g.variable(Tensor::scalar(2.0));
  const NodeId y = g.mul(x, x);
  g.set_value(x, Tensor::scalar(3.0));
  g.forward();
  EXPECT_DOUBLE_EQ(g.value(y).item(), 9.0);
}

TEST(Backward, SigmoidSlopeAtZero) {
  Graph g;
  const NodeId x = g.variable(Tensor::scalar(0.0));
  g.backward(g.sigmoid(x));
  EXPECT_DOUBLE_EQ(g.grad(x).item(), 0.25);
}

TEST(Backward, SquareAtThree) {
  Graph g;
  const NodeId x = g.variable(Tensor::scalar(3.0));
  g.backward(g.mul(x, x));
  EXPECT_DOUBLE_EQ(g.grad(x).item(), 6.0);
}

TEST(Backward, MeanOfMatmulMatchesFiniteDifferences) {
  Rng rng(11);
  Graph g;
  const NodeId w = g.variable(random_tensor({3, 4}, rng));
  const NodeId x = g.constant(random_tensor({4, 5}, rng));
  const NodeId root = g.mean(g.matmul(w, x));
  EXPECT_LT(max_leaf_error(g, {w}, root), 1e-4);
}

TEST(Backward, RootMustBeScalar) {
  Graph g;
  const NodeId x = g.variable(Tensor::vector({1, 2}));
  EXPECT_THROW(g.backward(x), ContractViolation);
}

TEST(Backward, ParameterGradientsAccumulate) {
  Parameter p("w", Tensor::vector({1.0, 2.0}));
  for (int rep = 0; rep < 2; ++rep) {
    Graph g;
    g.backward(g.sum(g.mul_scalar(g.param(p), 3.0)));
  }
  EXPECT_DOUBLE_EQ(p.grad[0], 6.0);
  EXPECT_DOUBLE_EQ(p.grad[1], 6.0);
}

TEST(Catalog, MaxMedianConcat) {
  Graph g;
  const NodeId x = g.constant(Tensor::vector({1, 5, 3}));
  EXPECT_DOUBLE_EQ(g.value(g.max(x, 0)).item(), 5.0);
  EXPECT_DOUBLE_EQ(g.value(g.median(x, 0)).item(), 3.0);
  const NodeId c = g.concat({g.constant(Tensor::scalar(7)), g.constant(Tensor::scalar(8))}, 0);
  EXPECT_EQ(g.value(c), Tensor::vector({7, 8}));
}

TEST(Catalog, EvenMedianTakesLowerMiddleLowestIndex) {
  Graph g;
  const NodeId x = g.variable(Tensor::vector({4, 2, 2, 9}));
  const NodeId m = g.median(x, 0);
  EXPECT_DOUBLE_EQ(g.value(m).item(), 2.0);
  g.backward(m);
  EXPECT_EQ(g.grad(x).storage(), (std::vector<double>{0, 1, 0, 0}));
}

TEST(Catalog, ConcatAlongEitherAxis) {
  Graph g;
  const NodeId a = g.constant(Tensor::matrix({{1, 2}}));
  const NodeId b = g.constant(Tensor::matrix({{3, 4}}));
  EXPECT_EQ(g.value(g.concat({a, b}, 0)), Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(g.value(g.concat({a, b}, 1)), Tensor::matrix({{1, 2, 3, 4}}));
}

TEST(Catalog, TriSolveAndQuadForm) {
  Graph g;
  const NodeId l = g.constant(Tensor::matrix({{2, 0}, {1, 1}}));
  const NodeId x = g.tri_solve(l, g.constant(Tensor::matrix({{4}, {5}})));
  EXPECT_EQ(g.value(x), Tensor::matrix({{2}, {3}}));
  const NodeId q = g.quad_form(g.constant(Tensor::matrix({{1, 2}})), g.constant(Tensor::matrix({{1, 0}, {0, 3}})));
  EXPECT_DOUBLE_EQ(g.value(q)[0], 13.0);
}

// --- finite-difference sweep over the op catalog --------------------------

TEST(GradientSweep, EveryOpMatchesFiniteDifferencesOverTwentySeeds) {
  for (const auto& c : op_cases()) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed * 7919 + c.name.size());
      Graph g(/*training=*/true, &rng);
      auto [leaves, root] = c.build(g, rng);
      EXPECT_LT(max_leaf_error(g, leaves, root), 1e-4) << c.name << " seed " << seed;
    }
  }
}

// --- properties -----------------------------------------------------------

TEST(Properties, SoftmaxRowsAreDistributions) {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    Graph g;
    const NodeId y = g.softmax(g.constant(random_tensor({6, 7}, rng, -30, 30)));
    const Tensor& v = g.value(y);
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0.0;
      for (double p : v.row(r)) {
        EXPECT_GE(p, 0.0);
        s += p;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Properties, DropoutEvalIsIdentity) {
  Rng rng(3);
  Graph g(/*training=*/false, &rng);
  const Tensor x = random_tensor({5, 5}, rng);
  EXPECT_EQ(g.value(g.dropout(g.constant(x), 0.5)), x);
}

TEST(Properties, DropoutTrainIsUnbiased) {
  Rng rng(17);
  constexpr std::size_t kMasks = 100000;
  const double keep = 0.7;
  Graph g(/*training=*/true, &rng);
  const NodeId x = g.constant(Tensor({kMasks}, 1.0));
  const NodeId y = g.dropout(x, 1.0 - keep);
  double s = 0.0;
  for (double v : g.value(y).storage()) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / keep) < 1e-15);
    s += v;
  }
  EXPECT_NEAR(s / kMasks, 1.0, 0.01);
}

TEST(Properties, MaxAndMedianRouteGradientToOneElementPerGroup) {
  Rng rng(23);
  for (const bool use_max : {true, false}) {
    for (int axis : {0, 1}) {
      Graph g;
      const NodeId x = g.variable(random_tensor({6, 4}, rng));
      const NodeId red = use_max ? g.max(x, axis) : g.median(x, axis);
      const Tensor upstream = random_tensor(g.value(red).shape(), rng);
      g.backward(g.sum(g.mul(red, g.constant(upstream))));
      const Tensor& gx = g.grad(x);
      const std::size_t groups = axis == 0 ? 4 : 6, count = axis == 0 ? 6 : 4;
      for (std::size_t gi = 0; gi < groups; ++gi) {
        int nonzero = 0;
        double total = 0.0;
        for (std::size_t j = 0; j < count; ++j) {
          const double v = axis == 0 ? gx(j, gi) : gx(gi, j);
          nonzero += v != 0.0;
          total += v;
        }
        EXPECT_EQ(nonzero, 1);
        EXPECT_DOUBLE_EQ(total, upstream[gi]);
      }
    }
  }
}

// --- adam -----------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter p("w", Tensor::vector({0.3, -1.2}));
  AdamState st;
  adam_step({&p}, st, AdamConfig{});
  EXPECT_EQ(p.value, Tensor::vector({0.3, -1.2}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m̂ = g = 1, v̂ = g² = 1, so Δθ = -lr · 1/(1 + eps).
  Parameter p("w", Tensor::scalar(2.0));
  p.grad = Tensor::scalar(1.0);
  AdamState st;
  adam_step({&p}, st, AdamConfig{.lr = 0.1});
  EXPECT_NEAR(p.value.item() - 2.0, -0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value.item() - 2.0, -0.1, 1e-8);
}

TEST(Adam, Deterministic) {
  auto run = [] {
    Parameter p("w", Tensor::vector({1, 2, 3}));
    AdamState st;
    for (int i = 0; i < 5; ++i) {
      p.grad = Tensor::vector({0.1 * i, -0.2, 0.3});
      adam_step({&p}, st, AdamConfig{});
    }
    return p.value;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, StateShapeMismatchIsRejected) {
  Parameter a("a", Tensor::vector({1, 2}));
  Parameter b("b", Tensor::vector({1, 2, 3}));
  AdamState st;
  adam_step({&a}, st, AdamConfig{});
  EXPECT_THROW(adam_step({&b}, st, AdamConfig{}), ContractViolation);
}

}  // namespace
}  // namespace gmq
