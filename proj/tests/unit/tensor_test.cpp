#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "frebis/adam.hpp"
#include "frebis/errors.hpp"
#include "frebis/rng.hpp"
#include "frebis/tensor.hpp"
#include "gradcheck.hpp"

namespace frebis {
namespace {

using TD = Tensor<double>;

TD random_tensor(Rng& rng, Shape shape, double lo = -1, double hi = 1, bool param = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return param ? TD::parameter(std::move(shape), std::move(v)) : TD::from(std::move(shape), std::move(v));
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng(1);
  auto a = random_tensor(rng, {3, 4}, -1, 1, false);
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  const auto c = matmul(a, TD::from({4, 4}, eye));
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(c.values()[i], a.values()[i]);
}

TEST(Matmul, HandArithmetic) {
  const auto c = matmul(TD::from_rows({{1, 2}, {3, 4}}), TD::from_rows({{1}, {1}}));
  ASSERT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c.at(0, 0), 3);
  EXPECT_EQ(c.at(1, 0), 7);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(TD::zeros({2, 3}), TD::zeros({2, 3})), ShapeError);
}

TEST(Matmul, GradientOfSumIsOnesTimesBTransposed) {
  Rng rng(2);
  auto a = random_tensor(rng, {3, 4});
  auto b = random_tensor(rng, {4, 2}, -1, 1, false);
  sum(matmul(a, b)).backward();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      const double expected = b.at(k, 0) + b.at(k, 1);
      EXPECT_NEAR(a.grad()[i * 4 + k], expected, 1e-14);
    }
  }
  const auto r = testing::check_gradient([&] { return sum(matmul(a, b)); }, a);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Elementwise, ReferenceValues) {
  const auto x0 = TD::scalar(0.0);
  EXPECT_NEAR(softplus(x0, 100.0).item(), std::log(2.0) / 100.0, 1e-15);
  EXPECT_NEAR(softplus(x0, 100.0).item(), 0.00693, 1e-5);
  EXPECT_EQ(sigmoid(x0).item(), 0.5);
  const auto r = relu(TD::from({2}, {-1.0, 2.0}));
  EXPECT_EQ(r.values()[0], 0.0);
  EXPECT_EQ(r.values()[1], 2.0);
}

TEST(Elementwise, SoftplusIsStableForLargeArguments) {
  const auto y = softplus(TD::from({2}, {50.0, -50.0}), 100.0);
  EXPECT_NEAR(y.values()[0], 50.0, 1e-12);
  EXPECT_GE(y.values()[1], 0.0);
  EXPECT_LT(y.values()[1], 1e-200);
}

TEST(Elementwise, TagDispatchMatchesNamedOps) {
  Rng rng(3);
  auto a = random_tensor(rng, {2, 3}, 0.1, 2, false);
  auto b = random_tensor(rng, {2, 3}, 0.1, 2, false);
  const std::vector<TD> two{a, b};
  const std::vector<TD> one{a};
  EXPECT_EQ(elementwise<double>(ElementwiseOp::mul, two).values()[4], mul(a, b).values()[4]);
  EXPECT_EQ(elementwise<double>(ElementwiseOp::sqrt, one).values()[2], sqrt(a).values()[2]);
  EXPECT_THROW(elementwise<double>(ElementwiseOp::add, one), std::invalid_argument);
}

TEST(Elementwise, NonFiniteOutputIsAnError) {
  EXPECT_THROW(exp(TD::scalar(1e6)), NumericError);
  EXPECT_THROW(div(TD::scalar(1.0), TD::scalar(0.0)), NumericError);
}

TEST(Elementwise, BroadcastRowAndColumn) {
  const auto m = TD::from_rows({{1, 2, 3}, {4, 5, 6}});
  const auto row = add(m, TD::from_rows({{10, 20, 30}}));
  EXPECT_EQ(row.at(1, 2), 36);
  const auto col = mul(m, TD::from_rows({{2}, {3}}));
  EXPECT_EQ(col.at(1, 0), 12);
  EXPECT_EQ(col.at(0, 2), 6);
  EXPECT_THROW(add(m, TD::zeros({3, 2})), ShapeError);
}

TEST(Softmax, ShiftInvariantUniform) {
  for (double c : {-7.0, 0.0, 3.5}) {
    const auto y = softmax(TD::from({3}, {c, c, c}));
    for (double v : y.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, ReferenceValue) {
  const auto y = softmax(TD::from({3}, {4.0, 2.0, 2.0}));
  // e^4 / (e^4 + 2 e^2) evaluated directly.
  const double e4 = std::exp(4.0);
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(y.values()[0], e4 / (e4 + 2 * e2), 1e-15);
  EXPECT_NEAR(y.values()[0], 0.7870, 1e-4);
  EXPECT_NEAR(y.values()[1], 0.1065, 1e-4);
  EXPECT_NEAR(y.values()[2], 0.1065, 1e-4);
}

TEST(Softmax, NoOverflowForLargeInputs) {
  const auto y = softmax(TD::from({3}, {1000.0, 0.0, 0.0}));
  EXPECT_NEAR(y.values()[0], 1.0, 1e-15);
  EXPECT_NEAR(y.values()[1], 0.0, 1e-15);
}

TEST(Softmax, PropertySumsToOneAndShiftInvariant) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    auto x = random_tensor(rng, {4, 5}, -30, 30, false);
    const double shift = rng.uniform(-100, 100);
    const auto y = softmax(x);
    const auto ys = softmax(add_scalar(x, shift));
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        const double v = y.at(r, c);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_NEAR(v, ys.at(r, c), 1e-9);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(Backward, SumOfSquaresGivesTwoX) {
  Rng rng(5);
  auto x = random_tensor(rng, {7});
  sum(square(x)).backward();
  for (std::size_t i = 0; i < 7; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2 * x.values()[i]);
}

TEST(Backward, CompositeSigmoidMatchesFiniteDifferences) {
  Rng rng(6);
  auto w = random_tensor(rng, {3, 1});
  auto x = random_tensor(rng, {5, 3}, -1, 1, false);
  const auto r = testing::check_gradient([&] { return sum(sigmoid(matmul(x, w))); }, w);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Backward, UnusedParameterGetsZeroGradient) {
  auto used = TD::parameter({2}, {1.0, 2.0});
  auto unused = TD::parameter({2}, {3.0, 4.0});
  sum(used).backward();
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
  EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, NonScalarThrows) {
  auto x = TD::parameter({2}, {1.0, 2.0});
  EXPECT_THROW(square(x).backward(), ShapeError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  auto x = TD::parameter({}, {3.0});
  const auto y = mul(x, x);  // both parents are the same node
  sum(add(y, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2 * 3.0 + 1.0);
}

TEST(Backward, DeterministicAcrossRuns) {
  Rng rng(7);
  auto w = random_tensor(rng, {16, 8});
  auto x = random_tensor(rng, {32, 16}, -1, 1, false);
  auto run = [&] {
    w.zero_grad();
    mean(softplus(matmul(x, w), 100.0)).backward();
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(NoGrad, GuardSuppressesRecording) {
  auto w = TD::parameter({2}, {1.0, 2.0});
  {
    NoGradGuard guard;
    EXPECT_FALSE(square(w).requires_grad());
  }
  EXPECT_TRUE(square(w).requires_grad());
}

// Every differentiable primitive against central differences on random inputs.
TEST(GradientSuite, AllPrimitivesMatchFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor(rng, {3, 4}, 0.2, 1.5);
    auto b = random_tensor(rng, {3, 4}, 0.2, 1.5);
    auto row = random_tensor(rng, {1, 4}, 0.2, 1.5);
    auto c = random_tensor(rng, {4, 2});
    const auto probe = random_tensor(rng, {3, 4}, -1, 1, false);
    auto weighted = [&](const TD& t) { return sum(mul(t, probe)); };
    auto weighted_any = [&](const TD& t) {
      std::vector<double> p(t.numel());
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::sin(1.0 + static_cast<double>(i));
      return sum(mul(t, TD::from(t.shape(), p)));
    };
    const std::vector<std::function<TD()>> cases{
        [&] { return weighted(add(a, b)); },
        [&] { return weighted(sub(a, row)); },
        [&] { return weighted(mul(a, row)); },
        [&] { return weighted(div(a, b)); },
        [&] { return weighted(softplus(a, 100.0)); },
        [&] { return weighted(softplus(sub(a, b), 3.0)); },
        [&] { return weighted(sigmoid(sub(a, b))); },
        [&] { return weighted(exp(a)); },
        [&] { return weighted(sqrt(a)); },
        [&] { return weighted(square(sub(a, b))); },
        [&] { return weighted(abs(sub(a, b))); },
        [&] { return weighted(relu(sub(a, b))); },
        [&] { return weighted(softmax(a)); },
        [&] { return weighted_any(matmul(a, c)); },
        [&] { return weighted_any(row_sum(mul(a, b))); },
        [&] {
          const std::vector<TD> parts{a, b};
          return weighted_any(concat_cols<double>(parts));
        },
        [&] {
          const std::vector<TD> parts{a, b};
          return weighted_any(concat_rows<double>(parts));
        },
        [&] { return weighted_any(slice_cols(a, 1, 2)); },
        [&] { return weighted_any(slice_rows(a, 1, 2)); },
        [&] { return weighted_any(reshape(a, {4, 3})); },
        [&] { return mean(mul(a, b)); },
    };
    for (std::size_t k = 0; k < cases.size(); ++k) {
      for (TD* p : {&a, &b, &row, &c}) {
        const auto r = testing::check_gradient(cases[k], *p);
        EXPECT_LT(r.max_rel_error, 1e-4) << "case " << k << " trial " << trial;
      }
    }
  }
}

// Independent scalar Adam recurrence used as the reference trace.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double w, double g, double lr) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1 - std::pow(0.9, t));
    const double vhat = v / (1 - std::pow(0.999, t));
    return w - lr * mhat / (std::sqrt(vhat) + 1e-8);
  }
};

TEST(Adam, FirstStepWithUnitGradientMovesByLr) {
  auto p = TD::parameter({4}, {0.0, 1.0, -2.0, 5.0});
  Adam<double> opt({p});
  const std::vector<std::vector<double>> grads{std::vector<double>(4, 1.0)};
  opt.step(grads, 0.005);
  const std::vector<double> before{0.0, 1.0, -2.0, 5.0};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p.values()[i] - before[i], -0.005, 1e-10);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto p = TD::parameter({3}, {0.5, -0.5, 2.0});
  Adam<double> opt({p});
  opt.step(std::vector<std::vector<double>>{std::vector<double>(3, 0.0)}, 0.005);
  EXPECT_EQ(p.values()[0], 0.5);
  EXPECT_EQ(p.values()[1], -0.5);
  EXPECT_EQ(p.values()[2], 2.0);
}

TEST(Adam, MatchesScalarReferenceTrace) {
  auto p = TD::parameter({2}, {0.3, -0.7});
  Adam<double> opt({p});
  ScalarAdam ref0;
  ScalarAdam ref1;
  double w0 = 0.3;
  double w1 = -0.7;
  for (int step = 0; step < 2; ++step) {
    p.zero_grad();
    sum(square(p)).backward();  // g = 2w
    w0 = ref0.step(w0, 2 * w0, 0.005);
    w1 = ref1.step(w1, 2 * w1, 0.005);
    opt.step(0.005);
  }
  EXPECT_NEAR(p.values()[0], w0, 1e-15);
  EXPECT_NEAR(p.values()[1], w1, 1e-15);
  EXPECT_EQ(opt.step_count(), 2);
}

TEST(Adam, ShapeMismatchThrows) {
  auto p = TD::parameter({3}, {0, 0, 0});
  Adam<double> opt({p});
  EXPECT_THROW(opt.step(std::vector<std::vector<double>>{std::vector<double>(2, 1.0)}, 0.005), ShapeError);
}

TEST(Rng, StateRoundTripReproducesStream) {
  Rng a(42);
  for (int i = 0; i < 10; ++i) a.uniform();
  const auto saved = a.state();
  std::vector<double> first;
  for (int i = 0; i < 5; ++i) first.push_back(a.normal());
  Rng b(0);
  b.set_state(saved);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(b.normal(), first[static_cast<std::size_t>(i)]);
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  EXPECT_LT(r.index(7), 7u);
}

}  // namespace
}  // namespace frebis
