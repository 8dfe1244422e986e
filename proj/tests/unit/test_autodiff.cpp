#include <gtest/gtest.h>

#include <cmath>

#include "mate/autodiff.hpp"
#include "mate/errors.hpp"
#include "mate/fd.hpp"
#include "oracles.hpp"

using namespace mate;

namespace {

Tensor vec(std::vector<double> v) { return Tensor::vector(std::move(v)); }

// A primitive applied to x, reduced to a scalar through a fixed random weighting.
using Primitive = std::function<Var(Tape&, Var)>;

struct Case {
  const char* name;
  Shape shape;
  Primitive op;
  double min_abs = 0.0;  // keep inputs away from kinks
};

std::vector<Case> primitive_cases() {
  auto other = [](Tape& t, const Shape& s, double offset) {
    Tensor c(s);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::sin(1.3 * static_cast<double>(i) + offset);
    return t.constant(c);
  };
  return {
      {"add", {3, 2}, [=](Tape& t, Var x) { return ad::add(x, other(t, {3, 2}, 0.1)); }},
      {"add_self", {4}, [](Tape&, Var x) { return ad::add(x, x); }},
      {"sub", {3, 2}, [=](Tape& t, Var x) { return ad::sub(other(t, {3, 2}, 0.4), x); }},
      {"mul", {3, 2}, [=](Tape& t, Var x) { return ad::mul(x, other(t, {3, 2}, 0.7)); }},
      {"mul_self", {5}, [](Tape&, Var x) { return ad::mul(x, x); }},
      {"scale", {4}, [](Tape&, Var x) { return ad::scale(x, -2.5); }},
      {"add_scalar", {4}, [](Tape&, Var x) { return ad::add_scalar(x, 0.3); }},
      {"matmul_left", {2, 3}, [=](Tape& t, Var x) { return ad::matmul(x, other(t, {3, 4}, 1.0)); }},
      {"matmul_right", {3, 4}, [=](Tape& t, Var x) { return ad::matmul(other(t, {2, 3}, 2.0), x); }},
      {"matmul_self", {3, 3}, [](Tape&, Var x) { return ad::matmul(x, x); }},
      {"add_bias", {3}, [=](Tape& t, Var x) { return ad::add_bias(other(t, {4, 3}, 0.2), x); }},
      {"mul_rows", {4, 1}, [=](Tape& t, Var x) { return ad::mul_rows(other(t, {4, 3}, 0.9), x); }},
      {"concat", {2, 3}, [=](Tape& t, Var x) { return ad::concat({x, other(t, {2, 2}, 0.5), x}); }},
      {"slice", {4, 3}, [](Tape&, Var x) { return ad::slice(x, 1, 1, 3); }},
      {"slice_rows", {4, 3}, [](Tape&, Var x) { return ad::slice(x, 0, 1, 3); }},
      {"reshape", {2, 3}, [](Tape&, Var x) { return ad::reshape(x, Shape{3, 2}); }},
      {"gather_rows", {3, 2}, [](Tape&, Var x) { return ad::gather_rows(x, {2, 0, 2, 1}); }},
      {"scatter_add_rows", {4, 2}, [](Tape&, Var x) { return ad::scatter_add_rows(x, {1, 0, 1, 2}, 3); }},
      {"tanh", {5}, [](Tape&, Var x) { return ad::tanh(x); }},
      {"sigmoid", {5}, [](Tape&, Var x) { return ad::sigmoid(x); }},
      {"relu", {6}, [](Tape&, Var x) { return ad::relu(x); }, 0.05},
      {"exp", {5}, [](Tape&, Var x) { return ad::exp(x); }},
      {"square", {5}, [](Tape&, Var x) { return ad::square(x); }},
      {"softmax_0", {3, 4}, [](Tape&, Var x) { return ad::softmax(x, 0); }},
      {"softmax_1", {3, 4}, [](Tape&, Var x) { return ad::softmax(x, 1); }},
      {"softmax_3d", {2, 3, 2}, [](Tape&, Var x) { return ad::softmax(x, 1); }},
      {"reduce_sum", {3, 2}, [](Tape&, Var x) { return ad::reduce_sum(x); }},
      {"reduce_sum_axis", {3, 2}, [](Tape&, Var x) { return ad::reduce_sum(x, 0); }},
      {"reduce_mean", {3, 2}, [](Tape&, Var x) { return ad::reduce_mean(x); }},
      {"reduce_mean_axis", {3, 2}, [](Tape&, Var x) { return ad::reduce_mean(x, 1); }},
      {"norm", {4}, [](Tape&, Var x) { return ad::norm(x); }},
      {"norm_axis", {3, 2}, [](Tape&, Var x) { return ad::norm(x, 1); }},
  };
}

Var weighted_sum(Tape& t, Var y) {
  Tensor w(y.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.5 + std::cos(0.7 * static_cast<double>(i));
  return ad::reduce_sum(ad::mul(y, t.constant(w)));
}

}  // namespace

TEST(Primitives, AddExample) {
  Tape t;
  Var y = ad::add(t.leaf(vec({1, 2})), t.leaf(vec({3, 4})));
  EXPECT_EQ(y.value(), vec({4, 6}));
}

TEST(Primitives, SoftmaxOfZerosIsUniform) {
  Tape t;
  Var y = ad::softmax(t.leaf(vec({0, 0})), 0);
  EXPECT_EQ(y.value()[0], 0.5);
  EXPECT_EQ(y.value()[1], 0.5);
}

TEST(Primitives, IdentityMatmul) {
  oracle::Gen g(1);
  Tape t;
  Tensor a = g.tensor({3, 3});
  Tensor eye(Shape{3, 3});
  for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
  EXPECT_EQ(ad::matmul(t.constant(eye), t.leaf(a)).value(), a);
}

TEST(Primitives, ShapeMismatchNamesPrimitiveAndShapes) {
  Tape t;
  try {
    ad::matmul(t.leaf(Tensor(Shape{2, 3})), t.leaf(Tensor(Shape{2, 3})));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
  }
  EXPECT_THROW(ad::add(t.leaf(Tensor(Shape{2})), t.leaf(Tensor(Shape{3}))), ShapeError);
  EXPECT_THROW(ad::concat({t.leaf(Tensor(Shape{2, 1})), t.leaf(Tensor(Shape{3, 1}))}), ShapeError);
  EXPECT_THROW(ad::slice(t.leaf(Tensor(Shape{2, 3})), 1, 2, 5), ShapeError);
}

TEST(Primitives, NonFiniteValueIsAnErrorNamingTheOp) {
  Tape t;
  try {
    ad::exp(t.leaf(vec({1000.0})));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("exp"), std::string::npos);
  }
  EXPECT_THROW(t.leaf(vec({std::nan("")})), NumericError);
}

TEST(Primitives, ScopeLabelsNumericErrors) {
  Tape t;
  Tape::Scope s(t, "energy");
  try {
    ad::exp(t.leaf(vec({1000.0})));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("energy"), std::string::npos);
  }
}

TEST(Backward, SquareAtThree) {
  Tape t;
  Var x = t.leaf(Tensor::scalar(3.0));
  Var y = ad::mul(x, x);
  t.backward(y);
  EXPECT_EQ(x.grad().item(), 6.0);
  EXPECT_EQ(y.grad().item(), 1.0);
}

TEST(Backward, SumOfSoftmaxHasZeroGradient) {
  oracle::Gen g(2);
  Tape t;
  Var x = t.leaf(g.tensor({5}));
  t.backward(ad::reduce_sum(ad::softmax(x, 0)));
  for (double v : x.grad().data()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Backward, FanOutAccumulatesExactly) {
  Tape t;
  Var x = t.leaf(Tensor::scalar(1.7));
  t.backward(ad::add(x, x));
  EXPECT_EQ(x.grad().item(), 2.0);
}

TEST(Backward, SecondPassWithoutZeroingDoubles) {
  oracle::Gen g(3);
  Tape t;
  Var x = t.leaf(g.tensor({4}));
  Var y = ad::reduce_sum(ad::tanh(ad::square(x)));
  t.backward(y);
  const Tensor first = x.grad();
  t.backward(y);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(x.grad()[i], 2.0 * first[i]);
  t.zero_grad();
  t.backward(y);
  EXPECT_EQ(x.grad(), first);
}

TEST(Backward, NonScalarRootIsRejected) {
  Tape t;
  Var x = t.leaf(vec({1, 2}));
  EXPECT_THROW(t.backward(ad::tanh(x)), ShapeError);
}

TEST(Backward, ConstantsReceiveNoGradient) {
  Tape t;
  Var c = t.constant(vec({1, 2}));
  Var x = t.leaf(vec({3, 4}));
  t.backward(ad::reduce_sum(ad::mul(c, x)));
  EXPECT_FALSE(c.requires_grad());
  EXPECT_EQ(x.grad(), vec({1, 2}));
}

TEST(Softmax, SlicesSumToOne) {
  oracle::Gen g(4);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    Tensor x = g.tensor({3, 5, 4}, -20, 20);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      Var y = ad::softmax(t.leaf(x), axis);
      const Shape& s = x.shape();
      std::size_t outer = 1, inner = 1;
      for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
      for (std::size_t a = axis + 1; a < 3; ++a) inner *= s[a];
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          double sum = 0.0;
          for (std::size_t k = 0; k < s[axis]; ++k) sum += y.value()[(o * s[axis] + k) * inner + i];
          EXPECT_NEAR(sum, 1.0, 1e-12);
        }
    }
  }
}

// Every primitive against central differences on 100 random inputs.
TEST(Backward, EveryPrimitiveMatchesCentralDifferences) {
  const double h = 1e-5;
  for (const auto& c : primitive_cases()) {
    oracle::Gen g(std::hash<std::string>{}(c.name));
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      Tensor x = g.tensor(c.shape, -1.5, 1.5);
      for (double& v : x.data())
        if (std::abs(v) < c.min_abs) v = v < 0 ? v - c.min_abs : v + c.min_abs;
      Tape t;
      Var xv = t.leaf(x);
      t.backward(weighted_sum(t, c.op(t, xv)));
      const auto numeric = oracle::central_gradient(
          [&](const std::vector<double>& p) {
            Tape tt;
            return weighted_sum(tt, c.op(tt, tt.leaf(Tensor(c.shape, p)))).value().item();
          },
          x.storage(), h);
      for (std::size_t q = 0; q < numeric.size(); ++q)
        worst = std::max(worst, oracle::rel_err(xv.grad()[q], numeric[q]));
    }
    EXPECT_LE(worst, 1e-4) << c.name;
  }
}

TEST(FdJacobian, SquareAtThree) {
  const Tensor j = fd_jacobian([](const Tensor& x) { return Tensor::vector({x[0] * x[0]}); }, vec({3.0}), 1e-4);
  EXPECT_NEAR(j(0, 0), 6.0, 1e-7);
}

TEST(FdJacobian, ConstantFunctionGivesZeros) {
  const Tensor j = fd_jacobian([](const Tensor&) { return Tensor::vector({2.0, -1.0}); }, vec({1, 2, 3}), 1e-3);
  EXPECT_EQ(j.shape(), (Shape{2, 3}));
  for (double v : j.data()) EXPECT_EQ(v, 0.0);
}

TEST(FdJacobian, LinearMapRecoversMatrix) {
  oracle::Gen g(5);
  const Tensor a = g.tensor({3, 4});
  auto f = [&](const Tensor& x) {
    Tensor y(Shape{3});
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t q = 0; q < 4; ++q) y[p] += a(p, q) * x[q];
    return y;
  };
  const Tensor j = fd_jacobian(f, g.tensor({4}), 1e-3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(j[i], a[i], 1e-10);
}

TEST(FdJacobian, NonFiniteOutputIsAnError) {
  EXPECT_THROW(fd_jacobian([](const Tensor&) { return Tensor::vector({std::nan("")}); }, vec({1}), 1e-3),
               NumericError);
}

TEST(FdJacobian, RecordedStencilIsDifferentiable) {
  // J of f(x) = w * x^2 (elementwise) is diag(2 w x); d/dw of sum(J) is 2x.
  Tape t;
  Var w = t.leaf(vec({0.5, -1.5}));
  Var x = t.leaf(vec({0.3, 0.8}));
  Var j = fd_jacobian([&](Var p) { return ad::mul(w, ad::square(p)); }, x, 1e-3);
  EXPECT_EQ(j.shape(), (Shape{2, 2}));
  EXPECT_NEAR(j.value()(0, 0), 2 * 0.5 * 0.3, 1e-9);
  EXPECT_NEAR(j.value()(1, 1), 2 * -1.5 * 0.8, 1e-9);
  EXPECT_NEAR(j.value()(0, 1), 0.0, 1e-12);
  t.backward(ad::reduce_sum(j));
  EXPECT_NEAR(w.grad()[0], 0.6, 1e-9);
  EXPECT_NEAR(w.grad()[1], 1.6, 1e-9);
}

TEST(FdStep, DefaultScalesWithMagnitude) {
  EXPECT_EQ(default_fd_step(vec({0.1, -0.5})), 1e-3);
  EXPECT_DOUBLE_EQ(default_fd_step(vec({0.1, -40.0})), 4e-2);
}

TEST(GradCheck, QuadraticFormPasses) {
  oracle::Gen g(6);
  const Tensor a = g.tensor({3, 3});
  auto f = [&](Tape& t, Var x) {
    Var xr = ad::reshape(x, Shape{1, 3});
    return ad::reduce_sum(ad::mul(ad::matmul(xr, t.constant(a)), xr));
  };
  const auto rep = grad_check(f, g.tensor({3}), 1e-6);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(GradCheck, TwoLayerMlpAtTenPoints) {
  oracle::Gen g(7);
  const Tensor w1 = g.tensor({3, 5}), b1 = g.tensor({5}), w2 = g.tensor({5, 1});
  auto f = [&](Tape& t, Var x) {
    Var hdn = ad::tanh(ad::add_bias(ad::matmul(ad::reshape(x, Shape{1, 3}), t.constant(w1)), t.constant(b1)));
    return ad::reduce_sum(ad::matmul(hdn, t.constant(w2)));
  };
  for (int i = 0; i < 10; ++i) {
    const auto rep = grad_check(f, g.tensor({3}), 1e-4);
    EXPECT_TRUE(rep.passed) << rep.max_rel_error;
  }
}

TEST(GradCheck, CorruptedBackwardRuleFails) {
  auto f = [](Tape& t, Var x) {
    // y = x^3 with a wrong rule claiming dy/dx = x^2.
    Tensor y(x.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::pow(x.value()[i], 3);
    const std::size_t px = x.id();
    Var cube = t.record(Op::Square, std::move(y), {px}, [px](Tape& tt, std::size_t) {
      const Tensor& xv = tt.node(px).value;
      Tensor wrong(xv.shape());
      for (std::size_t i = 0; i < wrong.size(); ++i) wrong[i] = xv[i] * xv[i];
      tt.accumulate(px, wrong);
    });
    return ad::reduce_sum(cube);
  };
  const auto rep = grad_check(f, vec({0.7, -1.2}), 1e-4);
  EXPECT_FALSE(rep.passed);
  EXPECT_GT(rep.max_rel_error, 0.5);
}
