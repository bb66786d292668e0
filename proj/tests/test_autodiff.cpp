// Copyright 2026 The sead Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "sead/autodiff.hpp"
#include "sead/error.hpp"
#include "sead/random.hpp"

namespace sead::ad {
namespace {

Matrix RandomMatrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.Uniform(lo, hi);
  return m;
}

TEST(Primitives, SigmoidAtZero) {
  Parameter x("x", Matrix::Zero(1, 1));
  Tape tape;
  const Var y = Sum(Sigmoid(tape.Param(x)));
  EXPECT_DOUBLE_EQ(Scalar(y), 0.5);
  tape.Backward(y);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 0.25);
}

TEST(Primitives, SigmoidIsStableForLargeInputs) {
  Tape tape(Tape::Mode::kInference);
  Matrix m(1, 2);
  m << -800.0, 800.0;
  const Var y = Sigmoid(tape.Constant(m));
  EXPECT_EQ(y.value()(0, 0), 0.0);
  EXPECT_EQ(y.value()(0, 1), 1.0);
}

TEST(Primitives, MeanOfSquaresGradient) {
  Matrix v(1, 3);
  v << 1.0, 2.0, 3.0;
  Parameter x("x", v);
  Tape tape;
  const Var xv = tape.Param(x);
  const Var loss = Mean(Mul(xv, xv));
  EXPECT_DOUBLE_EQ(Scalar(loss), 14.0 / 3.0);
  tape.Backward(loss);
  // Hand derivative 2 x / n.
  EXPECT_NEAR(x.grad()(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(x.grad()(0, 1), 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(x.grad()(0, 2), 2.0, 1e-15);
}

TEST(Primitives, MatMulGradientIsOuterProduct) {
  Rng rng(1);
  Parameter w("w", RandomMatrix(3, 4, rng));
  const Matrix v = RandomMatrix(4, 1, rng);
  Tape tape;
  const Var loss = Sum(MatMul(tape.Param(w), tape.Constant(v)));
  tape.Backward(loss);
  const Matrix expect = Matrix::Ones(3, 1) * v.transpose();
  EXPECT_LE((w.grad() - expect).cwiseAbs().maxCoeff(), 1e-15);

  // Finite-difference oracle on the same function.
  Parameter* ps[] = {&w};
  const auto r = GradCheck(
      [&](Tape& t) { return Sum(MatMul(t.Param(w), t.Constant(v))); }, ps);
  EXPECT_LE(r.max_relative_error, 1e-7);
}

TEST(Primitives, PowerRejectsNegativeBaseWithFractionalExponent) {
  Tape tape;
  Matrix m(1, 1);
  m << -1.0;
  EXPECT_THROW(Power(tape.Constant(m), 0.3), Error);
  EXPECT_NO_THROW(Power(tape.Constant(m), 2.0));
}

TEST(Primitives, PowerGradientIsZeroAtExactZero) {
  Parameter x("x", Matrix::Zero(1, 2));
  Tape tape;
  const Var loss = Sum(Power(tape.Param(x), 0.3));
  tape.Backward(loss);
  EXPECT_EQ(x.grad()(0, 0), 0.0);
}

TEST(Primitives, Log10OfNonPositiveIsANumericError) {
  Tape tape;
  try {
    Log10(tape.Constant(Matrix::Zero(1, 1)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
  }
}

TEST(Primitives, ShapeMismatchIsAShapeError) {
  Tape tape;
  const Var a = tape.Constant(Matrix::Zero(2, 3));
  const Var b = tape.Constant(Matrix::Zero(3, 2));
  try {
    Add(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
  EXPECT_THROW(MatMul(a, a), Error);
}

TEST(Primitives, NonFiniteForwardNamesTheOperation) {
  Tape tape;
  Matrix big(1, 1);
  big << 1e300;
  try {
    Mul(tape.Constant(big), tape.Constant(big));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(e.what()).find("mul"), std::string::npos);
  }
}

// Every primitive against central differences on random shapes up to 64x64.
class PrimitiveGradTest : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradTest, MatchesFiniteDifferences) {
  Rng rng(100 + GetParam());
  const Eigen::Index r = 1 + rng.Index(64);
  const Eigen::Index c = 1 + rng.Index(64);
  const Eigen::Index k = 1 + rng.Index(64);
  Parameter a("a", RandomMatrix(r, c, rng));
  Parameter b("b", RandomMatrix(r, c, rng));
  Parameter m("m", RandomMatrix(c, k, rng));
  Parameter col("col", RandomMatrix(r, 1, rng));
  Parameter pos("pos", RandomMatrix(r, c, rng, 0.5, 2.0));
  const Matrix weights = RandomMatrix(r, c, rng);
  const Matrix weights_k = RandomMatrix(r, k, rng);

  // Weighted sums keep every output coordinate in play.
  auto weighted = [&](Tape& t, Var v) { return Sum(Mul(v, t.Constant(weights))); };
  std::vector<std::pair<const char*, std::function<Var(Tape&)>>> cases = {
      {"add", [&](Tape& t) { return weighted(t, Add(t.Param(a), t.Param(b))); }},
      {"sub", [&](Tape& t) { return weighted(t, Sub(t.Param(a), t.Param(b))); }},
      {"mul", [&](Tape& t) { return weighted(t, Mul(t.Param(a), t.Param(b))); }},
      {"matmul",
       [&](Tape& t) {
         return Sum(Mul(MatMul(t.Param(a), t.Param(m)), t.Constant(weights_k)));
       }},
      {"sigmoid", [&](Tape& t) { return weighted(t, Sigmoid(t.Param(a))); }},
      {"tanh", [&](Tape& t) { return weighted(t, Tanh(t.Param(a))); }},
      {"power", [&](Tape& t) { return weighted(t, Power(t.Param(pos), 0.3)); }},
      {"log10", [&](Tape& t) { return weighted(t, Log10(t.Param(pos))); }},
      {"scale", [&](Tape& t) { return weighted(t, Scale(t.Param(a), -1.7)); }},
      {"add_scalar", [&](Tape& t) { return weighted(t, AddScalar(t.Param(a), 0.3)); }},
      {"add_column", [&](Tape& t) { return weighted(t, AddColumn(t.Param(a), t.Param(col))); }},
      {"mean", [&](Tape& t) { return Mean(Mul(t.Param(a), t.Param(b))); }},
      {"col_sum",
       [&](Tape& t) {
         return Sum(Mul(ColSum(t.Param(a)), t.Constant(weights.row(0))));
       }},
      {"slice_concat",
       [&](Tape& t) {
         const Var av = t.Param(a);
         const Eigen::Index half = c / 2;
         std::vector<Var> parts;
         if (c - half > 0) parts.push_back(SliceCols(av, half, c - half));
         if (half > 0) parts.push_back(SliceCols(av, 0, half));
         return weighted(t, Mul(ConcatCols(parts), ConcatCols(parts)));
       }},
  };
  Parameter* ps[] = {&a, &b, &m, &col, &pos};
  for (auto& [name, fn] : cases) {
    GradCheckOptions opts;
    opts.max_coordinates = 60;
    opts.seed = GetParam();
    const GradCheckResult res = GradCheck(fn, ps, opts);
    EXPECT_LE(res.max_relative_error, 1e-5)
        << name << " shape " << r << "x" << c << " worst " << res.worst_parameter << "["
        << res.worst_index << "] analytic " << res.worst_analytic << " numeric "
        << res.worst_numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, PrimitiveGradTest, ::testing::Range(0, 6));

TEST(GradCheck, QuadraticInTenParameters) {
  Rng rng(2);
  Parameter x("x", RandomMatrix(10, 1, rng));
  const Matrix q = RandomMatrix(10, 10, rng);
  Parameter* ps[] = {&x};
  const auto res = GradCheck(
      [&](Tape& t) {
        const Var xv = t.Param(x);
        return Sum(Mul(xv, MatMul(t.Constant(q), xv)));
      },
      ps);
  EXPECT_EQ(res.coordinates_checked, 10u);
  EXPECT_LE(res.max_relative_error, 1e-7);
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
  Parameter x("x", Matrix::Ones(3, 1));
  Parameter* ps[] = {&x};
  const auto res = GradCheck([&](Tape& t) { return Sum(t.Constant(Matrix::Ones(2, 2))); }, ps);
  EXPECT_EQ(res.max_relative_error, 0.0);
  EXPECT_EQ(res.worst_analytic, 0.0);
  EXPECT_EQ(res.worst_numeric, 0.0);
}

TEST(Tape, BackwardTwiceIsAnError) {
  Parameter x("x", Matrix::Ones(1, 1));
  Tape tape;
  const Var loss = Sum(tape.Param(x));
  tape.Backward(loss);
  EXPECT_THROW(tape.Backward(loss), Error);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 1.0);
}

TEST(Tape, InferenceTapeCannotBackward) {
  Parameter x("x", Matrix::Ones(1, 1));
  Tape tape(Tape::Mode::kInference);
  const Var loss = Sum(tape.Param(x));
  EXPECT_THROW(tape.Backward(loss), Error);
}

TEST(Tape, FrozenParametersCollectNoGradient) {
  Parameter x("x", Matrix::Ones(2, 1), /*trainable=*/false);
  Parameter y("y", Matrix::Ones(2, 1));
  Tape tape;
  const Var loss = Sum(Mul(tape.Param(x), tape.Param(y)));
  tape.Backward(loss);
  EXPECT_FALSE(x.has_grad());
  EXPECT_TRUE(y.has_grad());
}

TEST(Tape, ReusedParameterAccumulates) {
  Parameter x("x", Matrix::Constant(1, 1, 3.0));
  Tape tape;
  const Var xv = tape.Param(x);
  const Var loss = Sum(Add(Mul(xv, xv), xv));
  tape.Backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 7.0);
}

TEST(Adam, FirstStepMovesEachCoordinateByLr) {
  // Closed form: m1 = (1 - b1) g, v1 = (1 - b2) g^2; after bias correction
  // the step is lr * g / (|g| + eps).
  Matrix v(1, 3);
  v << 0.0, 1.0, -2.0;
  Parameter x("x", v);
  const Matrix g = (Matrix(1, 3) << 0.5, -3.0, 1e-3).finished();
  Adam adam({&x}, {.lr = 0.01});
  x.AccumulateGrad(g);
  adam.Step();
  for (int i = 0; i < 3; ++i) {
    const double expect = v(0, i) - 0.01 * g(0, i) / (std::abs(g(0, i)) + 1e-8);
    EXPECT_NEAR(x.value()(0, i), expect, 1e-14);
  }
  EXPECT_FALSE(x.has_grad());
  EXPECT_EQ(adam.step_count(), 1);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter x("x", Matrix::Constant(2, 2, 0.7));
  Adam adam({&x});
  x.AccumulateGrad(Matrix::Zero(2, 2));
  adam.Step();
  EXPECT_EQ(x.value(), Matrix::Constant(2, 2, 0.7));
}

TEST(Adam, StepBeforeBackwardIsAnError) {
  Parameter x("x", Matrix::Ones(1, 1));
  Adam adam({&x});
  EXPECT_THROW(adam.Step(), Error);
}

TEST(Adam, FrozenParameterIsBitwiseUnchanged) {
  Parameter frozen("f", Matrix::Constant(2, 1, 0.123), false);
  Parameter live("l", Matrix::Constant(2, 1, 0.5));
  Adam adam({&frozen, &live}, {.lr = 0.1});
  const Matrix before = frozen.value();
  for (int i = 0; i < 25; ++i) {
    Tape tape;
    const Var loss = Sum(Mul(tape.Param(frozen), tape.Param(live)));
    tape.Backward(loss);
    // Force a gradient into the frozen accumulator as well.
    frozen.AccumulateGrad(Matrix::Ones(2, 1));
    adam.Step();
  }
  EXPECT_EQ(frozen.value(), before);
  EXPECT_NE(live.value(), Matrix::Constant(2, 1, 0.5));
}

}  // namespace
}  // namespace sead::ad
