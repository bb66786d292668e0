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
#include <vector>

#include <gtest/gtest.h>

#include "sead/enhancer.hpp"
#include "sead/error.hpp"
#include "sead/random.hpp"
#include "sead/training.hpp"
#include "test_util.hpp"

namespace sead {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Independent count: two bias-free FC layers plus two GRU layers, each with
// three (hidden x input) kernels, three (hidden x hidden) kernels and three
// bias vectors.
size_t CountByHand(int b, int h) {
  const size_t fc = 2u * static_cast<size_t>(b) * h;
  const size_t gru = 3u * h * h + 3u * h * h + 3u * h;
  return fc + 2 * gru;
}

void FillLayer(GruLayerParams& l, double value) {
  for (ad::Parameter* p : {&l.w_z, &l.u_z, &l.b_z, &l.w_r, &l.u_r, &l.b_r, &l.w_n, &l.u_n,
                           &l.b_n}) {
    p->value().setConstant(value);
  }
}

TEST(ParamCount, ReferenceDims) {
  EXPECT_EQ(ParamCount(EnhancerDims::Reference()), 230144u);
  EXPECT_EQ(CountByHand(128, 128), 230144u);
  EXPECT_EQ(ParamCount(InitParams(EnhancerDims::Reference(), 1)), 230144u);
}

TEST(ParamCount, SmallDimsMatchHandCount) {
  EXPECT_EQ(ParamCount(EnhancerDims{4, 4}), 248u);
  for (int b : {2, 8, 32, 50}) {
    for (int h : {1, 3, 32}) {
      EXPECT_EQ(ParamCount(EnhancerDims{b, h}), CountByHand(b, h)) << b << "x" << h;
      EXPECT_EQ(ParamCount(InitParams(EnhancerDims{b, h}, 3)), CountByHand(b, h));
    }
  }
}

TEST(GruCell, ZeroWeightsGiveHalfTheCandidate) {
  GruLayerParams l = InitParams(EnhancerDims{4, 3}, 1).gru1;
  FillLayer(l, 0.0);
  const VectorXd h = GruCell(VectorXd::Ones(3), VectorXd::Constant(3, 0.8), l);
  // z = 0.5, n = tanh(0) = 0, so h' = 0.5 * h.
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(h(i), 0.4);
}

TEST(GruCell, SaturatedUpdateGateKeepsState) {
  GruLayerParams l = InitParams(EnhancerDims{4, 3}, 1).gru1;
  l.b_z.value().setConstant(60.0);
  const VectorXd prev = (VectorXd(3) << 0.3, -0.2, 0.9).finished();
  const VectorXd h = GruCell(VectorXd::Constant(3, 0.5), prev, l);
  EXPECT_LE((h - prev).cwiseAbs().maxCoeff(), 1e-20);
}

TEST(GruCell, SingleUnitByHand) {
  GruLayerParams l = InitParams(EnhancerDims{2, 1}, 1).gru1;
  l.w_z.value()(0, 0) = 0.5;  l.u_z.value()(0, 0) = -1.0; l.b_z.value()(0, 0) = 0.1;
  l.w_r.value()(0, 0) = 2.0;  l.u_r.value()(0, 0) = 0.3;  l.b_r.value()(0, 0) = -0.2;
  l.w_n.value()(0, 0) = -0.7; l.u_n.value()(0, 0) = 1.5;  l.b_n.value()(0, 0) = 0.05;
  const double x = 0.4, hp = -0.6;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double z = sig(0.5 * x - 1.0 * hp + 0.1);
  const double r = sig(2.0 * x + 0.3 * hp - 0.2);
  const double n = std::tanh(-0.7 * x + 1.5 * (r * hp) + 0.05);
  const double expect = (1.0 - z) * n + z * hp;
  const VectorXd h = GruCell(VectorXd::Constant(1, x), VectorXd::Constant(1, hp), l);
  EXPECT_NEAR(h(0), expect, 1e-15);
}

TEST(GruLayer, MatchesCellRecurrencePerBatchColumn) {
  const GruEnhancerParams p = InitParams(EnhancerDims{6, 5}, 4);
  Rng rng(5);
  const int frames = 7, batch = 3;
  MatrixXd in(5, frames * batch);
  for (Eigen::Index i = 0; i < in.size(); ++i) in(i) = rng.Uniform(-1, 1);
  ad::Tape tape(ad::Tape::Mode::kInference);
  const MatrixXd out =
      GruLayerForward(tape, p.gru1, tape.Constant(in), frames, batch).value();
  for (int b = 0; b < batch; ++b) {
    VectorXd h = VectorXd::Zero(5);
    for (int t = 0; t < frames; ++t) {
      h = GruCell(in.col(t * batch + b), h, p.gru1);
      EXPECT_LE((out.col(t * batch + b) - h).cwiseAbs().maxCoeff(), 1e-14);
    }
  }
}

TEST(Forward, MaskIsStrictlyInsideUnitInterval) {
  const GruEnhancerParams p = InitParams(EnhancerDims::Desk(), 2);
  Rng rng(6);
  MatrixXd f(40, 32);
  for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = rng.Uniform(0, 5);
  const MatrixXd m = Forward(f, p);
  ASSERT_EQ(m.rows(), 40);
  ASSERT_EQ(m.cols(), 32);
  EXPECT_GT(m.minCoeff(), 0.0);
  EXPECT_LT(m.maxCoeff(), 1.0);
}

TEST(Forward, ZeroRecurrenceAndConstantInputGiveIdenticalRows) {
  GruEnhancerParams p = InitParams(EnhancerDims{8, 6}, 2);
  for (GruLayerParams* l : {&p.gru1, &p.gru2}) {
    l->u_z.value().setZero();
    l->u_r.value().setZero();
    l->u_n.value().setZero();
    // h' = n when z = 0, so no state leaks between frames.
    l->b_z.value().setConstant(-60.0);
  }
  const MatrixXd f = MatrixXd::Constant(9, 8, 0.7);
  const MatrixXd m = Forward(f, p);
  for (int t = 1; t < 9; ++t) EXPECT_LE((m.row(t) - m.row(0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Forward, IsCausal) {
  const GruEnhancerParams p = InitParams(EnhancerDims{8, 6}, 9);
  Rng rng(7);
  MatrixXd f(20, 8);
  for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = rng.Uniform(0, 2);
  MatrixXd g = f;
  for (int t = 12; t < 20; ++t) g.row(t).setRandom();
  const MatrixXd a = Forward(f, p), b = Forward(g, p);
  EXPECT_EQ(a.topRows(12), b.topRows(12));
  EXPECT_NE(a.bottomRows(8), b.bottomRows(8));
}

TEST(Forward, WrongBandCountIsAShapeError) {
  const GruEnhancerParams p = InitParams(EnhancerDims{8, 6}, 9);
  try {
    Forward(MatrixXd::Zero(3, 7), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(Enhance, SilenceStaysSilent) {
  const GruEnhancerParams p = InitParams(EnhancerDims::Desk(), 1);
  const Waveform out = Enhance(Waveform(std::vector<double>(4000, 0.0)), p);
  ASSERT_EQ(out.size(), 4000u);
  for (double v : out.samples) EXPECT_EQ(v, 0.0);
}

TEST(Enhance, PreservesLengthAndAttenuates) {
  const GruEnhancerParams p = InitParams(EnhancerDims::Desk(), 1);
  for (size_t n : {512u, 513u, 8000u, 8123u}) {
    const Waveform in(testing::RandomSignal(n, n, 0.3));
    const Waveform out = Enhance(in, p);
    ASSERT_EQ(out.size(), n);
    // A mask in (0, 1) never adds energy beyond the tight-frame bound.
    EXPECT_LE(testing::Energy(out.samples), testing::Energy(in.samples) * (1 + 1e-9));
  }
}

TEST(Enhance, InputShorterThanOneFrameIsRejected) {
  const GruEnhancerParams p = InitParams(EnhancerDims::Desk(), 1);
  EXPECT_THROW(Enhance(Waveform(testing::RandomSignal(300, 1)), p), Error);
}

TEST(Enhance, BatchMatchesSingle) {
  const GruEnhancerParams p = InitParams(EnhancerDims::Desk(), 4);
  const auto ctx = AnalysisContext::For(32);
  std::vector<PreparedInput> in;
  std::vector<Waveform> waves;
  for (int i = 0; i < 3; ++i) {
    waves.emplace_back(testing::RandomSignal(3000, 40 + i, 0.2));
    in.push_back(PrepareInput(waves.back().samples, *ctx));
  }
  ad::Tape tape(ad::Tape::Mode::kInference);
  const MatrixXd batch = EnhanceBatch(tape, p, nullptr, in).value();
  for (int i = 0; i < 3; ++i) {
    const Waveform single = Enhance(waves[i], p);
    for (int n = 0; n < 3000; ++n) EXPECT_NEAR(batch(n, i), single.samples[n], 1e-12);
  }
}

TEST(Enhance, RejectsNonFiniteInput) {
  const GruEnhancerParams p = InitParams(EnhancerDims::Desk(), 1);
  std::vector<double> x(1000, 0.1);
  x[10] = std::nan("");
  EXPECT_THROW(Enhance(Waveform(x), p), Error);
}

TEST(Init, SeededAndBounded) {
  const GruEnhancerParams a = InitParams(EnhancerDims::Desk(), 11);
  const GruEnhancerParams b = InitParams(EnhancerDims::Desk(), 11);
  const GruEnhancerParams c = InitParams(EnhancerDims::Desk(), 12);
  EXPECT_EQ(HashParams(a), HashParams(b));
  EXPECT_NE(HashParams(a), HashParams(c));
  EXPECT_LE(a.fc_in.value().cwiseAbs().maxCoeff(), 1.0 / std::sqrt(32.0));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const GruEnhancerParams p = InitParams(EnhancerDims{8, 5}, 21);
  const auto path = testing::ScratchDir("ckpt") / "model.sgru";
  WriteCheckpoint(path, Save(p, 0xabcdef));
  const ModelCheckpoint c = ReadCheckpoint(path);
  EXPECT_EQ(c.provenance, 0xabcdefu);
  EXPECT_EQ(c.dims, (EnhancerDims{8, 5}));
  const GruEnhancerParams q = Load(c);
  EXPECT_EQ(HashParams(p), HashParams(q));
  const auto pp = p.Parameters();
  const auto qp = q.Parameters();
  for (size_t i = 0; i < pp.size(); ++i) EXPECT_EQ(pp[i]->value(), qp[i]->value());
}

TEST(Checkpoint, CorruptBytesAreRejected) {
  const GruEnhancerParams p = InitParams(EnhancerDims{4, 4}, 1);
  std::vector<char> bytes = SerializeCheckpoint(Save(p));
  std::vector<char> truncated(bytes.begin(), bytes.end() - 8);
  EXPECT_THROW(DeserializeCheckpoint(truncated), Error);
  bytes[0] = 'X';
  EXPECT_THROW(DeserializeCheckpoint(bytes), Error);
  ModelCheckpoint c = Save(p);
  c.payload.pop_back();
  EXPECT_THROW(Load(c), Error);
}

TEST(Gradients, SpectralMseMatchesFiniteDifferences) {
  GruEnhancerParams p = InitParams(EnhancerDims{6, 4}, 3);
  const auto ctx = AnalysisContext::For(6);
  std::vector<PreparedInput> in{
      PrepareInput(testing::RandomSignal(1800, 1, 0.3), *ctx),
      PrepareInput(testing::RandomSignal(1800, 2, 0.3), *ctx)};
  const MatrixXd target = StackFeatures(in) * 0.5;
  auto params = p.Parameters();
  const auto res = ad::GradCheck(
      [&](ad::Tape& t) { return SpectralMseLoss(MaskedFeaturesBatch(t, p, in), target); },
      params);
  EXPECT_EQ(res.coordinates_checked, ParamCount(p));
  // Central differences carry ~1e-11 absolute roundoff, so gradients near
  // 1e-6 only agree to a few parts in 1e5.
  EXPECT_LE(res.max_relative_error, 1e-4)
      << res.worst_parameter << "[" << res.worst_index << "] analytic "
      << res.worst_analytic << " numeric " << res.worst_numeric;
}

}  // namespace
}  // namespace sead
