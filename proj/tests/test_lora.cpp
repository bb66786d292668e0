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
#include <fstream>

#include <gtest/gtest.h>

#include "sead/enhancer.hpp"
#include "sead/error.hpp"
#include "sead/lora.hpp"
#include "sead/random.hpp"
#include "test_util.hpp"

namespace sead {
namespace {

using Eigen::MatrixXd;

// r (d + k) per target, written out for each layer shape.
size_t LoraCountByHand(int rank, int bands, int hidden) {
  const size_t fc_in = static_cast<size_t>(rank) * (hidden + bands);
  const size_t fc_out = static_cast<size_t>(rank) * (bands + hidden);
  return fc_in + fc_out;
}

void Randomize(AdapterSet& set, uint64_t seed) {
  Rng rng(seed);
  for (ad::Parameter* p : set.Parameters()) {
    for (Eigen::Index i = 0; i < p->size(); ++i) p->value()(i) = rng.Uniform(-0.5, 0.5);
  }
}

MatrixXd RandomFeatures(int frames, int bands, uint64_t seed) {
  Rng rng(seed);
  MatrixXd f(frames, bands);
  for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = rng.Uniform(0.0, 3.0);
  return f;
}

TEST(LoraCount, RankOneAtReferenceDims) {
  const EnhancerDims ref = EnhancerDims::Reference();
  EXPECT_EQ(LoraParamCount({.rank = 1}, ref), 512u);
  EXPECT_EQ(LoraCountByHand(1, 128, 128), 512u);
  EXPECT_EQ(InitAdapters({.rank = 1}, ref, 1).ParamCount(), 512u);
}

TEST(LoraCount, HigherRanksAtReferenceDims) {
  const EnhancerDims ref = EnhancerDims::Reference();
  for (int r : {16, 32, 64}) {
    EXPECT_EQ(LoraParamCount({.rank = r}, ref), LoraCountByHand(r, 128, 128));
  }
  EXPECT_EQ(LoraParamCount({.rank = 16}, ref), 8192u);
  EXPECT_EQ(LoraParamCount({.rank = 32}, ref), 16384u);
  EXPECT_EQ(LoraParamCount({.rank = 64}, ref), 32768u);
}

TEST(LoraCount, RankOneIsAboutAQuarterPercentOfTheModel) {
  const EnhancerDims ref = EnhancerDims::Reference();
  const double pct = 100.0 * 512.0 / static_cast<double>(ParamCount(ref));
  EXPECT_NEAR(pct, 0.2225, 5e-4);
}

TEST(LoraCount, SingleTarget) {
  LoraConfig c{.rank = 2, .scale = 1.0, .targets = {LoraTarget::kFcOut}};
  EXPECT_EQ(LoraParamCount(c, EnhancerDims{10, 6}), 2u * 16u);
}

TEST(Lora, HandComputedEffectiveWeight) {
  LoraAdapter a;
  a.rank = 1;
  a.scale = 2.0;
  a.b = ad::Parameter("b", (MatrixXd(2, 1) << 1.0, 0.0).finished());
  a.a = ad::Parameter("a", (MatrixXd(1, 2) << 0.0, 3.0).finished());
  const MatrixXd w = EffectiveWeight(MatrixXd::Zero(2, 2), a);
  const MatrixXd expect = (MatrixXd(2, 2) << 0.0, 6.0, 0.0, 0.0).finished();
  EXPECT_EQ(w, expect);
}

TEST(Lora, FreshAdaptersHaveZeroB) {
  const AdapterSet s = InitAdapters({.rank = 3}, EnhancerDims::Desk(), 5);
  for (const LoraAdapter& a : s.adapters) {
    EXPECT_TRUE(a.b.value().isZero(0.0));
    EXPECT_FALSE(a.a.value().isZero(0.0));
    EXPECT_LE(a.a.value().cwiseAbs().maxCoeff(), 1.0 / std::sqrt(32.0));
  }
}

TEST(Lora, ZeroScaleIsIdentity) {
  const GruEnhancerParams base = InitParams(EnhancerDims::Desk(), 2);
  AdapterSet s = InitAdapters({.rank = 2, .scale = 0.0}, base.dims, 3);
  Randomize(s, 4);
  const MatrixXd f = RandomFeatures(15, 32, 5);
  EXPECT_EQ(Forward(f, base, &s), Forward(f, base));
  EXPECT_EQ(HashParams(Merge(base, s)), HashParams(base));
}

TEST(Lora, FreshAdaptersAreIdentity) {
  const GruEnhancerParams base = InitParams(EnhancerDims::Desk(), 2);
  const AdapterSet s = InitAdapters({.rank = 1, .scale = 64.0}, base.dims, 3);
  const MatrixXd f = RandomFeatures(15, 32, 6);
  EXPECT_EQ(Forward(f, base, &s), Forward(f, base));
}

TEST(Lora, SideBySideMatchesMerged) {
  const GruEnhancerParams base = InitParams(EnhancerDims::Desk(), 8);
  for (int rank : {1, 4}) {
    for (double scale : {1.0, 64.0}) {
      AdapterSet s = InitAdapters({.rank = rank, .scale = scale}, base.dims, 9);
      Randomize(s, 10 + rank);
      // Keep the effective perturbation moderate at large scales.
      for (ad::Parameter* p : s.Parameters()) p->value() /= std::sqrt(scale);
      const GruEnhancerParams merged = Merge(base, s);
      const MatrixXd f = RandomFeatures(25, 32, 11);
      const MatrixXd side = Forward(f, base, &s);
      const MatrixXd full = Forward(f, merged);
      EXPECT_LE((side - full).cwiseAbs().maxCoeff(), 1e-9) << rank << "/" << scale;
      EXPECT_GT((side - Forward(f, base)).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(Lora, MergeTouchesOnlyTargetWeights) {
  const GruEnhancerParams base = InitParams(EnhancerDims{8, 6}, 1);
  AdapterSet s = InitAdapters({.rank = 1, .scale = 1.0, .targets = {LoraTarget::kFcOut}},
                              base.dims, 2);
  Randomize(s, 3);
  const GruEnhancerParams merged = Merge(base, s);
  const auto bp = base.Parameters();
  const auto mp = merged.Parameters();
  for (size_t i = 0; i < bp.size(); ++i) {
    if (bp[i] == &base.fc_out) {
      EXPECT_NE(bp[i]->value(), mp[i]->value());
    } else {
      EXPECT_EQ(bp[i]->value(), mp[i]->value()) << bp[i]->name();
    }
  }
}

TEST(Lora, TransitionResetAndCarry) {
  const EnhancerDims dims = EnhancerDims::Desk();
  AdapterSet s = InitAdapters({.rank = 2}, dims, 1);
  Randomize(s, 2);
  s.scene_index = 4;
  const AdapterSet carried = Transition(s, TransitionMode::kCarry, dims, 99);
  EXPECT_EQ(carried.scene_index, 5);
  for (size_t i = 0; i < s.adapters.size(); ++i) {
    EXPECT_EQ(carried.adapters[i].a.value(), s.adapters[i].a.value());
    EXPECT_EQ(carried.adapters[i].b.value(), s.adapters[i].b.value());
  }
  const AdapterSet reset = Transition(s, TransitionMode::kReset, dims, 99);
  EXPECT_EQ(reset.scene_index, 5);
  const AdapterSet fresh = InitAdapters({.rank = 2}, dims, 99);
  for (size_t i = 0; i < s.adapters.size(); ++i) {
    EXPECT_TRUE(reset.adapters[i].b.value().isZero(0.0));
    EXPECT_EQ(reset.adapters[i].a.value(), fresh.adapters[i].a.value());
  }
}

TEST(Lora, SidecarRoundTrip) {
  AdapterSet s = InitAdapters({.rank = 3, .scale = 32.0}, EnhancerDims::Desk(), 7);
  Randomize(s, 8);
  s.scene_index = 11;
  const auto path = testing::ScratchDir("lora") / "scene.lora";
  WriteAdapters(path, s);
  const AdapterSet t = ReadAdapters(path);
  EXPECT_EQ(t.scene_index, 11);
  EXPECT_EQ(t.config.rank, 3);
  EXPECT_EQ(t.config.scale, 32.0);
  ASSERT_EQ(t.adapters.size(), s.adapters.size());
  for (size_t i = 0; i < s.adapters.size(); ++i) {
    EXPECT_EQ(t.adapters[i].target, s.adapters[i].target);
    EXPECT_EQ(t.adapters[i].a.value(), s.adapters[i].a.value());
    EXPECT_EQ(t.adapters[i].b.value(), s.adapters[i].b.value());
  }
}

TEST(Lora, TruncatedSidecarIsRejected) {
  const AdapterSet s = InitAdapters({.rank = 1}, EnhancerDims::Desk(), 7);
  const auto path = testing::ScratchDir("lora_trunc") / "scene.lora";
  WriteAdapters(path, s);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  EXPECT_THROW(ReadAdapters(path), Error);
  EXPECT_THROW(ReadAdapters(path.parent_path() / "missing.lora"), Error);
}

TEST(Lora, InvalidConfigurations) {
  const EnhancerDims dims{8, 6};
  auto kind_of = [&](const LoraConfig& c) {
    try {
      InitAdapters(c, dims, 1);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kIo;  // sentinel: no throw
  };
  EXPECT_EQ(kind_of({.rank = 0}), ErrorKind::kInvalidConfig);
  EXPECT_EQ(kind_of({.rank = 7}), ErrorKind::kInvalidConfig);
  EXPECT_EQ(kind_of({.rank = 1, .scale = INFINITY}), ErrorKind::kInvalidConfig);
  EXPECT_EQ(kind_of({.rank = 1, .scale = 1.0, .targets = {}}), ErrorKind::kInvalidConfig);
  EXPECT_EQ(kind_of({.rank = 1, .scale = 1.0,
                     .targets = {LoraTarget::kFcIn, LoraTarget::kFcIn}}),
            ErrorKind::kInvalidConfig);
  EXPECT_EQ(kind_of({.rank = 6}), ErrorKind::kIo);
  EXPECT_THROW(ParseTarget("gru1"), Error);
  EXPECT_EQ(ParseTarget("fc_out"), LoraTarget::kFcOut);
}

TEST(Lora, AdapterForOtherDimsIsAShapeError) {
  const GruEnhancerParams base = InitParams(EnhancerDims{8, 6}, 1);
  const AdapterSet s = InitAdapters({.rank = 1}, EnhancerDims{10, 6}, 1);
  try {
    Merge(base, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(Lora, GradientFlowsOnlyIntoAdapters) {
  GruEnhancerParams base = InitParams(EnhancerDims{6, 4}, 1);
  base.SetTrainable(false);
  AdapterSet s = InitAdapters({.rank = 1, .scale = 4.0}, base.dims, 2);
  Randomize(s, 3);
  const MatrixXd f = RandomFeatures(5, 6, 4).transpose();
  auto params = s.Parameters();
  const auto res = ad::GradCheck(
      [&](ad::Tape& t) {
        const ad::Var m = MaskForward(t, base, &s, t.Constant(f), 5, 1);
        return ad::Mean(ad::Mul(m, m));
      },
      params);
  EXPECT_LE(res.max_relative_error, 1e-5);
  for (const ad::Parameter* p : base.Parameters()) EXPECT_FALSE(p->has_grad());
}

}  // namespace
}  // namespace sead
