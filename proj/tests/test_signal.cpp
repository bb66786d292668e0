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
#include <complex>
#include <fstream>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "sead/error.hpp"
#include "sead/scenes.hpp"
#include "sead/signal.hpp"
#include "sead/wav.hpp"
#include "test_util.hpp"

namespace sead {
namespace {

using testing::Energy;
using testing::RandomSignal;
using testing::RelativeL2;

constexpr double kPi = std::numbers::pi;

TEST(Stft, ZeroInputGivesZeroSpectrogram) {
  const std::vector<double> zeros(1024, 0.0);
  const ComplexSpectrogram s = Stft(zeros, 512, 256);
  EXPECT_EQ(s.frames(), 3);
  EXPECT_EQ(s.bins(), 257);
  EXPECT_EQ(s.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Stft, FrameCountPadsTheTail) {
  EXPECT_EQ(Stft(std::vector<double>(512, 0.1), 512, 256).frames(), 1);
  EXPECT_EQ(Stft(std::vector<double>(513, 0.1), 512, 256).frames(), 2);
  EXPECT_EQ(Stft(std::vector<double>(768, 0.1), 512, 256).frames(), 2);
  EXPECT_EQ(Stft(std::vector<double>(769, 0.1), 512, 256).frames(), 3);
}

TEST(Stft, ShorterThanOneFrameIsRejected) {
  try {
    Stft(std::vector<double>(511, 0.0), 512, 256);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
  }
}

TEST(Stft, BinCenteredCosineMatchesDirectDft) {
  const int n = 512;
  const int bin = 37;
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = std::cos(2.0 * kPi * bin * i / n);
  const ComplexSpectrogram s = Stft(x, n, n / 2, Window::kRectangular);

  // Oracle: direct O(N^2) DFT of the same frame.
  for (int k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (int i = 0; i < n; ++i) acc += x[i] * std::polar(1.0, -2.0 * kPi * k * i / n);
    EXPECT_NEAR(std::abs(s.values(0, k) - acc), 0.0, 1e-9) << "bin " << k;
  }
  const double peak = std::abs(s.values(0, bin));
  EXPECT_NEAR(peak, n / 2.0, 1e-9);
  for (int k = 0; k <= n / 2; ++k) {
    if (k != bin) EXPECT_LE(std::abs(s.values(0, k)), 1e-10 * peak) << "bin " << k;
  }
}

TEST(Stft, IsLinear) {
  const auto x = RandomSignal(4000, 1);
  const auto y = RandomSignal(4000, 2);
  const double a = 0.7, b = -1.3;
  std::vector<double> z(x.size());
  for (size_t i = 0; i < x.size(); ++i) z[i] = a * x[i] + b * y[i];
  const auto sx = Stft(x, 512, 256), sy = Stft(y, 512, 256), sz = Stft(z, 512, 256);
  const Eigen::MatrixXcd expect = a * sx.values + b * sy.values;
  EXPECT_LE((sz.values - expect).norm() / expect.norm(), 1e-9);
}

TEST(Istft, ZeroSpectrogramGivesSilence) {
  ComplexSpectrogram s;
  s.frame_len = 512;
  s.hop = 256;
  s.values = Eigen::MatrixXcd::Zero(4, 257);
  const auto x = Istft(s);
  EXPECT_EQ(x.size(), 512u + 3u * 256u);
  EXPECT_EQ(Energy(x), 0.0);
}

TEST(Istft, RoundTripRandomNoise) {
  const auto x = RandomSignal(8000, 3);
  const auto y = Istft(Stft(x, 512, 256));
  ASSERT_GE(y.size(), x.size());
  EXPECT_LE(RelativeL2({y.begin(), y.begin() + x.size()}, x), 1e-6);
}

TEST(Istft, RoundTripSpeechLikeSignal) {
  const Waveform s = SynthSpeech(3, 2.0, 11);
  const auto y = Istft(Stft(s.samples, 512, 256));
  EXPECT_LE(RelativeL2({y.begin(), y.begin() + s.size()}, s.samples), 1e-6);
}

TEST(Istft, RoundTripHoldsForArbitraryLengths) {
  for (size_t n : {512u, 700u, 1023u, 4097u}) {
    const auto x = RandomSignal(n, n);
    const auto y = Istft(Stft(x, 512, 256));
    EXPECT_LE(RelativeL2({y.begin(), y.begin() + n}, x), 1e-6) << "length " << n;
  }
}

TEST(Istft, ZeroWindowSumIsASynthesisError) {
  // The periodic sqrt-Hann window is zero at its first tap, so the very
  // first output sample has no synthesis weight.
  const auto x = RandomSignal(2048, 4);
  const ComplexSpectrogram s = Stft(x, 512, 256, Window::kSqrtHannPeriodic);
  EXPECT_THROW(Istft(s), Error);
}

TEST(IstftAdjoint, MatchesInnerProductIdentity) {
  // <Istft(X), g> = <X, Istft^T(g)> over the real-valued parameterization.
  const auto x = RandomSignal(3000, 5);
  const ComplexSpectrogram s = Stft(x, 512, 256);
  const auto g = RandomSignal(s.synthesis_length(), 6);
  const auto y = Istft(s);
  double lhs = 0.0;
  for (size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
  const Eigen::MatrixXcd adj = IstftAdjoint(g, s.frames(), 512, 256, Window::kSqrtHann);
  double rhs = 0.0;
  for (int t = 0; t < s.frames(); ++t) {
    for (int k = 0; k < s.bins(); ++k) {
      rhs += s.values(t, k).real() * adj(t, k).real() + s.values(t, k).imag() * adj(t, k).imag();
    }
  }
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::abs(lhs));
}

TEST(ErbFilterbank, ReferenceCoversEveryBin) {
  const ErbFilterbank fb = MakeErbFilterbank(128, 257, 16000);
  EXPECT_EQ(fb.bands(), 128);
  EXPECT_GE(fb.weights.minCoeff(), 0.0);
  for (int k = 0; k < 257; ++k) EXPECT_GT(fb.weights.col(k).sum(), 0.0) << "bin " << k;
}

TEST(ErbFilterbank, CentersIncreaseFromZeroToNyquist) {
  const ErbFilterbank fb = MakeErbFilterbank(32, 257, 16000);
  EXPECT_NEAR(fb.center_hz.front(), 0.0, 1e-9);
  EXPECT_NEAR(fb.center_hz.back(), 8000.0, 1e-6);
  for (size_t i = 1; i < fb.center_hz.size(); ++i) {
    EXPECT_GT(fb.center_hz[i], fb.center_hz[i - 1]);
  }
  // Equal spacing on the ERB-rate scale.
  const double step = HzToErbRate(fb.center_hz[1]) - HzToErbRate(fb.center_hz[0]);
  for (size_t i = 1; i < fb.center_hz.size(); ++i) {
    EXPECT_NEAR(HzToErbRate(fb.center_hz[i]) - HzToErbRate(fb.center_hz[i - 1]), step, 1e-9);
  }
}

TEST(ErbFilterbank, MinimalTwoBandCase) {
  const ErbFilterbank fb = MakeErbFilterbank(2, 4, 16000);
  EXPECT_GE(fb.weights.minCoeff(), 0.0);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(fb.weights.col(k).sum(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(fb.weights(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(fb.weights(1, 3), 1.0);
}

TEST(ErbFilterbank, MoreBandsThanBinsIsAConfigError) {
  try {
    MakeErbFilterbank(10, 5, 16000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig);
  }
}

TEST(ErbRate, InverseRoundTrips) {
  for (double hz : {0.0, 50.0, 1000.0, 7999.0}) {
    EXPECT_NEAR(ErbRateToHz(HzToErbRate(hz)), hz, 1e-9);
  }
}

ComplexSpectrogram ConstantSpectrogram(int frames, int bins, std::complex<double> v) {
  ComplexSpectrogram s;
  s.frame_len = 2 * (bins - 1);
  s.hop = s.frame_len / 2;
  s.values = Eigen::MatrixXcd::Constant(frames, bins, v);
  return s;
}

TEST(ErbFeatures, ZeroSpectrumGivesZeroFeatures) {
  const ErbFilterbank fb = MakeErbFilterbank(8, 257, 16000);
  EXPECT_EQ(ErbFeatures(ConstantSpectrogram(3, 257, 0.0), fb, 0.3).maxCoeff(), 0.0);
}

TEST(ErbFeatures, CompressesBandMagnitude) {
  // Unit-peak filters on a bin-aligned toy bank: band 0 sees only bin 0.
  ErbFilterbank fb;
  fb.weights = Eigen::MatrixXd::Zero(2, 3);
  fb.weights(0, 0) = 1.0;
  fb.weights(1, 1) = 1.0;
  fb.weights(1, 2) = 1.0;
  ComplexSpectrogram s = ConstantSpectrogram(1, 3, 0.0);
  s.values(0, 0) = std::polar(8.0, 0.4);
  s.values(0, 1) = 0.6;
  s.values(0, 2) = std::complex<double>(0.0, -0.4);
  const Eigen::MatrixXd f = ErbFeatures(s, fb, 0.3);
  EXPECT_NEAR(f(0, 0), 1.8660659830736148, 1e-12);  // 8^0.3
  EXPECT_NEAR(f(0, 1), 1.0, 1e-12);                 // (0.6 + 0.4)^0.3
}

TEST(ErbFeatures, MatchesExplicitSum) {
  const ErbFilterbank fb = MakeErbFilterbank(16, 257, 16000);
  const ComplexSpectrogram s = Stft(RandomSignal(2048, 8), 512, 256);
  const Eigen::MatrixXd f = ErbFeatures(s, fb, 0.3);
  for (int t = 0; t < s.frames(); ++t) {
    for (int b = 0; b < 16; ++b) {
      double acc = 0.0;
      for (int k = 0; k < 257; ++k) acc += fb.weights(b, k) * std::abs(s.values(t, k));
      EXPECT_NEAR(f(t, b), std::pow(acc, 0.3), 1e-12);
    }
  }
}

TEST(ApplyErbMask, UnitMaskIsIdentity) {
  const ErbFilterbank fb = MakeErbFilterbank(32, 257, 16000);
  const ComplexSpectrogram s = Stft(RandomSignal(4096, 9), 512, 256);
  const auto out = ApplyErbMask(s, Eigen::MatrixXd::Ones(s.frames(), 32), fb);
  EXPECT_LE((out.values - s.values).norm() / s.values.norm(), 1e-9);
}

TEST(ApplyErbMask, ZeroAndHalfMasks) {
  const ErbFilterbank fb = MakeErbFilterbank(32, 257, 16000);
  const ComplexSpectrogram s = Stft(RandomSignal(4096, 10), 512, 256);
  EXPECT_EQ(ApplyErbMask(s, Eigen::MatrixXd::Zero(s.frames(), 32), fb).values.norm(), 0.0);
  const auto half = ApplyErbMask(s, Eigen::MatrixXd::Constant(s.frames(), 32, 0.5), fb);
  for (int t = 0; t < s.frames(); ++t) {
    for (int k = 0; k < s.bins(); ++k) {
      EXPECT_NEAR(std::abs(half.values(t, k) - 0.5 * s.values(t, k)), 0.0,
                  1e-12 * (1.0 + std::abs(s.values(t, k))));
    }
  }
}

TEST(ApplyErbMask, GainFollowsNormalizedFilterbank) {
  const ErbFilterbank fb = MakeErbFilterbank(8, 257, 16000);
  Rng rng(12);
  Eigen::MatrixXd mask(2, 8);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = rng.Uniform();
  const Eigen::MatrixXd g = MaskToBinGain(mask, fb);
  for (int t = 0; t < 2; ++t) {
    for (int k = 0; k < 257; ++k) {
      double num = 0.0, den = 0.0;
      for (int b = 0; b < 8; ++b) {
        num += fb.weights(b, k) * mask(t, b);
        den += fb.weights(b, k);
      }
      EXPECT_NEAR(g(t, k), num / den, 1e-12);
    }
  }
}

TEST(ApplyErbMask, OutOfRangeMaskIsAContractViolation) {
  const ErbFilterbank fb = MakeErbFilterbank(8, 257, 16000);
  const ComplexSpectrogram s = Stft(RandomSignal(1024, 13), 512, 256);
  Eigen::MatrixXd mask = Eigen::MatrixXd::Constant(s.frames(), 8, 0.5);
  mask(0, 3) = 1.5;
  try {
    ApplyErbMask(s, mask, fb);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

double PowerOf(const std::vector<double>& x) { return Energy(x) / x.size(); }

TEST(MixAtSnr, EqualPowerAtZeroDbGivesUnitAlpha) {
  const Waveform c(std::vector<double>{1.0, -1.0, 1.0, -1.0});
  const Waveform n(std::vector<double>{-1.0, -1.0, 1.0, 1.0});
  EXPECT_DOUBLE_EQ(MixAtSnr(c, n, 0.0).alpha, 1.0);
}

TEST(MixAtSnr, TenDbAlphaAndMeasuredSnr) {
  const Waveform c(std::vector<double>{1.0, -1.0, 1.0, -1.0});
  const Waveform n(std::vector<double>{-1.0, -1.0, 1.0, 1.0});
  const MixResult m = MixAtSnr(c, n, 10.0);
  EXPECT_NEAR(m.alpha, 0.31622776601683794, 1e-15);
  std::vector<double> noise_part(4);
  for (int i = 0; i < 4; ++i) noise_part[i] = m.mix.samples[i] - c.samples[i];
  EXPECT_NEAR(10.0 * std::log10(PowerOf(c.samples) / PowerOf(noise_part)), 10.0, 1e-9);
}

TEST(MixAtSnr, FourTimesCleanPowerAtZeroDbGivesAlphaTwo) {
  const Waveform c(std::vector<double>{2.0, -2.0, 2.0, -2.0});
  const Waveform n(std::vector<double>{1.0, 1.0, -1.0, -1.0});
  EXPECT_DOUBLE_EQ(MixAtSnr(c, n, 0.0).alpha, 2.0);
}

TEST(MixAtSnr, SilentInputsAreRejected) {
  const Waveform c(std::vector<double>{0.0, 0.0, 0.0});
  const Waveform n(std::vector<double>{1.0, 1.0, 1.0});
  EXPECT_THROW(MixAtSnr(c, n, 0.0), Error);
  EXPECT_THROW(MixAtSnr(n, c, 0.0), Error);
}

TEST(MixAtSnr, ShortNoiseIsTiledLongNoiseCropped) {
  const auto tiled = FitLength(std::vector<double>{1.0, 2.0, 3.0}, 7);
  EXPECT_EQ(tiled, (std::vector<double>{1, 2, 3, 1, 2, 3, 1}));
  const auto cropped = FitLength(std::vector<double>{1.0, 2.0, 3.0}, 2);
  EXPECT_EQ(cropped, (std::vector<double>{1, 2}));
}

TEST(MixAtSnr, RandomTriplesHitTheTarget) {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const Waveform c(RandomSignal(400 + rng.Index(400), rng.NextU64(), rng.Uniform(0.01, 1.0)));
    const Waveform n(RandomSignal(100 + rng.Index(900), rng.NextU64(), rng.Uniform(0.01, 1.0)));
    const double target = rng.Uniform(-20.0, 20.0);
    const MixResult m = MixAtSnr(c, n, target);
    std::vector<double> noise_part(c.size());
    for (size_t i = 0; i < c.size(); ++i) noise_part[i] = m.mix.samples[i] - c.samples[i];
    EXPECT_NEAR(MeasuredSnrDb(c.samples, noise_part), target, 1e-9);
  }
}

TEST(Waveform, ValidateRejectsNonFiniteAndEmpty) {
  EXPECT_THROW(Waveform(std::vector<double>{}).Validate(), Error);
  EXPECT_THROW(Waveform(std::vector<double>{0.0, NAN}).Validate(), Error);
  EXPECT_NO_THROW(Waveform(std::vector<double>{0.0, 0.5}).Validate());
}

TEST(Wav, Float32RoundTripIsExactForFloatValues) {
  const auto dir = testing::ScratchDir("wav_f32");
  std::vector<double> x = {0.0, 0.5, -0.25, 0.125, -1.0};
  WriteWav(dir / "a.wav", Waveform(x), WavEncoding::kFloat32);
  EXPECT_EQ(ReadWav(dir / "a.wav").samples, x);
}

TEST(Wav, Pcm16RoundTripWithinQuantization) {
  const auto dir = testing::ScratchDir("wav_pcm");
  const auto x = RandomSignal(1000, 15, 0.2);
  WriteWav(dir / "a.wav", Waveform(x), WavEncoding::kPcm16);
  const Waveform y = ReadWav(dir / "a.wav");
  ASSERT_EQ(y.size(), x.size());
  for (size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.samples[i], x[i], 1.0 / 32768.0);
}

TEST(Wav, StereoIsRejected) {
  const auto dir = testing::ScratchDir("wav_stereo");
  // Minimal 16-bit stereo header with two frames.
  const unsigned char header[] = {
      'R', 'I', 'F', 'F', 44, 0, 0, 0, 'W', 'A', 'V', 'E', 'f', 'm', 't', ' ', 16, 0, 0, 0,
      1,   0,   2,   0,   0x80, 0x3e, 0, 0, 0, 0xfa, 0, 0, 4, 0, 16, 0, 'd', 'a', 't', 'a',
      8,   0,   0,   0,   0, 0, 0, 0, 0, 0, 0, 0};
  {
    std::ofstream out(dir / "s.wav", std::ios::binary);
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
  }
  try {
    ReadWav(dir / "s.wav");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("mono"), std::string::npos);
  }
}

TEST(Wav, MissingFileIsAnIoError) {
  try {
    ReadWav("/nonexistent/definitely/missing.wav");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

}  // namespace
}  // namespace sead
