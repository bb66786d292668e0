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

#ifndef SEAD_SIGNAL_HPP_
#define SEAD_SIGNAL_HPP_

#include <complex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sead {

inline constexpr int kSampleRate = 16000;

// Mono signal at a fixed sample rate.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  Waveform() = default;
  explicit Waveform(std::vector<double> s, int rate = kSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}

  size_t size() const { return samples.size(); }
  double seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  // Throws kInvalidInput unless non-empty, finite, and rate > 0.
  void Validate(const std::string& what = "waveform") const;
};

enum class Window {
  // sin(pi (n + 1/2) / N): squares sum to one at 50% overlap and no tap is 0.
  kSqrtHann,
  // sin(pi n / N): classic periodic sqrt-Hann, zero at n = 0.
  kSqrtHannPeriodic,
  kRectangular,
};

std::vector<double> MakeWindow(Window window, int frame_len);

// frames x bins, bins = frame_len / 2 + 1.
struct ComplexSpectrogram {
  Eigen::MatrixXcd values;
  int frame_len = 0;
  int hop = 0;
  Window window = Window::kSqrtHann;

  int frames() const { return static_cast<int>(values.rows()); }
  int bins() const { return static_cast<int>(values.cols()); }
  // Length of the signal produced by Istft().
  size_t synthesis_length() const {
    return frames() == 0 ? 0 : static_cast<size_t>(frame_len) +
                                   static_cast<size_t>(frames() - 1) * hop;
  }
};

// Frames = 1 + ceil((len - frame_len) / hop); the last frame is zero padded.
ComplexSpectrogram Stft(std::span<const double> wave, int frame_len, int hop,
                        Window window = Window::kSqrtHann);

// Weighted overlap-add with window-sum normalization. Output length is
// frame_len + (frames - 1) * hop.
std::vector<double> Istft(const ComplexSpectrogram& spec);

// Adjoint of Istft with respect to the real and imaginary parts of every
// bin: the returned matrix holds dL/dRe in the real part and dL/dIm in the
// imaginary part, given dL/dx for each synthesized sample.
Eigen::MatrixXcd IstftAdjoint(std::span<const double> grad_wave, int frames,
                              int frame_len, int hop, Window window);

struct ErbFilterbank {
  Eigen::MatrixXd weights;  // bands x bins
  std::vector<double> center_hz;

  int bands() const { return static_cast<int>(weights.rows()); }
  int bins() const { return static_cast<int>(weights.cols()); }
  // Weights divided by their column sums; maps a band mask to per-bin gains.
  Eigen::MatrixXd NormalizedColumns() const;
};

double HzToErbRate(double hz);
double ErbRateToHz(double erb);

ErbFilterbank MakeErbFilterbank(int bands, int bins, int sample_rate);

// feature[t][b] = (sum_k fb[b][k] |spec[t][k]|)^c, frames x bands.
Eigen::MatrixXd ErbFeatures(const ComplexSpectrogram& spec,
                            const ErbFilterbank& fb, double compression);

// Per-bin gains g[t][k] = sum_b fb[b][k] mask[t][b] / sum_b fb[b][k].
Eigen::MatrixXd MaskToBinGain(const Eigen::MatrixXd& mask,
                              const ErbFilterbank& fb);

// mask is frames x bands with entries in [0, 1]; phase is left unchanged.
ComplexSpectrogram ApplyErbMask(const ComplexSpectrogram& spec,
                                const Eigen::MatrixXd& mask,
                                const ErbFilterbank& fb);

// Mean squared amplitude.
double MeanPower(std::span<const double> x);

// Crops when longer, tiles cyclically when shorter.
std::vector<double> FitLength(std::span<const double> x, size_t n);

struct MixResult {
  Waveform mix;
  double alpha = 0.0;
};

// mix = clean + alpha * noise with alpha chosen so that
// 10 log10(P_clean / P_{alpha noise}) = target_snr_db.
MixResult MixAtSnr(const Waveform& clean, const Waveform& noise,
                   double target_snr_db);

// 10 log10(P_clean / P_noise) for already separated components.
double MeasuredSnrDb(std::span<const double> clean, std::span<const double> noise);

}  // namespace sead

#endif  // SEAD_SIGNAL_HPP_
