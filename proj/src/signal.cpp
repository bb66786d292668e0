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

#include "sead/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "sead/error.hpp"

namespace sead {
namespace {

constexpr double kSilenceFloor = 1e-12;

// FFTW plans for one transform size, executed on the object's own buffers.
// Planning is not thread-safe in FFTW, so it is serialized; each thread keeps
// its own instances and therefore never shares buffers.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    real_ = fftw_alloc_real(n);
    spec_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(PlannerMutex());
    forward_ = fftw_plan_dft_r2c_1d(n, real_, spec_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(n, spec_, real_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(PlannerMutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* real() { return real_; }
  std::complex<double>* spec() {
    return reinterpret_cast<std::complex<double>*>(spec_);
  }
  void Forward() { fftw_execute(forward_); }
  // Unnormalized; clobbers spec().
  void Inverse() { fftw_execute(inverse_); }

  static RealFft& ForSize(int n) {
    thread_local std::map<int, std::unique_ptr<RealFft>> cache;
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<RealFft>(n);
    return *slot;
  }

 private:
  static std::mutex& PlannerMutex() {
    static std::mutex m;
    return m;
  }

  int n_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

int FrameCount(size_t len, int frame_len, int hop) {
  const size_t extra = len - static_cast<size_t>(frame_len);
  return 1 + static_cast<int>((extra + hop - 1) / hop);
}

void CheckFrameConfig(int frame_len, int hop) {
  Require(frame_len >= 2 && frame_len % 2 == 0, ErrorKind::kInvalidConfig,
          "frame length must be even and >= 2");
  Require(hop >= 1 && hop <= frame_len, ErrorKind::kInvalidConfig,
          "hop must be in [1, frame_len]");
}

}  // namespace

void Waveform::Validate(const std::string& what) const {
  if (sample_rate <= 0) Fail(ErrorKind::kInvalidInput, what + ": sample rate must be positive");
  if (samples.empty()) Fail(ErrorKind::kInvalidInput, what + ": empty");
  for (double v : samples) {
    if (!std::isfinite(v)) Fail(ErrorKind::kInvalidInput, what + ": non-finite sample");
  }
}

std::vector<double> MakeWindow(Window window, int frame_len) {
  std::vector<double> w(frame_len);
  const double n = frame_len;
  for (int i = 0; i < frame_len; ++i) {
    switch (window) {
      case Window::kSqrtHann:
        w[i] = std::sin(std::numbers::pi * (i + 0.5) / n);
        break;
      case Window::kSqrtHannPeriodic:
        w[i] = std::sin(std::numbers::pi * i / n);
        break;
      case Window::kRectangular:
        w[i] = 1.0;
        break;
    }
  }
  return w;
}

ComplexSpectrogram Stft(std::span<const double> wave, int frame_len, int hop,
                        Window window) {
  CheckFrameConfig(frame_len, hop);
  Require(wave.size() >= static_cast<size_t>(frame_len), ErrorKind::kInvalidInput,
          "stft: signal shorter than one frame (" + std::to_string(wave.size()) +
              " < " + std::to_string(frame_len) + ")");
  const int frames = FrameCount(wave.size(), frame_len, hop);
  const int bins = frame_len / 2 + 1;
  const std::vector<double> w = MakeWindow(window, frame_len);

  ComplexSpectrogram out;
  out.frame_len = frame_len;
  out.hop = hop;
  out.window = window;
  out.values.resize(frames, bins);

  RealFft& fft = RealFft::ForSize(frame_len);
  for (int t = 0; t < frames; ++t) {
    const size_t start = static_cast<size_t>(t) * hop;
    double* buf = fft.real();
    for (int i = 0; i < frame_len; ++i) {
      const size_t idx = start + i;
      buf[i] = idx < wave.size() ? wave[idx] * w[i] : 0.0;
    }
    fft.Forward();
    const std::complex<double>* s = fft.spec();
    for (int k = 0; k < bins; ++k) out.values(t, k) = s[k];
  }
  return out;
}

namespace {

std::vector<double> WindowSum(int frames, int frame_len, int hop,
                              const std::vector<double>& w) {
  std::vector<double> sum(static_cast<size_t>(frame_len) +
                          static_cast<size_t>(frames - 1) * hop, 0.0);
  for (int t = 0; t < frames; ++t) {
    const size_t start = static_cast<size_t>(t) * hop;
    for (int i = 0; i < frame_len; ++i) sum[start + i] += w[i] * w[i];
  }
  for (size_t n = 0; n < sum.size(); ++n) {
    if (!(sum[n] > kSilenceFloor)) {
      Fail(ErrorKind::kInvalidInput,
           "istft: zero window sum at sample " + std::to_string(n));
    }
  }
  return sum;
}

}  // namespace

std::vector<double> Istft(const ComplexSpectrogram& spec) {
  CheckFrameConfig(spec.frame_len, spec.hop);
  Require(spec.bins() == spec.frame_len / 2 + 1, ErrorKind::kShape,
          "istft: bin count does not match frame length");
  if (spec.frames() == 0) return {};
  const int n = spec.frame_len;
  const std::vector<double> w = MakeWindow(spec.window, n);
  const std::vector<double> wsum = WindowSum(spec.frames(), n, spec.hop, w);

  std::vector<double> out(spec.synthesis_length(), 0.0);
  RealFft& fft = RealFft::ForSize(n);
  const double inv_n = 1.0 / n;
  for (int t = 0; t < spec.frames(); ++t) {
    std::complex<double>* s = fft.spec();
    for (int k = 0; k < spec.bins(); ++k) s[k] = spec.values(t, k);
    fft.Inverse();
    const double* buf = fft.real();
    const size_t start = static_cast<size_t>(t) * spec.hop;
    for (int i = 0; i < n; ++i) out[start + i] += buf[i] * inv_n * w[i];
  }
  for (size_t i = 0; i < out.size(); ++i) out[i] /= wsum[i];
  return out;
}

Eigen::MatrixXcd IstftAdjoint(std::span<const double> grad_wave, int frames,
                              int frame_len, int hop, Window window) {
  CheckFrameConfig(frame_len, hop);
  const std::vector<double> w = MakeWindow(window, frame_len);
  const std::vector<double> wsum = WindowSum(frames, frame_len, hop, w);
  Require(grad_wave.size() == wsum.size(), ErrorKind::kShape,
          "istft adjoint: gradient length does not match synthesis length");

  const int bins = frame_len / 2 + 1;
  Eigen::MatrixXcd out(frames, bins);
  RealFft& fft = RealFft::ForSize(frame_len);
  const double inv_n = 1.0 / frame_len;
  for (int t = 0; t < frames; ++t) {
    const size_t start = static_cast<size_t>(t) * hop;
    double* buf = fft.real();
    for (int i = 0; i < frame_len; ++i) {
      buf[i] = grad_wave[start + i] * w[i] / wsum[start + i];
    }
    fft.Forward();
    const std::complex<double>* s = fft.spec();
    // x[n] = (1/N)[Re X0 + Re X_{N/2} (-1)^n + 2 sum_k (Re Xk cos - Im Xk sin)]
    for (int k = 0; k < bins; ++k) {
      const bool edge = (k == 0) || (2 * k == frame_len);
      const double c = (edge ? 1.0 : 2.0) * inv_n;
      out(t, k) = edge ? std::complex<double>(c * s[k].real(), 0.0) : c * s[k];
    }
  }
  return out;
}

double HzToErbRate(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }

double ErbRateToHz(double erb) {
  return (std::pow(10.0, erb / 21.4) - 1.0) / 0.00437;
}

ErbFilterbank MakeErbFilterbank(int bands, int bins, int sample_rate) {
  Require(bands >= 2, ErrorKind::kInvalidConfig, "erb filterbank: need at least 2 bands");
  Require(bins >= bands, ErrorKind::kInvalidConfig,
          "erb filterbank: more bands (" + std::to_string(bands) + ") than bins (" +
              std::to_string(bins) + ")");
  Require(sample_rate > 0, ErrorKind::kInvalidConfig, "erb filterbank: bad sample rate");

  const double nyquist = sample_rate / 2.0;
  const double erb_max = HzToErbRate(nyquist);
  ErbFilterbank fb;
  fb.weights = Eigen::MatrixXd::Zero(bands, bins);
  fb.center_hz.resize(bands);
  std::vector<double> centers(bands);
  for (int b = 0; b < bands; ++b) {
    centers[b] = erb_max * b / (bands - 1);
    fb.center_hz[b] = ErbRateToHz(centers[b]);
  }
  fb.center_hz.front() = 0.0;
  fb.center_hz.back() = nyquist;

  for (int k = 0; k < bins; ++k) {
    const double hz = nyquist * k / (bins - 1);
    const double e = HzToErbRate(hz);
    for (int b = 0; b < bands; ++b) {
      double weight = 0.0;
      if (b > 0 && e >= centers[b - 1] && e <= centers[b]) {
        weight = (e - centers[b - 1]) / (centers[b] - centers[b - 1]);
      } else if (b + 1 < bands && e >= centers[b] && e <= centers[b + 1]) {
        weight = (centers[b + 1] - e) / (centers[b + 1] - centers[b]);
      }
      fb.weights(b, k) = std::clamp(weight, 0.0, 1.0);
    }
  }
  return fb;
}

Eigen::MatrixXd ErbFilterbank::NormalizedColumns() const {
  Eigen::MatrixXd out = weights;
  for (int k = 0; k < bins(); ++k) {
    const double s = weights.col(k).sum();
    Require(s > 0.0, ErrorKind::kContract,
            "erb filterbank: bin " + std::to_string(k) + " is not covered");
    out.col(k) /= s;
  }
  return out;
}

Eigen::MatrixXd ErbFeatures(const ComplexSpectrogram& spec,
                            const ErbFilterbank& fb, double compression) {
  Require(fb.bins() == spec.bins(), ErrorKind::kShape,
          "erb features: filterbank bins do not match spectrogram");
  Require(compression > 0.0 && compression <= 1.0, ErrorKind::kInvalidConfig,
          "erb features: compression exponent must be in (0, 1]");
  const Eigen::MatrixXd mag = spec.values.cwiseAbs();
  Eigen::MatrixXd band = mag * fb.weights.transpose();
  return band.array().pow(compression).matrix();
}

Eigen::MatrixXd MaskToBinGain(const Eigen::MatrixXd& mask,
                              const ErbFilterbank& fb) {
  Require(mask.cols() == fb.bands(), ErrorKind::kShape,
          "mask bands do not match filterbank");
  return mask * fb.NormalizedColumns();
}

ComplexSpectrogram ApplyErbMask(const ComplexSpectrogram& spec,
                                const Eigen::MatrixXd& mask,
                                const ErbFilterbank& fb) {
  Require(fb.bins() == spec.bins(), ErrorKind::kShape,
          "apply mask: filterbank bins do not match spectrogram");
  Require(mask.rows() == spec.frames(), ErrorKind::kShape,
          "apply mask: frame count mismatch");
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const double m = mask.data()[i];
    Require(m >= 0.0 && m <= 1.0, ErrorKind::kContract,
            "apply mask: mask entry outside [0, 1]");
  }
  const Eigen::MatrixXd gain = MaskToBinGain(mask, fb);
  ComplexSpectrogram out = spec;
  out.values = spec.values.cwiseProduct(gain.cast<std::complex<double>>());
  return out;
}

double MeanPower(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

std::vector<double> FitLength(std::span<const double> x, size_t n) {
  Require(!x.empty(), ErrorKind::kInvalidInput, "fit length: empty signal");
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = x[i % x.size()];
  return out;
}

MixResult MixAtSnr(const Waveform& clean, const Waveform& noise,
                   double target_snr_db) {
  clean.Validate("mix clean");
  noise.Validate("mix noise");
  Require(std::isfinite(target_snr_db), ErrorKind::kInvalidInput,
          "mix: target SNR must be finite");
  const std::vector<double> fitted = FitLength(noise.samples, clean.size());
  const double p_clean = MeanPower(clean.samples);
  const double p_noise = MeanPower(fitted);
  Require(p_clean > kSilenceFloor, ErrorKind::kInvalidInput, "mix: clean signal is silent");
  Require(p_noise > kSilenceFloor, ErrorKind::kInvalidInput, "mix: noise signal is silent");

  MixResult r;
  r.alpha = std::sqrt(p_clean / (p_noise * std::pow(10.0, target_snr_db / 10.0)));
  r.mix.sample_rate = clean.sample_rate;
  r.mix.samples.resize(clean.size());
  for (size_t i = 0; i < clean.size(); ++i) {
    r.mix.samples[i] = clean.samples[i] + r.alpha * fitted[i];
  }
  return r;
}

double MeasuredSnrDb(std::span<const double> clean, std::span<const double> noise) {
  const double pn = MeanPower(noise);
  Require(pn > 0.0, ErrorKind::kInvalidInput, "snr: zero noise power");
  return 10.0 * std::log10(MeanPower(clean) / pn);
}

}  // namespace sead
