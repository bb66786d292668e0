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

#ifndef SEAD_ENHANCER_HPP_
#define SEAD_ENHANCER_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sead/autodiff.hpp"
#include "sead/signal.hpp"

namespace sead {

struct AdapterSet;

struct EnhancerDims {
  int bands = 32;
  int hidden = 32;

  static EnhancerDims Reference() { return {128, 128}; }
  static EnhancerDims Desk() { return {32, 32}; }
  bool operator==(const EnhancerDims&) const = default;
};

// Fixed analysis front end shared by every model.
struct AnalysisConfig {
  int frame_len = 512;
  int hop = 256;
  double compression = 0.3;
};

// One GRU layer. z = update gate, r = reset gate, n = candidate:
//   z = sigmoid(W_z x + U_z h + b_z)
//   r = sigmoid(W_r x + U_r h + b_r)
//   n = tanh(W_n x + U_n (r * h) + b_n)
//   h' = (1 - z) * n + z * h
struct GruLayerParams {
  ad::Parameter w_z, u_z, b_z;
  ad::Parameter w_r, u_r, b_r;
  ad::Parameter w_n, u_n, b_n;
};

// features -> tanh(FC_in) -> GRU -> GRU -> sigmoid(FC_out) -> ERB mask.
// FC weights are stored output x input and carry no bias.
struct GruEnhancerParams {
  EnhancerDims dims;
  ad::Parameter fc_in;   // hidden x bands
  GruLayerParams gru1;   // input hidden
  GruLayerParams gru2;
  ad::Parameter fc_out;  // bands x hidden

  // Declaration (serialization) order.
  std::vector<ad::Parameter*> Parameters();
  std::vector<const ad::Parameter*> Parameters() const;
  void SetTrainable(bool trainable);
};

size_t ParamCount(const EnhancerDims& dims);
size_t ParamCount(const GruEnhancerParams& params);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every tensor.
GruEnhancerParams InitParams(const EnhancerDims& dims, uint64_t seed);

// FNV-1a over dims and the raw bytes of every value, in declaration order.
uint64_t HashParams(const GruEnhancerParams& params);

// Single GRU step on plain vectors.
Eigen::VectorXd GruCell(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
                        const GruLayerParams& layer);

// Runs a GRU layer over frame-major columns (column t * batch + b) starting
// from a zero state. Returns hidden x (frames * batch).
ad::Var GruLayerForward(ad::Tape& tape, const GruLayerParams& layer, ad::Var inputs,
                        int frames, int batch);

// Mask for bands x (frames * batch) features. When adapters are given they
// are applied beside the frozen weights: W x + scale * B (A x).
ad::Var MaskForward(ad::Tape& tape, const GruEnhancerParams& params,
                    const AdapterSet* adapters, ad::Var features, int frames,
                    int batch);

// frames x bands features -> frames x bands mask in (0, 1).
Eigen::MatrixXd Forward(const Eigen::MatrixXd& features,
                        const GruEnhancerParams& params,
                        const AdapterSet* adapters = nullptr);

// Filterbank and mask-expansion matrices for a band count.
struct AnalysisContext {
  AnalysisConfig config;
  ErbFilterbank filterbank;
  Eigen::MatrixXd gain_map_t;  // bins x bands, normalized filterbank transposed

  static std::shared_ptr<const AnalysisContext> For(int bands);
};

// A waveform padded by frame_len - hop zeros on both sides and analyzed.
struct PreparedInput {
  ComplexSpectrogram spec;
  Eigen::MatrixXd features;  // frames x bands
  size_t length = 0;         // original sample count
  size_t pad = 0;            // leading zeros
};

PreparedInput PrepareInput(std::span<const double> wave, const AnalysisContext& ctx);

// stft -> ERB features -> mask -> mask expansion -> istft, trimmed to the
// input length.
Waveform Enhance(const Waveform& wave, const GruEnhancerParams& params,
                 const AdapterSet* adapters = nullptr);

// Differentiable enhancement of equally long inputs. Returns length x batch.
// `inputs` must stay alive until the tape has run Backward().
ad::Var EnhanceBatch(ad::Tape& tape, const GruEnhancerParams& params,
                     const AdapterSet* adapters, std::span<const PreparedInput> inputs);

// Compressed ERB features of the masked noisy spectra, bands x (frames *
// batch); the training target for supervised pretraining.
ad::Var MaskedFeaturesBatch(ad::Tape& tape, const GruEnhancerParams& params,
                            std::span<const PreparedInput> inputs);

// Stacks per-input frames x bands features into bands x (frames * batch).
Eigen::MatrixXd StackFeatures(std::span<const PreparedInput> inputs);
Eigen::MatrixXd StackFeatures(std::span<const Eigen::MatrixXd> features);

struct ModelCheckpoint {
  static constexpr uint32_t kVersion = 1;
  uint32_t version = kVersion;
  EnhancerDims dims;
  uint64_t provenance = 0;  // hash of the pretraining config
  std::vector<double> payload;
};

ModelCheckpoint Save(const GruEnhancerParams& params, uint64_t provenance = 0);
GruEnhancerParams Load(const ModelCheckpoint& checkpoint);

// Binary layout: "SEADGRU\0", u32 version, u32 bands, u32 hidden,
// u64 provenance, u64 count, count x f64, all little-endian.
std::vector<char> SerializeCheckpoint(const ModelCheckpoint& checkpoint);
ModelCheckpoint DeserializeCheckpoint(std::span<const char> bytes);
void WriteCheckpoint(const std::filesystem::path& path, const ModelCheckpoint& checkpoint);
ModelCheckpoint ReadCheckpoint(const std::filesystem::path& path);

}  // namespace sead

#endif  // SEAD_ENHANCER_HPP_
