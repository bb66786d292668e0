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

#include "sead/enhancer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

#include "sead/error.hpp"
#include "sead/lora.hpp"
#include "sead/random.hpp"

namespace sead {
namespace {

using ad::Matrix;
using ad::Var;

constexpr char kCheckpointMagic[8] = {'S', 'E', 'A', 'D', 'G', 'R', 'U', '\0'};

ad::Parameter Uniform(const std::string& name, int rows, int cols, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.Uniform(-bound, bound);
  }
  return ad::Parameter(name, std::move(m));
}

GruLayerParams InitLayer(const std::string& prefix, int input, int hidden, Rng& rng) {
  GruLayerParams l;
  l.w_z = Uniform(prefix + ".w_z", hidden, input, input, rng);
  l.u_z = Uniform(prefix + ".u_z", hidden, hidden, hidden, rng);
  l.b_z = Uniform(prefix + ".b_z", hidden, 1, hidden, rng);
  l.w_r = Uniform(prefix + ".w_r", hidden, input, input, rng);
  l.u_r = Uniform(prefix + ".u_r", hidden, hidden, hidden, rng);
  l.b_r = Uniform(prefix + ".b_r", hidden, 1, hidden, rng);
  l.w_n = Uniform(prefix + ".w_n", hidden, input, input, rng);
  l.u_n = Uniform(prefix + ".u_n", hidden, hidden, hidden, rng);
  l.b_n = Uniform(prefix + ".b_n", hidden, 1, hidden, rng);
  return l;
}

template <typename Layer, typename Fn>
void ForEachInLayer(Layer& l, Fn&& fn) {
  fn(l.w_z); fn(l.u_z); fn(l.b_z);
  fn(l.w_r); fn(l.u_r); fn(l.b_r);
  fn(l.w_n); fn(l.u_n); fn(l.b_n);
}

double SigmoidScalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// W x, plus scale * B (A x) when an adapter targets this weight.
Var Project(ad::Tape& tape, const ad::Parameter& w, const LoraAdapter* adapter, Var x) {
  Var out = ad::MatMul(tape.Param(w), x);
  if (adapter != nullptr) {
    Var ax = ad::MatMul(tape.Param(adapter->a), x);
    out = ad::Add(out, ad::Scale(ad::MatMul(tape.Param(adapter->b), ax), adapter->scale));
  }
  return out;
}

void CheckUniformInputs(std::span<const PreparedInput> inputs) {
  Require(!inputs.empty(), ErrorKind::kShape, "empty batch");
  for (const PreparedInput& in : inputs) {
    Require(in.spec.frames() == inputs.front().spec.frames() &&
                in.length == inputs.front().length,
            ErrorKind::kShape, "batch inputs must have equal length");
  }
}

// Per-bin gains for every input: bins x (frames * batch).
Var GainFromMask(ad::Tape& tape, const AnalysisContext& ctx, Var mask) {
  return ad::MatMul(tape.Constant(ctx.gain_map_t), mask);
}

}  // namespace

std::vector<ad::Parameter*> GruEnhancerParams::Parameters() {
  std::vector<ad::Parameter*> out{&fc_in};
  ForEachInLayer(gru1, [&](ad::Parameter& p) { out.push_back(&p); });
  ForEachInLayer(gru2, [&](ad::Parameter& p) { out.push_back(&p); });
  out.push_back(&fc_out);
  return out;
}

std::vector<const ad::Parameter*> GruEnhancerParams::Parameters() const {
  std::vector<const ad::Parameter*> out{&fc_in};
  ForEachInLayer(gru1, [&](const ad::Parameter& p) { out.push_back(&p); });
  ForEachInLayer(gru2, [&](const ad::Parameter& p) { out.push_back(&p); });
  out.push_back(&fc_out);
  return out;
}

void GruEnhancerParams::SetTrainable(bool trainable) {
  for (ad::Parameter* p : Parameters()) p->set_trainable(trainable);
}

size_t ParamCount(const EnhancerDims& d) {
  const size_t b = d.bands, h = d.hidden;
  const size_t fc = 2 * b * h;
  const size_t gru1 = 3 * h * (h + h) + 3 * h;  // FC-in output feeds GRU 1
  const size_t gru2 = 3 * h * (h + h) + 3 * h;
  return fc + gru1 + gru2;
}

size_t ParamCount(const GruEnhancerParams& params) {
  size_t n = 0;
  for (const ad::Parameter* p : params.Parameters()) n += static_cast<size_t>(p->size());
  return n;
}

GruEnhancerParams InitParams(const EnhancerDims& dims, uint64_t seed) {
  Require(dims.bands >= 2 && dims.hidden >= 1, ErrorKind::kInvalidConfig,
          "model dims must be bands >= 2, hidden >= 1");
  Rng rng(DeriveSeed(seed, {0x6d6f64656cULL}));
  GruEnhancerParams p;
  p.dims = dims;
  p.fc_in = Uniform("fc_in", dims.hidden, dims.bands, dims.bands, rng);
  p.gru1 = InitLayer("gru1", dims.hidden, dims.hidden, rng);
  p.gru2 = InitLayer("gru2", dims.hidden, dims.hidden, rng);
  p.fc_out = Uniform("fc_out", dims.bands, dims.hidden, dims.hidden, rng);
  return p;
}

uint64_t HashParams(const GruEnhancerParams& params) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  feed(&params.dims.bands, sizeof(int));
  feed(&params.dims.hidden, sizeof(int));
  for (const ad::Parameter* p : params.Parameters()) {
    feed(p->value().data(), sizeof(double) * static_cast<size_t>(p->size()));
  }
  return h;
}

Eigen::VectorXd GruCell(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
                        const GruLayerParams& l) {
  Require(x.size() == l.w_z.value().cols() && h_prev.size() == l.u_z.value().cols(),
          ErrorKind::kShape, "gru cell: input or state size mismatch");
  const Eigen::VectorXd z = (l.w_z.value() * x + l.u_z.value() * h_prev + l.b_z.value())
                                .unaryExpr(&SigmoidScalar);
  const Eigen::VectorXd r = (l.w_r.value() * x + l.u_r.value() * h_prev + l.b_r.value())
                                .unaryExpr(&SigmoidScalar);
  const Eigen::VectorXd n =
      (l.w_n.value() * x + l.u_n.value() * r.cwiseProduct(h_prev) + l.b_n.value())
          .array()
          .tanh()
          .matrix();
  Eigen::VectorXd h = (1.0 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(h_prev);
  Require(h.allFinite(), ErrorKind::kNumeric, "gru cell: non-finite activation");
  return h;
}

Var GruLayerForward(ad::Tape& tape, const GruLayerParams& l, Var inputs, int frames,
                    int batch) {
  Require(inputs.cols() == static_cast<Eigen::Index>(frames) * batch, ErrorKind::kShape,
          "gru layer: column count is not frames * batch");
  Require(inputs.rows() == l.w_z.value().cols(), ErrorKind::kShape,
          "gru layer: input size mismatch");
  const Eigen::Index hidden = l.u_z.value().rows();
  Var xz = ad::AddColumn(ad::MatMul(tape.Param(l.w_z), inputs), tape.Param(l.b_z));
  Var xr = ad::AddColumn(ad::MatMul(tape.Param(l.w_r), inputs), tape.Param(l.b_r));
  Var xn = ad::AddColumn(ad::MatMul(tape.Param(l.w_n), inputs), tape.Param(l.b_n));
  Var uz = tape.Param(l.u_z), ur = tape.Param(l.u_r), un = tape.Param(l.u_n);

  Var h = tape.Constant(Matrix::Zero(hidden, batch));
  std::vector<Var> states;
  states.reserve(frames);
  for (int t = 0; t < frames; ++t) {
    const Eigen::Index c = static_cast<Eigen::Index>(t) * batch;
    Var z = ad::Sigmoid(ad::Add(ad::SliceCols(xz, c, batch), ad::MatMul(uz, h)));
    Var r = ad::Sigmoid(ad::Add(ad::SliceCols(xr, c, batch), ad::MatMul(ur, h)));
    Var n = ad::Tanh(ad::Add(ad::SliceCols(xn, c, batch), ad::MatMul(un, ad::Mul(r, h))));
    // (1 - z) n + z h = n + z (h - n)
    h = ad::Add(n, ad::Mul(z, ad::Sub(h, n)));
    states.push_back(h);
  }
  return ad::ConcatCols(states);
}

Var MaskForward(ad::Tape& tape, const GruEnhancerParams& params, const AdapterSet* adapters,
                Var features, int frames, int batch) {
  Require(features.rows() == params.dims.bands, ErrorKind::kShape,
          "forward: feature bands (" + std::to_string(features.rows()) +
              ") do not match model bands (" + std::to_string(params.dims.bands) + ")");
  const LoraAdapter* in_adapter = adapters ? adapters->Find(LoraTarget::kFcIn) : nullptr;
  const LoraAdapter* out_adapter = adapters ? adapters->Find(LoraTarget::kFcOut) : nullptr;
  Var x = ad::Tanh(Project(tape, params.fc_in, in_adapter, features));
  x = GruLayerForward(tape, params.gru1, x, frames, batch);
  x = GruLayerForward(tape, params.gru2, x, frames, batch);
  return ad::Sigmoid(Project(tape, params.fc_out, out_adapter, x));
}

Eigen::MatrixXd Forward(const Eigen::MatrixXd& features, const GruEnhancerParams& params,
                        const AdapterSet* adapters) {
  Require(features.cols() == params.dims.bands, ErrorKind::kShape,
          "forward: feature bands do not match model bands");
  ad::Tape tape(ad::Tape::Mode::kInference);
  Var mask = MaskForward(tape, params, adapters, tape.Constant(features.transpose()),
                         static_cast<int>(features.rows()), 1);
  return mask.value().transpose();
}

std::shared_ptr<const AnalysisContext> AnalysisContext::For(int bands) {
  static std::mutex mu;
  static std::map<int, std::shared_ptr<const AnalysisContext>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[bands];
  if (!slot) {
    auto ctx = std::make_shared<AnalysisContext>();
    ctx->filterbank =
        MakeErbFilterbank(bands, ctx->config.frame_len / 2 + 1, kSampleRate);
    ctx->gain_map_t = ctx->filterbank.NormalizedColumns().transpose();
    slot = std::move(ctx);
  }
  return slot;
}

PreparedInput PrepareInput(std::span<const double> wave, const AnalysisContext& ctx) {
  const AnalysisConfig& c = ctx.config;
  Require(wave.size() >= static_cast<size_t>(c.frame_len), ErrorKind::kInvalidInput,
          "enhance: input shorter than one frame");
  PreparedInput in;
  in.length = wave.size();
  in.pad = static_cast<size_t>(c.frame_len - c.hop);
  std::vector<double> padded(in.length + 2 * in.pad, 0.0);
  std::copy(wave.begin(), wave.end(), padded.begin() + static_cast<std::ptrdiff_t>(in.pad));
  in.spec = Stft(padded, c.frame_len, c.hop, Window::kSqrtHann);
  in.features = ErbFeatures(in.spec, ctx.filterbank, c.compression);
  return in;
}

Eigen::MatrixXd StackFeatures(std::span<const Eigen::MatrixXd> features) {
  Require(!features.empty(), ErrorKind::kShape, "stack: empty batch");
  const Eigen::Index frames = features.front().rows();
  const Eigen::Index bands = features.front().cols();
  const Eigen::Index batch = static_cast<Eigen::Index>(features.size());
  Eigen::MatrixXd out(bands, frames * batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    Require(features[b].rows() == frames && features[b].cols() == bands,
            ErrorKind::kShape, "stack: inconsistent feature shapes");
    for (Eigen::Index t = 0; t < frames; ++t) {
      out.col(t * batch + b) = features[b].row(t).transpose();
    }
  }
  return out;
}

Eigen::MatrixXd StackFeatures(std::span<const PreparedInput> inputs) {
  std::vector<Eigen::MatrixXd> f;
  f.reserve(inputs.size());
  for (const PreparedInput& in : inputs) f.push_back(in.features);
  return StackFeatures(f);
}

Var EnhanceBatch(ad::Tape& tape, const GruEnhancerParams& params, const AdapterSet* adapters,
                 std::span<const PreparedInput> inputs) {
  CheckUniformInputs(inputs);
  const auto ctx = AnalysisContext::For(params.dims.bands);
  const int frames = inputs.front().spec.frames();
  const int batch = static_cast<int>(inputs.size());
  const size_t length = inputs.front().length;
  const size_t pad = inputs.front().pad;

  Var mask = MaskForward(tape, params, adapters, tape.Constant(StackFeatures(inputs)),
                         frames, batch);
  Var gain = GainFromMask(tape, *ctx, mask);

  // Masked overlap-add synthesis. Linear in the gains, so the adjoint is the
  // adjoint istft followed by a projection onto each input's spectrum.
  Matrix out(static_cast<Eigen::Index>(length), batch);
  for (int b = 0; b < batch; ++b) {
    ComplexSpectrogram z = inputs[b].spec;
    for (int t = 0; t < frames; ++t) {
      const Eigen::Index c = static_cast<Eigen::Index>(t) * batch + b;
      z.values.row(t).array() *= gain.value().col(c).transpose().array();
    }
    const std::vector<double> wave = Istft(z);
    for (size_t i = 0; i < length; ++i) out(static_cast<Eigen::Index>(i), b) = wave[pad + i];
  }

  ad::Tape* t = &tape;
  return tape.Record(
      "masked_synthesis", std::move(out), {gain},
      [t, gain, inputs, frames, batch, length, pad](const Matrix& g) {
        const PreparedInput& first = inputs.front();
        Matrix dgain = Matrix::Zero(gain.rows(), gain.cols());
        std::vector<double> grad_wave(first.spec.synthesis_length(), 0.0);
        for (int b = 0; b < batch; ++b) {
          std::fill(grad_wave.begin(), grad_wave.end(), 0.0);
          for (size_t i = 0; i < length; ++i) {
            grad_wave[pad + i] = g(static_cast<Eigen::Index>(i), b);
          }
          const Eigen::MatrixXcd dz = IstftAdjoint(grad_wave, frames, first.spec.frame_len,
                                                   first.spec.hop, first.spec.window);
          const Eigen::MatrixXcd& y = inputs[b].spec.values;
          for (int tt = 0; tt < frames; ++tt) {
            const Eigen::Index c = static_cast<Eigen::Index>(tt) * batch + b;
            dgain.col(c) = (dz.row(tt).real().array() * y.row(tt).real().array() +
                            dz.row(tt).imag().array() * y.row(tt).imag().array())
                               .transpose();
          }
        }
        t->AccumulateGrad(gain, dgain);
      });
}

Var MaskedFeaturesBatch(ad::Tape& tape, const GruEnhancerParams& params,
                        std::span<const PreparedInput> inputs) {
  CheckUniformInputs(inputs);
  const auto ctx = AnalysisContext::For(params.dims.bands);
  const int frames = inputs.front().spec.frames();
  const int batch = static_cast<int>(inputs.size());
  Var mask = MaskForward(tape, params, nullptr, tape.Constant(StackFeatures(inputs)),
                         frames, batch);
  Var gain = GainFromMask(tape, *ctx, mask);
  Matrix mag(ctx->filterbank.bins(), static_cast<Eigen::Index>(frames) * batch);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < frames; ++t) {
      mag.col(static_cast<Eigen::Index>(t) * batch + b) =
          inputs[b].spec.values.row(t).cwiseAbs().transpose();
    }
  }
  Var band = ad::MatMul(tape.Constant(ctx->filterbank.weights),
                        ad::Mul(gain, tape.Constant(std::move(mag))));
  return ad::Power(band, ctx->config.compression);
}

Waveform Enhance(const Waveform& wave, const GruEnhancerParams& params,
                 const AdapterSet* adapters) {
  wave.Validate("enhance input");
  const auto ctx = AnalysisContext::For(params.dims.bands);
  std::vector<PreparedInput> in{PrepareInput(wave.samples, *ctx)};
  ad::Tape tape(ad::Tape::Mode::kInference);
  Var out = EnhanceBatch(tape, params, adapters, in);
  const Matrix& v = out.value();
  return Waveform(std::vector<double>(v.data(), v.data() + v.rows()), wave.sample_rate);
}

ModelCheckpoint Save(const GruEnhancerParams& params, uint64_t provenance) {
  ModelCheckpoint c;
  c.dims = params.dims;
  c.provenance = provenance;
  c.payload.reserve(ParamCount(params));
  for (const ad::Parameter* p : params.Parameters()) {
    c.payload.insert(c.payload.end(), p->value().data(), p->value().data() + p->size());
  }
  return c;
}

GruEnhancerParams Load(const ModelCheckpoint& c) {
  Require(c.version == ModelCheckpoint::kVersion, ErrorKind::kInvalidInput,
          "checkpoint: unsupported version " + std::to_string(c.version));
  Require(c.dims.bands >= 2 && c.dims.hidden >= 1, ErrorKind::kInvalidInput,
          "checkpoint: invalid dims");
  Require(c.payload.size() == ParamCount(c.dims), ErrorKind::kInvalidInput,
          "checkpoint: payload has " + std::to_string(c.payload.size()) +
              " values, dims imply " + std::to_string(ParamCount(c.dims)));
  GruEnhancerParams p = InitParams(c.dims, 0);
  size_t at = 0;
  for (ad::Parameter* q : p.Parameters()) {
    std::copy_n(c.payload.begin() + static_cast<std::ptrdiff_t>(at), q->size(),
                q->value().data());
    at += static_cast<size_t>(q->size());
  }
  return p;
}

std::vector<char> SerializeCheckpoint(const ModelCheckpoint& c) {
  static_assert(std::endian::native == std::endian::little);
  std::vector<char> out;
  auto put = [&out](const void* p, size_t n) {
    const char* b = static_cast<const char*>(p);
    out.insert(out.end(), b, b + n);
  };
  const uint32_t bands = static_cast<uint32_t>(c.dims.bands);
  const uint32_t hidden = static_cast<uint32_t>(c.dims.hidden);
  const uint64_t count = c.payload.size();
  put(kCheckpointMagic, sizeof(kCheckpointMagic));
  put(&c.version, 4);
  put(&bands, 4);
  put(&hidden, 4);
  put(&c.provenance, 8);
  put(&count, 8);
  put(c.payload.data(), 8 * c.payload.size());
  return out;
}

ModelCheckpoint DeserializeCheckpoint(std::span<const char> bytes) {
  constexpr size_t kHeader = 8 + 4 + 4 + 4 + 8 + 8;
  Require(bytes.size() >= kHeader, ErrorKind::kInvalidInput, "checkpoint: truncated header");
  Require(std::memcmp(bytes.data(), kCheckpointMagic, 8) == 0, ErrorKind::kInvalidInput,
          "checkpoint: bad magic");
  ModelCheckpoint c;
  uint32_t bands = 0, hidden = 0;
  uint64_t count = 0;
  std::memcpy(&c.version, bytes.data() + 8, 4);
  std::memcpy(&bands, bytes.data() + 12, 4);
  std::memcpy(&hidden, bytes.data() + 16, 4);
  std::memcpy(&c.provenance, bytes.data() + 20, 8);
  std::memcpy(&count, bytes.data() + 28, 8);
  Require(c.version == ModelCheckpoint::kVersion, ErrorKind::kInvalidInput,
          "checkpoint: unsupported version " + std::to_string(c.version));
  Require(bytes.size() == kHeader + 8 * count, ErrorKind::kInvalidInput,
          "checkpoint: payload size does not match header");
  c.dims = {static_cast<int>(bands), static_cast<int>(hidden)};
  c.payload.resize(count);
  std::memcpy(c.payload.data(), bytes.data() + kHeader, 8 * count);
  Require(c.payload.size() == ParamCount(c.dims), ErrorKind::kInvalidInput,
          "checkpoint: payload length does not match dims");
  return c;
}

void WriteCheckpoint(const std::filesystem::path& path, const ModelCheckpoint& c) {
  const std::vector<char> bytes = SerializeCheckpoint(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) Fail(ErrorKind::kIo, "write failed: " + path.string());
}

ModelCheckpoint ReadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return DeserializeCheckpoint(bytes);
}

}  // namespace sead
