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

#include "sead/lora.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sead/error.hpp"
#include "sead/random.hpp"

namespace sead {
namespace {

constexpr char kAdapterMagic[8] = {'S', 'E', 'A', 'D', 'L', 'O', 'R', 'A'};
constexpr uint32_t kAdapterVersion = 1;

const ad::Parameter& TargetWeight(const GruEnhancerParams& p, LoraTarget t) {
  return t == LoraTarget::kFcIn ? p.fc_in : p.fc_out;
}

ad::Parameter& TargetWeight(GruEnhancerParams& p, LoraTarget t) {
  return t == LoraTarget::kFcIn ? p.fc_in : p.fc_out;
}

void ValidateConfig(const LoraConfig& config, const EnhancerDims& dims) {
  Require(config.rank >= 1, ErrorKind::kInvalidConfig, "lora: rank must be >= 1");
  Require(std::isfinite(config.scale), ErrorKind::kInvalidConfig, "lora: scale must be finite");
  Require(!config.targets.empty(), ErrorKind::kInvalidConfig, "lora: no target layers");
  for (size_t i = 0; i < config.targets.size(); ++i) {
    for (size_t j = i + 1; j < config.targets.size(); ++j) {
      Require(config.targets[i] != config.targets[j], ErrorKind::kInvalidConfig,
              "lora: duplicate target " + std::string(TargetName(config.targets[i])));
    }
    const auto [d, k] = TargetShape(config.targets[i], dims);
    Require(config.rank <= std::min(d, k), ErrorKind::kInvalidConfig,
            "lora: rank " + std::to_string(config.rank) + " exceeds min(d, k) = " +
                std::to_string(std::min(d, k)) + " for " +
                std::string(TargetName(config.targets[i])));
  }
}

template <typename T>
void Put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T Get(std::ifstream& in, const std::string& where) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) Fail(ErrorKind::kInvalidInput, where + ": truncated adapter file");
  return v;
}

}  // namespace

std::string_view TargetName(LoraTarget target) {
  return target == LoraTarget::kFcIn ? "fc_in" : "fc_out";
}

LoraTarget ParseTarget(std::string_view name) {
  if (name == "fc_in") return LoraTarget::kFcIn;
  if (name == "fc_out") return LoraTarget::kFcOut;
  Fail(ErrorKind::kInvalidConfig, "lora: unknown target layer '" + std::string(name) + "'");
}

std::pair<int, int> TargetShape(LoraTarget target, const EnhancerDims& dims) {
  return target == LoraTarget::kFcIn ? std::pair{dims.hidden, dims.bands}
                                     : std::pair{dims.bands, dims.hidden};
}

const LoraAdapter* AdapterSet::Find(LoraTarget target) const {
  for (const LoraAdapter& a : adapters) {
    if (a.target == target) return &a;
  }
  return nullptr;
}

std::vector<ad::Parameter*> AdapterSet::Parameters() {
  std::vector<ad::Parameter*> out;
  for (LoraAdapter& a : adapters) {
    out.push_back(&a.a);
    out.push_back(&a.b);
  }
  return out;
}

size_t AdapterSet::ParamCount() const {
  size_t n = 0;
  for (const LoraAdapter& a : adapters) n += static_cast<size_t>(a.a.size() + a.b.size());
  return n;
}

size_t LoraParamCount(const LoraConfig& config, const EnhancerDims& dims) {
  ValidateConfig(config, dims);
  size_t n = 0;
  for (LoraTarget t : config.targets) {
    const auto [d, k] = TargetShape(t, dims);
    n += static_cast<size_t>(config.rank) * static_cast<size_t>(d + k);
  }
  return n;
}

AdapterSet InitAdapters(const LoraConfig& config, const EnhancerDims& dims, uint64_t seed) {
  ValidateConfig(config, dims);
  AdapterSet set;
  set.config = config;
  for (LoraTarget t : config.targets) {
    const auto [d, k] = TargetShape(t, dims);
    Rng rng(DeriveSeed(seed, {static_cast<uint64_t>(t), 0x6c6f7261ULL}));
    const double bound = 1.0 / std::sqrt(static_cast<double>(k));
    Eigen::MatrixXd a(config.rank, k);
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = rng.Uniform(-bound, bound);
    }
    LoraAdapter adapter;
    adapter.target = t;
    adapter.rank = config.rank;
    adapter.scale = config.scale;
    const std::string name(TargetName(t));
    adapter.a = ad::Parameter(name + ".lora_a", std::move(a));
    adapter.b = ad::Parameter(name + ".lora_b", Eigen::MatrixXd::Zero(d, config.rank));
    set.adapters.push_back(std::move(adapter));
  }
  return set;
}

Eigen::MatrixXd EffectiveWeight(const Eigen::MatrixXd& w0, const LoraAdapter& adapter) {
  const Eigen::MatrixXd& a = adapter.a.value();
  const Eigen::MatrixXd& b = adapter.b.value();
  Require(b.rows() == w0.rows() && a.cols() == w0.cols() && b.cols() == a.rows(),
          ErrorKind::kShape, "lora: adapter shape does not match weight");
  return w0 + adapter.scale * (b * a);
}

GruEnhancerParams Merge(const GruEnhancerParams& base, const AdapterSet& adapters) {
  GruEnhancerParams merged = base;
  for (const LoraAdapter& a : adapters.adapters) {
    ad::Parameter& w = TargetWeight(merged, a.target);
    w.value() = EffectiveWeight(TargetWeight(base, a.target).value(), a);
  }
  return merged;
}

AdapterSet Transition(const AdapterSet& adapters, TransitionMode mode,
                      const EnhancerDims& dims, uint64_t seed) {
  AdapterSet next;
  if (mode == TransitionMode::kReset) {
    next = InitAdapters(adapters.config, dims, seed);
  } else {
    next = adapters;
  }
  next.scene_index = adapters.scene_index + 1;
  return next;
}

void WriteAdapters(const std::filesystem::path& path, const AdapterSet& set) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(kAdapterMagic, sizeof(kAdapterMagic));
  Put<uint32_t>(out, kAdapterVersion);
  Put<int64_t>(out, set.scene_index);
  Put<uint32_t>(out, static_cast<uint32_t>(set.config.rank));
  Put<double>(out, set.config.scale);
  Put<uint32_t>(out, static_cast<uint32_t>(set.adapters.size()));
  for (const LoraAdapter& a : set.adapters) {
    Put<uint32_t>(out, static_cast<uint32_t>(a.target));
    Put<uint32_t>(out, static_cast<uint32_t>(a.b.value().rows()));
    Put<uint32_t>(out, static_cast<uint32_t>(a.a.value().cols()));
    out.write(reinterpret_cast<const char*>(a.b.value().data()),
              static_cast<std::streamsize>(8 * a.b.size()));
    out.write(reinterpret_cast<const char*>(a.a.value().data()),
              static_cast<std::streamsize>(8 * a.a.size()));
  }
  if (!out) Fail(ErrorKind::kIo, "write failed: " + path.string());
}

AdapterSet ReadAdapters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open " + path.string());
  const std::string where = path.string();
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kAdapterMagic, 8) != 0) {
    Fail(ErrorKind::kInvalidInput, where + ": not an adapter file");
  }
  const auto version = Get<uint32_t>(in, where);
  Require(version == kAdapterVersion, ErrorKind::kInvalidInput,
          where + ": unsupported adapter version " + std::to_string(version));
  AdapterSet set;
  set.scene_index = Get<int64_t>(in, where);
  set.config.rank = static_cast<int>(Get<uint32_t>(in, where));
  set.config.scale = Get<double>(in, where);
  const auto count = Get<uint32_t>(in, where);
  Require(set.config.rank >= 1 && count >= 1 && count <= 2, ErrorKind::kInvalidInput,
          where + ": corrupt adapter header");
  set.config.targets.clear();
  for (uint32_t i = 0; i < count; ++i) {
    const auto target = Get<uint32_t>(in, where);
    Require(target <= 1, ErrorKind::kInvalidInput, where + ": unknown target id");
    const auto d = Get<uint32_t>(in, where);
    const auto k = Get<uint32_t>(in, where);
    LoraAdapter a;
    a.target = static_cast<LoraTarget>(target);
    a.rank = set.config.rank;
    a.scale = set.config.scale;
    Eigen::MatrixXd b(d, set.config.rank), am(set.config.rank, k);
    in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(8 * b.size()));
    in.read(reinterpret_cast<char*>(am.data()), static_cast<std::streamsize>(8 * am.size()));
    if (!in) Fail(ErrorKind::kInvalidInput, where + ": truncated adapter payload");
    const std::string name(TargetName(a.target));
    a.a = ad::Parameter(name + ".lora_a", std::move(am));
    a.b = ad::Parameter(name + ".lora_b", std::move(b));
    set.config.targets.push_back(a.target);
    set.adapters.push_back(std::move(a));
  }
  return set;
}

}  // namespace sead
