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

#ifndef SEAD_LORA_HPP_
#define SEAD_LORA_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sead/autodiff.hpp"
#include "sead/enhancer.hpp"

namespace sead {

enum class LoraTarget { kFcIn, kFcOut };

std::string_view TargetName(LoraTarget target);
// Throws kInvalidConfig for names other than "fc_in" and "fc_out".
LoraTarget ParseTarget(std::string_view name);

struct LoraConfig {
  int rank = 1;
  double scale = 64.0;
  std::vector<LoraTarget> targets{LoraTarget::kFcIn, LoraTarget::kFcOut};
};

// W = W0 + scale * B A with W0 d x k, B d x r, A r x k.
struct LoraAdapter {
  LoraTarget target = LoraTarget::kFcIn;
  int rank = 1;
  double scale = 1.0;
  ad::Parameter a;
  ad::Parameter b;
};

struct AdapterSet {
  LoraConfig config;
  int64_t scene_index = 0;
  std::vector<LoraAdapter> adapters;

  const LoraAdapter* Find(LoraTarget target) const;
  std::vector<ad::Parameter*> Parameters();
  size_t ParamCount() const;
};

// (d, k) of a target's frozen weight.
std::pair<int, int> TargetShape(LoraTarget target, const EnhancerDims& dims);

size_t LoraParamCount(const LoraConfig& config, const EnhancerDims& dims);

// B = 0, A ~ Uniform(-1/sqrt(k), 1/sqrt(k)).
AdapterSet InitAdapters(const LoraConfig& config, const EnhancerDims& dims,
                        uint64_t seed);

Eigen::MatrixXd EffectiveWeight(const Eigen::MatrixXd& w0, const LoraAdapter& adapter);

// Copy of `base` with every target weight replaced by its effective weight.
GruEnhancerParams Merge(const GruEnhancerParams& base, const AdapterSet& adapters);

enum class TransitionMode {
  kReset,  // fresh adapters for the next scene
  kCarry,  // keep the current values
};

AdapterSet Transition(const AdapterSet& adapters, TransitionMode mode,
                      const EnhancerDims& dims, uint64_t seed);

// Binary sidecar: "SEADLORA", u32 version, i64 scene, u32 rank, f64 scale,
// u32 count, then per adapter u32 target, u32 d, u32 k, B (d x r) and
// A (r x k) as column-major f64.
void WriteAdapters(const std::filesystem::path& path, const AdapterSet& adapters);
AdapterSet ReadAdapters(const std::filesystem::path& path);

}  // namespace sead

#endif  // SEAD_LORA_HPP_
