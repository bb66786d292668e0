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

#ifndef SEAD_TRAINING_HPP_
#define SEAD_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sead/autodiff.hpp"
#include "sead/enhancer.hpp"
#include "sead/lora.hpp"
#include "sead/metrics.hpp"
#include "sead/random.hpp"
#include "sead/scenes.hpp"

namespace sead {

// Mean squared difference over all entries. Throws kShape on mismatch.
ad::Var SpectralMseLoss(ad::Var estimate, const Eigen::MatrixXd& target);

// Scale-relative floor inside the log; at estimate == target the loss is
// 10 log10(kNegSnrFloor) = -80 dB.
inline constexpr double kNegSnrFloor = 1e-8;

// Per column: 10 log10(||est - tgt||^2 / ||tgt||^2 + kNegSnrFloor), averaged
// over columns. Equal to -SNR(est, tgt) away from the floor. Throws
// kInvalidInput when a target column is silent.
ad::Var NegSnrLoss(ad::Var estimate, const Eigen::MatrixXd& target);

// Plain value of the loss for one pair of signals.
double NegSnrLossValue(std::span<const double> estimate, std::span<const double> target);

struct PretrainConfig {
  double lr = 1e-3;
  int decay_patience = 2;  // non-improving epochs before a decay
  double decay_factor = 0.1;
  int batch = 8;
  int epochs = 8;
  int batches_per_epoch = 24;
  double segment_seconds = 2.0;
  double snr_lo = -5.0;
  double snr_hi = 20.0;
  uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  bool improved = false;
};

struct PretrainResult {
  GruEnhancerParams best;
  int best_epoch = 0;
  std::vector<EpochLog> epochs;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Supervised training on mixtures drawn on the fly. Starts from `init`.
// Throws kNumeric, naming the epoch and batch, if the loss leaves the
// finite range.
PretrainResult Pretrain(const GruEnhancerParams& init, const PretrainCorpus& corpus,
                        const PretrainConfig& config, const EpochCallback& on_epoch = {});

// One supervised batch: noisy inputs and the clean reference features
// (bands x (frames * batch)).
struct SupervisedBatch {
  std::vector<PreparedInput> noisy;
  Eigen::MatrixXd clean_features;
};

SupervisedBatch MakeSupervisedBatch(std::span<const Waveform> clean,
                                    std::span<const Waveform> noise,
                                    std::span<const double> snr_db, int bands);

ad::Var PretrainLoss(ad::Tape& tape, const GruEnhancerParams& params,
                     const SupervisedBatch& batch);

enum class AdaptMethod { kLora, kRemixIt };

std::string_view MethodName(AdaptMethod method);
AdaptMethod ParseMethod(std::string_view text);

struct AdaptConfig {
  AdaptMethod method = AdaptMethod::kLora;
  double lr = 1e-3;
  int batch = 24;
  int updates = 20;
  double remix_snr_lo = -5.0;
  double remix_snr_hi = 5.0;
  double segment_seconds = 2.0;
  LoraConfig lora;
  int probe_pairs = 4;
  uint64_t seed = 0;
};

// Remix inputs and their pseudo-targets for one update, each
// batch x segment samples.
struct RemixBatch {
  std::vector<PreparedInput> inputs;
  Eigen::MatrixXd targets;  // segment x batch
  std::vector<int> utterances;
  std::vector<int> noise_clips;
  std::vector<double> snr_db;
};

// Teacher outputs for every adaptation utterance of a scene, computed on the
// full clips once.
std::vector<Waveform> PseudoTargets(const GruEnhancerParams& teacher, const SceneDataset& scene);

RemixBatch SampleRemixBatch(std::span<const Waveform> pseudo_targets, const SceneDataset& scene,
                            const AdaptConfig& config, int bands, Rng& rng);

struct UpdateLog {
  int64_t scene_index = 0;
  int update = 0;  // 1-based
  double loss = 0.0;
  double probe_delta_snr_db = 0.0;
  double wall_seconds = 0.0;
};

using UpdateCallback = std::function<void(const UpdateLog&)>;

struct AdaptSessionResult {
  int64_t scene_index = 0;
  AdaptMethod method = AdaptMethod::kLora;
  std::vector<double> losses;
  std::vector<double> probe_delta_snr_db;
  size_t trainable_params = 0;
  // Parameter values held during the session: base plus adapters for LoRA,
  // student plus teacher for RemixIT.
  size_t stored_values = 0;
  size_t segments_consumed = 0;
};

// Updates only the adapter matrices; `base` serves both as the teacher and
// as the frozen backbone.
AdaptSessionResult AdaptSceneLora(const GruEnhancerParams& base, AdapterSet& adapters,
                                  const SceneDataset& scene, const AdaptConfig& config,
                                  const UpdateCallback& on_update = {});

// Updates every student parameter; `teacher` supplies the pseudo-targets.
AdaptSessionResult AdaptSceneRemixIt(GruEnhancerParams& student,
                                     const GruEnhancerParams& teacher,
                                     const SceneDataset& scene, const AdaptConfig& config,
                                     const UpdateCallback& on_update = {});

// Per-pair SI-SDR and SNR of a model on a scene's test set.
std::vector<MetricRecord> EvaluateScene(const GruEnhancerParams& params,
                                        const SceneDataset& scene, std::string_view method,
                                        std::string_view mode);

struct ProtocolOptions {
  ScheduleMode mode = ScheduleMode::kIsolated;
  AdaptConfig adapt;
  // Worker threads for isolated adaptation and evaluation.
  int jobs = 1;
  bool evaluate_baseline = true;
};

struct SceneState {
  int64_t scene_index = 0;
  // LoRA: adapters after the scene. RemixIT: the student after the scene.
  std::optional<AdapterSet> adapters;
  std::optional<GruEnhancerParams> student;
};

struct ProtocolResult {
  std::vector<AdaptSessionResult> sessions;  // schedule order
  std::vector<SceneState> states;            // schedule order
  std::vector<MetricRecord> records;         // sorted by (method, scene, pair)
  std::vector<TrajectoryRecord> trajectory;  // sorted by (scene, update)
  ParamAccount params;
  uint64_t base_hash_before = 0;
  uint64_t base_hash_after = 0;
};

// Adapts and evaluates every scene in schedule order. `scenes` is indexed by
// SceneSpec::index. Isolated mode starts each scene from the pretrained
// state; sequential mode carries the state to the next scene.
ProtocolResult RunProtocol(const GruEnhancerParams& base, const SceneSchedule& schedule,
                           std::span<const SceneDataset> scenes, const ProtocolOptions& options,
                           const UpdateCallback& on_update = {});

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first
// failure after all workers stop.
void ParallelFor(size_t n, int jobs, const std::function<void(size_t)>& fn);

}  // namespace sead

#endif  // SEAD_TRAINING_HPP_
