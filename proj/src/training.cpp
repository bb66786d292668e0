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

#include "sead/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <tuple>

#include "sead/error.hpp"
#include "sead/random.hpp"

namespace sead {
namespace {

using ad::Tape;
using ad::Var;
using Eigen::MatrixXd;

size_t SegmentSamples(double seconds) {
  return static_cast<size_t>(std::llround(seconds * kSampleRate));
}

// Random window of n samples; shorter signals are tiled.
std::vector<double> RandomCrop(std::span<const double> x, size_t n, Rng& rng) {
  if (x.size() <= n) return FitLength(x, n);
  const size_t start = rng.Index(x.size() - n + 1);
  return {x.begin() + start, x.begin() + start + n};
}

double ProbeDeltaSnr(const GruEnhancerParams& params, const AdapterSet* adapters,
                     std::span<const TestPair> probes, std::span<const double> baseline_snr) {
  double sum = 0.0;
  for (size_t i = 0; i < probes.size(); ++i) {
    const Waveform out = Enhance(probes[i].noisy, params, adapters);
    sum += SnrDb(out.samples, probes[i].clean.samples).db - baseline_snr[i];
  }
  return probes.empty() ? 0.0 : sum / probes.size();
}

std::vector<double> ProbeBaseline(const GruEnhancerParams& teacher,
                                  std::span<const TestPair> probes) {
  std::vector<double> snr;
  for (const TestPair& p : probes) {
    snr.push_back(SnrDb(Enhance(p.noisy, teacher).samples, p.clean.samples).db);
  }
  return snr;
}

void ValidateAdaptConfig(const AdaptConfig& c, const SceneDataset& scene) {
  Require(c.updates >= 0, ErrorKind::kInvalidConfig, "adapt: updates must be >= 0");
  Require(c.batch >= 1, ErrorKind::kInvalidConfig, "adapt: batch must be >= 1");
  Require(c.lr >= 0.0 && std::isfinite(c.lr), ErrorKind::kInvalidConfig,
          "adapt: lr must be finite and >= 0");
  Require(c.remix_snr_lo <= c.remix_snr_hi, ErrorKind::kInvalidConfig,
          "adapt: remix SNR range is empty");
  Require(c.segment_seconds > 0.0, ErrorKind::kInvalidConfig,
          "adapt: segment length must be positive");
  Require(!scene.adapt_noisy.empty() && !scene.adapt_noise.empty(), ErrorKind::kInvalidInput,
          "adapt: scene has no adaptation data");
}

// Shared update loop. `forward` records the student on the tape.
template <typename Forward, typename Probe>
void RunUpdates(const SceneDataset& scene, const AdaptConfig& config, int bands,
                std::span<const Waveform> pseudo, std::vector<ad::Parameter*> trainable,
                Forward forward, Probe probe, AdaptSessionResult& result,
                const UpdateCallback& on_update) {
  Rng rng(DeriveSeed(config.seed, {0x6164617074ULL, static_cast<uint64_t>(scene.spec.index)}));
  ad::Adam adam(std::move(trainable), {.lr = config.lr});
  for (int u = 1; u <= config.updates; ++u) {
    const auto t0 = std::chrono::steady_clock::now();
    double loss_value = 0.0;
    try {
      const RemixBatch batch = SampleRemixBatch(pseudo, scene, config, bands, rng);
      Tape tape;
      const Var out = forward(tape, batch);
      const Var loss = NegSnrLoss(out, batch.targets);
      loss_value = ad::Scalar(loss);
      tape.Backward(loss);
      adam.Step();
    } catch (const Error& e) {
      Fail(e.kind(), "scene " + std::to_string(scene.spec.index) + ", update " +
                         std::to_string(u) + ": " + e.what());
    }
    result.losses.push_back(loss_value);
    result.probe_delta_snr_db.push_back(probe());
    result.segments_consumed += config.batch;
    if (on_update) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      on_update({scene.spec.index, u, loss_value, result.probe_delta_snr_db.back(), wall});
    }
  }
}

}  // namespace

Var SpectralMseLoss(Var estimate, const MatrixXd& target) {
  Require(estimate.rows() == target.rows() && estimate.cols() == target.cols(), ErrorKind::kShape,
          "spectral mse: estimate and target shapes differ");
  const Var d = ad::Sub(estimate, estimate.tape()->Constant(target));
  return ad::Mean(ad::Mul(d, d));
}

Var NegSnrLoss(Var estimate, const MatrixXd& target) {
  Require(estimate.rows() == target.rows() && estimate.cols() == target.cols(), ErrorKind::kShape,
          "neg-snr loss: estimate and target shapes differ");
  Require(target.rows() > 0 && target.cols() > 0, ErrorKind::kShape, "neg-snr loss: empty input");
  MatrixXd inv_power(1, target.cols());
  for (Eigen::Index b = 0; b < target.cols(); ++b) {
    const double energy = target.col(b).squaredNorm();
    Require(energy / target.rows() > 1e-12, ErrorKind::kInvalidInput,
            "neg-snr loss: pseudo-target is silent");
    inv_power(0, b) = 1.0 / energy;
  }
  Tape& tape = *estimate.tape();
  const Var d = ad::Sub(estimate, tape.Constant(target));
  const Var ratio = ad::Mul(ad::ColSum(ad::Mul(d, d)), tape.Constant(std::move(inv_power)));
  return ad::Mean(ad::Scale(ad::Log10(ad::AddScalar(ratio, kNegSnrFloor)), 10.0));
}

double NegSnrLossValue(std::span<const double> estimate, std::span<const double> target) {
  Require(estimate.size() == target.size(), ErrorKind::kShape,
          "neg-snr loss: lengths differ");
  Tape tape(Tape::Mode::kInference);
  const Var e = tape.Constant(Eigen::Map<const Eigen::VectorXd>(estimate.data(), estimate.size()));
  return ad::Scalar(
      NegSnrLoss(e, Eigen::Map<const Eigen::VectorXd>(target.data(), target.size())));
}

SupervisedBatch MakeSupervisedBatch(std::span<const Waveform> clean,
                                    std::span<const Waveform> noise,
                                    std::span<const double> snr_db, int bands) {
  Require(!clean.empty() && clean.size() == noise.size() && clean.size() == snr_db.size(),
          ErrorKind::kShape, "supervised batch: clean, noise and SNR counts differ");
  const auto ctx = AnalysisContext::For(bands);
  SupervisedBatch batch;
  std::vector<MatrixXd> clean_features;
  for (size_t i = 0; i < clean.size(); ++i) {
    const MixResult mix = MixAtSnr(clean[i], noise[i], snr_db[i]);
    batch.noisy.push_back(PrepareInput(mix.mix.samples, *ctx));
    clean_features.push_back(PrepareInput(clean[i].samples, *ctx).features);
  }
  batch.clean_features = StackFeatures(clean_features);
  return batch;
}

Var PretrainLoss(Tape& tape, const GruEnhancerParams& params, const SupervisedBatch& batch) {
  return SpectralMseLoss(MaskedFeaturesBatch(tape, params, batch.noisy), batch.clean_features);
}

PretrainResult Pretrain(const GruEnhancerParams& init, const PretrainCorpus& corpus,
                        const PretrainConfig& config, const EpochCallback& on_epoch) {
  Require(!corpus.speech.empty() && !corpus.noise.empty(), ErrorKind::kInvalidInput,
          "pretrain: empty corpus");
  Require(config.lr > 0.0 && config.batch >= 1 && config.epochs >= 1 &&
              config.batches_per_epoch >= 1 && config.decay_patience >= 1 &&
              config.decay_factor > 0.0 && config.snr_lo <= config.snr_hi,
          ErrorKind::kInvalidConfig, "pretrain: invalid configuration");

  GruEnhancerParams params = init;
  params.SetTrainable(true);
  ad::Adam adam(params.Parameters(), {.lr = config.lr});
  Rng rng(DeriveSeed(config.seed, {0x707265ULL}));
  const size_t seg = SegmentSamples(config.segment_seconds);

  PretrainResult result;
  result.best = params;
  double best_loss = INFINITY;
  int stale = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double total = 0.0;
    for (int b = 0; b < config.batches_per_epoch; ++b) {
      std::vector<Waveform> clean, noise;
      std::vector<double> snr;
      for (int i = 0; i < config.batch; ++i) {
        const Waveform& s = corpus.speech[rng.Index(corpus.speech.size())];
        const Waveform& n = corpus.noise[rng.Index(corpus.noise.size())];
        clean.emplace_back(RandomCrop(s.samples, seg, rng));
        noise.emplace_back(RandomCrop(n.samples, seg, rng));
        snr.push_back(rng.Uniform(config.snr_lo, config.snr_hi));
      }
      try {
        const SupervisedBatch batch = MakeSupervisedBatch(clean, noise, snr, params.dims.bands);
        Tape tape;
        const Var loss = PretrainLoss(tape, params, batch);
        total += ad::Scalar(loss);
        tape.Backward(loss);
        adam.Step();
      } catch (const Error& e) {
        Fail(e.kind(), "pretrain epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b + 1) + ": " + e.what());
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.mean_loss = total / config.batches_per_epoch;
    log.lr = adam.lr();
    Require(std::isfinite(log.mean_loss), ErrorKind::kNumeric,
            "pretrain epoch " + std::to_string(epoch) + ": non-finite loss");
    if (log.mean_loss < best_loss) {
      best_loss = log.mean_loss;
      result.best = params;
      result.best_epoch = epoch;
      log.improved = true;
      stale = 0;
    } else if (++stale >= config.decay_patience) {
      adam.set_lr(adam.lr() * config.decay_factor);
      stale = 0;
    }
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

std::string_view MethodName(AdaptMethod method) {
  return method == AdaptMethod::kLora ? "lora" : "remixit";
}

AdaptMethod ParseMethod(std::string_view text) {
  if (text == "lora") return AdaptMethod::kLora;
  if (text == "remixit") return AdaptMethod::kRemixIt;
  Fail(ErrorKind::kInvalidConfig, "unknown method '" + std::string(text) + "'");
}

std::vector<Waveform> PseudoTargets(const GruEnhancerParams& teacher, const SceneDataset& scene) {
  std::vector<Waveform> out;
  out.reserve(scene.adapt_noisy.size());
  for (const Waveform& y : scene.adapt_noisy) out.push_back(Enhance(y, teacher));
  return out;
}

RemixBatch SampleRemixBatch(std::span<const Waveform> pseudo_targets, const SceneDataset& scene,
                            const AdaptConfig& config, int bands, Rng& rng) {
  Require(!pseudo_targets.empty() && !scene.adapt_noise.empty(), ErrorKind::kInvalidInput,
          "remix: no pseudo-targets or noise clips");
  const size_t seg = SegmentSamples(config.segment_seconds);
  const auto ctx = AnalysisContext::For(bands);
  RemixBatch batch;
  batch.targets.resize(static_cast<Eigen::Index>(seg), config.batch);
  for (int b = 0; b < config.batch; ++b) {
    const int u = static_cast<int>(rng.Index(pseudo_targets.size()));
    const int c = static_cast<int>(rng.Index(scene.adapt_noise.size()));
    const Waveform target(RandomCrop(pseudo_targets[u].samples, seg, rng));
    const Waveform noise(RandomCrop(scene.adapt_noise[c].samples, seg, rng));
    const double snr = rng.Uniform(config.remix_snr_lo, config.remix_snr_hi);
    batch.inputs.push_back(PrepareInput(MixAtSnr(target, noise, snr).mix.samples, *ctx));
    batch.targets.col(b) = Eigen::Map<const Eigen::VectorXd>(target.samples.data(), seg);
    batch.utterances.push_back(u);
    batch.noise_clips.push_back(c);
    batch.snr_db.push_back(snr);
  }
  return batch;
}

AdaptSessionResult AdaptSceneLora(const GruEnhancerParams& base, AdapterSet& adapters,
                                  const SceneDataset& scene, const AdaptConfig& config,
                                  const UpdateCallback& on_update) {
  Require(config.method == AdaptMethod::kLora, ErrorKind::kInvalidConfig,
          "adapt lora: config method is not lora");
  ValidateAdaptConfig(config, scene);
  // A private frozen copy keeps gradients out of the shared base.
  GruEnhancerParams frozen = base;
  frozen.SetTrainable(false);

  AdaptSessionResult result;
  result.scene_index = scene.spec.index;
  result.method = AdaptMethod::kLora;
  result.trainable_params = adapters.ParamCount();
  result.stored_values = ParamCount(base) + adapters.ParamCount();

  const std::vector<Waveform> pseudo = PseudoTargets(frozen, scene);
  const std::span<const TestPair> probes(
      scene.test_pairs.data(),
      std::min<size_t>(std::max(config.probe_pairs, 0), scene.test_pairs.size()));
  const std::vector<double> baseline = ProbeBaseline(frozen, probes);
  std::vector<ad::Parameter*> trainable = adapters.Parameters();
  for (ad::Parameter* p : trainable) p->set_trainable(true);

  RunUpdates(
      scene, config, base.dims.bands, pseudo, std::move(trainable),
      [&](Tape& tape, const RemixBatch& batch) {
        return EnhanceBatch(tape, frozen, &adapters, batch.inputs);
      },
      [&] { return ProbeDeltaSnr(frozen, &adapters, probes, baseline); }, result, on_update);
  return result;
}

AdaptSessionResult AdaptSceneRemixIt(GruEnhancerParams& student,
                                     const GruEnhancerParams& teacher,
                                     const SceneDataset& scene, const AdaptConfig& config,
                                     const UpdateCallback& on_update) {
  Require(config.method == AdaptMethod::kRemixIt, ErrorKind::kInvalidConfig,
          "adapt remixit: config method is not remixit");
  Require(student.dims == teacher.dims, ErrorKind::kShape,
          "adapt remixit: student and teacher dims differ");
  ValidateAdaptConfig(config, scene);
  GruEnhancerParams frozen = teacher;
  frozen.SetTrainable(false);
  student.SetTrainable(true);

  AdaptSessionResult result;
  result.scene_index = scene.spec.index;
  result.method = AdaptMethod::kRemixIt;
  result.trainable_params = ParamCount(student);
  result.stored_values = ParamCount(student) + ParamCount(teacher);

  const std::vector<Waveform> pseudo = PseudoTargets(frozen, scene);
  const std::span<const TestPair> probes(
      scene.test_pairs.data(),
      std::min<size_t>(std::max(config.probe_pairs, 0), scene.test_pairs.size()));
  const std::vector<double> baseline = ProbeBaseline(frozen, probes);

  RunUpdates(
      scene, config, student.dims.bands, pseudo, student.Parameters(),
      [&](Tape& tape, const RemixBatch& batch) {
        return EnhanceBatch(tape, student, nullptr, batch.inputs);
      },
      [&] { return ProbeDeltaSnr(student, nullptr, probes, baseline); }, result, on_update);
  return result;
}

std::vector<MetricRecord> EvaluateScene(const GruEnhancerParams& params,
                                        const SceneDataset& scene, std::string_view method,
                                        std::string_view mode) {
  std::vector<MetricRecord> records;
  for (size_t i = 0; i < scene.test_pairs.size(); ++i) {
    const TestPair& p = scene.test_pairs[i];
    const Waveform out = Enhance(p.noisy, params);
    const MetricValue si = SiSdr(out.samples, p.clean.samples);
    const MetricValue snr = SnrDb(out.samples, p.clean.samples);
    MetricRecord r;
    r.scene_id = scene.spec.index;
    r.method = std::string(method);
    r.mode = std::string(mode);
    r.snr_lo = scene.spec.snr_lo;
    r.snr_hi = scene.spec.snr_hi;
    r.pair_id = static_cast<int>(i);
    r.si_sdr_db = si.db;
    r.snr_db = snr.db;
    r.saturated = si.saturated || snr.saturated;
    records.push_back(std::move(r));
  }
  return records;
}

void ParallelFor(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  const size_t workers = std::min<size_t>(std::max(jobs, 1), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> threads;
  for (size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (std::thread& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

ProtocolResult RunProtocol(const GruEnhancerParams& base, const SceneSchedule& schedule,
                           std::span<const SceneDataset> scenes, const ProtocolOptions& options,
                           const UpdateCallback& on_update) {
  Require(!schedule.order.empty(), ErrorKind::kInvalidConfig, "protocol: empty schedule");
  for (const SceneSpec& spec : schedule.order) {
    Require(spec.index >= 0 && static_cast<size_t>(spec.index) < scenes.size() &&
                scenes[spec.index].spec.index == spec.index,
            ErrorKind::kInvalidInput,
            "protocol: no dataset for scene " + std::to_string(spec.index));
  }
  const AdaptConfig& cfg = options.adapt;
  const std::string method(MethodName(cfg.method));
  const std::string mode(ModeName(schedule.mode));
  const bool lora = cfg.method == AdaptMethod::kLora;

  ProtocolResult result;
  result.base_hash_before = HashParams(base);
  result.params.method = method;
  result.params.total = ParamCount(base);
  result.params.adaptable = lora ? LoraParamCount(cfg.lora, base.dims) : ParamCount(base);

  std::mutex log_mutex;
  const UpdateCallback log = [&](const UpdateLog& u) {
    if (!on_update) return;
    std::lock_guard lock(log_mutex);
    on_update(u);
  };
  auto adapter_seed = [&](int64_t index) {
    return DeriveSeed(cfg.seed, {0x6c6f7261ULL, static_cast<uint64_t>(index)});
  };

  const size_t n = schedule.order.size();
  result.sessions.resize(n);
  result.states.resize(n);
  std::vector<std::vector<MetricRecord>> per_scene(n);

  // Adapts scene i from the given starting state and evaluates it.
  auto run_scene = [&](size_t i, std::optional<AdapterSet> adapters,
                       std::optional<GruEnhancerParams> student) {
    const SceneDataset& scene = scenes[schedule.order[i].index];
    SceneState state;
    state.scene_index = scene.spec.index;
    if (lora) {
      adapters->scene_index = scene.spec.index;
      result.sessions[i] = AdaptSceneLora(base, *adapters, scene, cfg, log);
      per_scene[i] = EvaluateScene(Merge(base, *adapters), scene, method, mode);
      state.adapters = std::move(adapters);
    } else {
      result.sessions[i] = AdaptSceneRemixIt(*student, base, scene, cfg, log);
      per_scene[i] = EvaluateScene(*student, scene, method, mode);
      state.student = std::move(student);
    }
    result.states[i] = std::move(state);
  };

  if (schedule.mode == ScheduleMode::kIsolated) {
    ParallelFor(n, options.jobs, [&](size_t i) {
      const int64_t index = schedule.order[i].index;
      if (lora) {
        run_scene(i, InitAdapters(cfg.lora, base.dims, adapter_seed(index)), std::nullopt);
      } else {
        run_scene(i, std::nullopt, base);
      }
    });
  } else {
    for (size_t i = 0; i < n; ++i) {
      if (lora) {
        run_scene(i,
                  i == 0 ? InitAdapters(cfg.lora, base.dims,
                                        adapter_seed(schedule.order[0].index))
                         : *result.states[i - 1].adapters,
                  std::nullopt);
      } else {
        run_scene(i, std::nullopt, i == 0 ? base : *result.states[i - 1].student);
      }
    }
  }

  if (options.evaluate_baseline) {
    std::vector<std::vector<MetricRecord>> baseline(n);
    ParallelFor(n, options.jobs, [&](size_t i) {
      baseline[i] = EvaluateScene(base, scenes[schedule.order[i].index], "pretrained", mode);
    });
    for (auto& b : baseline) per_scene.push_back(std::move(b));
  }
  for (auto& recs : per_scene) {
    for (MetricRecord& r : recs) result.records.push_back(std::move(r));
  }
  std::sort(result.records.begin(), result.records.end(),
            [](const MetricRecord& a, const MetricRecord& b) {
              return std::tie(a.method, a.scene_id, a.pair_id) <
                     std::tie(b.method, b.scene_id, b.pair_id);
            });
  for (const AdaptSessionResult& s : result.sessions) {
    for (size_t u = 0; u < s.losses.size(); ++u) {
      result.trajectory.push_back(
          {s.scene_index, method, static_cast<int>(u + 1), s.losses[u], s.probe_delta_snr_db[u]});
    }
  }
  std::sort(result.trajectory.begin(), result.trajectory.end(),
            [](const TrajectoryRecord& a, const TrajectoryRecord& b) {
              return std::tie(a.scene_id, a.update_idx) < std::tie(b.scene_id, b.update_idx);
            });
  result.base_hash_after = HashParams(base);
  return result;
}

}  // namespace sead
