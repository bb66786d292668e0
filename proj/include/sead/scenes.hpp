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

#ifndef SEAD_SCENES_HPP_
#define SEAD_SCENES_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sead/signal.hpp"

namespace sead {

enum class NoiseKind {
  kWhite,
  kPink,
  kBabble,   // several synthetic talkers with slow level modulation
  kHum,      // harmonic mains-style hum over a pink floor
  kColored,  // random spectral tilt; used for pretraining only
};

// A noise scenario is the synthetic analog of one recording location: the
// kind fixes the generator, the seed fixes its long-term character (hum
// fundamental, babble talkers, tilt), and clip seeds draw distinct clips.
struct NoiseScenario {
  NoiseKind kind = NoiseKind::kWhite;
  uint64_t seed = 0;

  std::string Id() const;
  bool operator==(const NoiseScenario&) const = default;
};

// Accepts "white", "pink", "babble", "hum", "colored", optionally followed by
// ":<seed>". Throws kInvalidConfig otherwise.
NoiseScenario ParseScenario(std::string_view text);
std::string_view KindName(NoiseKind kind);

// Source-filter speech-like signal: glottal pulse train through three
// formant resonators, unvoiced bursts, and pauses. Peak is 0.8.
Waveform SynthSpeech(int speaker, double seconds, uint64_t seed);

Waveform SynthNoise(const NoiseScenario& scenario, double seconds, uint64_t clip_seed);

struct SceneSpec {
  int64_t index = 0;
  NoiseScenario scenario;
  double snr_lo = 0.0;
  double snr_hi = 0.0;
  std::vector<int> speakers;
  uint64_t seed = 0;
};

struct CorpusConfig {
  uint64_t seed = 1;
  std::vector<NoiseScenario> scenarios{{NoiseKind::kWhite, 11},
                                       {NoiseKind::kPink, 12},
                                       {NoiseKind::kBabble, 13},
                                       {NoiseKind::kHum, 14}};
  std::vector<std::pair<double, double>> snr_ranges{{-8.0, 0.0}, {0.0, 5.0}, {5.0, 10.0}};
  int speaker_pool = 40;
  int min_speakers = 2;
  int max_speakers = 5;
  int test_pairs = 20;
  double test_seconds = 2.0;
  int adapt_utterances = 12;
  double adapt_seconds = 4.0;
  int adapt_noise_clips = 8;
  double noise_clip_seconds = 4.0;

  std::vector<NoiseScenario> pretrain_scenarios{{NoiseKind::kColored, 101},
                                                {NoiseKind::kColored, 102},
                                                {NoiseKind::kColored, 103},
                                                {NoiseKind::kWhite, 104}};
  int pretrain_speakers = 24;
  int pretrain_utterances = 48;
  double pretrain_seconds = 3.0;
  int pretrain_noise_clips = 24;
};

struct TestPair {
  Waveform clean;
  Waveform noisy;
  double snr_db = 0.0;
  std::string speech_id;
  std::string noise_id;
};

struct SceneDataset {
  SceneSpec spec;
  std::vector<Waveform> adapt_noisy;  // no clean references
  std::vector<Waveform> adapt_noise;  // reserved clips for remixing
  std::vector<TestPair> test_pairs;
  // Provenance of every clip, for the disjointness checks.
  std::vector<std::string> adapt_speech_ids;
  std::vector<std::string> adapt_noise_ids;  // mixing clips and remix clips
  std::vector<double> adapt_snr_db;
};

// One spec per (scenario, SNR range), in scenario-major order.
std::vector<SceneSpec> MakeSceneSpecs(const CorpusConfig& config);

SceneDataset BuildScene(const SceneSpec& spec, const CorpusConfig& config);

enum class ScheduleMode { kIsolated, kSequential };

std::string_view ModeName(ScheduleMode mode);
ScheduleMode ParseMode(std::string_view text);

struct SceneSchedule {
  std::vector<SceneSpec> order;
  ScheduleMode mode = ScheduleMode::kIsolated;
  uint64_t seed = 0;
};

// Isolated keeps the given order; sequential is one seeded shuffle.
SceneSchedule SequenceScenes(std::vector<SceneSpec> specs, ScheduleMode mode, uint64_t seed);

struct PretrainCorpus {
  std::vector<Waveform> speech;
  std::vector<Waveform> noise;
};

// Speakers and noise scenarios disjoint from the scene grid.
PretrainCorpus BuildPretrainCorpus(const CorpusConfig& config);

}  // namespace sead

#endif  // SEAD_SCENES_HPP_
