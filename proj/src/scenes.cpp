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

#include "sead/scenes.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "sead/error.hpp"
#include "sead/random.hpp"

namespace sead {
namespace {

constexpr double kPi = std::numbers::pi;

// Substream tags.
enum Stream : uint64_t {
  kAdaptSpeech = 1,
  kAdaptMixNoise = 2,
  kRemixNoise = 3,
  kTestSpeech = 4,
  kTestNoise = 5,
  kSnrDraws = 6,
  kSpeakers = 7,
  kPretrainSpeech = 8,
  kPretrainNoise = 9,
};

uint64_t ClipSeed(Stream stream, uint64_t i) { return (static_cast<uint64_t>(stream) << 32) | i; }

class Resonator {
 public:
  Resonator(double freq, double bandwidth) {
    const double r = std::exp(-kPi * bandwidth / kSampleRate);
    b1_ = 2.0 * r * std::cos(2.0 * kPi * freq / kSampleRate);
    b2_ = -r * r;
    gain_ = 1.0 - r;
  }
  double Step(double x) {
    const double y = gain_ * x + b1_ * y1_ + b2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b1_, b2_, gain_;
  double y1_ = 0.0, y2_ = 0.0;
};

// Paul Kellet's pink filter; within a fraction of a dB of -3 dB/octave
// above ~10 Hz at 16 kHz.
class PinkFilter {
 public:
  double Step(double white) {
    b0_ = 0.99886 * b0_ + white * 0.0555179;
    b1_ = 0.99332 * b1_ + white * 0.0750759;
    b2_ = 0.96900 * b2_ + white * 0.1538520;
    b3_ = 0.86650 * b3_ + white * 0.3104856;
    b4_ = 0.55000 * b4_ + white * 0.5329522;
    b5_ = -0.7616 * b5_ - white * 0.0168980;
    const double out = b0_ + b1_ + b2_ + b3_ + b4_ + b5_ + b6_ + white * 0.5362;
    b6_ = white * 0.115926;
    return out * 0.11;
  }

 private:
  double b0_ = 0, b1_ = 0, b2_ = 0, b3_ = 0, b4_ = 0, b5_ = 0, b6_ = 0;
};

struct Voice {
  double f0 = 120.0;
  double formant_scale = 1.0;
};

Voice VoiceFor(int speaker) {
  Rng rng(DeriveSeed(0x766f696365ULL, {static_cast<uint64_t>(speaker)}));
  Voice v;
  v.f0 = 85.0 + 160.0 * rng.Uniform();
  // Higher voices get somewhat shorter vocal tracts.
  v.formant_scale = 0.88 + 0.2 * (v.f0 - 85.0) / 160.0 + 0.08 * rng.Uniform();
  return v;
}

// F1, F2, F3 for a handful of vowels.
constexpr double kVowels[][3] = {
    {730, 1090, 2440}, {270, 2290, 3010}, {530, 1840, 2480},
    {570, 840, 2410},  {300, 870, 2240},  {660, 1720, 2410},
};

size_t Samples(double seconds) {
  return static_cast<size_t>(std::llround(seconds * kSampleRate));
}

void Normalize(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0) {
    for (double& v : x) v *= peak / m;
  }
}

std::vector<double> WhiteNoise(size_t n, Rng& rng) {
  std::vector<double> x(n);
  for (double& v : x) v = rng.Normal();
  return x;
}

std::vector<double> PinkNoise(size_t n, Rng& rng) {
  PinkFilter f;
  // Let the slow sections settle before the clip starts.
  for (int i = 0; i < 4096; ++i) f.Step(rng.Normal());
  std::vector<double> x(n);
  for (double& v : x) v = f.Step(rng.Normal());
  return x;
}

std::vector<double> Babble(const NoiseScenario& sc, size_t n, uint64_t clip_seed) {
  Rng character(DeriveSeed(sc.seed, {0x626162ULL}));
  const int talkers = 4 + static_cast<int>(character.Index(4));
  const double seconds = static_cast<double>(n) / kSampleRate;
  std::vector<double> out(n, 0.0);
  Rng clip(DeriveSeed(sc.seed, {clip_seed, 0x636c6970ULL}));
  for (int k = 0; k < talkers; ++k) {
    // Talkers belong to the location; what they say varies per clip.
    const int speaker = 5000 + static_cast<int>(character.Index(200));
    const Waveform talk = SynthSpeech(speaker, seconds + 0.5, clip.NextU64());
    const size_t offset = clip.Index(Samples(0.5));
    const double gain = 0.5 + clip.Uniform();
    for (size_t i = 0; i < n; ++i) out[i] += gain * talk.samples[offset + i];
  }
  const double rate = 0.2 + 0.6 * character.Uniform();
  const double phase = 2.0 * kPi * clip.Uniform();
  for (size_t i = 0; i < n; ++i) {
    out[i] *= 1.0 + 0.4 * std::sin(2.0 * kPi * rate * i / kSampleRate + phase);
  }
  return out;
}

std::vector<double> Hum(const NoiseScenario& sc, size_t n, uint64_t clip_seed) {
  Rng character(DeriveSeed(sc.seed, {0x68756dULL}));
  const double fundamental = 50.0 + 100.0 * character.Uniform();
  const int harmonics = 12 + static_cast<int>(character.Index(12));
  std::vector<double> amp(harmonics);
  for (int h = 0; h < harmonics; ++h) amp[h] = (0.5 + character.Uniform()) / (1.0 + 0.35 * h);

  Rng clip(DeriveSeed(sc.seed, {clip_seed, 0x636c6970ULL}));
  std::vector<double> out = PinkNoise(n, clip);
  for (double& v : out) v *= 0.08;
  for (int h = 0; h < harmonics; ++h) {
    const double f = fundamental * (h + 1);
    if (f >= 0.45 * kSampleRate) break;
    const double phase = 2.0 * kPi * clip.Uniform();
    const double w = 2.0 * kPi * f / kSampleRate;
    for (size_t i = 0; i < n; ++i) out[i] += amp[h] * std::sin(w * i + phase);
  }
  const double wobble = 0.1 + 0.3 * clip.Uniform();
  for (size_t i = 0; i < n; ++i) {
    out[i] *= 1.0 + 0.1 * std::sin(2.0 * kPi * wobble * i / kSampleRate);
  }
  return out;
}

std::vector<double> Colored(const NoiseScenario& sc, size_t n, uint64_t clip_seed) {
  Rng character(DeriveSeed(sc.seed, {0x636f6cULL}));
  // Mix of white, pink and brown-ish components, then an optional band
  // emphasis; weights are the location's character.
  const double w_white = character.Uniform();
  const double w_pink = character.Uniform();
  const double w_brown = character.Uniform();
  const double band_freq = 300.0 + 3000.0 * character.Uniform();
  const double band_gain = 2.0 * character.Uniform();
  const double am_depth = 0.5 * character.Uniform();

  Rng clip(DeriveSeed(sc.seed, {clip_seed, 0x636c6970ULL}));
  const std::vector<double> white = WhiteNoise(n, clip);
  const std::vector<double> pink = PinkNoise(n, clip);
  std::vector<double> out(n);
  Resonator band(band_freq, 0.4 * band_freq);
  double brown = 0.0;
  for (size_t i = 0; i < n; ++i) {
    brown = 0.995 * brown + 0.1 * white[i];
    const double base = w_white * 0.3 * white[i] + w_pink * pink[i] + w_brown * brown;
    out[i] = base + band_gain * band.Step(base);
  }
  const double rate = 0.5 + 2.0 * clip.Uniform();
  for (size_t i = 0; i < n; ++i) {
    out[i] *= 1.0 + am_depth * std::sin(2.0 * kPi * rate * i / kSampleRate);
  }
  return out;
}

double ScaleToRms(std::vector<double>& x, double rms) {
  const double p = MeanPower(x);
  if (p > 0.0) {
    const double g = rms / std::sqrt(p);
    for (double& v : x) v *= g;
  }
  return p;
}

std::string SpeechId(int speaker, uint64_t seed) {
  return "spk" + std::to_string(speaker) + "#" + std::to_string(seed);
}

}  // namespace

std::string_view KindName(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kWhite: return "white";
    case NoiseKind::kPink: return "pink";
    case NoiseKind::kBabble: return "babble";
    case NoiseKind::kHum: return "hum";
    case NoiseKind::kColored: return "colored";
  }
  return "?";
}

std::string NoiseScenario::Id() const {
  return std::string(KindName(kind)) + ":" + std::to_string(seed);
}

NoiseScenario ParseScenario(std::string_view text) {
  const size_t colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  NoiseScenario sc;
  bool found = false;
  for (NoiseKind k : {NoiseKind::kWhite, NoiseKind::kPink, NoiseKind::kBabble,
                      NoiseKind::kHum, NoiseKind::kColored}) {
    if (KindName(k) == name) {
      sc.kind = k;
      found = true;
    }
  }
  Require(found, ErrorKind::kInvalidConfig, "unknown noise scenario '" + std::string(text) + "'");
  if (colon != std::string_view::npos) {
    const std::string_view s = text.substr(colon + 1);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), sc.seed);
    Require(ec == std::errc() && p == s.data() + s.size(), ErrorKind::kInvalidConfig,
            "bad scenario seed in '" + std::string(text) + "'");
  }
  return sc;
}

Waveform SynthSpeech(int speaker, double seconds, uint64_t seed) {
  Require(seconds >= 0.5, ErrorKind::kInvalidInput, "speech: duration must be >= 0.5 s");
  const Voice voice = VoiceFor(speaker);
  Rng rng(DeriveSeed(seed, {static_cast<uint64_t>(speaker), 0x7370ULL}));
  const size_t n = Samples(seconds);
  std::vector<double> out(n, 0.0);

  // Leading silence guarantees at least one pause.
  size_t at = Samples(0.1 + 0.1 * rng.Uniform());
  double glottal_phase = 0.0;
  double tilt = 0.0;
  while (at < n) {
    const int syllables = 1 + static_cast<int>(rng.Index(4));
    for (int s = 0; s < syllables && at < n; ++s) {
      if (rng.Uniform() < 0.4) {
        // Fricative burst.
        const size_t len = Samples(0.03 + 0.06 * rng.Uniform());
        Resonator fric(3000.0 + 2500.0 * rng.Uniform(), 2000.0);
        const double level = 0.05 + 0.1 * rng.Uniform();
        for (size_t i = 0; i < len && at + i < n; ++i) {
          const double env = std::sin(kPi * (i + 0.5) / len);
          out[at + i] += level * env * fric.Step(rng.Normal());
        }
        at += len;
      }
      const size_t len = Samples(0.12 + 0.16 * rng.Uniform());
      const double* v = kVowels[rng.Index(std::size(kVowels))];
      Resonator f1(v[0] * voice.formant_scale, 80.0);
      Resonator f2(v[1] * voice.formant_scale, 110.0);
      Resonator f3(v[2] * voice.formant_scale, 160.0);
      const double f0_start = voice.f0 * (0.9 + 0.25 * rng.Uniform());
      const double f0_end = f0_start * (0.85 + 0.2 * rng.Uniform());
      const double level = 0.6 + 0.4 * rng.Uniform();
      const size_t ramp = Samples(0.02);
      for (size_t i = 0; i < len && at + i < n; ++i) {
        const double frac = static_cast<double>(i) / len;
        const double f0 = f0_start + (f0_end - f0_start) * frac;
        glottal_phase += f0 / kSampleRate;
        double pulse = 0.0;
        if (glottal_phase >= 1.0) {
          glottal_phase -= 1.0;
          pulse = 1.0;
        }
        // One-pole low-pass gives the glottal source its spectral tilt.
        tilt = 0.9 * tilt + pulse + 0.02 * rng.Normal();
        const double y = f1.Step(tilt) + 0.6 * f2.Step(tilt) + 0.3 * f3.Step(tilt);
        double env = 1.0;
        if (i < ramp) env = 0.5 - 0.5 * std::cos(kPi * i / ramp);
        if (len - i < ramp) env = std::min(env, 0.5 - 0.5 * std::cos(kPi * (len - i) / ramp));
        out[at + i] += level * env * y;
      }
      at += len;
    }
    // Pause between words.
    at += Samples(0.06 + 0.2 * rng.Uniform());
  }
  Normalize(out, 0.8);
  return Waveform(std::move(out));
}

Waveform SynthNoise(const NoiseScenario& scenario, double seconds, uint64_t clip_seed) {
  Require(seconds > 0.0, ErrorKind::kInvalidInput, "noise: duration must be positive");
  const size_t n = Samples(seconds);
  std::vector<double> x;
  Rng rng(DeriveSeed(scenario.seed, {clip_seed, static_cast<uint64_t>(scenario.kind)}));
  switch (scenario.kind) {
    case NoiseKind::kWhite: x = WhiteNoise(n, rng); break;
    case NoiseKind::kPink: x = PinkNoise(n, rng); break;
    case NoiseKind::kBabble: x = Babble(scenario, n, clip_seed); break;
    case NoiseKind::kHum: x = Hum(scenario, n, clip_seed); break;
    case NoiseKind::kColored: x = Colored(scenario, n, clip_seed); break;
  }
  ScaleToRms(x, 0.1);
  return Waveform(std::move(x));
}

std::vector<SceneSpec> MakeSceneSpecs(const CorpusConfig& config) {
  Require(!config.scenarios.empty() && !config.snr_ranges.empty(), ErrorKind::kInvalidConfig,
          "corpus: need at least one scenario and one SNR range");
  Require(config.min_speakers >= 2 && config.max_speakers <= 5 &&
              config.min_speakers <= config.max_speakers &&
              config.max_speakers <= config.speaker_pool,
          ErrorKind::kInvalidConfig, "corpus: speakers per scene must lie in [2, 5]");
  std::vector<SceneSpec> specs;
  Rng rng(DeriveSeed(config.seed, {kSpeakers}));
  int64_t index = 0;
  for (const NoiseScenario& sc : config.scenarios) {
    for (const auto& [lo, hi] : config.snr_ranges) {
      Require(lo < hi, ErrorKind::kInvalidConfig, "corpus: SNR range must have lo < hi");
      SceneSpec s;
      s.index = index;
      s.scenario = sc;
      s.snr_lo = lo;
      s.snr_hi = hi;
      const int count = config.min_speakers +
                        static_cast<int>(rng.Index(config.max_speakers - config.min_speakers + 1));
      std::vector<int> pool(config.speaker_pool);
      for (int i = 0; i < config.speaker_pool; ++i) pool[i] = i;
      for (int i = 0; i < count; ++i) {
        std::swap(pool[i], pool[i + rng.Index(pool.size() - i)]);
      }
      s.speakers.assign(pool.begin(), pool.begin() + count);
      s.seed = DeriveSeed(config.seed, {0x7363656e65ULL, static_cast<uint64_t>(index)});
      specs.push_back(std::move(s));
      ++index;
    }
  }
  return specs;
}

SceneDataset BuildScene(const SceneSpec& spec, const CorpusConfig& config) {
  Require(spec.snr_lo < spec.snr_hi, ErrorKind::kInvalidConfig, "scene: empty SNR range");
  Require(spec.speakers.size() >= 2 && spec.speakers.size() <= 5, ErrorKind::kInvalidConfig,
          "scene: needs 2 to 5 speakers");
  SceneDataset ds;
  ds.spec = spec;
  Rng snr_rng(DeriveSeed(spec.seed, {kSnrDraws}));
  const size_t speakers = spec.speakers.size();

  for (int i = 0; i < config.adapt_utterances; ++i) {
    const int spk = spec.speakers[i % speakers];
    const uint64_t speech_seed = DeriveSeed(spec.seed, {kAdaptSpeech, static_cast<uint64_t>(i)});
    const Waveform clean = SynthSpeech(spk, config.adapt_seconds, speech_seed);
    const uint64_t clip = ClipSeed(kAdaptMixNoise, i);
    const Waveform noise =
        SynthNoise(spec.scenario, config.adapt_seconds, DeriveSeed(spec.seed, {clip}));
    const double snr = snr_rng.Uniform(spec.snr_lo, spec.snr_hi);
    ds.adapt_noisy.push_back(MixAtSnr(clean, noise, snr).mix);
    ds.adapt_speech_ids.push_back(SpeechId(spk, speech_seed));
    ds.adapt_noise_ids.push_back(spec.scenario.Id() + "#" + std::to_string(clip));
    ds.adapt_snr_db.push_back(snr);
  }
  for (int j = 0; j < config.adapt_noise_clips; ++j) {
    const uint64_t clip = ClipSeed(kRemixNoise, j);
    ds.adapt_noise.push_back(
        SynthNoise(spec.scenario, config.noise_clip_seconds, DeriveSeed(spec.seed, {clip})));
    ds.adapt_noise_ids.push_back(spec.scenario.Id() + "#" + std::to_string(clip));
  }
  for (int i = 0; i < config.test_pairs; ++i) {
    const int spk = spec.speakers[i % speakers];
    const uint64_t speech_seed = DeriveSeed(spec.seed, {kTestSpeech, static_cast<uint64_t>(i)});
    TestPair p;
    p.clean = SynthSpeech(spk, config.test_seconds, speech_seed);
    const uint64_t clip = ClipSeed(kTestNoise, i);
    const Waveform noise =
        SynthNoise(spec.scenario, config.test_seconds, DeriveSeed(spec.seed, {clip}));
    p.snr_db = snr_rng.Uniform(spec.snr_lo, spec.snr_hi);
    p.noisy = MixAtSnr(p.clean, noise, p.snr_db).mix;
    p.speech_id = SpeechId(spk, speech_seed);
    p.noise_id = spec.scenario.Id() + "#" + std::to_string(clip);
    ds.test_pairs.push_back(std::move(p));
  }
  return ds;
}

std::string_view ModeName(ScheduleMode mode) {
  return mode == ScheduleMode::kIsolated ? "isolated" : "sequential";
}

ScheduleMode ParseMode(std::string_view text) {
  if (text == "isolated") return ScheduleMode::kIsolated;
  if (text == "sequential") return ScheduleMode::kSequential;
  Fail(ErrorKind::kInvalidConfig, "unknown mode '" + std::string(text) + "'");
}

SceneSchedule SequenceScenes(std::vector<SceneSpec> specs, ScheduleMode mode, uint64_t seed) {
  Require(!specs.empty(), ErrorKind::kInvalidConfig, "schedule: no scenes");
  SceneSchedule s;
  s.mode = mode;
  s.seed = seed;
  if (mode == ScheduleMode::kSequential) {
    Rng rng(DeriveSeed(seed, {0x73687566ULL}));
    for (size_t i = specs.size() - 1; i > 0; --i) {
      std::swap(specs[i], specs[rng.Index(i + 1)]);
    }
  }
  s.order = std::move(specs);
  return s;
}

PretrainCorpus BuildPretrainCorpus(const CorpusConfig& config) {
  Require(!config.pretrain_scenarios.empty() && config.pretrain_utterances > 0 &&
              config.pretrain_noise_clips > 0 && config.pretrain_speakers > 0,
          ErrorKind::kInvalidConfig, "pretrain corpus: empty configuration");
  PretrainCorpus c;
  for (int i = 0; i < config.pretrain_utterances; ++i) {
    // Pretraining speakers live outside the scene speaker pool.
    const int spk = 1000 + i % config.pretrain_speakers;
    const uint64_t seed = DeriveSeed(config.seed, {kPretrainSpeech, static_cast<uint64_t>(i)});
    c.speech.push_back(SynthSpeech(spk, config.pretrain_seconds, seed));
  }
  for (int j = 0; j < config.pretrain_noise_clips; ++j) {
    const NoiseScenario& sc = config.pretrain_scenarios[j % config.pretrain_scenarios.size()];
    const uint64_t seed = DeriveSeed(config.seed, {kPretrainNoise, static_cast<uint64_t>(j)});
    c.noise.push_back(SynthNoise(sc, config.pretrain_seconds, seed));
  }
  return c;
}

}  // namespace sead
