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

#include "sead/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sead/error.hpp"
#include "sead/lora.hpp"
#include "sead/metrics.hpp"
#include "sead/wav.hpp"

namespace sead {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// --- config parsing --------------------------------------------------------

void CheckKeys(const json& j, const std::string& where,
               std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) Fail(ErrorKind::kInvalidConfig, where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      Fail(ErrorKind::kInvalidConfig, where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void Optional(const json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    Fail(ErrorKind::kInvalidConfig, where + "." + key + ": " + e.what());
  }
}

template <typename T>
T Required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) Fail(ErrorKind::kInvalidConfig, where + "." + key + " is required");
  T out{};
  Optional(j, key, where, out);
  return out;
}

std::pair<double, double> Range(const json& j, const char* key, const std::string& where,
                                std::pair<double, double> fallback) {
  if (!j.contains(key)) return fallback;
  std::vector<double> v;
  Optional(j, key, where, v);
  Require(v.size() == 2 && v[0] <= v[1], ErrorKind::kInvalidConfig,
          where + "." + key + ": expected [lo, hi] with lo <= hi");
  return {v[0], v[1]};
}

std::vector<NoiseScenario> Scenarios(const json& j, const char* key, const std::string& where,
                                     std::vector<NoiseScenario> fallback) {
  if (!j.contains(key)) return fallback;
  std::vector<std::string> names;
  Optional(j, key, where, names);
  std::vector<NoiseScenario> out;
  for (const std::string& n : names) out.push_back(ParseScenario(n));
  return out;
}

json ScenarioList(const std::vector<NoiseScenario>& scenarios) {
  json out = json::array();
  for (const NoiseScenario& s : scenarios) out.push_back(s.Id());
  return out;
}

uint64_t Fnv1a(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// --- files -------------------------------------------------------------------

fs::path StagingPath(const fs::path& path) {
  return path.parent_path() / (path.filename().string() + ".partial");
}

// Replaces `target` by the fully written `staging` directory.
void PromoteDirectory(const fs::path& staging, const fs::path& target) {
  std::error_code ec;
  fs::remove_all(target, ec);
  if (ec) Fail(ErrorKind::kIo, "cannot replace " + target.string() + ": " + ec.message());
  fs::rename(staging, target, ec);
  if (ec) Fail(ErrorKind::kIo, "cannot move " + staging.string() + " to " + target.string());
}

fs::path FreshStaging(const fs::path& target) {
  const fs::path staging = StagingPath(target);
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) Fail(ErrorKind::kIo, "cannot create " + staging.string() + ": " + ec.message());
  return staging;
}

std::string Numbered(const char* stem, size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu%s", stem, i, ext);
  return buf;
}

json ReadJson(const fs::path& path) {
  try {
    return json::parse(ReadFile(path));
  } catch (const json::exception& e) {
    Fail(ErrorKind::kInvalidInput, path.string() + ": " + e.what());
  }
}

std::string RunLabel(const LoraConfig* lora, AdaptMethod method, bool sweep) {
  if (!sweep) return std::string(MethodName(method));
  return "lora-r" + std::to_string(lora->rank) + "-s" + FormatDouble(lora->scale);
}

}  // namespace

// --- RunConfig ---------------------------------------------------------------

RunConfig RunConfig::Parse(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    Fail(ErrorKind::kInvalidConfig, std::string("config: ") + e.what());
  }
  CheckKeys(root, "config", {"output_dir", "corpus", "model", "pretrain", "adapt", "jobs"});
  RunConfig c;
  c.output_dir = Required<std::string>(root, "output_dir", "config");
  Optional(root, "jobs", "config", c.jobs);
  Require(c.jobs >= 1, ErrorKind::kInvalidConfig, "config.jobs must be >= 1");

  const json corpus = root.value("corpus", json::object());
  const std::string cw = "corpus";
  CheckKeys(corpus, cw,
            {"seed", "scenarios", "snr_ranges", "speaker_pool", "min_speakers", "max_speakers",
             "test_pairs", "test_seconds", "adapt_utterances", "adapt_seconds",
             "adapt_noise_clips", "noise_clip_seconds", "pretrain_scenarios",
             "pretrain_speakers", "pretrain_utterances", "pretrain_seconds",
             "pretrain_noise_clips"});
  CorpusConfig& cc = c.corpus;
  cc.seed = Required<uint64_t>(corpus, "seed", cw);
  cc.scenarios = Scenarios(corpus, "scenarios", cw, cc.scenarios);
  if (corpus.contains("snr_ranges")) {
    std::vector<std::vector<double>> ranges;
    Optional(corpus, "snr_ranges", cw, ranges);
    cc.snr_ranges.clear();
    for (const auto& r : ranges) {
      Require(r.size() == 2 && r[0] < r[1], ErrorKind::kInvalidConfig,
              "corpus.snr_ranges: expected [lo, hi] with lo < hi");
      cc.snr_ranges.emplace_back(r[0], r[1]);
    }
  }
  Optional(corpus, "speaker_pool", cw, cc.speaker_pool);
  Optional(corpus, "min_speakers", cw, cc.min_speakers);
  Optional(corpus, "max_speakers", cw, cc.max_speakers);
  Optional(corpus, "test_pairs", cw, cc.test_pairs);
  Optional(corpus, "test_seconds", cw, cc.test_seconds);
  Optional(corpus, "adapt_utterances", cw, cc.adapt_utterances);
  Optional(corpus, "adapt_seconds", cw, cc.adapt_seconds);
  Optional(corpus, "adapt_noise_clips", cw, cc.adapt_noise_clips);
  Optional(corpus, "noise_clip_seconds", cw, cc.noise_clip_seconds);
  cc.pretrain_scenarios = Scenarios(corpus, "pretrain_scenarios", cw, cc.pretrain_scenarios);
  Optional(corpus, "pretrain_speakers", cw, cc.pretrain_speakers);
  Optional(corpus, "pretrain_utterances", cw, cc.pretrain_utterances);
  Optional(corpus, "pretrain_seconds", cw, cc.pretrain_seconds);
  Optional(corpus, "pretrain_noise_clips", cw, cc.pretrain_noise_clips);
  Require(cc.test_pairs >= 1 && cc.adapt_utterances >= 1 && cc.adapt_noise_clips >= 1,
          ErrorKind::kInvalidConfig, "corpus: clip counts must be >= 1");

  const json model = root.value("model", json::object());
  CheckKeys(model, "model", {"bands", "hidden", "init_seed"});
  Optional(model, "bands", "model", c.dims.bands);
  Optional(model, "hidden", "model", c.dims.hidden);
  c.init_seed = Required<uint64_t>(model, "init_seed", "model");
  Require(c.dims.bands >= 2 && c.dims.hidden >= 1, ErrorKind::kInvalidConfig,
          "model: bands must be >= 2 and hidden >= 1");

  const json pre = root.value("pretrain", json::object());
  const std::string pw = "pretrain";
  CheckKeys(pre, pw,
            {"lr", "decay_patience", "decay_factor", "batch", "epochs", "batches_per_epoch",
             "segment_seconds", "snr_range", "seed"});
  PretrainConfig& p = c.pretrain;
  Optional(pre, "lr", pw, p.lr);
  Optional(pre, "decay_patience", pw, p.decay_patience);
  Optional(pre, "decay_factor", pw, p.decay_factor);
  Optional(pre, "batch", pw, p.batch);
  Optional(pre, "epochs", pw, p.epochs);
  Optional(pre, "batches_per_epoch", pw, p.batches_per_epoch);
  Optional(pre, "segment_seconds", pw, p.segment_seconds);
  std::tie(p.snr_lo, p.snr_hi) = Range(pre, "snr_range", pw, {p.snr_lo, p.snr_hi});
  p.seed = Required<uint64_t>(pre, "seed", pw);
  Require(p.lr > 0.0 && p.batch >= 1 && p.epochs >= 1, ErrorKind::kInvalidConfig,
          "pretrain: lr must be > 0, batch and epochs >= 1");

  const json ad = root.value("adapt", json::object());
  const std::string aw = "adapt";
  CheckKeys(ad, aw,
            {"lr", "batch", "updates", "remix_snr_range", "segment_seconds", "rank", "scale",
             "targets", "probe_pairs", "seed", "schedule_seed"});
  AdaptConfig& a = c.adapt;
  Optional(ad, "lr", aw, a.lr);
  Optional(ad, "batch", aw, a.batch);
  Optional(ad, "updates", aw, a.updates);
  std::tie(a.remix_snr_lo, a.remix_snr_hi) =
      Range(ad, "remix_snr_range", aw, {a.remix_snr_lo, a.remix_snr_hi});
  Optional(ad, "segment_seconds", aw, a.segment_seconds);
  Optional(ad, "rank", aw, a.lora.rank);
  Optional(ad, "scale", aw, a.lora.scale);
  if (ad.contains("targets")) {
    std::vector<std::string> names;
    Optional(ad, "targets", aw, names);
    a.lora.targets.clear();
    for (const std::string& n : names) a.lora.targets.push_back(ParseTarget(n));
  }
  Optional(ad, "probe_pairs", aw, a.probe_pairs);
  a.seed = Required<uint64_t>(ad, "seed", aw);
  c.schedule_seed = Required<uint64_t>(ad, "schedule_seed", aw);
  Require(a.lr >= 0.0 && a.batch >= 1 && a.updates >= 0 && a.lora.rank >= 1,
          ErrorKind::kInvalidConfig, "adapt: lr >= 0, batch >= 1, updates >= 0, rank >= 1");

  if (const char* env = std::getenv("SEAD_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    c.output_dir = env;
  }
  return c;
}

RunConfig RunConfig::Load(const fs::path& path) { return Parse(ReadFile(path)); }

std::string RunConfig::ToJson() const {
  json ranges = json::array();
  for (const auto& [lo, hi] : corpus.snr_ranges) ranges.push_back({lo, hi});
  json targets = json::array();
  for (LoraTarget t : adapt.lora.targets) targets.push_back(std::string(TargetName(t)));
  const json j = {
      {"output_dir", output_dir.string()},
      {"jobs", jobs},
      {"corpus",
       {{"seed", corpus.seed},
        {"scenarios", ScenarioList(corpus.scenarios)},
        {"snr_ranges", ranges},
        {"speaker_pool", corpus.speaker_pool},
        {"min_speakers", corpus.min_speakers},
        {"max_speakers", corpus.max_speakers},
        {"test_pairs", corpus.test_pairs},
        {"test_seconds", corpus.test_seconds},
        {"adapt_utterances", corpus.adapt_utterances},
        {"adapt_seconds", corpus.adapt_seconds},
        {"adapt_noise_clips", corpus.adapt_noise_clips},
        {"noise_clip_seconds", corpus.noise_clip_seconds},
        {"pretrain_scenarios", ScenarioList(corpus.pretrain_scenarios)},
        {"pretrain_speakers", corpus.pretrain_speakers},
        {"pretrain_utterances", corpus.pretrain_utterances},
        {"pretrain_seconds", corpus.pretrain_seconds},
        {"pretrain_noise_clips", corpus.pretrain_noise_clips}}},
      {"model", {{"bands", dims.bands}, {"hidden", dims.hidden}, {"init_seed", init_seed}}},
      {"pretrain",
       {{"lr", pretrain.lr},
        {"decay_patience", pretrain.decay_patience},
        {"decay_factor", pretrain.decay_factor},
        {"batch", pretrain.batch},
        {"epochs", pretrain.epochs},
        {"batches_per_epoch", pretrain.batches_per_epoch},
        {"segment_seconds", pretrain.segment_seconds},
        {"snr_range", {pretrain.snr_lo, pretrain.snr_hi}},
        {"seed", pretrain.seed}}},
      {"adapt",
       {{"lr", adapt.lr},
        {"batch", adapt.batch},
        {"updates", adapt.updates},
        {"remix_snr_range", {adapt.remix_snr_lo, adapt.remix_snr_hi}},
        {"segment_seconds", adapt.segment_seconds},
        {"rank", adapt.lora.rank},
        {"scale", adapt.lora.scale},
        {"targets", targets},
        {"probe_pairs", adapt.probe_pairs},
        {"seed", adapt.seed},
        {"schedule_seed", schedule_seed}}},
  };
  return j.dump(2);
}

// --- files -------------------------------------------------------------------

void WriteFileAtomic(const fs::path& path, const std::string& bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) Fail(ErrorKind::kIo, "cannot create " + path.parent_path().string());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) Fail(ErrorKind::kIo, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) Fail(ErrorKind::kIo, "cannot move " + tmp.string() + " to " + path.string());
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- corpus ------------------------------------------------------------------

void ExportCorpus(const fs::path& dir, const CorpusConfig& config,
                  const std::vector<SceneDataset>& scenes, const PretrainCorpus& pretrain) {
  const fs::path staging = FreshStaging(dir);
  json manifest = {{"version", 1}, {"corpus_seed", config.seed}};
  json scene_list = json::array();
  for (const SceneDataset& s : scenes) {
    const fs::path rel = fs::path("scenes") / std::to_string(s.spec.index);
    fs::create_directories(staging / rel / "adapt");
    fs::create_directories(staging / rel / "test");
    json noisy = json::array();
    for (size_t i = 0; i < s.adapt_noisy.size(); ++i) {
      const fs::path p = rel / "adapt" / Numbered("noisy", i, ".wav");
      WriteWav(staging / p, s.adapt_noisy[i]);
      noisy.push_back({{"path", p.generic_string()},
                       {"speech_id", s.adapt_speech_ids[i]},
                       {"noise_id", s.adapt_noise_ids[i]},
                       {"snr_db", s.adapt_snr_db[i]}});
    }
    json noise = json::array();
    for (size_t i = 0; i < s.adapt_noise.size(); ++i) {
      const fs::path p = rel / "adapt" / Numbered("noise", i, ".wav");
      WriteWav(staging / p, s.adapt_noise[i]);
      noise.push_back({{"path", p.generic_string()},
                       {"noise_id", s.adapt_noise_ids[s.adapt_noisy.size() + i]}});
    }
    json test = json::array();
    for (size_t i = 0; i < s.test_pairs.size(); ++i) {
      const TestPair& t = s.test_pairs[i];
      const fs::path pc = rel / "test" / Numbered("clean", i, ".wav");
      const fs::path pn = rel / "test" / Numbered("noisy", i, ".wav");
      WriteWav(staging / pc, t.clean);
      WriteWav(staging / pn, t.noisy);
      test.push_back({{"clean", pc.generic_string()},
                      {"noisy", pn.generic_string()},
                      {"speech_id", t.speech_id},
                      {"noise_id", t.noise_id},
                      {"snr_db", t.snr_db}});
    }
    scene_list.push_back({{"index", s.spec.index},
                          {"scenario", s.spec.scenario.Id()},
                          {"snr_range", {s.spec.snr_lo, s.spec.snr_hi}},
                          {"speakers", s.spec.speakers},
                          {"seed", s.spec.seed},
                          {"adapt", {{"noisy", noisy}, {"noise", noise}}},
                          {"test", test}});
  }
  manifest["scenes"] = scene_list;
  fs::create_directories(staging / "pretrain");
  json speech = json::array(), noise = json::array();
  for (size_t i = 0; i < pretrain.speech.size(); ++i) {
    const fs::path p = fs::path("pretrain") / Numbered("speech", i, ".wav");
    WriteWav(staging / p, pretrain.speech[i]);
    speech.push_back(p.generic_string());
  }
  for (size_t i = 0; i < pretrain.noise.size(); ++i) {
    const fs::path p = fs::path("pretrain") / Numbered("noise", i, ".wav");
    WriteWav(staging / p, pretrain.noise[i]);
    noise.push_back(p.generic_string());
  }
  manifest["pretrain"] = {{"speech", speech}, {"noise", noise}};
  WriteFileAtomic(staging / "manifest.json", manifest.dump(2) + "\n");
  PromoteDirectory(staging, dir);
}

Corpus LoadCorpus(const fs::path& dir) {
  const json m = ReadJson(dir / "manifest.json");
  Corpus c;
  try {
    Require(m.at("version").get<int>() == 1, ErrorKind::kInvalidInput,
            "manifest: unsupported version");
    for (const json& js : m.at("scenes")) {
      SceneDataset s;
      s.spec.index = js.at("index").get<int64_t>();
      s.spec.scenario = ParseScenario(js.at("scenario").get<std::string>());
      const auto range = js.at("snr_range").get<std::vector<double>>();
      Require(range.size() == 2 && range[0] < range[1], ErrorKind::kInvalidInput,
              "manifest: bad snr_range");
      s.spec.snr_lo = range[0];
      s.spec.snr_hi = range[1];
      s.spec.speakers = js.value("speakers", std::vector<int>{});
      s.spec.seed = js.value("seed", uint64_t{0});
      std::vector<std::string> mix_noise_ids;
      for (const json& a : js.at("adapt").at("noisy")) {
        const std::string path = a.at("path").get<std::string>();
        s.adapt_noisy.push_back(ReadWav(dir / path));
        s.adapt_speech_ids.push_back(a.value("speech_id", path));
        mix_noise_ids.push_back(a.value("noise_id", path));
        s.adapt_snr_db.push_back(a.value("snr_db", 0.0));
      }
      s.adapt_noise_ids = mix_noise_ids;
      for (const json& a : js.at("adapt").at("noise")) {
        const std::string path = a.at("path").get<std::string>();
        s.adapt_noise.push_back(ReadWav(dir / path));
        s.adapt_noise_ids.push_back(a.value("noise_id", path));
      }
      for (const json& t : js.at("test")) {
        TestPair p;
        const std::string clean = t.at("clean").get<std::string>();
        const std::string noisy = t.at("noisy").get<std::string>();
        p.clean = ReadWav(dir / clean);
        p.noisy = ReadWav(dir / noisy);
        Require(p.clean.size() == p.noisy.size(), ErrorKind::kInvalidInput,
                "manifest: clean and noisy lengths differ for " + noisy);
        p.speech_id = t.value("speech_id", clean);
        p.noise_id = t.value("noise_id", noisy);
        p.snr_db = t.value("snr_db", 0.0);
        s.test_pairs.push_back(std::move(p));
      }
      // Split discipline: no shared speech or noise material.
      std::set<std::string> adapt_ids(s.adapt_speech_ids.begin(), s.adapt_speech_ids.end());
      adapt_ids.insert(s.adapt_noise_ids.begin(), s.adapt_noise_ids.end());
      for (const TestPair& p : s.test_pairs) {
        Require(!adapt_ids.contains(p.speech_id) && !adapt_ids.contains(p.noise_id),
                ErrorKind::kInvalidInput,
                "manifest: scene " + std::to_string(s.spec.index) +
                    " shares material between adapt and test (" + p.speech_id + ", " +
                    p.noise_id + ")");
      }
      c.scenes.push_back(std::move(s));
    }
    for (const json& p : m.at("pretrain").at("speech")) {
      c.pretrain.speech.push_back(ReadWav(dir / p.get<std::string>()));
    }
    for (const json& p : m.at("pretrain").at("noise")) {
      c.pretrain.noise.push_back(ReadWav(dir / p.get<std::string>()));
    }
  } catch (const json::exception& e) {
    Fail(ErrorKind::kInvalidInput, (dir / "manifest.json").string() + ": " + e.what());
  }
  std::sort(c.scenes.begin(), c.scenes.end(),
            [](const SceneDataset& a, const SceneDataset& b) {
              return a.spec.index < b.spec.index;
            });
  for (size_t i = 0; i < c.scenes.size(); ++i) {
    Require(c.scenes[i].spec.index == static_cast<int64_t>(i), ErrorKind::kInvalidInput,
            "manifest: scene indices must be 0..M-1");
  }
  return c;
}

std::vector<std::pair<int, double>> RankScaleGrid() {
  return {{16, 1.0}, {32, 1.0}, {64, 1.0}, {1, 32.0}, {1, 64.0}, {1, 128.0}};
}

// --- Pipeline ----------------------------------------------------------------

Pipeline::Pipeline(RunConfig config, RunOptions options, LogFn log)
    : config_(std::move(config)), options_(std::move(options)), log_(std::move(log)) {
  if (options_.jobs) {
    Require(*options_.jobs >= 1, ErrorKind::kInvalidConfig, "--jobs must be >= 1");
    config_.jobs = *options_.jobs;
  }
}

fs::path Pipeline::corpus_dir() const {
  return options_.wav_dir ? *options_.wav_dir : config_.output_dir / "corpus";
}

fs::path Pipeline::model_path() const { return config_.output_dir / "model" / "pretrained.sgru"; }

fs::path Pipeline::run_dir(const std::string& name) const {
  return config_.output_dir / "runs" / name;
}

void Pipeline::Log(const std::string& line) const {
  if (log_) log_(line);
}

const Corpus& Pipeline::corpus() {
  if (!corpus_) {
    Require(fs::exists(corpus_dir() / "manifest.json"), ErrorKind::kIo,
            "no corpus at " + corpus_dir().string() + " (run synth-data first)");
    corpus_ = LoadCorpus(corpus_dir());
  }
  return *corpus_;
}

GruEnhancerParams Pipeline::LoadPretrained() const {
  Require(fs::exists(model_path()), ErrorKind::kIo,
          "no checkpoint at " + model_path().string() + " (run pretrain first)");
  GruEnhancerParams p = Load(ReadCheckpoint(model_path()));
  Require(p.dims == config_.dims, ErrorKind::kInvalidConfig,
          "checkpoint dims do not match the config");
  return p;
}

void Pipeline::SynthData() {
  if (options_.wav_dir) {
    Log("synth-data: --wav-dir given, validating " + options_.wav_dir->string());
    const Corpus& c = corpus();
    Log("synth-data: " + std::to_string(c.scenes.size()) + " scenes ok");
    return;
  }
  const std::vector<SceneSpec> specs = MakeSceneSpecs(config_.corpus);
  std::vector<SceneDataset> scenes(specs.size());
  ParallelFor(specs.size(), config_.jobs,
              [&](size_t i) { scenes[i] = BuildScene(specs[i], config_.corpus); });
  const PretrainCorpus pretrain = BuildPretrainCorpus(config_.corpus);
  ExportCorpus(corpus_dir(), config_.corpus, scenes, pretrain);
  corpus_.reset();
  Log("synth-data: wrote " + std::to_string(scenes.size()) + " scenes to " +
      corpus_dir().string());
}

PretrainResult Pipeline::Pretrain() {
  const Corpus& c = corpus();
  const GruEnhancerParams init = InitParams(config_.dims, config_.init_seed);
  std::string log_text;
  const PretrainResult result =
      sead::Pretrain(init, c.pretrain, config_.pretrain, [&](const EpochLog& e) {
        const json line = {{"epoch", e.epoch},
                           {"mean_loss", e.mean_loss},
                           {"lr", e.lr},
                           {"improved", e.improved}};
        log_text += line.dump() + "\n";
        Log("pretrain: " + line.dump());
      });
  const json prov = json::parse(config_.ToJson());
  const uint64_t provenance = Fnv1a(prov.at("corpus").dump() + prov.at("model").dump() +
                                    prov.at("pretrain").dump());
  const std::vector<char> bytes = SerializeCheckpoint(Save(result.best, provenance));
  WriteFileAtomic(model_path(), std::string(bytes.begin(), bytes.end()));
  WriteFileAtomic(model_path().parent_path() / "pretrain_log.jsonl", log_text);
  Log("pretrain: best epoch " + std::to_string(result.best_epoch) + ", checkpoint " +
      model_path().string());
  return result;
}

AdaptConfig Pipeline::EffectiveAdaptConfig(AdaptMethod method) const {
  AdaptConfig a = config_.adapt;
  a.method = method;
  if (options_.updates) {
    Require(*options_.updates >= 0, ErrorKind::kInvalidConfig, "--updates must be >= 0");
    a.updates = *options_.updates;
  }
  if (options_.lr) {
    Require(*options_.lr >= 0.0, ErrorKind::kInvalidConfig, "--lr must be >= 0");
    a.lr = *options_.lr;
  }
  return a;
}

ProtocolResult Pipeline::Adapt(AdaptMethod method, ScheduleMode mode) {
  return AdaptInto(std::string(MethodName(method)) + "_" + std::string(ModeName(mode)),
                   EffectiveAdaptConfig(method), mode);
}

ProtocolResult Pipeline::AdaptInto(const std::string& run_name, const AdaptConfig& adapt,
                                   ScheduleMode mode) {
  const Corpus& c = corpus();
  const GruEnhancerParams base = LoadPretrained();
  std::vector<SceneSpec> specs;
  for (const SceneDataset& s : c.scenes) specs.push_back(s.spec);
  const SceneSchedule schedule = SequenceScenes(specs, mode, config_.schedule_seed);

  ProtocolOptions options;
  options.mode = mode;
  options.adapt = adapt;
  options.jobs = config_.jobs;
  std::string session;
  const ProtocolResult r = RunProtocol(base, schedule, c.scenes, options, [&](const UpdateLog& u) {
    const json line = {{"scene", u.scene_index},
                       {"update", u.update},
                       {"loss", u.loss},
                       {"probe_delta_snr_db", u.probe_delta_snr_db},
                       {"wall_seconds", u.wall_seconds}};
    session += line.dump() + "\n";
    Log(run_name + ": " + line.dump());
  });
  Require(r.base_hash_before == r.base_hash_after, ErrorKind::kContract,
          "adapt: the pretrained parameters changed during adaptation");

  const bool sweep = run_name.rfind("lora-r", 0) == 0;
  const std::string label = RunLabel(&adapt.lora, adapt.method, sweep);
  const fs::path target = run_dir(run_name);
  fs::create_directories(target.parent_path());
  const fs::path staging = FreshStaging(target);
  fs::create_directories(staging / "states");
  std::vector<TrajectoryRecord> trajectory = r.trajectory;
  for (TrajectoryRecord& t : trajectory) t.method = label;
  WriteFileAtomic(staging / "trajectory.csv", TrajectoryCsv(trajectory));
  WriteFileAtomic(staging / "session.jsonl", session);
  for (const SceneState& s : r.states) {
    const fs::path stem = staging / "states" / Numbered("scene", s.scene_index, "");
    if (s.adapters) {
      WriteAdapters(stem.string() + ".lora", *s.adapters);
    } else {
      const std::vector<char> bytes = SerializeCheckpoint(Save(*s.student));
      WriteFileAtomic(stem.string() + ".sgru", std::string(bytes.begin(), bytes.end()));
    }
  }
  const json run = {{"label", label},
                    {"method", std::string(MethodName(adapt.method))},
                    {"mode", std::string(ModeName(mode))},
                    {"adaptable_params", r.params.adaptable},
                    {"total_params", r.params.total},
                    {"adaptable_percent", r.params.percent()},
                    {"rank", adapt.lora.rank},
                    {"scale", adapt.lora.scale},
                    {"updates", adapt.updates},
                    {"lr", adapt.lr},
                    {"base_hash", r.base_hash_before}};
  WriteFileAtomic(staging / "run.json", run.dump(2) + "\n");
  PromoteDirectory(staging, target);
  Log(run_name + ": adaptable parameters " + std::to_string(r.params.adaptable) + " of " +
      std::to_string(r.params.total) + " (" + FormatDouble(r.params.percent()) + "%)");
  return r;
}

void Pipeline::RankScaleSweep(ScheduleMode mode) {
  std::ostringstream csv;
  csv << "rank,scale,adaptable_params,reference_adaptable_params,mean_si_sdr_db,"
         "mean_delta_si_sdr_db,status\n";
  for (const auto& [rank, scale] : RankScaleGrid()) {
    AdaptConfig a = EffectiveAdaptConfig(AdaptMethod::kLora);
    a.lora.rank = rank;
    a.lora.scale = scale;
    const size_t reference = LoraParamCount(a.lora, EnhancerDims::Reference());
    csv << rank << "," << FormatDouble(scale) << ",";
    int max_rank = INT32_MAX;
    for (LoraTarget t : a.lora.targets) {
      const auto [d, k] = TargetShape(t, config_.dims);
      max_rank = std::min({max_rank, d, k});
    }
    if (rank > max_rank) {
      csv << "," << reference << ",,,rank exceeds min(d, k)\n";
      Log("rank-scale-grid: skipping rank " + std::to_string(rank) + " at these dims");
      continue;
    }
    const std::string name = RunLabel(&a.lora, a.method, true) + "_" + std::string(ModeName(mode));
    const ProtocolResult r = AdaptInto(name, a, mode);
    double adapted = 0.0, baseline = 0.0;
    size_t na = 0, nb = 0;
    for (const MetricRecord& m : r.records) {
      if (m.saturated) continue;
      if (m.method == "pretrained") {
        baseline += m.si_sdr_db;
        ++nb;
      } else {
        adapted += m.si_sdr_db;
        ++na;
      }
    }
    adapted /= std::max<size_t>(na, 1);
    baseline /= std::max<size_t>(nb, 1);
    csv << r.params.adaptable << "," << reference << "," << FormatDouble(adapted) << ","
        << FormatDouble(adapted - baseline) << ",ok\n";
  }
  WriteFileAtomic(config_.output_dir / "ablation.csv", csv.str());
  Log("rank-scale-grid: wrote " + (config_.output_dir / "ablation.csv").string());
}

void Pipeline::Eval() {
  const Corpus& c = corpus();
  const GruEnhancerParams base = LoadPretrained();
  std::vector<fs::path> runs;
  if (fs::exists(config_.output_dir / "runs")) {
    for (const auto& e : fs::directory_iterator(config_.output_dir / "runs")) {
      if (e.is_directory() && fs::exists(e.path() / "run.json")) runs.push_back(e.path());
    }
  }
  std::sort(runs.begin(), runs.end());

  std::vector<std::vector<MetricRecord>> chunks;
  std::mutex mu;
  std::set<std::string> modes;
  for (const fs::path& dir : runs) {
    const json run = ReadJson(dir / "run.json");
    const std::string label = run.at("label").get<std::string>();
    const std::string mode = run.at("mode").get<std::string>();
    const bool lora = run.at("method").get<std::string>() == "lora";
    Require(run.at("base_hash").get<uint64_t>() == HashParams(base), ErrorKind::kContract,
            "eval: " + dir.string() + " was adapted from a different checkpoint");
    modes.insert(mode);
    std::vector<std::vector<MetricRecord>> per(c.scenes.size());
    ParallelFor(c.scenes.size(), config_.jobs, [&](size_t i) {
      const fs::path stem = dir / "states" / Numbered("scene", i, "");
      GruEnhancerParams model =
          lora ? Merge(base, ReadAdapters(stem.string() + ".lora"))
               : Load(ReadCheckpoint(stem.string() + ".sgru"));
      per[i] = EvaluateScene(model, c.scenes[i], label, mode);
    });
    std::lock_guard lock(mu);
    for (auto& p : per) chunks.push_back(std::move(p));
  }
  if (modes.empty()) modes.insert(std::string(ModeName(ScheduleMode::kIsolated)));
  for (const std::string& mode : modes) {
    std::vector<std::vector<MetricRecord>> per(c.scenes.size());
    ParallelFor(c.scenes.size(), config_.jobs,
                [&](size_t i) { per[i] = EvaluateScene(base, c.scenes[i], "pretrained", mode); });
    for (auto& p : per) chunks.push_back(std::move(p));
  }
  std::vector<MetricRecord> records;
  for (auto& ch : chunks) {
    for (MetricRecord& r : ch) records.push_back(std::move(r));
  }
  std::sort(records.begin(), records.end(), [](const MetricRecord& a, const MetricRecord& b) {
    return std::tie(a.method, a.mode, a.scene_id, a.pair_id) <
           std::tie(b.method, b.mode, b.scene_id, b.pair_id);
  });
  WriteFileAtomic(config_.output_dir / "results.csv", ResultsCsv(records));
  Log("eval: " + std::to_string(records.size()) + " rows to " +
      (config_.output_dir / "results.csv").string());
}

void Pipeline::Report() {
  const fs::path results = config_.output_dir / "results.csv";
  Require(fs::exists(results), ErrorKind::kIo, "no results at " + results.string() +
                                                   " (run eval first)");
  const std::vector<MetricRecord> records = ParseResultsCsv(ReadFile(results));
  std::vector<TrajectoryRecord> trajectory;
  std::map<std::string, ParamAccount> accounts;
  size_t total = 0;
  if (fs::exists(config_.output_dir / "runs")) {
    std::vector<fs::path> runs;
    for (const auto& e : fs::directory_iterator(config_.output_dir / "runs")) {
      if (e.is_directory() && fs::exists(e.path() / "run.json")) runs.push_back(e.path());
    }
    std::sort(runs.begin(), runs.end());
    for (const fs::path& dir : runs) {
      const json run = ReadJson(dir / "run.json");
      const std::string label = run.at("label").get<std::string>();
      const std::string mode = run.at("mode").get<std::string>();
      total = run.at("total_params").get<size_t>();
      accounts[label] = {label, run.at("adaptable_params").get<size_t>(), total};
      for (TrajectoryRecord t : ParseTrajectoryCsv(ReadFile(dir / "trajectory.csv"))) {
        t.method = label + "/" + mode;
        trajectory.push_back(std::move(t));
      }
    }
  }
  AggregateReport report = Aggregate(records, trajectory);
  if (total == 0) total = ParamCount(config_.dims);
  accounts["pretrained"] = {"pretrained", 0, total};
  report.params.clear();
  for (const auto& [label, account] : accounts) report.params.push_back(account);
  WriteFileAtomic(config_.output_dir / "aggregate.csv", AggregateCsv(report));
  WriteFileAtomic(config_.output_dir / "report.txt", RenderReport(report));
  Log("report: " + (config_.output_dir / "report.txt").string());
}

}  // namespace sead
