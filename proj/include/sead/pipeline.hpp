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

#ifndef SEAD_PIPELINE_HPP_
#define SEAD_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sead/enhancer.hpp"
#include "sead/scenes.hpp"
#include "sead/training.hpp"

namespace sead {

// Contents of the JSON run configuration. Every seed must be given
// explicitly; unknown keys are rejected.
struct RunConfig {
  std::filesystem::path output_dir;
  CorpusConfig corpus;
  EnhancerDims dims;
  uint64_t init_seed = 0;
  PretrainConfig pretrain;
  AdaptConfig adapt;
  uint64_t schedule_seed = 0;
  int jobs = 1;

  // SEAD_OUTPUT_DIR, when set, replaces output_dir.
  static RunConfig Parse(const std::string& json_text);
  static RunConfig Load(const std::filesystem::path& path);
  std::string ToJson() const;
};

// Writes `bytes` to a sibling temporary file, then renames it over `path`.
void WriteFileAtomic(const std::filesystem::path& path, const std::string& bytes);
std::string ReadFile(const std::filesystem::path& path);

// A corpus on disk: the manifest plus the WAV tree it references.
struct Corpus {
  std::vector<SceneDataset> scenes;
  PretrainCorpus pretrain;
};

// Writes scenes/<m>/{adapt,test}/..., pretrain/... and manifest.json under
// `dir`, replacing `dir` only once everything is written.
void ExportCorpus(const std::filesystem::path& dir, const CorpusConfig& config,
                  const std::vector<SceneDataset>& scenes, const PretrainCorpus& pretrain);

// Loads a corpus written by ExportCorpus or laid out by hand in the same
// format. Throws kInvalidInput when adapt and test material overlap.
Corpus LoadCorpus(const std::filesystem::path& dir);

struct RunOptions {
  std::optional<int> updates;
  std::optional<double> lr;
  std::optional<int> jobs;
  // Use this corpus directory instead of <output_dir>/corpus.
  std::optional<std::filesystem::path> wav_dir;
};

// Table 2 rows: (rank, scale).
std::vector<std::pair<int, double>> RankScaleGrid();

// Subcommand implementations. Outputs under the configured directory:
//   corpus/                      synth-data
//   model/pretrained.sgru        pretrain
//   model/pretrain_log.jsonl
//   runs/<method>_<mode>/        adapt: trajectory.csv, session.jsonl,
//                                run.json, states/
//   results.csv                  eval
//   aggregate.csv, report.txt    report
class Pipeline {
 public:
  using LogFn = std::function<void(const std::string&)>;

  Pipeline(RunConfig config, RunOptions options = {}, LogFn log = {});

  void SynthData();
  PretrainResult Pretrain();
  ProtocolResult Adapt(AdaptMethod method, ScheduleMode mode);
  // Runs the LoRA protocol once per grid row and writes ablation.csv.
  void RankScaleSweep(ScheduleMode mode);
  void Eval();
  void Report();

  const RunConfig& config() const { return config_; }
  std::filesystem::path corpus_dir() const;
  std::filesystem::path model_path() const;
  std::filesystem::path run_dir(const std::string& name) const;

 private:
  const Corpus& corpus();
  GruEnhancerParams LoadPretrained() const;
  AdaptConfig EffectiveAdaptConfig(AdaptMethod method) const;
  ProtocolResult AdaptInto(const std::string& run_name, const AdaptConfig& adapt,
                           ScheduleMode mode);
  void Log(const std::string& line) const;

  RunConfig config_;
  RunOptions options_;
  LogFn log_;
  std::optional<Corpus> corpus_;
};

}  // namespace sead

#endif  // SEAD_PIPELINE_HPP_
