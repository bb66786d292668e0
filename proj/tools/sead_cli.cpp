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

// Command-line front end. Talks to the library only through sead.h.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "sead/sead.h"

namespace {

struct Common {
  std::string config;
  int jobs = 0;
  std::string wav_dir;
  bool quiet = false;
};

void AddCommon(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "JSON run configuration")->required();
  cmd->add_option("--jobs", c.jobs, "parallel scene workers")->check(CLI::PositiveNumber);
  cmd->add_option("--wav-dir", c.wav_dir, "corpus directory to use instead of synthesis");
  cmd->add_flag("-q,--quiet", c.quiet, "suppress progress lines");
}

void PrintLine(const char* line, void* /*user*/) {
  std::fprintf(stderr, "%s\n", line);
  std::fflush(stderr);
}

int Fail(sead_status status) {
  std::fprintf(stderr, "sead: error: %s\n", sead_last_error());
  return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised LoRA adaptation for speech enhancement"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sead_version()));

  Common common;
  std::string method = "lora";
  std::string mode = "isolated";
  int updates = -1;
  double lr = -1.0;
  bool grid = false;

  CLI::App* synth = app.add_subcommand("synth-data", "write the synthetic scene corpus");
  CLI::App* pretrain = app.add_subcommand("pretrain", "supervised pretraining");
  CLI::App* adapt = app.add_subcommand("adapt", "run the adaptation protocol");
  CLI::App* eval = app.add_subcommand("eval", "evaluate adapted states and the baseline");
  CLI::App* report = app.add_subcommand("report", "aggregate results into tables");
  for (CLI::App* cmd : {synth, pretrain, adapt, eval, report}) AddCommon(cmd, common);
  adapt->add_option("--method", method, "lora or remixit")
      ->check(CLI::IsMember({"lora", "remixit"}));
  adapt->add_option("--mode", mode, "isolated or sequential")
      ->check(CLI::IsMember({"isolated", "sequential"}));
  adapt->add_option("--updates", updates, "updates per scene")->check(CLI::NonNegativeNumber);
  adapt->add_option("--lr", lr, "learning rate")->check(CLI::NonNegativeNumber);
  adapt->add_flag("--rank-scale-grid", grid, "sweep the (rank, scale) ablation grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  sead_run* run = nullptr;
  if (sead_status s = sead_run_open(common.config.c_str(), &run); s != SEAD_OK) return Fail(s);
  struct Closer {
    sead_run* r;
    ~Closer() { sead_run_free(r); }
  } closer{run};

  auto set = [&](const char* key, const std::string& value) {
    return sead_run_set_option(run, key, value.c_str());
  };
  sead_status s = SEAD_OK;
  if (!common.quiet) s = sead_run_set_log(run, PrintLine, nullptr);
  if (s == SEAD_OK && common.jobs > 0) s = set("jobs", std::to_string(common.jobs));
  if (s == SEAD_OK && !common.wav_dir.empty()) s = set("wav_dir", common.wav_dir);
  if (s == SEAD_OK && updates >= 0) s = set("updates", std::to_string(updates));
  if (s == SEAD_OK && lr >= 0.0) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", lr);
    s = set("lr", buf);
  }
  if (s != SEAD_OK) return Fail(s);

  if (*synth) {
    s = sead_run_synth_data(run);
  } else if (*pretrain) {
    s = sead_run_pretrain(run);
  } else if (*adapt) {
    s = grid ? sead_run_rank_scale_grid(run, mode.c_str())
             : sead_run_adapt(run, method.c_str(), mode.c_str());
  } else if (*eval) {
    s = sead_run_eval(run);
  } else if (*report) {
    s = sead_run_report(run);
  }
  return s == SEAD_OK ? 0 : Fail(s);
}
