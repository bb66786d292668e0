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

#include "sead/sead.h"

#include <charconv>
#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <system_error>

#include "sead/enhancer.hpp"
#include "sead/error.hpp"
#include "sead/lora.hpp"
#include "sead/metrics.hpp"
#include "sead/pipeline.hpp"

struct sead_model {
  sead::GruEnhancerParams params;
};

struct sead_adapters {
  sead::AdapterSet set;
};

struct sead_run {
  sead::RunConfig config;
  sead::RunOptions options;
  sead_log_fn log = nullptr;
  void* log_user = nullptr;
  std::unique_ptr<sead::Pipeline> pipeline;

  sead::Pipeline& Get() {
    if (!pipeline) {
      sead::Pipeline::LogFn fn;
      if (log != nullptr) {
        fn = [f = log, u = log_user](const std::string& line) { f(line.c_str(), u); };
      }
      pipeline = std::make_unique<sead::Pipeline>(config, options, std::move(fn));
    }
    return *pipeline;
  }
};

namespace {

thread_local std::string g_last_error;

sead_status StatusFor(sead::ErrorKind kind) {
  switch (kind) {
    case sead::ErrorKind::kIo: return SEAD_ERR_IO;
    case sead::ErrorKind::kNumeric: return SEAD_ERR_NUMERIC;
    default: return SEAD_ERR_CONTRACT;
  }
}

template <typename Fn>
sead_status Guard(Fn&& fn) {
  try {
    fn();
    return SEAD_OK;
  } catch (const sead::Error& e) {
    g_last_error = e.what();
    return StatusFor(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return SEAD_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SEAD_ERR_CONTRACT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SEAD_ERR_CONTRACT;
  }
}

void NotNull(const void* p, const char* what) {
  if (p == nullptr) sead::Fail(sead::ErrorKind::kContract, std::string(what) + " is NULL");
}

}  // namespace

extern "C" {

const char* sead_version(void) { return "0.1.0"; }

const char* sead_last_error(void) { return g_last_error.c_str(); }

sead_status sead_model_create(int bands, int hidden, uint64_t seed, sead_model** out) {
  return Guard([&] {
    NotNull(out, "out");
    sead::Require(bands >= 2 && hidden >= 1, sead::ErrorKind::kInvalidConfig,
                  "model: bands must be >= 2 and hidden >= 1");
    *out = new sead_model{sead::InitParams({bands, hidden}, seed)};
  });
}

sead_status sead_model_load(const char* path, sead_model** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new sead_model{sead::Load(sead::ReadCheckpoint(path))};
  });
}

sead_status sead_model_save(const sead_model* model, const char* path) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(path, "path");
    sead::WriteCheckpoint(path, sead::Save(model->params));
  });
}

void sead_model_free(sead_model* model) { delete model; }

sead_status sead_model_dims(const sead_model* model, int* bands, int* hidden) {
  return Guard([&] {
    NotNull(model, "model");
    if (bands != nullptr) *bands = model->params.dims.bands;
    if (hidden != nullptr) *hidden = model->params.dims.hidden;
  });
}

sead_status sead_model_param_count(const sead_model* model, uint64_t* out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(out, "out");
    *out = sead::ParamCount(model->params);
  });
}

sead_status sead_model_hash(const sead_model* model, uint64_t* out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(out, "out");
    *out = sead::HashParams(model->params);
  });
}

sead_status sead_model_enhance(const sead_model* model, const sead_adapters* adapters,
                               const double* in, size_t n, double* out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(in, "in");
    NotNull(out, "out");
    const sead::Waveform y(std::vector<double>(in, in + n));
    const sead::Waveform x =
        sead::Enhance(y, model->params, adapters != nullptr ? &adapters->set : nullptr);
    std::memcpy(out, x.samples.data(), n * sizeof(double));
  });
}

sead_status sead_adapters_create(const sead_model* model, int rank, double scale, uint64_t seed,
                                 sead_adapters** out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(out, "out");
    sead::LoraConfig config;
    config.rank = rank;
    config.scale = scale;
    *out = new sead_adapters{sead::InitAdapters(config, model->params.dims, seed)};
  });
}

sead_status sead_adapters_load(const char* path, sead_adapters** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new sead_adapters{sead::ReadAdapters(path)};
  });
}

sead_status sead_adapters_save(const sead_adapters* adapters, const char* path) {
  return Guard([&] {
    NotNull(adapters, "adapters");
    NotNull(path, "path");
    sead::WriteAdapters(path, adapters->set);
  });
}

void sead_adapters_free(sead_adapters* adapters) { delete adapters; }

sead_status sead_adapters_param_count(const sead_adapters* adapters, uint64_t* out) {
  return Guard([&] {
    NotNull(adapters, "adapters");
    NotNull(out, "out");
    *out = adapters->set.ParamCount();
  });
}

sead_status sead_adapters_merge(const sead_model* model, const sead_adapters* adapters,
                                sead_model** out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(adapters, "adapters");
    NotNull(out, "out");
    *out = new sead_model{sead::Merge(model->params, adapters->set)};
  });
}

sead_status sead_lora_param_count(int bands, int hidden, int rank, uint64_t* out) {
  return Guard([&] {
    NotNull(out, "out");
    sead::LoraConfig config;
    config.rank = rank;
    *out = sead::LoraParamCount(config, {bands, hidden});
  });
}

sead_status sead_si_sdr(const double* estimate, const double* reference, size_t n, double* db,
                        int* saturated) {
  return Guard([&] {
    NotNull(estimate, "estimate");
    NotNull(reference, "reference");
    NotNull(db, "db");
    const sead::MetricValue v = sead::SiSdr({estimate, n}, {reference, n});
    *db = v.db;
    if (saturated != nullptr) *saturated = v.saturated ? 1 : 0;
  });
}

sead_status sead_snr_db(const double* estimate, const double* reference, size_t n, double* db,
                        int* saturated) {
  return Guard([&] {
    NotNull(estimate, "estimate");
    NotNull(reference, "reference");
    NotNull(db, "db");
    const sead::MetricValue v = sead::SnrDb({estimate, n}, {reference, n});
    *db = v.db;
    if (saturated != nullptr) *saturated = v.saturated ? 1 : 0;
  });
}

sead_status sead_run_open(const char* config_path, sead_run** out) {
  return Guard([&] {
    NotNull(config_path, "config_path");
    NotNull(out, "out");
    auto run = std::make_unique<sead_run>();
    run->config = sead::RunConfig::Load(config_path);
    *out = run.release();
  });
}

void sead_run_free(sead_run* run) { delete run; }

sead_status sead_run_set_log(sead_run* run, sead_log_fn fn, void* user) {
  return Guard([&] {
    NotNull(run, "run");
    sead::Require(!run->pipeline, sead::ErrorKind::kContract,
                  "run: logging must be configured before the first subcommand");
    run->log = fn;
    run->log_user = user;
  });
}

sead_status sead_run_set_option(sead_run* run, const char* key, const char* value) {
  return Guard([&] {
    NotNull(run, "run");
    NotNull(key, "key");
    NotNull(value, "value");
    sead::Require(!run->pipeline, sead::ErrorKind::kContract,
                  "run: options must be set before the first subcommand");
    const std::string k(key);
    const std::string v(value);
    auto bad = [&] {
      sead::Fail(sead::ErrorKind::kInvalidConfig, "bad value for " + k + ": " + v);
    };
    if (k == "updates" || k == "jobs") {
      int x = 0;
      const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      if (ec != std::errc() || p != v.data() + v.size()) bad();
      (k == "updates" ? run->options.updates : run->options.jobs) = x;
    } else if (k == "lr") {
      double x = 0.0;
      const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      if (ec != std::errc() || p != v.data() + v.size()) bad();
      run->options.lr = x;
    } else if (k == "wav_dir") {
      run->options.wav_dir = v;
    } else {
      sead::Fail(sead::ErrorKind::kInvalidConfig, "unknown option '" + k + "'");
    }
  });
}

sead_status sead_run_synth_data(sead_run* run) {
  return Guard([&] {
    NotNull(run, "run");
    run->Get().SynthData();
  });
}

sead_status sead_run_pretrain(sead_run* run) {
  return Guard([&] {
    NotNull(run, "run");
    run->Get().Pretrain();
  });
}

sead_status sead_run_adapt(sead_run* run, const char* method, const char* mode) {
  return Guard([&] {
    NotNull(run, "run");
    NotNull(method, "method");
    NotNull(mode, "mode");
    run->Get().Adapt(sead::ParseMethod(method), sead::ParseMode(mode));
  });
}

sead_status sead_run_rank_scale_grid(sead_run* run, const char* mode) {
  return Guard([&] {
    NotNull(run, "run");
    NotNull(mode, "mode");
    run->Get().RankScaleSweep(sead::ParseMode(mode));
  });
}

sead_status sead_run_eval(sead_run* run) {
  return Guard([&] {
    NotNull(run, "run");
    run->Get().Eval();
  });
}

sead_status sead_run_report(sead_run* run) {
  return Guard([&] {
    NotNull(run, "run");
    run->Get().Report();
  });
}

}  // extern "C"
