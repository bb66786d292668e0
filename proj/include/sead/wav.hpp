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

#ifndef SEAD_WAV_HPP_
#define SEAD_WAV_HPP_

#include <filesystem>

#include "sead/signal.hpp"

namespace sead {

enum class WavEncoding { kPcm16, kFloat32 };

// Reads mono 16 kHz PCM16 or IEEE float32 RIFF/WAVE files. Multi-channel
// files are rejected rather than downmixed.
Waveform ReadWav(const std::filesystem::path& path);

void WriteWav(const std::filesystem::path& path, const Waveform& wave,
              WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace sead

#endif  // SEAD_WAV_HPP_
