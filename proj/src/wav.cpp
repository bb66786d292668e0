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

#include "sead/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "sead/error.hpp"

namespace sead {
namespace {

static_assert(std::endian::native == std::endian::little,
              "wav io assumes a little-endian host");

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T ReadLe(const std::vector<char>& buf, size_t off) {
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  return v;
}

template <typename T>
void PutLe(std::vector<char>& buf, T v) {
  const char* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

}  // namespace

Waveform ReadWav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    Fail(ErrorKind::kInvalidInput, where + ": not a RIFF/WAVE file");
  }

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  size_t data_off = 0, data_len = 0;
  size_t off = 12;
  while (off + 8 <= buf.size()) {
    const std::string id(buf.data() + off, 4);
    const uint32_t len = ReadLe<uint32_t>(buf, off + 4);
    const size_t body = off + 8;
    if (body + len > buf.size()) {
      Fail(ErrorKind::kInvalidInput, where + ": truncated chunk '" + id + "'");
    }
    if (id == "fmt ") {
      if (len < 16) Fail(ErrorKind::kInvalidInput, where + ": short fmt chunk");
      format = ReadLe<uint16_t>(buf, body);
      channels = ReadLe<uint16_t>(buf, body + 2);
      rate = ReadLe<uint32_t>(buf, body + 4);
      bits = ReadLe<uint16_t>(buf, body + 14);
      if (format == kFormatExtensible && len >= 26) {
        format = ReadLe<uint16_t>(buf, body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      data_off = body;
      data_len = len;
    }
    off = body + len + (len & 1u);
  }
  if (!have_fmt || data_off == 0) {
    Fail(ErrorKind::kInvalidInput, where + ": missing fmt or data chunk");
  }
  if (channels != 1) {
    Fail(ErrorKind::kInvalidInput, where + ": " + std::to_string(channels) +
                                       " channels; only mono input is accepted");
  }
  if (rate != static_cast<uint32_t>(kSampleRate)) {
    Fail(ErrorKind::kInvalidInput, where + ": sample rate " + std::to_string(rate) +
                                       " Hz, expected 16000 Hz");
  }

  Waveform wave;
  wave.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    const size_t n = data_len / 2;
    wave.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      wave.samples[i] = ReadLe<int16_t>(buf, data_off + 2 * i) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const size_t n = data_len / 4;
    wave.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      wave.samples[i] = ReadLe<float>(buf, data_off + 4 * i);
    }
  } else {
    Fail(ErrorKind::kInvalidInput,
         where + ": unsupported encoding (format " + std::to_string(format) +
             ", " + std::to_string(bits) + " bits)");
  }
  return wave;
}

void WriteWav(const std::filesystem::path& path, const Waveform& wave,
              WavEncoding encoding) {
  const bool pcm = encoding == WavEncoding::kPcm16;
  const uint16_t bits = pcm ? 16 : 32;
  const uint16_t block = bits / 8;
  const uint32_t data_len = static_cast<uint32_t>(wave.size() * block);

  std::vector<char> buf;
  buf.reserve(44 + data_len);
  buf.insert(buf.end(), {'R', 'I', 'F', 'F'});
  PutLe<uint32_t>(buf, 36 + data_len);
  buf.insert(buf.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  PutLe<uint32_t>(buf, 16);
  PutLe<uint16_t>(buf, pcm ? kFormatPcm : kFormatFloat);
  PutLe<uint16_t>(buf, 1);
  PutLe<uint32_t>(buf, static_cast<uint32_t>(wave.sample_rate));
  PutLe<uint32_t>(buf, static_cast<uint32_t>(wave.sample_rate) * block);
  PutLe<uint16_t>(buf, block);
  PutLe<uint16_t>(buf, bits);
  buf.insert(buf.end(), {'d', 'a', 't', 'a'});
  PutLe<uint32_t>(buf, data_len);
  for (double v : wave.samples) {
    if (pcm) {
      const double s = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
      PutLe<int16_t>(buf, static_cast<int16_t>(s));
    } else {
      PutLe<float>(buf, static_cast<float>(v));
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) Fail(ErrorKind::kIo, "write failed: " + path.string());
}

}  // namespace sead
