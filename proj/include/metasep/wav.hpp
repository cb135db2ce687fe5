// metasep/wav.hpp

// Copyright 2026  The metasep authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef METASEP_WAV_HPP_
#define METASEP_WAV_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "metasep/errors.hpp"

namespace metasep {

// 16-bit PCM mono WAV, the only audio container the corpus layer speaks.

struct PcmAudio {
  std::vector<int16_t> samples;
  int sample_rate_hz = 0;
};

namespace detail {

inline void put_u32(std::vector<char> *buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::vector<char> *buf, uint16_t v) {
  for (int i = 0; i < 2; ++i) buf->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint32_t get_u32(const char *p) {
  uint32_t v = 0;
  std::memcpy(&v, p, 4);
  return v;  // little-endian hosts only, which is all we target
}

inline uint16_t get_u16(const char *p) {
  uint16_t v = 0;
  std::memcpy(&v, p, 2);
  return v;
}

}  // namespace detail

inline void write_wav_pcm16(const std::string &path, const PcmAudio &audio) {
  std::vector<char> buf;
  uint32_t data_bytes = static_cast<uint32_t>(audio.samples.size() * 2);
  uint32_t rate = static_cast<uint32_t>(audio.sample_rate_hz);
  buf.insert(buf.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(&buf, 36 + data_bytes);
  buf.insert(buf.end(), {'W', 'A', 'V', 'E'});
  buf.insert(buf.end(), {'f', 'm', 't', ' '});
  detail::put_u32(&buf, 16);
  detail::put_u16(&buf, 1);           // PCM
  detail::put_u16(&buf, 1);           // mono
  detail::put_u32(&buf, rate);
  detail::put_u32(&buf, rate * 2);    // byte rate
  detail::put_u16(&buf, 2);           // block align
  detail::put_u16(&buf, 16);          // bits per sample
  buf.insert(buf.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(&buf, data_bytes);
  for (int16_t s : audio.samples) {
    buf.push_back(static_cast<char>(s & 0xff));
    buf.push_back(static_cast<char>((s >> 8) & 0xff));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

inline PcmAudio read_wav_pcm16(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw FormatError("'" + path + "' is not a RIFF/WAVE file");

  PcmAudio audio;
  bool got_fmt = false, got_data = false;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    std::string id(buf.data() + pos, 4);
    uint32_t chunk = detail::get_u32(buf.data() + pos + 4);
    size_t body = pos + 8;
    if (body + chunk > buf.size())
      throw FormatError("'" + path + "': truncated chunk '" + id + "'");
    if (id == "fmt ") {
      if (chunk < 16) throw FormatError("'" + path + "': short fmt chunk");
      uint16_t format = detail::get_u16(buf.data() + body);
      uint16_t channels = detail::get_u16(buf.data() + body + 2);
      uint32_t rate = detail::get_u32(buf.data() + body + 4);
      uint16_t bits = detail::get_u16(buf.data() + body + 14);
      if (format != 1 || channels != 1 || bits != 16)
        throw FormatError("'" + path +
                          "': only 16-bit PCM mono is supported");
      audio.sample_rate_hz = static_cast<int>(rate);
      got_fmt = true;
    } else if (id == "data") {
      size_t n = chunk / 2;
      audio.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        uint16_t u = detail::get_u16(buf.data() + body + 2 * i);
        audio.samples[i] = static_cast<int16_t>(u);
      }
      got_data = true;
    }
    pos = body + chunk + (chunk & 1);  // chunks are word-aligned
  }
  if (!got_fmt || !got_data)
    throw FormatError("'" + path + "': missing fmt or data chunk");
  return audio;
}

}  // namespace metasep

#endif  // METASEP_WAV_HPP_
