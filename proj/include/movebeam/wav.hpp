#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "movebeam/signal.hpp"

namespace movebeam {

// RIFF/WAVE reader and writer for 16-bit integer PCM and 32-bit float PCM.
// 16-bit samples map to sample/32768 on read; writing rounds and clamps to
// [-32768, 32767]. Float PCM round trips losslessly.

enum class WavEncoding { kPcm16, kFloat32 };

namespace detail_wav {

inline void put_u16(std::ostream& os, uint16_t v) {
  char b[2] = {(char)(v & 0xFF), (char)((v >> 8) & 0xFF)};
  os.write(b, 2);
}
inline void put_u32(std::ostream& os, uint32_t v) {
  char b[4] = {(char)(v & 0xFF), (char)((v >> 8) & 0xFF), (char)((v >> 16) & 0xFF),
               (char)((v >> 24) & 0xFF)};
  os.write(b, 4);
}
inline uint16_t get_u16(const unsigned char* p) { return (uint16_t)(p[0] | (p[1] << 8)); }
inline uint32_t get_u32(const unsigned char* p) {
  return (uint32_t)p[0] | ((uint32_t)p[1] << 8) | ((uint32_t)p[2] << 16) | ((uint32_t)p[3] << 24);
}

}  // namespace detail_wav

inline MultichannelWaveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("wav: cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  using namespace detail_wav;
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("wav: malformed header in " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  uint32_t data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    uint32_t chunk_len = get_u32(buf.data() + pos + 4);
    const unsigned char* body = buf.data() + pos + 8;
    if (pos + 8 + chunk_len > buf.size()) throw std::runtime_error("wav: truncated chunk in " + path);
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw std::runtime_error("wav: malformed fmt chunk in " + path);
      format = get_u16(body);
      channels = get_u16(body + 2);
      sample_rate = get_u32(body + 4);
      bits = get_u16(body + 14);
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (!data || channels == 0 || sample_rate == 0)
    throw std::runtime_error("wav: missing fmt or data chunk in " + path);

  bool pcm16 = format == 1 && bits == 16;
  bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw std::runtime_error("wav: unsupported encoding in " + path +
                             " (need 16-bit PCM or 32-bit float)");
  uint32_t bytes_per = bits / 8;
  uint32_t frames = data_len / (bytes_per * channels);
  MultichannelWaveform w = MultichannelWaveform::zeros(channels, frames, (int)sample_rate);
  for (uint32_t i = 0; i < frames; ++i) {
    for (uint16_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (size_t)(i * channels + c) * bytes_per;
      if (pcm16) {
        int16_t s = (int16_t)get_u16(p);
        w.channels[c][i] = (double)s / 32768.0;
      } else {
        uint32_t u = get_u32(p);
        float v = 0;
        std::memcpy(&v, &u, 4);
        w.channels[c][i] = (double)v;
      }
    }
  }
  return w;
}

inline void write_wav(const std::string& path, const MultichannelWaveform& wave,
                      WavEncoding enc = WavEncoding::kFloat32) {
  wave.validate();
  using namespace detail_wav;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("wav: cannot write " + path);
  const uint16_t channels = (uint16_t)wave.num_channels();
  const uint32_t frames = (uint32_t)wave.num_samples();
  const uint16_t bits = enc == WavEncoding::kPcm16 ? 16 : 32;
  const uint16_t format = enc == WavEncoding::kPcm16 ? 1 : 3;
  const uint32_t byte_rate = (uint32_t)wave.sample_rate * channels * bits / 8;
  const uint32_t data_len = frames * channels * bits / 8;

  f.write("RIFF", 4);
  put_u32(f, 36 + data_len);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(f, 16);
  put_u16(f, format);
  put_u16(f, channels);
  put_u32(f, (uint32_t)wave.sample_rate);
  put_u32(f, byte_rate);
  put_u16(f, (uint16_t)(channels * bits / 8));
  put_u16(f, bits);
  f.write("data", 4);
  put_u32(f, data_len);
  for (uint32_t i = 0; i < frames; ++i) {
    for (uint16_t c = 0; c < channels; ++c) {
      double v = wave.channels[c][i];
      if (enc == WavEncoding::kPcm16) {
        long s = (long)std::llround(v * 32768.0);
        s = std::min<long>(32767, std::max<long>(-32768, s));
        put_u16(f, (uint16_t)(int16_t)s);
      } else {
        float fv = (float)v;
        uint32_t u = 0;
        std::memcpy(&u, &fv, 4);
        put_u32(f, u);
      }
    }
  }
  if (!f) throw std::runtime_error("wav: write failed for " + path);
}

}  // namespace movebeam
