// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "selg/wav_io.h"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace selg {

namespace {

struct ChunkHeader {
  char id[4];
  uint32_t size;
};

uint32_t read_u32(std::istream& is) {
  uint8_t b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

uint16_t read_u16(std::istream& is) {
  uint8_t b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

void write_u32(std::ostream& os, uint32_t v) {
  uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  os.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& os, uint16_t v) {
  uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)};
  os.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_wav: cannot open " + path);

  char riff[4], wave[4];
  is.read(riff, 4);
  read_u32(is);  // overall size
  is.read(wave, 4);
  if (std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  Waveform out;

  while (is) {
    char id[4];
    is.read(id, 4);
    if (!is) break;
    uint32_t size = read_u32(is);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      format = read_u16(is);
      channels = read_u16(is);
      rate = read_u32(is);
      read_u32(is);  // byte rate
      read_u16(is);  // block align
      bits = read_u16(is);
      if (size > 16) is.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("read_wav: data before fmt: " + path);
      if (channels != 1)
        throw std::runtime_error("read_wav: only mono supported: " + path);
      if (format == 1 && bits == 16) {
        const uint32_t n = size / 2;
        std::vector<int16_t> raw(n);
        is.read(reinterpret_cast<char*>(raw.data()), size);
        out.samples.resize(n);
        for (uint32_t i = 0; i < n; ++i)
          out.samples[i] = static_cast<float>(raw[i]) / 32768.0f;
      } else if (format == 3 && bits == 32) {
        const uint32_t n = size / 4;
        out.samples.resize(n);
        is.read(reinterpret_cast<char*>(out.samples.data()), size);
      } else {
        throw std::runtime_error("read_wav: unsupported format (need PCM16 or float32): " + path);
      }
      out.rate = static_cast<int>(rate);
      return out;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
  throw std::runtime_error("read_wav: no data chunk: " + path);
}

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_wav: cannot open " + path);
  const uint32_t data_bytes = static_cast<uint32_t>(w.samples.size() * 4);
  os.write("RIFF", 4);
  write_u32(os, 4 + 8 + 16 + 8 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_u32(os, 16);
  write_u16(os, 3);  // IEEE float
  write_u16(os, 1);  // mono
  write_u32(os, static_cast<uint32_t>(w.rate));
  write_u32(os, static_cast<uint32_t>(w.rate) * 4);
  write_u16(os, 4);
  write_u16(os, 32);
  os.write("data", 4);
  write_u32(os, data_bytes);
  os.write(reinterpret_cast<const char*>(w.samples.data()), data_bytes);
  if (!os) throw std::runtime_error("write_wav: write failed: " + path);
}

}  // namespace selg
