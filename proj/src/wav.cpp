// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "avsm/dsp.hpp"

namespace avsm::dsp {

namespace {

std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] |
                                    (static_cast<std::uint16_t>(p[1]) << 8));
}

void wr_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void wr_u16(std::ofstream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::kFile, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  require(bytes.size() >= 44, ErrorKind::kFile, "truncated WAV: " + path);
  require(std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
              std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          ErrorKind::kFile, "not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_off = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t sz = rd_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      require(body + 16 <= bytes.size(), ErrorKind::kFile,
              "truncated fmt chunk: " + path);
      format = rd_u16(bytes.data() + body);
      channels = rd_u16(bytes.data() + body + 2);
      rate = rd_u32(bytes.data() + body + 4);
      bits = rd_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = sz;
    }
    pos = body + sz + (sz & 1);  // chunks are word-aligned
  }
  require(have_fmt && data_off != 0, ErrorKind::kFile,
          "missing fmt/data chunk: " + path);
  require(format == 1 && bits == 16, ErrorKind::kFile,
          "only PCM 16-bit supported: " + path);
  require(channels == 1, ErrorKind::kFile, "only mono supported: " + path);
  require(rate == 16000, ErrorKind::kResampleRequired,
          "expected 16000 Hz, got " + std::to_string(rate) + ": " + path);
  require(data_off + data_len <= bytes.size(), ErrorKind::kFile,
          "truncated data chunk: " + path);

  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  const std::size_t n = data_len / 2;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int16_t s = static_cast<std::int16_t>(
        rd_u16(bytes.data() + data_off + 2 * i));
    out.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return out;
}

void write_wav(const std::string& path, const AudioBuffer& audio) {
  require(audio.sample_rate > 0, ErrorKind::kConfig,
          "write_wav: bad sample rate");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), ErrorKind::kFile, "cannot write " + path);
  const std::uint32_t n = static_cast<std::uint32_t>(audio.samples.size());
  const std::uint32_t data_bytes = 2 * n;
  const std::uint32_t rate = static_cast<std::uint32_t>(audio.sample_rate);
  os.write("RIFF", 4);
  wr_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wr_u32(os, 16);
  wr_u16(os, 1);   // PCM
  wr_u16(os, 1);   // mono
  wr_u32(os, rate);
  wr_u32(os, rate * 2);  // byte rate
  wr_u16(os, 2);   // block align
  wr_u16(os, 16);  // bits
  os.write("data", 4);
  wr_u32(os, data_bytes);
  for (double v : audio.samples) {
    long s = std::lrint(v * 32768.0);
    s = std::max(-32767L, std::min(32767L, s));
    wr_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
  }
  require(os.good(), ErrorKind::kFile, "write failed: " + path);
}

}  // namespace avsm::dsp
