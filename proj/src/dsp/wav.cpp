#include "minitts/dsp/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace minitts::dsp {

double Waveform::rms() const {
  if (samples.empty()) return 0.0;
  double s = 0.0;
  for (double x : samples) s += x * x;
  return std::sqrt(s / static_cast<double>(samples.size()));
}

namespace {

void put_u32(std::ofstream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u16(std::ofstream& os, std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); }

std::uint32_t get_u32(std::ifstream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

std::uint16_t get_u16(std::ifstream& is) {
  std::uint16_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 2);
  return v;
}

}  // namespace

void write_wav(const std::string& path, const Waveform& wave) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_wav: cannot open " + path);
  std::uint32_t n = static_cast<std::uint32_t>(wave.samples.size());
  std::uint32_t data_bytes = n * 2;
  os.write("RIFF", 4);
  put_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put_u32(os, 16);
  put_u16(os, 1);  // PCM
  put_u16(os, 1);  // mono
  put_u32(os, static_cast<std::uint32_t>(wave.sample_rate_hz));
  put_u32(os, static_cast<std::uint32_t>(wave.sample_rate_hz * 2));
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  put_u32(os, data_bytes);
  for (double x : wave.samples) {
    double c = std::max(-1.0, std::min(1.0, x));
    auto s = static_cast<std::int16_t>(std::lrint(c * 32767.0));
    os.write(reinterpret_cast<const char*>(&s), 2);
  }
  if (!os) throw std::runtime_error("write_wav: write failed for " + path);
}

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_wav: cannot open " + path);
  char tag[5] = {0};
  is.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0) throw std::runtime_error("read_wav: not a RIFF file: " + path);
  get_u32(is);
  is.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0) throw std::runtime_error("read_wav: not a WAVE file: " + path);

  Waveform wave;
  std::uint16_t channels = 0, bits = 0;
  bool got_fmt = false;
  while (is.read(tag, 4)) {
    std::uint32_t size = get_u32(is);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      std::uint16_t format = get_u16(is);
      channels = get_u16(is);
      wave.sample_rate_hz = static_cast<int>(get_u32(is));
      get_u32(is);
      get_u16(is);
      bits = get_u16(is);
      if (size > 16) is.seekg(size - 16, std::ios::cur);
      if (format != 1) throw std::runtime_error("read_wav: only PCM supported");
      got_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      if (!got_fmt) throw std::runtime_error("read_wav: data chunk before fmt");
      if (channels != 1 || bits != 16) throw std::runtime_error("read_wav: expect 16-bit mono");
      std::uint32_t count = size / 2;
      wave.samples.resize(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        std::int16_t s = 0;
        is.read(reinterpret_cast<char*>(&s), 2);
        wave.samples[i] = static_cast<double>(s) / 32767.0;
      }
      return wave;
    } else {
      is.seekg(size, std::ios::cur);
    }
  }
  throw std::runtime_error("read_wav: no data chunk in " + path);
}

}  // namespace minitts::dsp
