#pragma once

#include <string>
#include <vector>

namespace minitts::dsp {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate_hz = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
  double rms() const;
};

// 16-bit PCM, mono, little-endian
void write_wav(const std::string& path, const Waveform& wave);
Waveform read_wav(const std::string& path);

}  // namespace minitts::dsp
