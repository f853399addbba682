#pragma once

#include <complex>
#include <vector>

#include "minitts/core/mat.hpp"

namespace minitts::dsp {

// radix-2 iterative FFT; n must be a power of two
void fft(std::vector<std::complex<double>>& a, bool inverse);

struct StftConfig {
  int n_fft = 512;
  int win_length = 320;
  int hop_length = 160;

  int bins() const { return n_fft / 2 + 1; }
};

using ComplexFrames = std::vector<std::vector<std::complex<double>>>;  // [T][bins]

// frame t covers samples [t*hop, t*hop + win); T = ceil(N / hop)
ComplexFrames stft(const std::vector<double>& samples, const StftConfig& cfg);
// overlap-add inverse with window-square normalization; output length
// (T-1)*hop + win
std::vector<double> istft(const ComplexFrames& frames, const StftConfig& cfg);

Mat magnitude(const ComplexFrames& frames);  // [T x bins]

}  // namespace minitts::dsp
