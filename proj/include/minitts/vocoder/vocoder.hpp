#pragma once

#include <vector>

#include "minitts/dsp/mel.hpp"
#include "minitts/dsp/wav.hpp"

namespace minitts::vocoder {

struct GriffinLimResult {
  dsp::Waveform wave;
  // spectral convergence ||mag(stft(x)) - target|| / ||target|| after each
  // iteration; non-increasing by construction of the alternating projections
  std::vector<double> convergence;
};

// Deterministic mel inversion: pseudo-inverse mel filterbank to a linear
// magnitude target, then Griffin-Lim with zero-phase initialization. Output
// is peak-normalized to 0.97.
GriffinLimResult mel_to_wave(const dsp::MelSpectrogram& mel, int iters = 32,
                             const dsp::MelConfig& cfg = {});

}  // namespace minitts::vocoder
