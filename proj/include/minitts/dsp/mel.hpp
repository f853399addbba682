#pragma once

#include "minitts/core/mat.hpp"
#include "minitts/dsp/stft.hpp"
#include "minitts/dsp/wav.hpp"

namespace minitts::dsp {

// Log-magnitude mel spectrogram, rows = frames. Frame rate is fixed at
// 100 Hz by the analysis config (16 kHz / hop 160), so
// T = ceil(duration_s * 100) exactly.
struct MelSpectrogram {
  Mat frames;  // [T x n_mels]
  double frame_rate_hz = 100.0;
  int sample_rate_hz = 16000;

  int length() const { return static_cast<int>(frames.rows()); }
  int n_mels() const { return static_cast<int>(frames.cols()); }
};

struct MelConfig {
  StftConfig stft;
  int n_mels = 64;
  double fmin_hz = 40.0;
  double fmax_hz = 7600.0;
  int sample_rate_hz = 16000;
  double log_floor = 1e-5;

  double frame_rate_hz() const {
    return static_cast<double>(sample_rate_hz) / stft.hop_length;
  }
};

Mat mel_filterbank(const MelConfig& cfg);  // [n_mels x bins]

MelSpectrogram wav_to_mel(const Waveform& wave, const MelConfig& cfg);

// pseudo-inverse of the filterbank applied to exp(log-mel), clamped at zero
Mat mel_to_linear_magnitude(const MelSpectrogram& mel, const MelConfig& cfg);

}  // namespace minitts::dsp
