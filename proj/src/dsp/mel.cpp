#include "minitts/dsp/mel.hpp"

#include <cmath>
#include <stdexcept>

namespace minitts::dsp {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

Mat mel_filterbank(const MelConfig& cfg) {
  const int bins = cfg.stft.bins();
  Mat fb = Mat::Zero(cfg.n_mels, bins);
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> centers(cfg.n_mels + 2);
  for (int m = 0; m < cfg.n_mels + 2; ++m) {
    double mel = mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1);
    centers[m] = mel_to_hz(mel);
  }
  const double bin_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.stft.n_fft;
  for (int m = 0; m < cfg.n_mels; ++m) {
    double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int k = 0; k < bins; ++k) {
      double f = k * bin_hz;
      if (f <= lo || f >= hi) continue;
      fb(m, k) = (f < mid) ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

MelSpectrogram wav_to_mel(const Waveform& wave, const MelConfig& cfg) {
  if (wave.sample_rate_hz != cfg.sample_rate_hz) {
    throw std::invalid_argument("wav_to_mel: sample rate mismatch");
  }
  ComplexFrames frames = stft(wave.samples, cfg.stft);
  Mat mag = magnitude(frames);            // [T x bins]
  Mat fb = mel_filterbank(cfg);           // [n_mels x bins]
  Mat mel = mag * fb.transpose();         // [T x n_mels]
  MelSpectrogram out;
  out.frames = (mel.array().max(cfg.log_floor)).log().matrix();
  out.frame_rate_hz = cfg.frame_rate_hz();
  out.sample_rate_hz = cfg.sample_rate_hz;
  return out;
}

Mat mel_to_linear_magnitude(const MelSpectrogram& mel, const MelConfig& cfg) {
  if (!mel.frames.allFinite()) throw std::invalid_argument("mel_to_linear_magnitude: non-finite mel");
  Mat fb = mel_filterbank(cfg);
  Mat pinv = fb.completeOrthogonalDecomposition().pseudoInverse();  // [bins x n_mels]
  Mat linear = mel.frames.array().exp().matrix() * pinv.transpose();
  return linear.cwiseMax(0.0);
}

}  // namespace minitts::dsp
