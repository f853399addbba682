#include "minitts/vocoder/vocoder.hpp"

#include <cmath>
#include <stdexcept>

#include "minitts/dsp/stft.hpp"

namespace minitts::vocoder {

using dsp::ComplexFrames;

namespace {

ComplexFrames with_target_magnitude(const ComplexFrames& phase_src, const Mat& target) {
  ComplexFrames out(phase_src.size());
  for (std::size_t t = 0; t < phase_src.size(); ++t) {
    out[t].resize(phase_src[t].size());
    for (std::size_t k = 0; k < phase_src[t].size(); ++k) {
      double mag = std::abs(phase_src[t][k]);
      std::complex<double> unit = mag > 1e-12 ? phase_src[t][k] / mag : std::complex<double>(1.0, 0.0);
      out[t][k] = target(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) * unit;
    }
  }
  return out;
}

double spectral_convergence(const ComplexFrames& frames, const Mat& target) {
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (std::size_t k = 0; k < frames[t].size(); ++k) {
      double d = std::abs(frames[t][k]) - target(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k));
      num += d * d;
      den += target(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) *
             target(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k));
    }
  }
  return std::sqrt(num / std::max(den, 1e-12));
}

}  // namespace

GriffinLimResult mel_to_wave(const dsp::MelSpectrogram& mel, int iters, const dsp::MelConfig& cfg) {
  if (iters < 1) throw std::invalid_argument("mel_to_wave: iters must be >= 1");
  if (!mel.frames.allFinite()) throw std::invalid_argument("mel_to_wave: non-finite mel input");

  Mat target = dsp::mel_to_linear_magnitude(mel, cfg);  // [T x bins]

  // zero-phase init: spectrum is the magnitude itself
  ComplexFrames spec(static_cast<std::size_t>(target.rows()));
  for (Eigen::Index t = 0; t < target.rows(); ++t) {
    spec[static_cast<std::size_t>(t)].resize(static_cast<std::size_t>(target.cols()));
    for (Eigen::Index k = 0; k < target.cols(); ++k) {
      spec[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] = target(t, k);
    }
  }

  // keep the iterate at exactly T*hop samples so analysis always returns T
  // frames and each step stays a true alternating projection
  const std::size_t n_samples = spec.size() * static_cast<std::size_t>(cfg.stft.hop_length);

  GriffinLimResult result;
  std::vector<double> x;
  for (int it = 0; it < iters; ++it) {
    x = dsp::istft(spec, cfg.stft);
    x.resize(n_samples);
    ComplexFrames analyzed = dsp::stft(x, cfg.stft);
    result.convergence.push_back(spectral_convergence(analyzed, target));
    spec = with_target_magnitude(analyzed, target);
  }
  x = dsp::istft(spec, cfg.stft);
  x.resize(n_samples);

  // attenuate-only normalization: loud output is scaled into range, quiet
  // input (e.g. a floor-valued mel) stays quiet
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.97) {
    for (double& v : x) v = v / peak * 0.97;
  }
  result.wave.samples = std::move(x);
  result.wave.sample_rate_hz = mel.sample_rate_hz;
  return result;
}

}  // namespace minitts::vocoder
