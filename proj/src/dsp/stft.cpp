#include "minitts/dsp/stft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace minitts::dsp {

namespace {

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return w;
}

}  // namespace

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: size must be a power of two");
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

ComplexFrames stft(const std::vector<double>& samples, const StftConfig& cfg) {
  const int hop = cfg.hop_length, win = cfg.win_length, n_fft = cfg.n_fft;
  if (samples.empty()) throw std::invalid_argument("stft: empty input");
  const auto window = hann_window(win);
  const int n_frames = static_cast<int>((samples.size() + hop - 1) / hop);
  ComplexFrames out(n_frames);
  std::vector<std::complex<double>> buf(n_fft);
  for (int t = 0; t < n_frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    const long start = static_cast<long>(t) * hop;
    for (int i = 0; i < win; ++i) {
      long s = start + i;
      double x = (s < static_cast<long>(samples.size())) ? samples[static_cast<std::size_t>(s)] : 0.0;
      buf[i] = x * window[i];
    }
    fft(buf, false);
    out[t].assign(buf.begin(), buf.begin() + cfg.bins());
  }
  return out;
}

std::vector<double> istft(const ComplexFrames& frames, const StftConfig& cfg) {
  const int hop = cfg.hop_length, win = cfg.win_length, n_fft = cfg.n_fft;
  if (frames.empty()) throw std::invalid_argument("istft: empty input");
  const auto window = hann_window(win);
  const int n_frames = static_cast<int>(frames.size());
  const std::size_t out_len = static_cast<std::size_t>(n_frames - 1) * hop + win;
  std::vector<double> out(out_len, 0.0), norm(out_len, 0.0);
  std::vector<std::complex<double>> buf(n_fft);
  for (int t = 0; t < n_frames; ++t) {
    if (static_cast<int>(frames[t].size()) != cfg.bins()) throw std::invalid_argument("istft: bin count mismatch");
    for (int k = 0; k < cfg.bins(); ++k) buf[k] = frames[t][k];
    for (int k = cfg.bins(); k < n_fft; ++k) buf[k] = std::conj(frames[t][n_fft - k]);
    fft(buf, true);
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < win; ++i) {
      out[start + i] += buf[i].real() * window[i];
      norm[start + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < out_len; ++i) {
    out[i] /= std::max(norm[i], 1e-8);
  }
  return out;
}

Mat magnitude(const ComplexFrames& frames) {
  Mat m(static_cast<Eigen::Index>(frames.size()), static_cast<Eigen::Index>(frames[0].size()));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (std::size_t k = 0; k < frames[t].size(); ++k) m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = std::abs(frames[t][k]);
  }
  return m;
}

}  // namespace minitts::dsp
