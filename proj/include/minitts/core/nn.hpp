#pragma once

#include <cmath>
#include <vector>

#include "minitts/core/autograd.hpp"
#include "minitts/core/mat.hpp"
#include "minitts/core/rng.hpp"

namespace minitts {

inline Mat normal_init(int rows, int cols, double stddev, Rng& rng) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, stddev);
  return m;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Plain Adam with bias correction. Parameters are updated in store order so
// runs are reproducible regardless of how gradients were gathered.
class Adam {
 public:
  Adam(const ParamStore& store, AdamConfig cfg) : cfg_(cfg) {
    m_.reserve(store.size());
    v_.reserve(store.size());
    for (int h = 0; h < store.size(); ++h) {
      m_.push_back(Mat::Zero(store.value(h).rows(), store.value(h).cols()));
      v_.push_back(Mat::Zero(store.value(h).rows(), store.value(h).cols()));
    }
  }

  // grads must be aligned with the store; empty entries mean zero gradient
  void step(ParamStore& store, const std::vector<Mat>& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (int h = 0; h < store.size(); ++h) {
      const Mat* g = nullptr;
      Mat zero;
      if (h < static_cast<int>(grads.size()) && grads[h].size() != 0) {
        g = &grads[h];
      } else {
        zero = Mat::Zero(store.value(h).rows(), store.value(h).cols());
        g = &zero;
      }
      m_[h] = cfg_.beta1 * m_[h] + (1.0 - cfg_.beta1) * (*g);
      v_[h] = cfg_.beta2 * v_[h] + (1.0 - cfg_.beta2) * g->cwiseProduct(*g);
      Mat mhat = m_[h] / bc1;
      Mat vhat = v_[h] / bc2;
      store.value(h) -= cfg_.lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg_.eps).matrix());
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Mat> m_, v_;
  long t_ = 0;
};

inline std::vector<Mat> make_grad_acc(const ParamStore& store) {
  std::vector<Mat> acc(store.size());
  return acc;
}

}  // namespace minitts
