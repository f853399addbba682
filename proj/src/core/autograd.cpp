#include "minitts/core/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace minitts {

namespace {

void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

int ParamStore::add(const std::string& name, Mat value) {
  check(index_.find(name) == index_.end(), "ParamStore: duplicate parameter name");
  int h = static_cast<int>(values_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
  index_[name] = h;
  return h;
}

int ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

long long ParamStore::scalar_count() const {
  long long n = 0;
  for (const auto& v : values_) n += static_cast<long long>(v.size());
  return n;
}

const Mat& Tape::val(Var v) const {
  const Node& n = nodes_[v.idx];
  return n.ext ? *n.ext : n.val;
}

const Mat& Tape::grad_of(Var v) const { return nodes_[v.idx].grad; }

Var Tape::push(Mat val, std::function<void(Tape&, int)> back) {
  Node n;
  n.val = std::move(val);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::ensure_grad(int idx) {
  Node& n = nodes_[idx];
  const Mat& v = n.ext ? *n.ext : n.val;
  if (n.grad.rows() != v.rows() || n.grad.cols() != v.cols()) n.grad = Mat::Zero(v.rows(), v.cols());
}

Var Tape::param(int handle) {
  check(params_ != nullptr, "Tape: no ParamStore attached");
  auto it = param_nodes_.find(handle);
  if (it != param_nodes_.end()) return Var{it->second};
  Node n;
  n.ext = &params_->value(handle);
  nodes_.push_back(std::move(n));
  int idx = static_cast<int>(nodes_.size()) - 1;
  param_nodes_[handle] = idx;
  return Var{idx};
}

Var Tape::constant(Mat v) { return push(std::move(v), nullptr); }

Var Tape::add(Var a, Var b) {
  check(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "add: shape mismatch");
  int ia = a.idx, ib = b.idx;
  return push(val(a) + val(b), [ia, ib](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(ia);
    t.ensure_grad(ib);
    t.nodes_[ia].grad += g;
    t.nodes_[ib].grad += g;
  });
}

Var Tape::sub(Var a, Var b) {
  check(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "sub: shape mismatch");
  int ia = a.idx, ib = b.idx;
  return push(val(a) - val(b), [ia, ib](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(ia);
    t.ensure_grad(ib);
    t.nodes_[ia].grad += g;
    t.nodes_[ib].grad -= g;
  });
}

Var Tape::add_rowwise(Var a, Var row) {
  check(val(row).rows() == 1 && val(row).cols() == val(a).cols(), "add_rowwise: row must be 1 x C");
  int ia = a.idx, ir = row.idx;
  Mat out = val(a);
  out.rowwise() += val(row).row(0);
  return push(std::move(out), [ia, ir](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(ia);
    t.ensure_grad(ir);
    t.nodes_[ia].grad += g;
    t.nodes_[ir].grad.row(0) += g.colwise().sum();
  });
}

Var Tape::mul(Var a, Var b) {
  check(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "mul: shape mismatch");
  int ia = a.idx, ib = b.idx;
  return push(val(a).cwiseProduct(val(b)), [ia, ib](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(ia);
    t.ensure_grad(ib);
    t.nodes_[ia].grad += g.cwiseProduct(t.val(Var{ib}));
    t.nodes_[ib].grad += g.cwiseProduct(t.val(Var{ia}));
  });
}

Var Tape::scale(Var a, double s) {
  int ia = a.idx;
  return push(val(a) * s, [ia, s](Tape& t, int self) {
    t.ensure_grad(ia);
    t.nodes_[ia].grad += t.nodes_[self].grad * s;
  });
}

Var Tape::add_scalar(Var a, double s) {
  int ia = a.idx;
  return push(val(a).array() + s, [ia](Tape& t, int self) {
    t.ensure_grad(ia);
    t.nodes_[ia].grad += t.nodes_[self].grad;
  });
}

Var Tape::exp_op(Var a) {
  int ia = a.idx;
  Mat out = val(a).array().exp();
  return push(std::move(out), [ia](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    const Mat& out = t.nodes_[self].val;
    t.ensure_grad(ia);
    t.nodes_[ia].grad += g.cwiseProduct(out);
  });
}

Var Tape::tanh_op(Var a) {
  int ia = a.idx;
  Mat out = val(a).array().tanh();
  return push(std::move(out), [ia](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    const Mat& out = t.nodes_[self].val;
    t.ensure_grad(ia);
    t.nodes_[ia].grad += g.cwiseProduct((1.0 - out.array().square()).matrix());
  });
}

Var Tape::gelu(Var a) {
  int ia = a.idx;
  const Mat& x = val(a);
  Mat inner = (kGeluC * (x.array() + kGeluA * x.array().cube())).matrix();
  Mat th = inner.array().tanh();
  Mat out = (0.5 * x.array() * (1.0 + th.array())).matrix();
  return push(std::move(out), [ia, th = std::move(th)](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    const Mat& x = t.val(Var{ia});
    Eigen::ArrayXXd sech2 = 1.0 - th.array().square();
    Eigen::ArrayXXd du = kGeluC * (1.0 + 3.0 * kGeluA * x.array().square());
    Eigen::ArrayXXd d = 0.5 * (1.0 + th.array()) + 0.5 * x.array() * sech2 * du;
    t.ensure_grad(ia);
    t.nodes_[ia].grad += g.cwiseProduct(d.matrix());
  });
}

Var Tape::clamp(Var a, double lo, double hi) {
  int ia = a.idx;
  const Mat& x = val(a);
  Mat out = x.array().min(hi).max(lo);
  return push(std::move(out), [ia, lo, hi](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    const Mat& x = t.val(Var{ia});
    t.ensure_grad(ia);
    Mat mask = ((x.array() >= lo) && (x.array() <= hi)).cast<double>();
    t.nodes_[ia].grad += g.cwiseProduct(mask);
  });
}

Var Tape::minimum(Var a, Var b) {
  check(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "minimum: shape mismatch");
  int ia = a.idx, ib = b.idx;
  Mat out = val(a).cwiseMin(val(b));
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    const Mat& av = t.val(Var{ia});
    const Mat& bv = t.val(Var{ib});
    t.ensure_grad(ia);
    t.ensure_grad(ib);
    // ties route to a, so the subgradient is deterministic
    Mat take_a = (av.array() <= bv.array()).cast<double>();
    t.nodes_[ia].grad += g.cwiseProduct(take_a);
    t.nodes_[ib].grad += g.cwiseProduct((1.0 - take_a.array()).matrix());
  });
}

Var Tape::matmul(Var a, Var b) {
  check(val(a).cols() == val(b).rows(), "matmul: inner dim mismatch");
  int ia = a.idx, ib = b.idx;
  return push(val(a) * val(b), [ia, ib](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(ia);
    t.ensure_grad(ib);
    t.nodes_[ia].grad.noalias() += g * t.val(Var{ib}).transpose();
    t.nodes_[ib].grad.noalias() += t.val(Var{ia}).transpose() * g;
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  check(val(a).cols() == val(b).cols(), "matmul_nt: inner dim mismatch");
  int ia = a.idx, ib = b.idx;
  return push(val(a) * val(b).transpose(), [ia, ib](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(ia);
    t.ensure_grad(ib);
    t.nodes_[ia].grad.noalias() += g * t.val(Var{ib});
    t.nodes_[ib].grad.noalias() += g.transpose() * t.val(Var{ia});
  });
}

Var Tape::slice_rows(Var a, int r0, int n) {
  check(r0 >= 0 && n >= 0 && r0 + n <= val(a).rows(), "slice_rows: out of range");
  int ia = a.idx;
  return push(val(a).middleRows(r0, n), [ia, r0, n](Tape& t, int self) {
    t.ensure_grad(ia);
    t.nodes_[ia].grad.middleRows(r0, n) += t.nodes_[self].grad;
  });
}

Var Tape::slice_cols(Var a, int c0, int n) {
  check(c0 >= 0 && n >= 0 && c0 + n <= val(a).cols(), "slice_cols: out of range");
  int ia = a.idx;
  return push(val(a).middleCols(c0, n), [ia, c0, n](Tape& t, int self) {
    t.ensure_grad(ia);
    t.nodes_[ia].grad.middleCols(c0, n) += t.nodes_[self].grad;
  });
}

Var Tape::hstack(const std::vector<Var>& parts) {
  check(!parts.empty(), "hstack: empty");
  Eigen::Index rows = val(parts[0]).rows(), cols = 0;
  for (Var p : parts) {
    check(val(p).rows() == rows, "hstack: row mismatch");
    cols += val(p).cols();
  }
  Mat out(rows, cols);
  std::vector<int> idx;
  std::vector<int> offs;
  Eigen::Index c = 0;
  for (Var p : parts) {
    out.middleCols(c, val(p).cols()) = val(p);
    idx.push_back(p.idx);
    offs.push_back(static_cast<int>(c));
    c += val(p).cols();
  }
  return push(std::move(out), [idx, offs](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      t.ensure_grad(idx[k]);
      Mat& pg = t.nodes_[idx[k]].grad;
      pg += g.middleCols(offs[k], pg.cols());
    }
  });
}

Var Tape::vstack(const std::vector<Var>& parts) {
  check(!parts.empty(), "vstack: empty");
  Eigen::Index cols = val(parts[0]).cols(), rows = 0;
  for (Var p : parts) {
    check(val(p).cols() == cols, "vstack: col mismatch");
    rows += val(p).rows();
  }
  Mat out(rows, cols);
  std::vector<int> idx;
  std::vector<int> offs;
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, val(p).rows()) = val(p);
    idx.push_back(p.idx);
    offs.push_back(static_cast<int>(r));
    r += val(p).rows();
  }
  return push(std::move(out), [idx, offs](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      t.ensure_grad(idx[k]);
      Mat& pg = t.nodes_[idx[k]].grad;
      pg += g.middleRows(offs[k], pg.rows());
    }
  });
}

Var Tape::upsample_repeat(Var a, int factor) {
  check(factor >= 1, "upsample_repeat: factor must be >= 1");
  int ia = a.idx;
  const Mat& x = val(a);
  Mat out(x.rows() * factor, x.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) = x.row(r / factor);
  return push(std::move(out), [ia, factor](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(ia);
    Mat& pg = t.nodes_[ia].grad;
    for (Eigen::Index r = 0; r < g.rows(); ++r) pg.row(r / factor) += g.row(r);
  });
}

Var Tape::upsample_zero(Var a, int factor) {
  check(factor >= 1, "upsample_zero: factor must be >= 1");
  int ia = a.idx;
  const Mat& x = val(a);
  Mat out = Mat::Zero(x.rows() * factor, x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r * factor) = x.row(r);
  return push(std::move(out), [ia, factor](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(ia);
    Mat& pg = t.nodes_[ia].grad;
    for (Eigen::Index r = 0; r < pg.rows(); ++r) pg.row(r) += g.row(r * factor);
  });
}

Var Tape::avgpool_rows(Var a, int factor) {
  check(factor >= 1, "avgpool_rows: factor must be >= 1");
  int ia = a.idx;
  const Mat& x = val(a);
  Eigen::Index t_out = (x.rows() + factor - 1) / factor;
  Mat out(t_out, x.cols());
  for (Eigen::Index g = 0; g < t_out; ++g) {
    Eigen::Index r0 = g * factor;
    Eigen::Index n = std::min<Eigen::Index>(factor, x.rows() - r0);
    out.row(g) = x.middleRows(r0, n).colwise().mean();
  }
  return push(std::move(out), [ia, factor](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(ia);
    Mat& pg = t.nodes_[ia].grad;
    for (Eigen::Index gi = 0; gi < g.rows(); ++gi) {
      Eigen::Index r0 = gi * factor;
      Eigen::Index n = std::min<Eigen::Index>(factor, pg.rows() - r0);
      for (Eigen::Index r = r0; r < r0 + n; ++r) pg.row(r) += g.row(gi) / static_cast<double>(n);
    }
  });
}

Var Tape::mean_rows(Var a) {
  int ia = a.idx;
  const Mat& x = val(a);
  Mat out = x.colwise().mean();
  double inv_n = 1.0 / static_cast<double>(x.rows());
  return push(std::move(out), [ia, inv_n](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(ia);
    Mat& pg = t.nodes_[ia].grad;
    pg.rowwise() += (g.row(0) * inv_n).eval();
  });
}

Var Tape::unfold(Var a, int k, int stride, int pad) {
  const Mat& x = val(a);
  Eigen::Index t_in = x.rows(), c = x.cols();
  check((t_in + 2 * pad - k) % stride == 0, "unfold: length not compatible with kernel/stride");
  Eigen::Index t_out = (t_in + 2 * pad - k) / stride + 1;
  Mat out = Mat::Zero(t_out, k * c);
  for (Eigen::Index t = 0; t < t_out; ++t) {
    for (int j = 0; j < k; ++j) {
      Eigen::Index src = t * stride - pad + j;
      if (src >= 0 && src < t_in) out.block(t, j * c, 1, c) = x.row(src);
    }
  }
  int ia = a.idx;
  int ci = static_cast<int>(c);
  return push(std::move(out), [ia, k, stride, pad, ci](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(ia);
    Mat& pg = t.nodes_[ia].grad;
    for (Eigen::Index row = 0; row < g.rows(); ++row) {
      for (int j = 0; j < k; ++j) {
        Eigen::Index src = row * stride - pad + j;
        if (src >= 0 && src < pg.rows()) pg.row(src) += g.block(row, j * ci, 1, ci);
      }
    }
  });
}

Var Tape::gather_rows(int param_handle, const std::vector<int>& ids) {
  Var table = param(param_handle);
  const Mat& tab = val(table);
  for (int id : ids) check(id >= 0 && id < tab.rows(), "gather_rows: id out of range");
  Mat out(static_cast<Eigen::Index>(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
  int it = table.idx;
  return push(std::move(out), [it, ids](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(it);
    Mat& pg = t.nodes_[it].grad;
    for (std::size_t i = 0; i < ids.size(); ++i) pg.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Mat& xv = val(x);
  check(val(gain).rows() == 1 && val(gain).cols() == xv.cols(), "layer_norm: gain must be 1 x C");
  check(val(bias).rows() == 1 && val(bias).cols() == xv.cols(), "layer_norm: bias must be 1 x C");
  Eigen::Index t_rows = xv.rows(), c = xv.cols();
  Mat xhat(t_rows, c);
  Vec inv_std(t_rows);
  for (Eigen::Index r = 0; r < t_rows; ++r) {
    double mu = xv.row(r).mean();
    double var = (xv.row(r).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = is;
    xhat.row(r) = ((xv.row(r).array() - mu) * is).matrix();
  }
  Mat out = xhat;
  out.array().rowwise() *= val(gain).row(0).array();
  out.rowwise() += val(bias).row(0);
  int ix = x.idx, ig = gain.idx, ib = bias.idx;
  return push(std::move(out),
              [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int self) {
                const Mat& g = t.nodes_[self].grad;
                t.ensure_grad(ix);
                t.ensure_grad(ig);
                t.ensure_grad(ib);
                const Mat& gain = t.val(Var{ig});
                t.nodes_[ib].grad.row(0) += g.colwise().sum();
                t.nodes_[ig].grad.row(0) += g.cwiseProduct(xhat).colwise().sum();
                Mat& xg = t.nodes_[ix].grad;
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                  Eigen::ArrayXd gh = (g.row(r).array() * gain.row(0).array()).transpose();
                  Eigen::ArrayXd xh = xhat.row(r).transpose().array();
                  double m1 = gh.mean();
                  double m2 = (gh * xh).mean();
                  xg.row(r) += (inv_std(r) * (gh - m1 - xh * m2)).matrix().transpose();
                }
              });
}

Var Tape::softmax_rows(Var x, bool causal) {
  const Mat& z = val(x);
  if (causal) check(z.rows() == z.cols(), "softmax_rows: causal mask needs a square matrix");
  Mat p(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    Eigen::Index n = causal ? r + 1 : z.cols();
    double m = z.row(r).head(n).maxCoeff();
    Eigen::ArrayXd e = (z.row(r).head(n).transpose().array() - m).exp();
    double s = e.sum();
    p.row(r).setZero();
    p.row(r).head(n) = (e / s).matrix().transpose();
  }
  int ix = x.idx;
  return push(std::move(p), [ix](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    const Mat& p = t.nodes_[self].val;
    t.ensure_grad(ix);
    Mat gp = g.cwiseProduct(p);
    Vec rowsum = gp.rowwise().sum();
    t.nodes_[ix].grad += gp - p.cwiseProduct(rowsum.replicate(1, p.cols()));
  });
}

Var Tape::mean_all(Var a) {
  int ia = a.idx;
  const Mat& x = val(a);
  double inv_n = 1.0 / static_cast<double>(x.size());
  Mat out(1, 1);
  out(0, 0) = x.mean();
  return push(std::move(out), [ia, inv_n](Tape& t, int self) {
    double g = t.nodes_[self].grad(0, 0);
    t.ensure_grad(ia);
    t.nodes_[ia].grad.array() += g * inv_n;
  });
}

Var Tape::sum_all(Var a) {
  int ia = a.idx;
  Mat out(1, 1);
  out(0, 0) = val(a).sum();
  return push(std::move(out), [ia](Tape& t, int self) {
    double g = t.nodes_[self].grad(0, 0);
    t.ensure_grad(ia);
    t.nodes_[ia].grad.array() += g;
  });
}

Var Tape::mse_const(Var a, const Mat& target) {
  check(val(a).rows() == target.rows() && val(a).cols() == target.cols(), "mse_const: shape mismatch");
  int ia = a.idx;
  Mat diff = val(a) - target;
  Mat out(1, 1);
  out(0, 0) = diff.array().square().mean();
  double inv_n = 1.0 / static_cast<double>(diff.size());
  return push(std::move(out), [ia, diff = std::move(diff), inv_n](Tape& t, int self) {
    double g = t.nodes_[self].grad(0, 0);
    t.ensure_grad(ia);
    t.nodes_[ia].grad += (2.0 * g * inv_n) * diff;
  });
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& targets) {
  const Mat& z = val(logits);
  check(static_cast<Eigen::Index>(targets.size()) == z.rows(), "cross_entropy: one target per row");
  int valid = 0;
  double loss = 0.0;
  Mat p(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    int tgt = targets[r];
    if (tgt < 0) {
      p.row(r).setZero();
      continue;
    }
    check(tgt < z.cols(), "cross_entropy: target id out of range");
    double m = z.row(r).maxCoeff();
    Eigen::ArrayXd e = (z.row(r).transpose().array() - m).exp();
    double s = e.sum();
    p.row(r) = (e / s).matrix().transpose();
    loss += std::log(s) + m - z(r, tgt);
    ++valid;
  }
  check(valid > 0, "cross_entropy: no valid targets");
  Mat out(1, 1);
  out(0, 0) = loss / valid;
  int ix = logits.idx;
  return push(std::move(out), [ix, targets, p = std::move(p), valid](Tape& t, int self) {
    double g = t.nodes_[self].grad(0, 0) / valid;
    t.ensure_grad(ix);
    Mat& xg = t.nodes_[ix].grad;
    for (Eigen::Index r = 0; r < xg.rows(); ++r) {
      int tgt = targets[r];
      if (tgt < 0) continue;
      xg.row(r) += g * p.row(r);
      xg(r, tgt) -= g;
    }
  });
}

Var Tape::pick_log_probs(Var logits, const std::vector<int>& targets) {
  const Mat& z = val(logits);
  check(static_cast<Eigen::Index>(targets.size()) == z.rows(), "pick_log_probs: one target per row");
  Mat p(z.rows(), z.cols());
  Mat out(z.rows(), 1);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    int tgt = targets[r];
    check(tgt >= 0 && tgt < z.cols(), "pick_log_probs: target id out of range");
    double m = z.row(r).maxCoeff();
    Eigen::ArrayXd e = (z.row(r).transpose().array() - m).exp();
    double s = e.sum();
    p.row(r) = (e / s).matrix().transpose();
    out(r, 0) = z(r, tgt) - (std::log(s) + m);
  }
  int ix = logits.idx;
  return push(std::move(out), [ix, targets, p = std::move(p)](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.ensure_grad(ix);
    Mat& xg = t.nodes_[ix].grad;
    for (Eigen::Index r = 0; r < xg.rows(); ++r) {
      xg.row(r) -= g(r, 0) * p.row(r);
      xg(r, targets[r]) += g(r, 0);
    }
  });
}

Var Tape::kl_to_const(Var logits, const Mat& ref_logits) {
  const Mat& z = val(logits);
  check(z.rows() == ref_logits.rows() && z.cols() == ref_logits.cols(), "kl_to_const: shape mismatch");
  Eigen::Index t_rows = z.rows();
  Mat p(z.rows(), z.cols()), lp(z.rows(), z.cols()), lq(z.rows(), z.cols());
  Vec kl_row(t_rows);
  for (Eigen::Index r = 0; r < t_rows; ++r) {
    double m = z.row(r).maxCoeff();
    double lse = std::log((z.row(r).array() - m).exp().sum()) + m;
    lp.row(r) = (z.row(r).array() - lse).matrix();
    p.row(r) = lp.row(r).array().exp().matrix();
    double mq = ref_logits.row(r).maxCoeff();
    double lseq = std::log((ref_logits.row(r).array() - mq).exp().sum()) + mq;
    lq.row(r) = (ref_logits.row(r).array() - lseq).matrix();
    kl_row(r) = (p.row(r).array() * (lp.row(r) - lq.row(r)).array()).sum();
  }
  Mat out(1, 1);
  out(0, 0) = kl_row.mean();
  int ix = logits.idx;
  return push(std::move(out), [ix, p = std::move(p), lp = std::move(lp), lq = std::move(lq),
                               kl_row = std::move(kl_row), t_rows](Tape& t, int self) {
    double g = t.nodes_[self].grad(0, 0) / static_cast<double>(t_rows);
    t.ensure_grad(ix);
    Mat& xg = t.nodes_[ix].grad;
    for (Eigen::Index r = 0; r < t_rows; ++r) {
      xg.row(r) += g * (p.row(r).array() * ((lp.row(r) - lq.row(r)).array() - kl_row(r))).matrix();
    }
  });
}

void Tape::backward(Var loss) {
  check(val(loss).rows() == 1 && val(loss).cols() == 1, "backward: loss must be a scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  ensure_grad(loss.idx);
  nodes_[loss.idx].grad(0, 0) = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.back || n.grad.size() == 0) continue;
    n.back(*this, i);
  }
}

const Mat* Tape::param_grad(int handle) const {
  auto it = param_nodes_.find(handle);
  if (it == param_nodes_.end()) return nullptr;
  const Node& n = nodes_[it->second];
  if (n.grad.size() == 0) return nullptr;
  return &n.grad;
}

void Tape::add_param_grads_to(std::vector<Mat>& acc) const {
  for (const auto& [handle, idx] : param_nodes_) {
    const Node& n = nodes_[idx];
    if (n.grad.size() == 0) continue;
    if (acc[static_cast<std::size_t>(handle)].size() == 0) {
      const Mat& v = n.ext ? *n.ext : n.val;
      acc[static_cast<std::size_t>(handle)] = Mat::Zero(v.rows(), v.cols());
    }
    acc[static_cast<std::size_t>(handle)] += n.grad;
  }
}

}  // namespace minitts
