#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "minitts/core/mat.hpp"

namespace minitts {

// Ordered, named parameter storage shared by a model and its optimizer.
class ParamStore {
 public:
  int add(const std::string& name, Mat value);
  int find(const std::string& name) const;  // -1 if absent
  int size() const { return static_cast<int>(values_.size()); }
  Mat& value(int handle) { return values_[handle]; }
  const Mat& value(int handle) const { return values_[handle]; }
  const std::string& name(int handle) const { return names_[handle]; }
  long long scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::map<std::string, int> index_;
};

struct Var {
  int idx = -1;
};

// Reverse-mode tape over dense double matrices. A tape is built per forward
// pass (one training item), backward() fills gradients, and parameter
// gradients are read out afterwards. Tapes are single-threaded; run one per
// worker for data parallelism.
class Tape {
 public:
  explicit Tape(ParamStore* params = nullptr) : params_(params) {}

  // leaves
  Var param(int handle);
  Var constant(Mat v);

  const Mat& val(Var v) const;
  const Mat& grad_of(Var v) const;

  // elementwise / broadcasting
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_rowwise(Var a, Var row);  // row is 1 x C, broadcast over rows of a
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var exp_op(Var a);
  Var tanh_op(Var a);
  Var gelu(Var a);
  Var clamp(Var a, double lo, double hi);
  Var minimum(Var a, Var b);

  // linear algebra
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T

  // shaping
  Var slice_rows(Var a, int r0, int n);
  Var slice_cols(Var a, int c0, int n);
  Var hstack(const std::vector<Var>& parts);
  Var vstack(const std::vector<Var>& parts);
  Var upsample_repeat(Var a, int factor);
  Var upsample_zero(Var a, int factor);
  Var avgpool_rows(Var a, int factor);
  Var mean_rows(Var a);                       // T x C -> 1 x C
  Var unfold(Var a, int k, int stride, int pad);  // time-axis im2col over rows

  // embeddings
  Var gather_rows(int param_handle, const std::vector<int>& ids);

  // normalization / attention / losses
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  Var softmax_rows(Var x, bool causal);
  Var mean_all(Var a);
  Var sum_all(Var a);
  Var mse_const(Var a, const Mat& target);
  // targets: one id per row, -1 marks an ignored row; mean over valid rows
  Var cross_entropy(Var logits, const std::vector<int>& targets);
  // log p(target_t) per row, all targets must be valid; result is T x 1
  Var pick_log_probs(Var logits, const std::vector<int>& targets);
  // mean_t KL(softmax(logits_t) || softmax(ref_t)), scalar
  Var kl_to_const(Var logits, const Mat& ref_logits);

  void backward(Var loss);  // loss must be 1x1

  // gradient of the param's value, or nullptr if the param was never used
  const Mat* param_grad(int handle) const;
  // acc must be aligned with the store and pre-sized; grads are added
  void add_param_grads_to(std::vector<Mat>& acc) const;

 private:
  struct Node {
    Mat val;
    const Mat* ext = nullptr;  // set for param leaves (points into the store)
    Mat grad;
    std::function<void(Tape&, int)> back;  // null for leaves/constants; int is the node's own index
  };

  Var push(Mat val, std::function<void(Tape&, int)> back);
  Mat& grad(Var v) { return nodes_[v.idx].grad; }
  void ensure_grad(int idx);

  std::vector<Node> nodes_;
  ParamStore* params_ = nullptr;
  std::map<int, int> param_nodes_;  // handle -> node index
};

}  // namespace minitts
