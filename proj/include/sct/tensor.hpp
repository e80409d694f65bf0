#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sct/rng.hpp"

namespace sct {

namespace detail {
struct TensorImpl;
}

// Turns off graph recording within a scope; forward values are still
// computed but intermediates become free-standing and are released as soon
// as they go out of scope (used for inference on long inputs).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();

 private:
  bool prev_;
};
bool grad_enabled();

// Dense row-major matrix of doubles with reverse-mode autodiff. Rank is
// always 2; vectors are 1 x n, scalars 1 x 1. Copying shares the underlying
// node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols);
  static Tensor full(int rows, int cols, double value);
  static Tensor from(int rows, int cols, std::vector<double> values);
  static Tensor scalar(double value);
  // Trainable leaf initialized to zero.
  static Tensor param(int rows, int cols);
  static Tensor param_normal(int rows, int cols, double stddev, Rng& rng);

  bool defined() const { return impl_ != nullptr; }
  int rows() const;
  int cols() const;
  int size() const { return rows() * cols(); }

  std::vector<double>& data();
  const std::vector<double>& data() const;
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  double value_at(int r, int c) const;
  double scalar_value() const;  // requires 1 x 1
  bool requires_grad() const;

  void zero_grad();
  void add_to_data(int r, int c, double delta);  // test/optimizer utility

  // Reverse-mode backprop from this scalar; gradients accumulate into every
  // reachable leaf with requires_grad.
  void backward() const;

  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_op(int rows, int cols,
                        std::vector<Tensor> parents,
                        std::function<void(detail::TensorImpl&)> backward);
};

// Internal factory used by the op implementations.
Tensor make_op(int rows, int cols, std::vector<Tensor> parents,
               std::function<void(detail::TensorImpl&)> backward);

namespace detail {
struct TensorImpl {
  int rows = 0, cols = 0;
  std::vector<double> v;
  std::vector<double> g;
  bool requires_grad = false;
  bool tracked = false;  // participates in some backward pass
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward;

  void ensure_grad() {
    if (g.empty()) g.assign(v.size(), 0.0);
  }
};
}  // namespace detail

// ---- Ops. All return fresh tensors; gradients flow to tracked parents. ----

Tensor matmul(const Tensor& a, const Tensor& b);       // [m,p] x [p,n]
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);          // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);          // elementwise
Tensor add_rowvec(const Tensor& a, const Tensor& row); // [n,d] + [1,d]
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_bscalar(const Tensor& s, const Tensor& a);  // [1,1] x [r,c]

Tensor rows(const Tensor& table, const std::vector<int>& ids);
Tensor reshape(const Tensor& a, int rows, int cols);   // same element count
Tensor slice_cols(const Tensor& a, int c0, int c1);    // [r, c1-c0)
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

Tensor softmax_rows(const Tensor& a);
// Entries with valid[i]==0 are excluded (probability 0). Each row must have
// at least one valid entry.
Tensor softmax_rows_masked(const Tensor& a, const std::vector<uint8_t>& valid);
Tensor tanh_t(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor dropout(const Tensor& a, double p, Rng& rng, bool train);

// out(i, j) = a(i, idx[i*n + j]) with n == cols of out; backward scatters.
Tensor gather_cols(const Tensor& a, const std::vector<uint8_t>& idx, int n);
// out(0, class_of[s]) += a(0, s) for slots with class_of[s] >= 0.
Tensor scatter_classes(const Tensor& a, const std::vector<int>& class_of,
                       int n_classes);

Tensor sum_all(const Tensor& a);     // [1,1]
Tensor mean_all(const Tensor& a);
// Scalar dot with a constant vector: sum_i w[i] * a(0, i).
Tensor weighted_sum(const Tensor& a, const std::vector<double>& w);

}  // namespace sct
