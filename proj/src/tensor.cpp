#include "sct/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace sct {

namespace {
thread_local bool g_grad_enabled = true;

void check(bool ok, const char* op) {
  if (!ok) throw std::logic_error(std::string("tensor shape mismatch in ") + op);
}
}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(int rows, int cols) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->rows = rows;
  impl->cols = cols;
  impl->v.assign(size_t(rows) * cols, 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(int rows, int cols, double value) {
  Tensor t = zeros(rows, cols);
  std::fill(t.impl_->v.begin(), t.impl_->v.end(), value);
  return t;
}

Tensor Tensor::from(int rows, int cols, std::vector<double> values) {
  check(values.size() == size_t(rows) * cols, "from");
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->rows = rows;
  impl->cols = cols;
  impl->v = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return full(1, 1, value); }

Tensor Tensor::param(int rows, int cols) {
  Tensor t = zeros(rows, cols);
  t.impl_->requires_grad = true;
  t.impl_->tracked = true;
  t.impl_->ensure_grad();
  return t;
}

Tensor Tensor::param_normal(int rows, int cols, double stddev, Rng& rng) {
  Tensor t = param(rows, cols);
  for (auto& x : t.impl_->v) x = stddev * rng.normal();
  return t;
}

int Tensor::rows() const { return impl_ ? impl_->rows : 0; }
int Tensor::cols() const { return impl_ ? impl_->cols : 0; }
std::vector<double>& Tensor::data() { return impl_->v; }
const std::vector<double>& Tensor::data() const { return impl_->v; }
std::vector<double>& Tensor::grad() {
  impl_->ensure_grad();
  return impl_->g;
}
const std::vector<double>& Tensor::grad() const {
  impl_->ensure_grad();
  return impl_->g;
}
double Tensor::value_at(int r, int c) const {
  return impl_->v[size_t(r) * impl_->cols + c];
}
double Tensor::scalar_value() const {
  check(rows() == 1 && cols() == 1, "scalar_value");
  return impl_->v[0];
}
bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::zero_grad() {
  if (impl_) {
    impl_->ensure_grad();
    std::fill(impl_->g.begin(), impl_->g.end(), 0.0);
  }
}

void Tensor::add_to_data(int r, int c, double delta) {
  impl_->v[size_t(r) * impl_->cols + c] += delta;
}

void Tensor::backward() const {
  check(rows() == 1 && cols() == 1, "backward");
  // Post-order DFS gives a topological ordering of the tracked subgraph.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  struct Frame {
    detail::TensorImpl* node;
    size_t next = 0;
  };
  std::vector<Frame> stack;
  visited.insert(impl_.get());
  stack.push_back({impl_.get()});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      detail::TensorImpl* p = f.node->parents[f.next++].get();
      if (p->tracked && visited.insert(p).second) stack.push_back({p});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  impl_->ensure_grad();
  impl_->g[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

Tensor make_op(int rows, int cols, std::vector<Tensor> parents,
               std::function<void(detail::TensorImpl&)> backward) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->rows = rows;
  impl->cols = cols;
  impl->v.assign(size_t(rows) * cols, 0.0);
  if (g_grad_enabled) {
    bool tracked = false;
    for (const auto& p : parents) {
      if (p.impl_ && p.impl_->tracked) {
        tracked = true;
        break;
      }
    }
    if (tracked) {
      impl->tracked = true;
      impl->parents.reserve(parents.size());
      for (auto& p : parents) impl->parents.push_back(p.impl_);
      impl->backward = std::move(backward);
    }
  }
  return Tensor(std::move(impl));
}

// ---------------------------------------------------------------------------
// Ops

namespace {
using detail::TensorImpl;

inline TensorImpl& P(TensorImpl& self, size_t i) { return *self.parents[i]; }

// Accumulates g += delta only for tracked parents.
inline bool wants_grad(TensorImpl& p) { return p.tracked; }
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const int m = a.rows(), p = a.cols(), n = b.cols();
  check(b.rows() == p, "matmul");
  Tensor out = make_op(m, n, {a, b}, [m, p, n](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    TensorImpl& B = P(self, 1);
    const double* dc = self.g.data();
    if (wants_grad(A)) {
      A.ensure_grad();
      double* da = A.g.data();
      const double* bv = B.v.data();
      // dA = dC * B^T
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          const double d = dc[size_t(i) * n + j];
          if (d == 0.0) continue;
          const double* brow = bv + size_t(0);
          for (int k = 0; k < p; ++k) {
            da[size_t(i) * p + k] += d * brow[size_t(k) * n + j];
          }
        }
      }
    }
    if (wants_grad(B)) {
      B.ensure_grad();
      double* db = B.g.data();
      const double* av = A.v.data();
      // dB = A^T * dC
      for (int i = 0; i < m; ++i) {
        for (int k = 0; k < p; ++k) {
          const double av_ik = av[size_t(i) * p + k];
          if (av_ik == 0.0) continue;
          const double* dcrow = dc + size_t(i) * n;
          double* dbrow = db + size_t(k) * n;
          for (int j = 0; j < n; ++j) dbrow[j] += av_ik * dcrow[j];
        }
      }
    }
  });
  // Forward: C = A * B with i-k-j loop order.
  const double* av = a.data().data();
  const double* bv = b.data().data();
  double* cv = out.data().data();
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < p; ++k) {
      const double av_ik = av[size_t(i) * p + k];
      if (av_ik == 0.0) continue;
      const double* brow = bv + size_t(k) * n;
      double* crow = cv + size_t(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av_ik * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  Tensor out = make_op(n, m, {a}, [m, n](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        A.g[size_t(j) * n + i] += self.g[size_t(i) * m + j];
      }
    }
  });
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out.data()[size_t(j) * m + i] = a.data()[size_t(i) * n + j];
    }
  }
  return out;
}

namespace {
Tensor elementwise_binary(const Tensor& a, const Tensor& b, int mode) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "elementwise");
  const size_t sz = a.data().size();
  Tensor out = make_op(a.rows(), a.cols(), {a, b}, [sz, mode](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    TensorImpl& B = P(self, 1);
    if (wants_grad(A)) {
      A.ensure_grad();
      if (mode == 2) {  // mul
        for (size_t i = 0; i < sz; ++i) A.g[i] += self.g[i] * B.v[i];
      } else {
        for (size_t i = 0; i < sz; ++i) A.g[i] += self.g[i];
      }
    }
    if (wants_grad(B)) {
      B.ensure_grad();
      if (mode == 0) {  // add
        for (size_t i = 0; i < sz; ++i) B.g[i] += self.g[i];
      } else if (mode == 1) {  // sub
        for (size_t i = 0; i < sz; ++i) B.g[i] -= self.g[i];
      } else {  // mul
        for (size_t i = 0; i < sz; ++i) B.g[i] += self.g[i] * A.v[i];
      }
    }
  });
  for (size_t i = 0; i < sz; ++i) {
    out.data()[i] = mode == 0 ? a.data()[i] + b.data()[i]
                  : mode == 1 ? a.data()[i] - b.data()[i]
                              : a.data()[i] * b.data()[i];
  }
  return out;
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, 0); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, 1); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, 2); }

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
  const int m = a.rows(), n = a.cols();
  check(row.rows() == 1 && row.cols() == n, "add_rowvec");
  Tensor out = make_op(m, n, {a, row}, [m, n](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    TensorImpl& R = P(self, 1);
    if (wants_grad(A)) {
      A.ensure_grad();
      for (size_t i = 0; i < self.g.size(); ++i) A.g[i] += self.g[i];
    }
    if (wants_grad(R)) {
      R.ensure_grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) R.g[j] += self.g[size_t(i) * n + j];
      }
    }
  });
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out.data()[size_t(i) * n + j] = a.data()[size_t(i) * n + j] + row.data()[j];
    }
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  const size_t sz = a.data().size();
  Tensor out = make_op(a.rows(), a.cols(), {a}, [sz, c](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    for (size_t i = 0; i < sz; ++i) A.g[i] += c * self.g[i];
  });
  for (size_t i = 0; i < sz; ++i) out.data()[i] = c * a.data()[i];
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  const size_t sz = a.data().size();
  Tensor out = make_op(a.rows(), a.cols(), {a}, [sz](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    for (size_t i = 0; i < sz; ++i) A.g[i] += self.g[i];
  });
  for (size_t i = 0; i < sz; ++i) out.data()[i] = a.data()[i] + c;
  return out;
}

Tensor mul_bscalar(const Tensor& s, const Tensor& a) {
  check(s.rows() == 1 && s.cols() == 1, "mul_bscalar");
  const size_t sz = a.data().size();
  Tensor out = make_op(a.rows(), a.cols(), {s, a}, [sz](TensorImpl& self) {
    TensorImpl& S = P(self, 0);
    TensorImpl& A = P(self, 1);
    if (wants_grad(S)) {
      S.ensure_grad();
      double acc = 0.0;
      for (size_t i = 0; i < sz; ++i) acc += self.g[i] * A.v[i];
      S.g[0] += acc;
    }
    if (wants_grad(A)) {
      A.ensure_grad();
      const double sv = S.v[0];
      for (size_t i = 0; i < sz; ++i) A.g[i] += sv * self.g[i];
    }
  });
  const double sv = s.scalar_value();
  for (size_t i = 0; i < sz; ++i) out.data()[i] = sv * a.data()[i];
  return out;
}

Tensor rows(const Tensor& table, const std::vector<int>& ids) {
  const int d = table.cols();
  const int m = static_cast<int>(ids.size());
  for (int id : ids) check(id >= 0 && id < table.rows(), "rows: id range");
  Tensor out = make_op(m, d, {table}, [ids, d, m](TensorImpl& self) {
    TensorImpl& T = P(self, 0);
    if (!wants_grad(T)) return;
    T.ensure_grad();
    for (int i = 0; i < m; ++i) {
      double* trow = T.g.data() + size_t(ids[i]) * d;
      const double* grow = self.g.data() + size_t(i) * d;
      for (int j = 0; j < d; ++j) trow[j] += grow[j];
    }
  });
  for (int i = 0; i < m; ++i) {
    std::copy_n(table.data().data() + size_t(ids[i]) * d, d,
                out.data().data() + size_t(i) * d);
  }
  return out;
}

Tensor reshape(const Tensor& a, int r, int c) {
  check(size_t(r) * c == a.data().size(), "reshape");
  const size_t sz = a.data().size();
  Tensor out = make_op(r, c, {a}, [sz](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    for (size_t i = 0; i < sz; ++i) A.g[i] += self.g[i];
  });
  out.data() = a.data();
  return out;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  const int m = a.rows(), n = a.cols(), w = c1 - c0;
  check(c0 >= 0 && c1 <= n && w > 0, "slice_cols");
  Tensor out = make_op(m, w, {a}, [m, n, w, c0](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < w; ++j) {
        A.g[size_t(i) * n + c0 + j] += self.g[size_t(i) * w + j];
      }
    }
  });
  for (int i = 0; i < m; ++i) {
    std::copy_n(a.data().data() + size_t(i) * n + c0, w,
                out.data().data() + size_t(i) * w);
  }
  return out;
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  const int n = a.cols(), h = r1 - r0;
  check(r0 >= 0 && r1 <= a.rows() && h > 0, "slice_rows");
  Tensor out = make_op(h, n, {a}, [n, h, r0](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < n; ++j) {
        A.g[size_t(i + r0) * n + j] += self.g[size_t(i) * n + j];
      }
    }
  });
  std::copy_n(a.data().data() + size_t(r0) * n, size_t(h) * n,
              out.data().data());
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_cols");
  const int m = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    check(p.rows() == m, "concat_cols");
    total += p.cols();
  }
  std::vector<int> widths;
  for (const auto& p : parts) widths.push_back(p.cols());
  Tensor out = make_op(m, total, parts, [m, total, widths](TensorImpl& self) {
    int off = 0;
    for (size_t pi = 0; pi < widths.size(); ++pi) {
      TensorImpl& A = P(self, pi);
      const int w = widths[pi];
      if (wants_grad(A)) {
        A.ensure_grad();
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < w; ++j) {
            A.g[size_t(i) * w + j] += self.g[size_t(i) * total + off + j];
          }
        }
      }
      off += w;
    }
  });
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.cols();
    for (int i = 0; i < m; ++i) {
      std::copy_n(p.data().data() + size_t(i) * w, w,
                  out.data().data() + size_t(i) * total + off);
    }
    off += w;
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_rows");
  const int n = parts[0].cols();
  int total = 0;
  for (const auto& p : parts) {
    check(p.cols() == n, "concat_rows");
    total += p.rows();
  }
  std::vector<int> heights;
  for (const auto& p : parts) heights.push_back(p.rows());
  Tensor out = make_op(total, n, parts, [n, heights](TensorImpl& self) {
    int off = 0;
    for (size_t pi = 0; pi < heights.size(); ++pi) {
      TensorImpl& A = P(self, pi);
      const int h = heights[pi];
      if (wants_grad(A)) {
        A.ensure_grad();
        for (int i = 0; i < h; ++i) {
          for (int j = 0; j < n; ++j) {
            A.g[size_t(i) * n + j] += self.g[size_t(i + off) * n + j];
          }
        }
      }
      off += h;
    }
  });
  int off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.data().data(), p.data().size(),
                out.data().data() + size_t(off) * n);
    off += p.rows();
  }
  return out;
}

namespace {
Tensor softmax_impl(const Tensor& a, const std::vector<uint8_t>* valid) {
  const int m = a.rows(), n = a.cols();
  if (valid) check(valid->size() == size_t(m) * n, "softmax mask");
  std::vector<uint8_t> mask = valid ? *valid : std::vector<uint8_t>();
  Tensor out = make_op(m, n, {a}, [m, n](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    // dx = y * (dy - sum(dy * y)) rowwise; masked entries have y == 0.
    for (int i = 0; i < m; ++i) {
      const double* y = self.v.data() + size_t(i) * n;
      const double* dy = self.g.data() + size_t(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += dy[j] * y[j];
      double* dx = A.g.data() + size_t(i) * n;
      for (int j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  });
  for (int i = 0; i < m; ++i) {
    const double* x = a.data().data() + size_t(i) * n;
    double* y = out.data().data() + size_t(i) * n;
    double maxv = -1e308;
    bool any = false;
    for (int j = 0; j < n; ++j) {
      if (!mask.empty() && !mask[size_t(i) * n + j]) continue;
      any = true;
      maxv = std::max(maxv, x[j]);
    }
    check(any, "softmax: empty row");
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      if (!mask.empty() && !mask[size_t(i) * n + j]) {
        y[j] = 0.0;
        continue;
      }
      y[j] = std::exp(x[j] - maxv);
      z += y[j];
    }
    for (int j = 0; j < n; ++j) y[j] /= z;
  }
  return out;
}
}  // namespace

Tensor softmax_rows(const Tensor& a) { return softmax_impl(a, nullptr); }
Tensor softmax_rows_masked(const Tensor& a, const std::vector<uint8_t>& valid) {
  return softmax_impl(a, &valid);
}

namespace {
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
  const size_t sz = a.data().size();
  Tensor out = make_op(a.rows(), a.cols(), {a}, [sz, bwd](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    for (size_t i = 0; i < sz; ++i) {
      A.g[i] += self.g[i] * bwd(A.v[i], self.v[i]);
    }
  });
  for (size_t i = 0; i < sz; ++i) out.data()[i] = fwd(a.data()[i]);
  return out;
}
}  // namespace

Tensor tanh_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  return unary_op(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
               x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Tensor log_t(const Tensor& a) {
  const size_t sz = a.data().size();
  Tensor out = make_op(a.rows(), a.cols(), {a}, [sz](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    // Zero upstream gradient skips the 1/x factor, so log(0) entries that
    // carry no loss weight stay out of the backward pass.
    for (size_t i = 0; i < sz; ++i) {
      if (self.g[i] != 0.0) A.g[i] += self.g[i] / A.v[i];
    }
  });
  for (size_t i = 0; i < sz; ++i) out.data()[i] = std::log(a.data()[i]);
  return out;
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const int m = a.rows(), n = a.cols();
  check(gain.rows() == 1 && gain.cols() == n, "layer_norm gain");
  check(bias.rows() == 1 && bias.cols() == n, "layer_norm bias");
  Tensor out = make_op(m, n, {a, gain, bias}, [m, n, eps](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    TensorImpl& G = P(self, 1);
    TensorImpl& B = P(self, 2);
    for (int i = 0; i < m; ++i) {
      const double* x = A.v.data() + size_t(i) * n;
      const double* dy = self.g.data() + size_t(i) * n;
      double mean = 0.0;
      for (int j = 0; j < n; ++j) mean += x[j];
      mean /= n;
      double var = 0.0;
      for (int j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
      var /= n;
      const double inv_sigma = 1.0 / std::sqrt(var + eps);
      if (wants_grad(G) || wants_grad(B)) {
        G.ensure_grad();
        B.ensure_grad();
        for (int j = 0; j < n; ++j) {
          const double xhat = (x[j] - mean) * inv_sigma;
          G.g[j] += dy[j] * xhat;
          B.g[j] += dy[j];
        }
      }
      if (wants_grad(A)) {
        A.ensure_grad();
        double mean_a = 0.0, mean_ax = 0.0;
        for (int j = 0; j < n; ++j) {
          const double aa = G.v[j] * dy[j];
          const double xhat = (x[j] - mean) * inv_sigma;
          mean_a += aa;
          mean_ax += aa * xhat;
        }
        mean_a /= n;
        mean_ax /= n;
        double* dx = A.g.data() + size_t(i) * n;
        for (int j = 0; j < n; ++j) {
          const double aa = G.v[j] * dy[j];
          const double xhat = (x[j] - mean) * inv_sigma;
          dx[j] += inv_sigma * (aa - mean_a - xhat * mean_ax);
        }
      }
    }
  });
  for (int i = 0; i < m; ++i) {
    const double* x = a.data().data() + size_t(i) * n;
    double* y = out.data().data() + size_t(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += x[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= n;
    const double inv_sigma = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) {
      y[j] = gain.data()[j] * ((x[j] - mean) * inv_sigma) + bias.data()[j];
    }
  }
  return out;
}

Tensor dropout(const Tensor& a, double p, Rng& rng, bool train) {
  if (!train || p <= 0.0) return a;
  const size_t sz = a.data().size();
  std::vector<uint8_t> keep(sz);
  const double inv_keep = 1.0 / (1.0 - p);
  for (size_t i = 0; i < sz; ++i) keep[i] = rng.uniform() >= p ? 1 : 0;
  Tensor out = make_op(a.rows(), a.cols(), {a}, [sz, keep, inv_keep](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    for (size_t i = 0; i < sz; ++i) {
      if (keep[i]) A.g[i] += self.g[i] * inv_keep;
    }
  });
  for (size_t i = 0; i < sz; ++i) {
    out.data()[i] = keep[i] ? a.data()[i] * inv_keep : 0.0;
  }
  return out;
}

Tensor gather_cols(const Tensor& a, const std::vector<uint8_t>& idx, int n) {
  const int m = a.rows(), k = a.cols();
  check(idx.size() == size_t(m) * n, "gather_cols");
  for (uint8_t b : idx) check(b < k, "gather_cols: index range");
  Tensor out = make_op(m, n, {a}, [idx, m, n, k](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    for (int i = 0; i < m; ++i) {
      const double* grow = self.g.data() + size_t(i) * n;
      double* arow = A.g.data() + size_t(i) * k;
      const uint8_t* irow = idx.data() + size_t(i) * n;
      for (int j = 0; j < n; ++j) arow[irow[j]] += grow[j];
    }
  });
  for (int i = 0; i < m; ++i) {
    const double* arow = a.data().data() + size_t(i) * k;
    double* orow = out.data().data() + size_t(i) * n;
    const uint8_t* irow = idx.data() + size_t(i) * n;
    for (int j = 0; j < n; ++j) orow[j] = arow[irow[j]];
  }
  return out;
}

Tensor scatter_classes(const Tensor& a, const std::vector<int>& class_of,
                       int n_classes) {
  check(a.rows() == 1, "scatter_classes");
  const int s = a.cols();
  check(class_of.size() == size_t(s), "scatter_classes: map size");
  Tensor out = make_op(1, n_classes, {a}, [class_of, s](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    for (int i = 0; i < s; ++i) {
      if (class_of[i] >= 0) A.g[i] += self.g[class_of[i]];
    }
  });
  for (int i = 0; i < s; ++i) {
    const int c = class_of[i];
    if (c >= 0) {
      check(c < n_classes, "scatter_classes: class range");
      out.data()[c] += a.data()[i];
    }
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  const size_t sz = a.data().size();
  Tensor out = make_op(1, 1, {a}, [sz](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    const double g = self.g[0];
    for (size_t i = 0; i < sz; ++i) A.g[i] += g;
  });
  double acc = 0.0;
  for (size_t i = 0; i < sz; ++i) acc += a.data()[i];
  out.data()[0] = acc;
  return out;
}

Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / double(a.size()));
}

Tensor weighted_sum(const Tensor& a, const std::vector<double>& w) {
  check(a.rows() == 1 && w.size() == size_t(a.cols()), "weighted_sum");
  const int n = a.cols();
  Tensor out = make_op(1, 1, {a}, [w, n](TensorImpl& self) {
    TensorImpl& A = P(self, 0);
    if (!wants_grad(A)) return;
    A.ensure_grad();
    const double g = self.g[0];
    for (int i = 0; i < n; ++i) A.g[i] += g * w[i];
  });
  // Zero-weight entries are skipped so that w = 0 against an infinite value
  // (log of an exactly-zero probability) contributes nothing.
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    if (w[i] != 0.0) acc += a.data()[i] * w[i];
  }
  out.data()[0] = acc;
  return out;
}

}  // namespace sct
