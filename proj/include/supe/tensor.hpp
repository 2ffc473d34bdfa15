// Dense row-major tensors with reverse-mode autodiff.
//
// A Tensor is a shared handle to a graph node. Ops are free functions that
// record a backward closure; backward() runs the closures once each in
// reverse topological order. Results whose inputs all have requires_grad
// false carry no graph at all, so inference-only code pays nothing extra.
//
// Scalar type is a template parameter: float everywhere in training code,
// double inside the finite-difference checker.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#ifdef SUPE_USE_BLAS
extern "C" {
void cblas_sgemm(int order, int transA, int transB, int m, int n, int k,
                 float alpha, const float* A, int lda, const float* B, int ldb,
                 float beta, float* C, int ldc);
void cblas_dgemm(int order, int transA, int transB, int m, int n, int k,
                 double alpha, const double* A, int lda, const double* B,
                 int ldb, double beta, double* C, int ldc);
}
#endif

namespace supe {

class error : public std::runtime_error {
 public:
  error(std::string category, const std::string& msg)
      : std::runtime_error(msg), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// C[m,n] = A(m,k) * B(k,n), optionally transposing the stored operands.
// beta=1 accumulates into C.
template <class S>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const S* a,
          const S* b, S* c, S beta) {
#ifdef SUPE_USE_BLAS
  constexpr int kRowMajor = 101, kNoTrans = 111, kTrans = 112;
  int lda = trans_a ? m : k;
  int ldb = trans_b ? k : n;
  if constexpr (std::is_same_v<S, float>) {
    cblas_sgemm(kRowMajor, trans_a ? kTrans : kNoTrans,
                trans_b ? kTrans : kNoTrans, m, n, k, 1.0f, a, lda, b, ldb,
                beta, c, n);
    return;
  } else if constexpr (std::is_same_v<S, double>) {
    cblas_dgemm(kRowMajor, trans_a ? kTrans : kNoTrans,
                trans_b ? kTrans : kNoTrans, m, n, k, 1.0, a, lda, b, ldb,
                beta, c, n);
    return;
  }
#endif
  // Fallback: ikj loops over the logical (post-transpose) matrices.
  auto at_a = [&](int i, int p) { return trans_a ? a[p * m + i] : a[i * k + p]; };
  auto at_b = [&](int p, int j) { return trans_b ? b[j * k + p] : b[p * n + j]; };
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) c[i * n + j] *= beta;
    for (int p = 0; p < k; ++p) {
      S av = at_a(i, p);
      if (av == S(0)) continue;
      for (int j = 0; j < n; ++j) c[i * n + j] += av * at_b(p, j);
    }
  }
}

template <class S>
struct TensorNode {
  std::vector<int> shape;
  std::vector<S> val;
  std::vector<S> grad;  // allocated lazily by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  int64_t size() const { return (int64_t)val.size(); }
  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), S(0));
  }
};

template <class S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<S>> n) : n_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape) { return full(std::move(shape), S(0)); }

  static Tensor full(std::vector<int> shape, S v) {
    auto n = std::make_shared<TensorNode<S>>();
    int64_t sz = 1;
    for (int d : shape) {
      if (d <= 0) throw error("shape", "non-positive dimension in " + shape_str(shape));
      sz *= d;
    }
    n->shape = std::move(shape);
    n->val.assign(sz, v);
    return Tensor(n);
  }

  static Tensor from(std::vector<int> shape, std::vector<S> data) {
    auto t = zeros(std::move(shape));
    if ((int64_t)data.size() != t.size())
      throw error("shape", "data length " + std::to_string(data.size()) +
                               " does not match shape " + shape_str(t.shape()));
    t.n_->val = std::move(data);
    return t;
  }

  static Tensor scalar(S v) { return full({1}, v); }

  Tensor& set_requires_grad(bool b = true) {
    n_->requires_grad = b;
    return *this;
  }

  bool defined() const { return n_ != nullptr; }
  const std::vector<int>& shape() const { return n_->shape; }
  int64_t size() const { return n_->size(); }
  std::vector<S>& val() { return n_->val; }
  const std::vector<S>& val() const { return n_->val; }
  std::vector<S>& grad() { n_->ensure_grad(); return n_->grad; }
  bool requires_grad() const { return n_->requires_grad; }
  S item() const {
    if (size() != 1) throw error("shape", "item() on tensor of shape " + shape_str(shape()));
    return n_->val[0];
  }
  TensorNode<S>* node() const { return n_.get(); }
  std::shared_ptr<TensorNode<S>> handle() const { return n_; }

 private:
  std::shared_ptr<TensorNode<S>> n_;
};

namespace detail {

template <class S>
Tensor<S> make_op(std::vector<int> shape, std::vector<S> val,
                  std::vector<Tensor<S>> parents,
                  std::function<void(TensorNode<S>&)> backprop) {
  auto n = std::make_shared<TensorNode<S>>();
  n->shape = std::move(shape);
  n->val = std::move(val);
  bool needs = false;
  for (auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.handle());
    n->backprop = std::move(backprop);
  }
  return Tensor<S>(n);
}

template <class S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw error("shape", std::string(op) + ": shape mismatch " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

template <class S>
void backward(const Tensor<S>& root) {
  if (root.size() != 1)
    throw error("shape", "backward() root must be scalar, got " + shape_str(root.shape()));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; each node visited once.
  std::vector<TensorNode<S>*> topo;
  std::unordered_set<TensorNode<S>*> seen;
  std::vector<std::pair<TensorNode<S>*, size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode<S>* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad();
  root.node()->grad[0] = S(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

// ---- elementwise ----

template <class S, class Fwd, class Bwd>
Tensor<S> unary_op(const Tensor<S>& a, Fwd f, Bwd dfdx_from_xy) {
  std::vector<S> v(a.size());
  for (int64_t i = 0; i < a.size(); ++i) v[i] = f(a.val()[i]);
  return detail::make_op<S>(
      a.shape(), std::move(v), {a},
      [a, dfdx_from_xy](TensorNode<S>& out) {
        auto* pa = a.node();
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (int64_t i = 0; i < out.size(); ++i)
          pa->grad[i] += out.grad[i] * dfdx_from_xy(pa->val[i], out.val[i]);
      });
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return x > S(0) ? x : S(0); },
                  [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <class S>
Tensor<S> tanh_op(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return std::tanh(x); },
                  [](S, S y) { return S(1) - y * y; });
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return S(1) / (S(1) + std::exp(-x)); },
                  [](S, S y) { return y * (S(1) - y); });
}

template <class S>
Tensor<S> exp_op(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <class S>
Tensor<S> log_op(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return std::log(x); },
                  [](S x, S) { return S(1) / x; });
}

// log(1 + e^x), overflow-safe
template <class S>
Tensor<S> softplus(const Tensor<S>& a) {
  return unary_op(
      a,
      [](S x) { return x > S(30) ? x : std::log1p(std::exp(x)); },
      [](S x, S) { return S(1) / (S(1) + std::exp(-x)); });
}

template <class S>
Tensor<S> neg(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return -x; }, [](S, S) { return S(-1); });
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  return unary_op(a, [c](S x) { return c * x; }, [c](S, S) { return c; });
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  return unary_op(a, [c](S x) { return x + c; }, [](S, S) { return S(1); });
}

// Gradient passes through where the input is strictly inside [lo, hi].
template <class S>
Tensor<S> clamp(const Tensor<S>& a, S lo, S hi) {
  return unary_op(
      a, [lo, hi](S x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](S x, S) { return (x > lo && x < hi) ? S(1) : S(0); });
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  // Same shape, or b broadcast across rows of a (bias add on [m,n] + [n]).
  bool bias = a.shape().size() == 2 && b.shape().size() == 1 &&
              a.shape()[1] == b.shape()[0];
  if (!bias) detail::check_same_shape(a, b, "add");
  std::vector<S> v(a.size());
  if (bias) {
    int m = a.shape()[0], n = a.shape()[1];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) v[i * n + j] = a.val()[i * n + j] + b.val()[j];
  } else {
    for (int64_t i = 0; i < a.size(); ++i) v[i] = a.val()[i] + b.val()[i];
  }
  return detail::make_op<S>(
      a.shape(), std::move(v), {a, b}, [a, b, bias](TensorNode<S>& out) {
        if (a.node()->requires_grad) {
          a.node()->ensure_grad();
          for (int64_t i = 0; i < out.size(); ++i) a.node()->grad[i] += out.grad[i];
        }
        if (b.node()->requires_grad) {
          b.node()->ensure_grad();
          if (bias) {
            int m = out.shape[0], n = out.shape[1];
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < n; ++j) b.node()->grad[j] += out.grad[i * n + j];
          } else {
            for (int64_t i = 0; i < out.size(); ++i) b.node()->grad[i] += out.grad[i];
          }
        }
      });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<S> v(a.size());
  for (int64_t i = 0; i < a.size(); ++i) v[i] = a.val()[i] - b.val()[i];
  return detail::make_op<S>(a.shape(), std::move(v), {a, b},
                            [a, b](TensorNode<S>& out) {
                              if (a.node()->requires_grad) {
                                a.node()->ensure_grad();
                                for (int64_t i = 0; i < out.size(); ++i)
                                  a.node()->grad[i] += out.grad[i];
                              }
                              if (b.node()->requires_grad) {
                                b.node()->ensure_grad();
                                for (int64_t i = 0; i < out.size(); ++i)
                                  b.node()->grad[i] -= out.grad[i];
                              }
                            });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<S> v(a.size());
  for (int64_t i = 0; i < a.size(); ++i) v[i] = a.val()[i] * b.val()[i];
  return detail::make_op<S>(a.shape(), std::move(v), {a, b},
                            [a, b](TensorNode<S>& out) {
                              if (a.node()->requires_grad) {
                                a.node()->ensure_grad();
                                for (int64_t i = 0; i < out.size(); ++i)
                                  a.node()->grad[i] += out.grad[i] * b.node()->val[i];
                              }
                              if (b.node()->requires_grad) {
                                b.node()->ensure_grad();
                                for (int64_t i = 0; i < out.size(); ++i)
                                  b.node()->grad[i] += out.grad[i] * a.node()->val[i];
                              }
                            });
}

// ---- matmul / reductions / structure ----

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw error("shape", "matmul: incompatible shapes " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
  int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<S> v((size_t)m * n, S(0));
  gemm<S>(false, false, m, n, k, a.val().data(), b.val().data(), v.data(), S(0));
  return detail::make_op<S>(
      {m, n}, std::move(v), {a, b}, [a, b, m, k, n](TensorNode<S>& out) {
        if (a.node()->requires_grad) {
          a.node()->ensure_grad();
          // dA += dC * B^T
          gemm<S>(false, true, m, k, n, out.grad.data(), b.node()->val.data(),
                  a.node()->grad.data(), S(1));
        }
        if (b.node()->requires_grad) {
          b.node()->ensure_grad();
          // dB += A^T * dC
          gemm<S>(true, false, k, n, m, a.node()->val.data(), out.grad.data(),
                  b.node()->grad.data(), S(1));
        }
      });
}

template <class S>
Tensor<S> sum_rows(const Tensor<S>& a) {
  if (a.shape().size() != 2)
    throw error("shape", "sum_rows expects rank 2, got " + shape_str(a.shape()));
  int m = a.shape()[0], n = a.shape()[1];
  std::vector<S> v(m, S(0));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v[i] += a.val()[i * n + j];
  return detail::make_op<S>({m}, std::move(v), {a}, [a, m, n](TensorNode<S>& out) {
    a.node()->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) a.node()->grad[i * n + j] += out.grad[i];
  });
}

template <class S>
Tensor<S> sum_all(const Tensor<S>& a) {
  S acc(0);
  for (S x : a.val()) acc += x;
  return detail::make_op<S>({1}, {acc}, {a}, [a](TensorNode<S>& out) {
    a.node()->ensure_grad();
    for (int64_t i = 0; i < a.size(); ++i) a.node()->grad[i] += out.grad[0];
  });
}

template <class S>
Tensor<S> mean_all(const Tensor<S>& a) {
  return scale(sum_all(a), S(1) / S(a.size()));
}

template <class S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[0] != b.shape()[0])
    throw error("shape", "concat_cols: incompatible shapes " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
  int m = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
  std::vector<S> v((size_t)m * (p + q));
  for (int i = 0; i < m; ++i) {
    std::copy_n(&a.val()[i * p], p, &v[i * (p + q)]);
    std::copy_n(&b.val()[i * q], q, &v[i * (p + q) + p]);
  }
  return detail::make_op<S>(
      {m, p + q}, std::move(v), {a, b}, [a, b, m, p, q](TensorNode<S>& out) {
        if (a.node()->requires_grad) {
          a.node()->ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < p; ++j)
              a.node()->grad[i * p + j] += out.grad[i * (p + q) + j];
        }
        if (b.node()->requires_grad) {
          b.node()->ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < q; ++j)
              b.node()->grad[i * q + j] += out.grad[i * (p + q) + p + j];
        }
      });
}

// seq is [batch, T, d]; returns the [batch, d] slice at timestep t.
template <class S>
Tensor<S> slice_time(const Tensor<S>& seq, int t) {
  if (seq.shape().size() != 3)
    throw error("shape", "slice_time expects rank 3, got " + shape_str(seq.shape()));
  int b = seq.shape()[0], T = seq.shape()[1], d = seq.shape()[2];
  if (t < 0 || t >= T) throw error("shape", "slice_time: t out of range");
  std::vector<S> v((size_t)b * d);
  for (int i = 0; i < b; ++i)
    std::copy_n(&seq.val()[((size_t)i * T + t) * d], d, &v[(size_t)i * d]);
  return detail::make_op<S>({b, d}, std::move(v), {seq},
                            [seq, b, T, d, t](TensorNode<S>& out) {
                              seq.node()->ensure_grad();
                              for (int i = 0; i < b; ++i)
                                for (int j = 0; j < d; ++j)
                                  seq.node()->grad[((size_t)i * T + t) * d + j] +=
                                      out.grad[(size_t)i * d + j];
                            });
}

// LayerNorm over the feature axis of [m,n], then gain/bias.
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias) {
  if (x.shape().size() != 2 || gain.shape() != std::vector<int>{x.shape()[1]} ||
      bias.shape() != std::vector<int>{x.shape()[1]})
    throw error("shape", "layer_norm: bad shapes " + shape_str(x.shape()) + ", " +
                             shape_str(gain.shape()) + ", " + shape_str(bias.shape()));
  const S eps = S(1e-5);
  int m = x.shape()[0], n = x.shape()[1];
  std::vector<S> v((size_t)m * n);
  std::vector<S> xhat((size_t)m * n);
  std::vector<S> inv_std(m);
  for (int i = 0; i < m; ++i) {
    S mu(0);
    for (int j = 0; j < n; ++j) mu += x.val()[i * n + j];
    mu /= S(n);
    S var(0);
    for (int j = 0; j < n; ++j) {
      S d = x.val()[i * n + j] - mu;
      var += d * d;
    }
    var /= S(n);
    S is = S(1) / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int j = 0; j < n; ++j) {
      S h = (x.val()[i * n + j] - mu) * is;
      xhat[i * n + j] = h;
      v[i * n + j] = h * gain.val()[j] + bias.val()[j];
    }
  }
  auto xh = std::make_shared<std::vector<S>>(std::move(xhat));
  auto is = std::make_shared<std::vector<S>>(std::move(inv_std));
  return detail::make_op<S>(
      x.shape(), std::move(v), {x, gain, bias},
      [x, gain, bias, xh, is, m, n](TensorNode<S>& out) {
        for (int i = 0; i < m; ++i) {
          const S* go = &out.grad[i * n];
          const S* h = &(*xh)[i * n];
          if (gain.node()->requires_grad) {
            gain.node()->ensure_grad();
            for (int j = 0; j < n; ++j) gain.node()->grad[j] += go[j] * h[j];
          }
          if (bias.node()->requires_grad) {
            bias.node()->ensure_grad();
            for (int j = 0; j < n; ++j) bias.node()->grad[j] += go[j];
          }
          if (x.node()->requires_grad) {
            x.node()->ensure_grad();
            // dxhat = go * gain; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) * inv_std
            S m1(0), m2(0);
            for (int j = 0; j < n; ++j) {
              S dh = go[j] * gain.node()->val[j];
              m1 += dh;
              m2 += dh * h[j];
            }
            m1 /= S(n);
            m2 /= S(n);
            for (int j = 0; j < n; ++j) {
              S dh = go[j] * gain.node()->val[j];
              x.node()->grad[i * n + j] += (dh - m1 - h[j] * m2) * (*is)[i];
            }
          }
        }
      });
}

template <class S>
Tensor<S> detach(const Tensor<S>& a) {
  return Tensor<S>::from(a.shape(), a.val());
}

}  // namespace supe
