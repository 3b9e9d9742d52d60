// SPDX-License-Identifier: Apache-2.0
//
// Dense f64 tensors with a define-by-run reverse-mode tape. The tape is
// rebuilt every step; tensors are immutable values once created. Ops take a
// Tape* that may be null for inference-only evaluation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "duet/rng.hpp"

namespace duet {

using Shape = std::vector<int>;

inline int shape_numel(const Shape& s) {
  int n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor: nonpositive extent");
    n *= d;
  }
  return n;
}

struct Tensor {
  Shape shape;
  std::vector<double> data;
  int node = -1;  // handle into the active tape, -1 = constant

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0)
      : shape(std::move(s)), data(std::size_t(shape_numel(shape)), fill) {}
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (int(data.size()) != shape_numel(shape))
      throw std::invalid_argument("tensor: data length does not match shape");
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  int numel() const { return int(data.size()); }
  bool is_matrix() const { return shape.size() == 2; }
  int rows() const { require_matrix(); return shape[0]; }
  int cols() const { require_matrix(); return shape[1]; }
  double& at(int i, int j) { require_matrix(); return data[std::size_t(i) * shape[1] + j]; }
  double at(int i, int j) const { require_matrix(); return data[std::size_t(i) * shape[1] + j]; }

  double item() const {
    if (numel() != 1) throw std::invalid_argument("tensor: item() on non-scalar");
    return data[0];
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  void require_matrix() const {
    if (shape.size() != 2) throw std::invalid_argument("tensor: expected 2-D tensor");
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

inline Tensor randn(Shape s, Rng& rng, double std_dev = 1.0) {
  Tensor t(std::move(s));
  for (double& v : t.data) v = std_dev * rng.normal();
  return t;
}

/// Named trainable tensor. Lives in a model; addresses must stay stable so
/// the tape can intern repeated uses onto one node.
struct Param {
  std::string name;
  Tensor value;
};

// Reverse-mode tape. Nodes are recorded in evaluation order, so creation
// order is a topological order and the backward sweep visits each node
// exactly once, in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int fresh(int size) {
    backward_.emplace_back();
    sizes_.push_back(size);
    return int(backward_.size()) - 1;
  }

  void on_backward(int node, std::function<void()> fn) { backward_[std::size_t(node)] = std::move(fn); }

  std::vector<double>& grad_buf(int node, int size) {
    auto& g = grads_[std::size_t(node)];
    if (g.empty()) g.assign(std::size_t(size), 0.0);
    return g;
  }

  bool has_grad(int node) const {
    return node >= 0 && node < int(grads_.size()) && !grads_[std::size_t(node)].empty();
  }

  const std::vector<double>& grad_at(int node) const { return grads_[std::size_t(node)]; }

  std::vector<double> grad_or_zeros(int node, int size) const {
    if (has_grad(node)) return grads_[std::size_t(node)];
    return std::vector<double>(std::size_t(size), 0.0);
  }

  /// Registers a constant tensor as a differentiable leaf.
  Tensor leaf(const Tensor& t) {
    Tensor r = t;
    r.node = fresh(t.numel());
    return r;
  }

  /// Leaf interned by parameter address: repeated uses share one node so
  /// gradients accumulate.
  Tensor use(Param& p) {
    auto it = interned_.find(&p);
    if (it != interned_.end()) {
      Tensor r = p.value;
      r.node = it->second;
      return r;
    }
    Tensor r = leaf(p.value);
    interned_[&p] = r.node;
    return r;
  }

  std::vector<double> grad_of(const Param& p) const {
    auto it = interned_.find(&p);
    if (it == interned_.end()) return std::vector<double>(std::size_t(p.value.numel()), 0.0);
    return grad_or_zeros(it->second, p.value.numel());
  }

  bool used(const Param& p) const { return interned_.count(&p) != 0; }

  void backward(const Tensor& loss) {
    if (loss.node < 0) throw std::invalid_argument("backward: loss is not on this tape");
    if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    grads_.assign(backward_.size(), {});
    grad_buf(loss.node, 1)[0] = 1.0;
    for (int id = loss.node; id >= 0; --id) {
      if (!grads_[std::size_t(id)].empty() && backward_[std::size_t(id)])
        backward_[std::size_t(id)]();
    }
  }

  int size() const { return int(backward_.size()); }

 private:
  std::vector<std::function<void()>> backward_;
  std::vector<int> sizes_;
  std::vector<std::vector<double>> grads_;
  std::unordered_map<const Param*, int> interned_;
};

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a, b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Tensor add(Tape* tp, const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out(a.shape);
  for (int i = 0; i < a.numel(); ++i) out.data[std::size_t(i)] = a.data[std::size_t(i)] + b.data[std::size_t(i)];
  if (tp && (a.node >= 0 || b.node >= 0)) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node, bn = b.node, n = out.numel();
    tp->on_backward(on, [tp, on, an, bn, n]() {
      const auto& g = tp->grad_at(on);
      if (an >= 0) {
        auto& ga = tp->grad_buf(an, n);
        for (int i = 0; i < n; ++i) ga[std::size_t(i)] += g[std::size_t(i)];
      }
      if (bn >= 0) {
        auto& gb = tp->grad_buf(bn, n);
        for (int i = 0; i < n; ++i) gb[std::size_t(i)] += g[std::size_t(i)];
      }
    });
  }
  return out;
}

inline Tensor sub(Tape* tp, const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out(a.shape);
  for (int i = 0; i < a.numel(); ++i) out.data[std::size_t(i)] = a.data[std::size_t(i)] - b.data[std::size_t(i)];
  if (tp && (a.node >= 0 || b.node >= 0)) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node, bn = b.node, n = out.numel();
    tp->on_backward(on, [tp, on, an, bn, n]() {
      const auto& g = tp->grad_at(on);
      if (an >= 0) {
        auto& ga = tp->grad_buf(an, n);
        for (int i = 0; i < n; ++i) ga[std::size_t(i)] += g[std::size_t(i)];
      }
      if (bn >= 0) {
        auto& gb = tp->grad_buf(bn, n);
        for (int i = 0; i < n; ++i) gb[std::size_t(i)] -= g[std::size_t(i)];
      }
    });
  }
  return out;
}

inline Tensor mul(Tape* tp, const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out(a.shape);
  for (int i = 0; i < a.numel(); ++i) out.data[std::size_t(i)] = a.data[std::size_t(i)] * b.data[std::size_t(i)];
  if (tp && (a.node >= 0 || b.node >= 0)) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node, bn = b.node, n = out.numel();
    std::vector<double> av, bv;
    if (bn >= 0) av = a.data;
    if (an >= 0) bv = b.data;
    tp->on_backward(on, [tp, on, an, bn, n, av = std::move(av), bv = std::move(bv)]() {
      const auto& g = tp->grad_at(on);
      if (an >= 0) {
        auto& ga = tp->grad_buf(an, n);
        for (int i = 0; i < n; ++i) ga[std::size_t(i)] += g[std::size_t(i)] * bv[std::size_t(i)];
      }
      if (bn >= 0) {
        auto& gb = tp->grad_buf(bn, n);
        for (int i = 0; i < n; ++i) gb[std::size_t(i)] += g[std::size_t(i)] * av[std::size_t(i)];
      }
    });
  }
  return out;
}

inline Tensor scale(Tape* tp, const Tensor& a, double c) {
  Tensor out(a.shape);
  for (int i = 0; i < a.numel(); ++i) out.data[std::size_t(i)] = c * a.data[std::size_t(i)];
  if (tp && a.node >= 0) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node, n = out.numel();
    tp->on_backward(on, [tp, on, an, n, c]() {
      const auto& g = tp->grad_at(on);
      auto& ga = tp->grad_buf(an, n);
      for (int i = 0; i < n; ++i) ga[std::size_t(i)] += c * g[std::size_t(i)];
    });
  }
  return out;
}

inline Tensor add_scalar(Tape* tp, const Tensor& a, double c) {
  Tensor out(a.shape);
  for (int i = 0; i < a.numel(); ++i) out.data[std::size_t(i)] = a.data[std::size_t(i)] + c;
  if (tp && a.node >= 0) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node, n = out.numel();
    tp->on_backward(on, [tp, on, an, n]() {
      const auto& g = tp->grad_at(on);
      auto& ga = tp->grad_buf(an, n);
      for (int i = 0; i < n; ++i) ga[std::size_t(i)] += g[std::size_t(i)];
    });
  }
  return out;
}

inline Tensor silu(Tape* tp, const Tensor& a) {
  Tensor out(a.shape);
  for (int i = 0; i < a.numel(); ++i) {
    const double x = a.data[std::size_t(i)];
    out.data[std::size_t(i)] = x / (1.0 + std::exp(-x));
  }
  if (tp && a.node >= 0) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node, n = out.numel();
    tp->on_backward(on, [tp, on, an, n, av = a.data]() {
      const auto& g = tp->grad_at(on);
      auto& ga = tp->grad_buf(an, n);
      for (int i = 0; i < n; ++i) {
        const double x = av[std::size_t(i)];
        const double s = 1.0 / (1.0 + std::exp(-x));
        ga[std::size_t(i)] += g[std::size_t(i)] * s * (1.0 + x * (1.0 - s));
      }
    });
  }
  return out;
}

// -------------------------------------------------------------------- matmul

inline Tensor matmul(Tape* tp, const Tensor& a, const Tensor& b) {
  if (!a.is_matrix() || !b.is_matrix()) throw std::invalid_argument("matmul: expects 2-D tensors");
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner extents do not match");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  {
    const double* A = a.data.data();
    const double* B = b.data.data();
    double* C = out.data.data();
    for (int i = 0; i < m; ++i) {
      const double* ai = A + std::size_t(i) * k;
      double* ci = C + std::size_t(i) * n;
      for (int p = 0; p < k; ++p) {
        const double av = ai[p];
        const double* bp = B + std::size_t(p) * n;
        for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  }
  if (tp && (a.node >= 0 || b.node >= 0)) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node, bn = b.node;
    std::vector<double> av, bv;
    if (bn >= 0) av = a.data;
    if (an >= 0) bv = b.data;
    tp->on_backward(on, [tp, on, an, bn, m, k, n, av = std::move(av), bv = std::move(bv)]() {
      const auto& g = tp->grad_at(on);
      if (an >= 0) {
        // a_grad = g . b^T
        auto& ga = tp->grad_buf(an, m * k);
        for (int i = 0; i < m; ++i) {
          const double* gi = g.data() + std::size_t(i) * n;
          for (int p = 0; p < k; ++p) {
            const double* bp = bv.data() + std::size_t(p) * n;
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += gi[j] * bp[j];
            ga[std::size_t(i) * k + p] += s;
          }
        }
      }
      if (bn >= 0) {
        // b_grad = a^T . g
        auto& gb = tp->grad_buf(bn, k * n);
        for (int i = 0; i < m; ++i) {
          const double* gi = g.data() + std::size_t(i) * n;
          const double* ai = av.data() + std::size_t(i) * k;
          for (int p = 0; p < k; ++p) {
            const double x = ai[p];
            double* gbp = gb.data() + std::size_t(p) * n;
            for (int j = 0; j < n; ++j) gbp[j] += x * gi[j];
          }
        }
      }
    });
  }
  return out;
}

// ------------------------------------------------------------ shape plumbing

inline Tensor transpose(Tape* tp, const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data[std::size_t(j) * m + i] = a.data[std::size_t(i) * n + j];
  if (tp && a.node >= 0) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node;
    tp->on_backward(on, [tp, on, an, m, n]() {
      const auto& g = tp->grad_at(on);  // [n x m]
      auto& ga = tp->grad_buf(an, m * n);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) ga[std::size_t(i) * n + j] += g[std::size_t(j) * m + i];
    });
  }
  return out;
}

inline Tensor reshape(Tape* tp, const Tensor& a, Shape s) {
  if (shape_numel(s) != a.numel()) throw std::invalid_argument("reshape: element count mismatch");
  Tensor out(std::move(s), a.data);
  if (tp && a.node >= 0) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node, n = out.numel();
    tp->on_backward(on, [tp, on, an, n]() {
      const auto& g = tp->grad_at(on);
      auto& ga = tp->grad_buf(an, n);
      for (int i = 0; i < n; ++i) ga[std::size_t(i)] += g[std::size_t(i)];
    });
  }
  return out;
}

inline Tensor slice_rows(Tape* tp, const Tensor& a, int r0, int r1) {
  const int m = a.rows(), n = a.cols();
  if (!(0 <= r0 && r0 < r1 && r1 <= m)) throw std::invalid_argument("slice_rows: bad range");
  Tensor out({r1 - r0, n});
  std::copy(a.data.begin() + std::size_t(r0) * n, a.data.begin() + std::size_t(r1) * n, out.data.begin());
  if (tp && a.node >= 0) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node;
    tp->on_backward(on, [tp, on, an, m, n, r0, r1]() {
      const auto& g = tp->grad_at(on);
      auto& ga = tp->grad_buf(an, m * n);
      for (int i = 0; i < (r1 - r0) * n; ++i) ga[std::size_t(r0) * n + i] += g[std::size_t(i)];
    });
  }
  return out;
}

inline Tensor concat_rows(Tape* tp, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const int n = parts[0].cols();
  int m = 0;
  bool any_node = false;
  for (const auto& p : parts) {
    if (p.cols() != n) throw std::invalid_argument("concat_rows: column mismatch");
    m += p.rows();
    any_node = any_node || p.node >= 0;
  }
  Tensor out({m, n});
  {
    std::size_t off = 0;
    for (const auto& p : parts) {
      std::copy(p.data.begin(), p.data.end(), out.data.begin() + off);
      off += p.data.size();
    }
  }
  if (tp && any_node) {
    out.node = tp->fresh(out.numel());
    const int on = out.node;
    std::vector<std::pair<int, int>> spans;  // (node, numel)
    for (const auto& p : parts) spans.emplace_back(p.node, p.numel());
    tp->on_backward(on, [tp, on, spans = std::move(spans)]() {
      const auto& g = tp->grad_at(on);
      std::size_t off = 0;
      for (const auto& [node, count] : spans) {
        if (node >= 0) {
          auto& gp = tp->grad_buf(node, count);
          for (int i = 0; i < count; ++i) gp[std::size_t(i)] += g[off + std::size_t(i)];
        }
        off += std::size_t(count);
      }
    });
  }
  return out;
}

inline Tensor slice_cols(Tape* tp, const Tensor& a, int c0, int c1) {
  const int m = a.rows(), n = a.cols();
  if (!(0 <= c0 && c0 < c1 && c1 <= n)) throw std::invalid_argument("slice_cols: bad range");
  const int w = c1 - c0;
  Tensor out({m, w});
  for (int i = 0; i < m; ++i)
    std::copy(a.data.begin() + std::size_t(i) * n + c0, a.data.begin() + std::size_t(i) * n + c1,
              out.data.begin() + std::size_t(i) * w);
  if (tp && a.node >= 0) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node;
    tp->on_backward(on, [tp, on, an, m, n, c0, w]() {
      const auto& g = tp->grad_at(on);
      auto& ga = tp->grad_buf(an, m * n);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) ga[std::size_t(i) * n + c0 + j] += g[std::size_t(i) * w + j];
    });
  }
  return out;
}

inline Tensor concat_cols(Tape* tp, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int m = parts[0].rows();
  int n = 0;
  bool any_node = false;
  for (const auto& p : parts) {
    if (p.rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
    n += p.cols();
    any_node = any_node || p.node >= 0;
  }
  Tensor out({m, n});
  {
    int off = 0;
    for (const auto& p : parts) {
      const int w = p.cols();
      for (int i = 0; i < m; ++i)
        std::copy(p.data.begin() + std::size_t(i) * w, p.data.begin() + std::size_t(i + 1) * w,
                  out.data.begin() + std::size_t(i) * n + off);
      off += w;
    }
  }
  if (tp && any_node) {
    out.node = tp->fresh(out.numel());
    const int on = out.node;
    std::vector<std::pair<int, int>> spans;  // (node, cols)
    for (const auto& p : parts) spans.emplace_back(p.node, p.cols());
    tp->on_backward(on, [tp, on, m, n, spans = std::move(spans)]() {
      const auto& g = tp->grad_at(on);
      int off = 0;
      for (const auto& [node, w] : spans) {
        if (node >= 0) {
          auto& gp = tp->grad_buf(node, m * w);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) gp[std::size_t(i) * w + j] += g[std::size_t(i) * n + off + j];
        }
        off += w;
      }
    });
  }
  return out;
}

// ------------------------------------------------------------ normalizations

inline Tensor softmax_rows(Tape* tp, const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  if (n < 1) throw std::invalid_argument("softmax_rows: empty rows");
  if (!a.all_finite()) throw std::domain_error("softmax_rows: non-finite input");
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    const double* xi = a.data.data() + std::size_t(i) * n;
    double* yi = out.data.data() + std::size_t(i) * n;
    double mx = xi[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      z += yi[j];
    }
    for (int j = 0; j < n; ++j) yi[j] /= z;
  }
  if (tp && a.node >= 0) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node;
    tp->on_backward(on, [tp, on, an, m, n, y = out.data]() {
      const auto& g = tp->grad_at(on);
      auto& ga = tp->grad_buf(an, m * n);
      for (int i = 0; i < m; ++i) {
        const double* yi = y.data() + std::size_t(i) * n;
        const double* gi = g.data() + std::size_t(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += gi[j] * yi[j];
        for (int j = 0; j < n; ++j) ga[std::size_t(i) * n + j] += yi[j] * (gi[j] - dot);
      }
    });
  }
  return out;
}

inline constexpr double kRmsNormEps = 1e-6;

inline Tensor rms_norm(Tape* tp, const Tensor& a, const Tensor& gain) {
  const int m = a.rows(), n = a.cols();
  if (gain.numel() != n) throw std::invalid_argument("rms_norm: gain must match last axis");
  Tensor out({m, n});
  std::vector<double> inv(std::size_t(m), 0.0);
  for (int i = 0; i < m; ++i) {
    const double* xi = a.data.data() + std::size_t(i) * n;
    double ms = 0.0;
    for (int j = 0; j < n; ++j) ms += xi[j] * xi[j];
    ms /= n;
    inv[std::size_t(i)] = 1.0 / std::sqrt(ms + kRmsNormEps);
    for (int j = 0; j < n; ++j)
      out.data[std::size_t(i) * n + j] = xi[j] * inv[std::size_t(i)] * gain.data[std::size_t(j)];
  }
  if (tp && (a.node >= 0 || gain.node >= 0)) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node, gn = gain.node;
    tp->on_backward(on, [tp, on, an, gn, m, n, x = a.data, gv = gain.data, inv = std::move(inv)]() {
      const auto& g = tp->grad_at(on);
      if (an >= 0) {
        auto& ga = tp->grad_buf(an, m * n);
        for (int i = 0; i < m; ++i) {
          const double* xi = x.data() + std::size_t(i) * n;
          const double* gi = g.data() + std::size_t(i) * n;
          const double iv = inv[std::size_t(i)];
          double acc = 0.0;  // sum_j g_j * gain_j * x_j
          for (int j = 0; j < n; ++j) acc += gi[j] * gv[std::size_t(j)] * xi[j];
          const double c = iv * iv * iv * acc / n;
          for (int j = 0; j < n; ++j)
            ga[std::size_t(i) * n + j] += gi[j] * gv[std::size_t(j)] * iv - xi[j] * c;
        }
      }
      if (gn >= 0) {
        auto& gg = tp->grad_buf(gn, n);
        for (int i = 0; i < m; ++i) {
          const double* xi = x.data() + std::size_t(i) * n;
          const double* gi = g.data() + std::size_t(i) * n;
          const double iv = inv[std::size_t(i)];
          for (int j = 0; j < n; ++j) gg[std::size_t(j)] += gi[j] * xi[j] * iv;
        }
      }
    });
  }
  return out;
}

// Last-axis broadcast bias/gain; the only broadcasting in the library.
inline Tensor add_rowvec(Tape* tp, const Tensor& a, const Tensor& b) {
  const int m = a.rows(), n = a.cols();
  if (b.numel() != n) throw std::invalid_argument("add_rowvec: vector must match last axis");
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.data[std::size_t(i) * n + j] = a.data[std::size_t(i) * n + j] + b.data[std::size_t(j)];
  if (tp && (a.node >= 0 || b.node >= 0)) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node, bn = b.node;
    tp->on_backward(on, [tp, on, an, bn, m, n]() {
      const auto& g = tp->grad_at(on);
      if (an >= 0) {
        auto& ga = tp->grad_buf(an, m * n);
        for (int i = 0; i < m * n; ++i) ga[std::size_t(i)] += g[std::size_t(i)];
      }
      if (bn >= 0) {
        auto& gb = tp->grad_buf(bn, n);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gb[std::size_t(j)] += g[std::size_t(i) * n + j];
      }
    });
  }
  return out;
}

inline Tensor mul_rowvec(Tape* tp, const Tensor& a, const Tensor& s) {
  const int m = a.rows(), n = a.cols();
  if (s.numel() != n) throw std::invalid_argument("mul_rowvec: vector must match last axis");
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.data[std::size_t(i) * n + j] = a.data[std::size_t(i) * n + j] * s.data[std::size_t(j)];
  if (tp && (a.node >= 0 || s.node >= 0)) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, an = a.node, sn = s.node;
    std::vector<double> av, sv;
    if (sn >= 0) av = a.data;
    if (an >= 0) sv = s.data;
    tp->on_backward(on, [tp, on, an, sn, m, n, av = std::move(av), sv = std::move(sv)]() {
      const auto& g = tp->grad_at(on);
      if (an >= 0) {
        auto& ga = tp->grad_buf(an, m * n);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            ga[std::size_t(i) * n + j] += g[std::size_t(i) * n + j] * sv[std::size_t(j)];
      }
      if (sn >= 0) {
        auto& gs = tp->grad_buf(sn, n);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            gs[std::size_t(j)] += g[std::size_t(i) * n + j] * av[std::size_t(i) * n + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- reductions

inline Tensor sum(Tape* tp, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data) s += v;
  Tensor out = Tensor::scalar(s);
  if (tp && a.node >= 0) {
    out.node = tp->fresh(1);
    const int on = out.node, an = a.node, n = a.numel();
    tp->on_backward(on, [tp, on, an, n]() {
      const double g = tp->grad_at(on)[0];
      auto& ga = tp->grad_buf(an, n);
      for (int i = 0; i < n; ++i) ga[std::size_t(i)] += g;
    });
  }
  return out;
}

inline Tensor mean(Tape* tp, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data) s += v;
  Tensor out = Tensor::scalar(s / a.numel());
  if (tp && a.node >= 0) {
    out.node = tp->fresh(1);
    const int on = out.node, an = a.node, n = a.numel();
    tp->on_backward(on, [tp, on, an, n]() {
      const double g = tp->grad_at(on)[0] / n;
      auto& ga = tp->grad_buf(an, n);
      for (int i = 0; i < n; ++i) ga[std::size_t(i)] += g;
    });
  }
  return out;
}

// ------------------------------------------------------------------ lookups

inline Tensor embedding(Tape* tp, const Tensor& table, const std::vector<int>& ids) {
  const int v = table.rows(), d = table.cols();
  const int n = int(ids.size());
  if (n == 0) throw std::invalid_argument("embedding: empty id list");
  for (int id : ids)
    if (id < 0 || id >= v) throw std::invalid_argument("embedding: id out of range");
  Tensor out({n, d});
  for (int i = 0; i < n; ++i)
    std::copy(table.data.begin() + std::size_t(ids[std::size_t(i)]) * d,
              table.data.begin() + std::size_t(ids[std::size_t(i)] + 1) * d,
              out.data.begin() + std::size_t(i) * d);
  if (tp && table.node >= 0) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, tn = table.node;
    tp->on_backward(on, [tp, on, tn, v, d, ids]() {
      const auto& g = tp->grad_at(on);
      auto& gt = tp->grad_buf(tn, v * d);
      for (int i = 0; i < int(ids.size()); ++i)
        for (int j = 0; j < d; ++j)
          gt[std::size_t(ids[std::size_t(i)]) * d + j] += g[std::size_t(i) * d + j];
    });
  }
  return out;
}

/// Sinusoidal embedding of a (scaled) time value; constant w.r.t. the tape.
inline Tensor sin_time_embed(double t, int dim, double max_period = 10000.0) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("sin_time_embed: dim must be even");
  const int half = dim / 2;
  Tensor out({1, dim});
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(max_period) * double(i) / half);
    out.data[std::size_t(i)] = std::cos(t * freq);
    out.data[std::size_t(half + i)] = std::sin(t * freq);
  }
  return out;
}

// -------------------------------------------------------------- grad checks

/// Max relative error between the tape gradient of f at `point` and central
/// finite differences. f: (Tape&, const Tensor&) -> scalar Tensor.
template <typename F>
double grad_check(F&& f, const Tensor& point, double eps = 1e-5) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps out of [1e-7, 1e-3]");
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor x = tape.leaf(point);
    Tensor y = f(tape, x);
    if (y.numel() != 1) throw std::invalid_argument("grad_check: f must be scalar-valued");
    if (y.node >= 0) {
      tape.backward(y);
      analytic = tape.grad_or_zeros(x.node, point.numel());
    } else {
      analytic.assign(std::size_t(point.numel()), 0.0);  // constant f
    }
  }
  Tensor p = point;
  double worst = 0.0;
  for (int i = 0; i < point.numel(); ++i) {
    const double orig = p.data[std::size_t(i)];
    p.data[std::size_t(i)] = orig + eps;
    double fp;
    {
      Tape t;
      fp = f(t, t.leaf(p)).item();
    }
    p.data[std::size_t(i)] = orig - eps;
    double fm;
    {
      Tape t;
      fm = f(t, t.leaf(p)).item();
    }
    p.data[std::size_t(i)] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double rel = std::abs(analytic[std::size_t(i)] - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace duet
