// SPDX-License-Identifier: Apache-2.0
//
// Rotary positional phases on a shared physical time grid. Video token i is
// placed at s*i audio time units (s = f_a / f_v), audio token j at j, so
// tokens at the same instant receive identical rotations in cross-modal
// attention.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "duet/tensor.hpp"

namespace duet {

struct RotaryBasis {
  int head_dim;
  double base;
  std::vector<double> theta;  // theta[m] = base^(-2m/head_dim), strictly decreasing

  explicit RotaryBasis(int head_dim_, double base_ = 10000.0) : head_dim(head_dim_), base(base_) {
    if (head_dim < 2 || head_dim % 2 != 0) throw std::invalid_argument("rotary: head_dim must be even");
    if (base <= 1.0) throw std::invalid_argument("rotary: base must exceed 1");
    theta.reserve(std::size_t(head_dim / 2));
    for (int m = 0; m < head_dim / 2; ++m) theta.push_back(std::pow(base, -2.0 * m / head_dim));
  }
};

struct TimeGrid {
  double f_v;  // video latent tokens per second
  double f_a;  // audio latent tokens per second

  TimeGrid(double f_v_, double f_a_) : f_v(f_v_), f_a(f_a_) {
    if (!(f_v > 0.0) || !(f_a > 0.0)) throw std::invalid_argument("time grid: rates must be positive");
  }

  double ratio() const { return f_a / f_v; }  // s
};

/// Video token i mapped into audio time units: p_v(i) = s * i.
inline double position_video(const TimeGrid& grid, long long i) {
  if (i < 0) throw std::invalid_argument("position_video: negative index");
  return grid.ratio() * double(i);
}

/// Audio token j keeps its own index: p_a(j) = j.
inline double position_audio(const TimeGrid& grid, long long j) {
  (void)grid;
  if (j < 0) throw std::invalid_argument("position_audio: negative index");
  return double(j);
}

/// Rotates each adjacent value pair (2m, 2m+1) of row r by angle
/// positions[r] / theta[m]. Norm-preserving per pair.
inline Tensor apply_rotary(Tape* tp, const Tensor& x, const std::vector<double>& positions,
                           const RotaryBasis& basis) {
  const int n = x.rows(), d = x.cols();
  if (d != basis.head_dim) throw std::invalid_argument("apply_rotary: head_dim mismatch");
  if (int(positions.size()) != n) throw std::invalid_argument("apply_rotary: positions must match rows");
  const int pairs = d / 2;
  std::vector<double> cs(std::size_t(n) * pairs), sn(std::size_t(n) * pairs);
  for (int r = 0; r < n; ++r)
    for (int m = 0; m < pairs; ++m) {
      const double phi = positions[std::size_t(r)] / basis.theta[std::size_t(m)];
      cs[std::size_t(r) * pairs + m] = std::cos(phi);
      sn[std::size_t(r) * pairs + m] = std::sin(phi);
    }
  Tensor out({n, d});
  for (int r = 0; r < n; ++r)
    for (int m = 0; m < pairs; ++m) {
      const double c = cs[std::size_t(r) * pairs + m], s = sn[std::size_t(r) * pairs + m];
      const double x0 = x.data[std::size_t(r) * d + 2 * m], x1 = x.data[std::size_t(r) * d + 2 * m + 1];
      out.data[std::size_t(r) * d + 2 * m] = c * x0 - s * x1;
      out.data[std::size_t(r) * d + 2 * m + 1] = s * x0 + c * x1;
    }
  if (tp && x.node >= 0) {
    out.node = tp->fresh(out.numel());
    const int on = out.node, xn = x.node;
    tp->on_backward(on, [tp, on, xn, n, d, pairs, cs = std::move(cs), sn = std::move(sn)]() {
      const auto& g = tp->grad_at(on);
      auto& gx = tp->grad_buf(xn, n * d);
      for (int r = 0; r < n; ++r)
        for (int m = 0; m < pairs; ++m) {
          const double c = cs[std::size_t(r) * pairs + m], s = sn[std::size_t(r) * pairs + m];
          const double g0 = g[std::size_t(r) * d + 2 * m], g1 = g[std::size_t(r) * d + 2 * m + 1];
          // transpose rotation = rotation by the negated angle
          gx[std::size_t(r) * d + 2 * m] += c * g0 + s * g1;
          gx[std::size_t(r) * d + 2 * m + 1] += -s * g0 + c * g1;
        }
    });
  }
  return out;
}

}  // namespace duet
