// SPDX-License-Identifier: Apache-2.0
//
// Dual classifier-free guidance over two conditioning sources: the text
// prompt and the cross-modal bridge state. Three velocity branches
//   uu = v(z, 0, 0), ub = v(z, 0, cB), tb = v(z, cT, cB)
// combine as  v~ = uu + s_B (ub - uu) + s_T (tb - ub).
// The combinator case-splits exactly as the branch planner does, so skipped
// branches are bit-identical to evaluating everything, and the NFE=2 regimes
// evaluate their literal reduced formulas.
#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "duet/tensor.hpp"

namespace duet {

struct GuidanceScales {
  double s_b = 1.0;
  double s_t = 1.0;

  GuidanceScales() = default;
  GuidanceScales(double sb, double st) : s_b(sb), s_t(st) {
    if (!std::isfinite(s_b) || !std::isfinite(s_t))
      throw std::invalid_argument("guidance scales must be finite");
  }
};

struct VelocityPair {
  Tensor v;
  Tensor a;
};

struct BranchOutputs {
  std::optional<VelocityPair> uu;  // v(z, null, null)   — no text, no bridge
  std::optional<VelocityPair> ub;  // v(z, null, cB)     — no text, bridge on
  std::optional<VelocityPair> tb;  // v(z, cT, cB)       — text and bridge
};

// Alternative factorization order: text first, then bridge.
struct SwappedBranchOutputs {
  std::optional<VelocityPair> uu;  // v(z, null, null)
  std::optional<VelocityPair> tu;  // v(z, cT, null)     — text, no bridge
  std::optional<VelocityPair> tb;  // v(z, cT, cB)
};

struct BranchPlan {
  bool need_uu = false;
  bool need_ub = false;
  bool need_tb = false;
  int nfe = 0;
};

/// Branches whose combinator coefficient is nonzero, plus the model-call count.
inline BranchPlan plan_branches(const GuidanceScales& s) {
  BranchPlan p;
  p.need_tb = true;
  if (s.s_b == 1.0 && s.s_t == 1.0) {
    p.nfe = 1;
  } else if (s.s_b == 1.0) {
    p.need_ub = true;  // 1 - s_b = 0 cancels uu
    p.nfe = 2;
  } else if (s.s_b == s.s_t) {
    p.need_uu = true;  // s_b - s_t = 0 cancels ub
    p.nfe = 2;
  } else {
    p.need_uu = p.need_ub = true;
    p.nfe = 3;
  }
  return p;
}

namespace detail {

inline const VelocityPair& require_branch(const std::optional<VelocityPair>& b, const char* name) {
  if (!b) throw std::invalid_argument(std::string("combine: required branch absent: ") + name);
  return *b;
}

inline void check_pair_shapes(const VelocityPair& a, const VelocityPair& b) {
  if (!same_shape(a.v, b.v) || !same_shape(a.a, b.a))
    throw std::invalid_argument("combine: branch shapes differ");
}

// out = base + s * (hi - lo), elementwise
inline Tensor guided_sum2(const Tensor& base, double s, const Tensor& hi, const Tensor& lo) {
  Tensor out(base.shape);
  for (int i = 0; i < base.numel(); ++i)
    out.data[std::size_t(i)] =
        base.data[std::size_t(i)] + s * (hi.data[std::size_t(i)] - lo.data[std::size_t(i)]);
  return out;
}

// out = uu + s1 * (mid - uu) + s2 * (hi - mid), elementwise, in this order
inline Tensor guided_sum3(const Tensor& uu, double s1, const Tensor& mid, double s2, const Tensor& hi) {
  Tensor out(uu.shape);
  for (int i = 0; i < uu.numel(); ++i) {
    const double u = uu.data[std::size_t(i)];
    const double m = mid.data[std::size_t(i)];
    const double h = hi.data[std::size_t(i)];
    out.data[std::size_t(i)] = u + s1 * (m - u) + s2 * (h - m);
  }
  return out;
}

}  // namespace detail

inline VelocityPair combine(const BranchOutputs& b, const GuidanceScales& s) {
  const VelocityPair& tb = detail::require_branch(b.tb, "tb");
  if (s.s_b == 1.0 && s.s_t == 1.0) return tb;  // telescoping: v~ == tb
  if (s.s_b == 1.0) {
    const VelocityPair& ub = detail::require_branch(b.ub, "ub");
    detail::check_pair_shapes(ub, tb);
    return {detail::guided_sum2(ub.v, s.s_t, tb.v, ub.v), detail::guided_sum2(ub.a, s.s_t, tb.a, ub.a)};
  }
  if (s.s_b == s.s_t) {
    const VelocityPair& uu = detail::require_branch(b.uu, "uu");
    detail::check_pair_shapes(uu, tb);
    return {detail::guided_sum2(uu.v, s.s_b, tb.v, uu.v), detail::guided_sum2(uu.a, s.s_b, tb.a, uu.a)};
  }
  const VelocityPair& uu = detail::require_branch(b.uu, "uu");
  const VelocityPair& ub = detail::require_branch(b.ub, "ub");
  detail::check_pair_shapes(uu, tb);
  detail::check_pair_shapes(ub, tb);
  return {detail::guided_sum3(uu.v, s.s_b, ub.v, s.s_t, tb.v),
          detail::guided_sum3(uu.a, s.s_b, ub.a, s.s_t, tb.a)};
}

/// Swapped factorization: v~ = uu + s_T (tu - uu) + s_B (tb - tu).
inline VelocityPair combine_swapped(const SwappedBranchOutputs& b, const GuidanceScales& s) {
  const VelocityPair& tb = detail::require_branch(b.tb, "tb");
  if (s.s_b == 1.0 && s.s_t == 1.0) return tb;
  if (s.s_t == 1.0) {
    const VelocityPair& tu = detail::require_branch(b.tu, "tu");
    detail::check_pair_shapes(tu, tb);
    return {detail::guided_sum2(tu.v, s.s_b, tb.v, tu.v), detail::guided_sum2(tu.a, s.s_b, tb.a, tu.a)};
  }
  if (s.s_b == s.s_t) {
    const VelocityPair& uu = detail::require_branch(b.uu, "uu");
    detail::check_pair_shapes(uu, tb);
    return {detail::guided_sum2(uu.v, s.s_b, tb.v, uu.v), detail::guided_sum2(uu.a, s.s_b, tb.a, uu.a)};
  }
  const VelocityPair& uu = detail::require_branch(b.uu, "uu");
  const VelocityPair& tu = detail::require_branch(b.tu, "tu");
  detail::check_pair_shapes(uu, tb);
  detail::check_pair_shapes(tu, tb);
  return {detail::guided_sum3(uu.v, s.s_t, tu.v, s.s_b, tb.v),
          detail::guided_sum3(uu.a, s.s_t, tu.a, s.s_b, tb.a)};
}

/// Branches needed by combine_swapped for a given scale pair.
struct SwappedBranchPlan {
  bool need_uu = false;
  bool need_tu = false;
  bool need_tb = true;
  int nfe = 1;
};

inline SwappedBranchPlan plan_branches_swapped(const GuidanceScales& s) {
  SwappedBranchPlan p;
  if (s.s_b == 1.0 && s.s_t == 1.0) {
    p.nfe = 1;
  } else if (s.s_t == 1.0) {
    p.need_tu = true;
    p.nfe = 2;
  } else if (s.s_b == s.s_t) {
    p.need_uu = true;
    p.nfe = 2;
  } else {
    p.need_uu = p.need_tu = true;
    p.nfe = 3;
  }
  return p;
}

}  // namespace duet
