// SPDX-License-Identifier: Apache-2.0
//
// Decoupled-weight-decay adaptive-moment optimizer with two learning-rate
// groups: bridge parameters (name prefix "bridge.") step at bridge_lr,
// everything else at backbone_lr. Moments can be disabled, which reduces the
// update to theta -= lr * (g + wd * theta).
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "duet/tensor.hpp"

namespace duet {

struct OptimizerGroups {
  double backbone_lr = 1e-3;  // paper-scale preset is 1e-5; toy default keeps the 2x ratio
  double bridge_lr = 2e-3;
  double weight_decay = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool moments = true;
};

class GroupedAdamW {
 public:
  explicit GroupedAdamW(OptimizerGroups g) : g_(g) {
    if (!(g_.backbone_lr >= 0.0) || !(g_.bridge_lr >= 0.0))
      throw std::invalid_argument("optimizer: negative learning rate");
  }

  const OptimizerGroups& groups() const { return g_; }

  static bool is_bridge_param(const Param& p) { return p.name.rfind("bridge.", 0) == 0; }

  using GradFn = std::function<std::vector<double>(const Param&)>;
  using SkipFn = std::function<bool(const Param&)>;

  void step(const std::vector<Param*>& params, const GradFn& grad_of, const SkipFn& skip = {}) {
    for (Param* p : params) {
      if (skip && skip(*p)) continue;
      const double lr = is_bridge_param(*p) ? g_.bridge_lr : g_.backbone_lr;
      const std::vector<double> g = grad_of(*p);
      if (int(g.size()) != p->value.numel()) throw std::invalid_argument("optimizer: gradient size mismatch");
      auto& th = p->value.data;
      if (!g_.moments) {
        for (std::size_t i = 0; i < th.size(); ++i)
          th[i] -= lr * (g[i] + g_.weight_decay * th[i]);
        continue;
      }
      State& s = state_[p];
      if (s.m.empty()) {
        s.m.assign(th.size(), 0.0);
        s.v.assign(th.size(), 0.0);
      }
      ++s.t;
      const double bc1 = 1.0 - std::pow(g_.beta1, double(s.t));
      const double bc2 = 1.0 - std::pow(g_.beta2, double(s.t));
      for (std::size_t i = 0; i < th.size(); ++i) {
        s.m[i] = g_.beta1 * s.m[i] + (1.0 - g_.beta1) * g[i];
        s.v[i] = g_.beta2 * s.v[i] + (1.0 - g_.beta2) * g[i] * g[i];
        const double mh = s.m[i] / bc1;
        const double vh = s.v[i] / bc2;
        th[i] -= lr * (mh / (std::sqrt(vh) + g_.eps) + g_.weight_decay * th[i]);
      }
    }
  }

 private:
  struct State {
    std::vector<double> m, v;
    long long t = 0;  // per-parameter step count (experts update on alternating steps)
  };

  OptimizerGroups g_;
  std::unordered_map<const Param*, State> state_;
};

}  // namespace duet
