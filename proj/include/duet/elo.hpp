// SPDX-License-Identifier: Apache-2.0
//
// Arena evaluation math: sequential online Elo over pairwise votes,
// bootstrap confidence intervals, and win-rate matrices.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "duet/rng.hpp"

namespace duet::arena {

enum class Outcome { a_wins, b_wins, tie };

struct Vote {
  std::string model_a;
  std::string model_b;
  Outcome outcome = Outcome::a_wins;
};

struct EloConfig {
  double initial = 1000.0;
  double k = 4.0;
  double scale = 400.0;
  double base = 10.0;
  int bootstrap_iters = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(k > 0.0) || !(scale > 0.0) || !(base > 1.0))
      throw std::invalid_argument("elo: require k > 0, scale > 0, base > 1");
  }
};

// Rating transfers are quantized to a 2^-40 grid (~9e-13, far below one K)
// so each paired +delta/-delta is exact in doubles and the total rating sum
// is conserved bit-exactly over any vote sequence.
inline constexpr double kRatingQuantum = 1.0 / double(1ull << 40);

using Ratings = std::map<std::string, double>;

inline double rating_of(const Ratings& r, const std::string& model, const EloConfig& cfg = {}) {
  auto it = r.find(model);
  return it == r.end() ? cfg.initial : it->second;
}

inline Ratings elo_ratings(const std::vector<Vote>& votes, const EloConfig& cfg) {
  cfg.validate();
  Ratings r;
  for (const Vote& v : votes) {
    if (v.model_a == v.model_b) throw std::invalid_argument("elo: self-vote");
    double& ra = r.try_emplace(v.model_a, cfg.initial).first->second;
    double& rb = r.try_emplace(v.model_b, cfg.initial).first->second;
    const double ea = 1.0 / (1.0 + std::pow(cfg.base, (rb - ra) / cfg.scale));
    const double sa = v.outcome == Outcome::a_wins ? 1.0 : (v.outcome == Outcome::b_wins ? 0.0 : 0.5);
    double delta = cfg.k * (sa - ea);
    delta = std::round(delta / kRatingQuantum) * kRatingQuantum;
    ra += delta;
    rb -= delta;
  }
  return r;
}

struct RatingCi {
  double median = 0.0;
  double lo = 0.0;   // 2.5th percentile
  double hi = 0.0;   // 97.5th percentile
};

namespace detail {

inline double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::domain_error("percentile: empty sample");
  const double pos = p / 100.0 * double(sorted.size() - 1);
  const std::size_t lo = std::size_t(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - double(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

/// Bootstrap over vote resamples (with replacement, consumed in draw order).
inline std::map<std::string, RatingCi> bootstrap_ci(const std::vector<Vote>& votes, const EloConfig& cfg) {
  cfg.validate();
  if (votes.empty()) throw std::domain_error("bootstrap_ci: no votes");
  std::map<std::string, std::vector<double>> samples;
  for (const Vote& v : votes) {
    samples.try_emplace(v.model_a);
    samples.try_emplace(v.model_b);
  }
  Rng root(cfg.seed);
  const long long n = (long long)votes.size();
  for (int iter = 0; iter < cfg.bootstrap_iters; ++iter) {
    Rng rng = root.split("bootstrap:" + std::to_string(iter));
    std::vector<Vote> resampled;
    resampled.reserve(votes.size());
    for (long long i = 0; i < n; ++i) resampled.push_back(votes[std::size_t(rng.uniform_int(0, n - 1))]);
    const Ratings r = elo_ratings(resampled, cfg);
    for (auto& [model, values] : samples) values.push_back(rating_of(r, model, cfg));
  }
  std::map<std::string, RatingCi> out;
  for (auto& [model, values] : samples) {
    std::sort(values.begin(), values.end());
    out[model] = {detail::percentile(values, 50.0), detail::percentile(values, 2.5),
                  detail::percentile(values, 97.5)};
  }
  return out;
}

struct WinRateMatrix {
  std::vector<std::string> models;                 // sorted
  std::vector<std::optional<double>> cells;        // row-major P(row beats col)

  std::optional<double> at(const std::string& a, const std::string& b) const {
    const auto ia = index_of(a), ib = index_of(b);
    if (!ia || !ib) return std::nullopt;
    return cells[std::size_t(*ia) * models.size() + std::size_t(*ib)];
  }

  std::optional<int> index_of(const std::string& m) const {
    auto it = std::lower_bound(models.begin(), models.end(), m);
    if (it == models.end() || *it != m) return std::nullopt;
    return int(it - models.begin());
  }
};

inline WinRateMatrix win_rate_matrix(const std::vector<Vote>& votes) {
  WinRateMatrix w;
  for (const Vote& v : votes) {
    w.models.push_back(v.model_a);
    w.models.push_back(v.model_b);
  }
  std::sort(w.models.begin(), w.models.end());
  w.models.erase(std::unique(w.models.begin(), w.models.end()), w.models.end());
  const std::size_t n = w.models.size();
  std::vector<double> wins(n * n, 0.0);
  std::vector<long long> games(n * n, 0);
  for (const Vote& v : votes) {
    if (v.model_a == v.model_b) throw std::invalid_argument("win_rate_matrix: self-vote");
    const std::size_t a = std::size_t(*w.index_of(v.model_a));
    const std::size_t b = std::size_t(*w.index_of(v.model_b));
    const double sa = v.outcome == Outcome::a_wins ? 1.0 : (v.outcome == Outcome::b_wins ? 0.0 : 0.5);
    wins[a * n + b] += sa;
    ++games[a * n + b];
    wins[b * n + a] += 1.0 - sa;
    ++games[b * n + a];
  }
  w.cells.assign(n * n, std::nullopt);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      if (games[a * n + b] == 0) continue;
      const double p = wins[a * n + b] / double(games[a * n + b]);
      // mirror as the complement so both cells sum to one exactly
      w.cells[a * n + b] = p;
      w.cells[b * n + a] = 1.0 - p;
    }
  return w;
}

}  // namespace duet::arena
