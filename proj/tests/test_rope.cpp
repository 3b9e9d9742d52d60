// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "duet/rope.hpp"

using namespace duet;

TEST_CASE("grid positions") {
  TimeGrid g(1.5, 6.0);  // s = 4
  REQUIRE(g.ratio() == 4.0);
  REQUIRE(position_video(g, 3) == 12.0);
  REQUIRE(position_video(g, 0) == 0.0);

  TimeGrid unit(2.0, 2.0);
  for (int i = 0; i < 5; ++i) REQUIRE(position_video(unit, i) == double(i));

  TimeGrid g2(6.0, 48.0);
  REQUIRE(position_video(g2, 5) == 40.0);

  REQUIRE(position_audio(g, 0) == 0.0);
  REQUIRE(position_audio(g, 7) == 7.0);
  // same instant, same coordinate
  REQUIRE(position_video(g, 3) == position_audio(g, 12));

  REQUIRE_THROWS_AS(position_video(g, -1), std::invalid_argument);
  REQUIRE_THROWS_AS(TimeGrid(0.0, 6.0), std::invalid_argument);
}

TEST_CASE("rotary basis frequencies decrease") {
  RotaryBasis b(8, 10000.0);
  REQUIRE(b.theta.size() == 4);
  REQUIRE(b.theta[0] == 1.0);
  for (std::size_t m = 1; m < b.theta.size(); ++m) REQUIRE(b.theta[m] < b.theta[m - 1]);
  REQUIRE_THROWS_AS(RotaryBasis(5), std::invalid_argument);
}

TEST_CASE("rotary rotation: identity at zero, quarter turn, norm preservation") {
  RotaryBasis b2(2, 10.0);
  Rng rng(7);
  Tensor x = randn({3, 2}, rng);
  Tensor same = apply_rotary(nullptr, x, {0.0, 0.0, 0.0}, b2);
  REQUIRE(same.data == x.data);

  const double half_pi = std::acos(0.0);
  Tensor e({1, 2}, {1.0, 0.0});
  Tensor r = apply_rotary(nullptr, e, {half_pi}, b2);  // theta_0 == 1
  REQUIRE(r.data[0] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(r.data[1] == Catch::Approx(1.0).margin(1e-12));

  RotaryBasis b8(8, 10000.0);
  Tensor q = randn({5, 8}, rng);
  Tensor rot = apply_rotary(nullptr, q, {0.3, 1.0, 2.7, 11.0, 40.0}, b8);
  for (int i = 0; i < 5; ++i)
    for (int m = 0; m < 4; ++m) {
      const double before = std::hypot(q.at(i, 2 * m), q.at(i, 2 * m + 1));
      const double after = std::hypot(rot.at(i, 2 * m), rot.at(i, 2 * m + 1));
      REQUIRE(std::abs(before - after) <= 1e-12);
    }
}

TEST_CASE("aligned grid: video token i matches audio token s*i exactly") {
  TimeGrid g(1.5, 6.0);
  RotaryBasis basis(8, 10000.0);
  Rng rng(8);
  Tensor probe = randn({1, 8}, rng);
  for (int i = 0; i < 12; ++i) {
    const double pv = position_video(g, i);
    const double pa = position_audio(g, 4 * i);
    REQUIRE(pv == pa);  // s*i integral: identical coordinates, identical phases
    Tensor rv = apply_rotary(nullptr, probe, {pv}, basis);
    Tensor ra = apply_rotary(nullptr, probe, {pa}, basis);
    for (int j = 0; j < 8; ++j) REQUIRE(std::abs(rv.data[std::size_t(j)] - ra.data[std::size_t(j)]) <= 1e-12);
  }
}

TEST_CASE("attention logits depend only on relative positions") {
  RotaryBasis basis(8, 10000.0);
  Rng rng(9);
  Tensor q = randn({4, 8}, rng);
  Tensor k = randn({6, 8}, rng);
  std::vector<double> qp{0.0, 4.0, 8.0, 12.0};
  std::vector<double> kp{0.0, 1.0, 2.0, 3.0, 4.0, 5.0};

  auto logits = [&](const std::vector<double>& qpos, const std::vector<double>& kpos) {
    Tensor rq = apply_rotary(nullptr, q, qpos, basis);
    Tensor rk = apply_rotary(nullptr, k, kpos, basis);
    return matmul(nullptr, rq, transpose(nullptr, rk));
  };

  Tensor base = logits(qp, kp);
  for (double delta : {0.37, 5.0, -2.25}) {
    std::vector<double> qs = qp, ks = kp;
    for (double& p : qs) p += delta;
    for (double& p : ks) p += delta;
    Tensor shifted = logits(qs, ks);
    for (int i = 0; i < base.numel(); ++i)
      REQUIRE(std::abs(base.data[std::size_t(i)] - shifted.data[std::size_t(i)]) <= 1e-9);
  }
}
