// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "duet/guidance.hpp"

using namespace duet;

namespace {

VelocityPair random_pair(Rng& rng, int n = 6, int a = 9) {
  return {randn({n, 2}, rng), randn({a, 2}, rng)};
}

BranchOutputs random_branches(Rng& rng) {
  BranchOutputs b;
  b.uu = random_pair(rng);
  b.ub = random_pair(rng);
  b.tb = random_pair(rng);
  return b;
}

}  // namespace

TEST_CASE("branch planning covers the guidance regimes") {
  BranchPlan text_only = plan_branches({1.0, 7.5});
  REQUIRE((!text_only.need_uu && text_only.need_ub && text_only.need_tb));
  REQUIRE(text_only.nfe == 2);

  BranchPlan text_modality = plan_branches({3.5, 3.5});
  REQUIRE((text_modality.need_uu && !text_modality.need_ub && text_modality.need_tb));
  REQUIRE(text_modality.nfe == 2);

  BranchPlan general = plan_branches({2.0, 5.0});
  REQUIRE((general.need_uu && general.need_ub && general.need_tb));
  REQUIRE(general.nfe == 3);

  BranchPlan none = plan_branches({1.0, 1.0});
  REQUIRE((!none.need_uu && !none.need_ub && none.need_tb));
  REQUIRE(none.nfe == 1);
}

TEST_CASE("combine: scalar hand case") {
  BranchOutputs b;
  b.uu = {Tensor::scalar(0.0), Tensor::scalar(0.0)};
  b.ub = {Tensor::scalar(1.0), Tensor::scalar(1.0)};
  b.tb = {Tensor::scalar(3.0), Tensor::scalar(3.0)};
  VelocityPair out = combine(b, {2.0, 0.5});
  REQUIRE(out.v.item() == 3.0);  // 0 + 2*1 + 0.5*2
  REQUIRE(out.a.item() == 3.0);
}

TEST_CASE("combine: telescoping at (1,1) returns tb exactly") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    BranchOutputs b = random_branches(rng);
    VelocityPair out = combine(b, {1.0, 1.0});
    REQUIRE(out.v.data == b.tb->v.data);
    REQUIRE(out.a.data == b.tb->a.data);
    // the cancelled branches need not even be present
    BranchOutputs only_tb;
    only_tb.tb = b.tb;
    VelocityPair out2 = combine(only_tb, {1.0, 1.0});
    REQUIRE(out2.v.data == out.v.data);
  }
}

TEST_CASE("combine: text-only reduction bit-matches the standard formulation") {
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    BranchOutputs b = random_branches(rng);
    const double st = rng.uniform(0.5, 9.0);
    VelocityPair out = combine(b, {1.0, st});
    for (int i = 0; i < b.ub->v.numel(); ++i) {
      const double expect = b.ub->v.data[std::size_t(i)] +
                            st * (b.tb->v.data[std::size_t(i)] - b.ub->v.data[std::size_t(i)]);
      REQUIRE(out.v.data[std::size_t(i)] == expect);
    }
  }
}

TEST_CASE("combine: equal scales reduce to uu + s(tb - uu), bit-exact") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    BranchOutputs b = random_branches(rng);
    const double s = rng.uniform(0.5, 6.0);
    VelocityPair out = combine(b, {s, s});
    for (int i = 0; i < b.uu->a.numel(); ++i) {
      const double expect = b.uu->a.data[std::size_t(i)] +
                            s * (b.tb->a.data[std::size_t(i)] - b.uu->a.data[std::size_t(i)]);
      REQUIRE(out.a.data[std::size_t(i)] == expect);
    }
    // swapped factorization agrees bit-exactly when s_B == s_T
    SwappedBranchOutputs sw;
    sw.uu = b.uu;
    sw.tu = random_pair(rng);
    sw.tb = b.tb;
    VelocityPair out_sw = combine_swapped(sw, {s, s});
    REQUIRE(out_sw.v.data == out.v.data);
    REQUIRE(out_sw.a.data == out.a.data);
  }
}

TEST_CASE("combine: planned-branch evaluation is bit-identical to full evaluation") {
  Rng rng(24);
  for (double sb : {1.0, 2.0, 3.5}) {
    for (double st : {1.0, 3.5, 5.0}) {
      BranchOutputs full = random_branches(rng);
      const GuidanceScales s{sb, st};
      VelocityPair all = combine(full, s);

      BranchPlan plan = plan_branches(s);
      BranchOutputs planned;
      if (plan.need_uu) planned.uu = full.uu;
      if (plan.need_ub) planned.ub = full.ub;
      planned.tb = full.tb;
      VelocityPair reduced = combine(planned, s);
      REQUIRE(all.v.data == reduced.v.data);
      REQUIRE(all.a.data == reduced.a.data);
    }
  }
}

TEST_CASE("combine is affine in each scale") {
  Rng rng(25);
  BranchOutputs b = random_branches(rng);
  auto first = [&](const GuidanceScales& s) { return combine(b, s).v.data[0]; };
  // slope in s_b measured at two places: identical within rounding
  const double h = 0.25;
  const double slope1 = (first({2.0 + h, 5.0}) - first({2.0, 5.0})) / h;
  const double slope2 = (first({3.0 + h, 5.0}) - first({3.0, 5.0})) / h;
  REQUIRE(slope1 == Catch::Approx(slope2).margin(1e-9));
  const double tslope1 = (first({2.0, 5.0 + h}) - first({2.0, 5.0})) / h;
  const double tslope2 = (first({2.0, 7.0 + h}) - first({2.0, 7.0})) / h;
  REQUIRE(tslope1 == Catch::Approx(tslope2).margin(1e-9));
}

TEST_CASE("combine_swapped: scalar hand case and disagreement with text-only") {
  SwappedBranchOutputs b;
  b.uu = {Tensor::scalar(0.0), Tensor::scalar(0.0)};
  b.tu = {Tensor::scalar(2.0), Tensor::scalar(2.0)};
  b.tb = {Tensor::scalar(3.0), Tensor::scalar(3.0)};
  VelocityPair out = combine_swapped(b, {1.0, 2.0});
  REQUIRE(out.v.item() == 5.0);  // 0 + 2*2 + 1*1

  VelocityPair tele = combine_swapped(b, {1.0, 1.0});
  REQUIRE(tele.v.item() == 3.0);

  // At s_B = 1 the swapped order does not collapse to text-only CFG over a
  // fixed bridge state.
  Rng rng(26);
  int disagreements = 0;
  for (int trial = 0; trial < 100; ++trial) {
    BranchOutputs std_b = random_branches(rng);
    SwappedBranchOutputs sw;
    sw.uu = std_b.uu;
    sw.tu = random_pair(rng);
    sw.tb = std_b.tb;
    const double st = rng.uniform(1.5, 8.0);
    VelocityPair text_only = combine(std_b, {1.0, st});
    VelocityPair swapped = combine_swapped(sw, {1.0, st});
    if (text_only.v.data != swapped.v.data) ++disagreements;
  }
  REQUIRE(disagreements == 100);
}

TEST_CASE("combine: required branch absent throws") {
  BranchOutputs b;
  b.tb = {Tensor::scalar(1.0), Tensor::scalar(1.0)};
  REQUIRE_THROWS_AS(combine(b, {2.0, 5.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(combine(b, {1.0, 5.0}), std::invalid_argument);
  BranchOutputs empty;
  REQUIRE_THROWS_AS(combine(empty, {1.0, 1.0}), std::invalid_argument);
}
