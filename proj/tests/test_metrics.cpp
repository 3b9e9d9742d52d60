// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "duet/cpcer.hpp"
#include "duet/elo.hpp"

using namespace duet;
using namespace duet::arena;
using namespace duet::transcript;

TEST_CASE("elo: no votes, single vote, alternating wins") {
  EloConfig cfg;
  Ratings empty = elo_ratings({}, cfg);
  REQUIRE(empty.empty());
  REQUIRE(rating_of(empty, "anyone", cfg) == 1000.0);

  Ratings one = elo_ratings({{"A", "B", Outcome::a_wins}}, cfg);
  REQUIRE(one.at("A") == 1002.0);  // E = 0.5 at equal ratings, K = 4
  REQUIRE(one.at("B") == 998.0);

  std::vector<Vote> alternating;
  for (int i = 0; i < 1000; ++i)
    alternating.push_back({"A", "B", i % 2 == 0 ? Outcome::a_wins : Outcome::b_wins});
  Ratings r = elo_ratings(alternating, cfg);
  REQUIRE(std::abs(r.at("A") - r.at("B")) < 4.0);

  REQUIRE_THROWS_AS(elo_ratings({{"A", "A", Outcome::tie}}, cfg), std::invalid_argument);
}

TEST_CASE("elo conserves the total rating exactly") {
  EloConfig cfg;
  const std::vector<std::string> models{"A", "B", "C", "D", "E"};
  Rng rng(61);
  std::vector<Vote> votes;
  votes.reserve(100000);
  for (int i = 0; i < 100000; ++i) {
    const int a = int(rng.uniform_int(0, 4));
    int b = int(rng.uniform_int(0, 3));
    if (b >= a) ++b;
    const double u = rng.uniform();
    votes.push_back({models[std::size_t(a)], models[std::size_t(b)],
                     u < 0.45 ? Outcome::a_wins : (u < 0.9 ? Outcome::b_wins : Outcome::tie)});
  }
  Ratings r = elo_ratings(votes, cfg);
  double total = 0.0;
  for (const auto& [m, v] : r) total += v;
  REQUIRE(total == double(r.size()) * cfg.initial);
}

TEST_CASE("bootstrap intervals behave and are deterministic") {
  EloConfig cfg;
  cfg.bootstrap_iters = 200;
  cfg.seed = 62;

  std::vector<Vote> one_sided;
  for (int i = 0; i < 60; ++i) one_sided.push_back({"A", "B", Outcome::a_wins});
  auto ci = bootstrap_ci(one_sided, cfg);
  REQUIRE(ci.at("A").lo > ci.at("B").hi);

  std::vector<Vote> symmetric;
  for (int i = 0; i < 60; ++i)
    symmetric.push_back({"A", "B", i % 2 == 0 ? Outcome::a_wins : Outcome::b_wins});
  auto ci_sym = bootstrap_ci(symmetric, cfg);
  REQUIRE(ci_sym.at("A").lo <= ci_sym.at("B").hi);
  REQUIRE(ci_sym.at("B").lo <= ci_sym.at("A").hi);

  auto again = bootstrap_ci(one_sided, cfg);
  REQUIRE(again.at("A").median == ci.at("A").median);
  REQUIRE(again.at("A").lo == ci.at("A").lo);
  REQUIRE(again.at("A").hi == ci.at("A").hi);

  REQUIRE_THROWS_AS(bootstrap_ci({}, cfg), std::domain_error);
}

TEST_CASE("win-rate matrix") {
  WinRateMatrix w = win_rate_matrix({{"A", "B", Outcome::a_wins}});
  REQUIRE(*w.at("A", "B") == 1.0);
  REQUIRE(*w.at("B", "A") == 0.0);

  WinRateMatrix w2 = win_rate_matrix({{"A", "B", Outcome::a_wins}, {"A", "B", Outcome::tie}});
  REQUIRE(*w2.at("A", "B") == 0.75);
  REQUIRE(*w2.at("A", "B") + *w2.at("B", "A") == 1.0);

  WinRateMatrix empty = win_rate_matrix({});
  REQUIRE(empty.models.empty());

  WinRateMatrix sparse = win_rate_matrix({{"A", "B", Outcome::a_wins}, {"C", "D", Outcome::tie}});
  REQUIRE_FALSE(sparse.at("A", "C").has_value());
  REQUIRE(*sparse.at("C", "D") == 0.5);
}

TEST_CASE("cpcer: permutation invariance and fixtures") {
  SpeakerTranscript ref{{"[S01]", "hello"}, {"[S02]", "world"}};
  SpeakerTranscript swapped{{"[S01]", "world"}, {"[S02]", "hello"}};
  REQUIRE(cpcer(ref, swapped) == 0.0);
  REQUIRE(cpcer(ref, ref) == 0.0);

  SpeakerTranscript close{{"[S01]", "hallo"}, {"[S02]", "world"}};
  REQUIRE(cpcer(ref, close) == Catch::Approx(0.1).margin(1e-15));  // 1 edit / 10 chars

  SpeakerTranscript empty_texts{{"[S01]", ""}, {"[S02]", ""}};
  REQUIRE(cpcer(ref, empty_texts) == 1.0);

  SpeakerTranscript relabeled{{"[X]", "world"}, {"[Y]", "hello"}};
  REQUIRE(cpcer(ref, relabeled) == 0.0);

  REQUIRE_THROWS_AS(cpcer({}, ref), std::domain_error);
  REQUIRE_THROWS_AS(cpcer(SpeakerTranscript{{"[S01]", ""}}, ref), std::domain_error);
}

TEST_CASE("cpcer: unbalanced speaker sets") {
  SpeakerTranscript ref{{"[S01]", "abcd"}, {"[S02]", "efgh"}};
  // extra hypothesis speaker counts as pure insertions
  SpeakerTranscript extra{{"[A]", "abcd"}, {"[B]", "efgh"}, {"[C]", "xy"}};
  REQUIRE(cpcer(ref, extra) == Catch::Approx(2.0 / 8.0).margin(1e-15));
  // missing hypothesis speaker faces an empty slot (all deletions)
  SpeakerTranscript missing{{"[A]", "abcd"}};
  REQUIRE(cpcer(ref, missing) == Catch::Approx(4.0 / 8.0).margin(1e-15));

  SpeakerTranscript nine;
  for (int i = 0; i < 9; ++i) nine[std::string("[S0") + char('0' + i) + "]"] = "x";
  REQUIRE_THROWS_AS(cpcer(nine, ref), std::invalid_argument);
}

TEST_CASE("cpcer handles multi-byte characters as single units") {
  SpeakerTranscript ref{{"[S01]", "\xe4\xbd\xa0\xe5\xa5\xbd"}};  // two CJK code points
  SpeakerTranscript hyp{{"[S01]", "\xe4\xbd\xa0\xe5\x97\xa8"}};  // one substituted
  REQUIRE(cpcer(ref, hyp) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE_THROWS_AS(decode_utf8("\xff"), std::invalid_argument);
}
