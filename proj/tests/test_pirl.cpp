#include <doctest.h>

#include <cmath>
#include <vector>

#include "pirl_lab/errors.hpp"
#include "pirl_lab/pirl.hpp"
#include "pirl_lab/rng.hpp"

using namespace pirl_lab;

namespace {

pirl::StoredBatch empty_batch() { return {}; }

}  // namespace

TEST_CASE("history window semantics") {
  pirl::HistoryMemory memory(2);

  SUBCASE("push onto empty memory") {
    memory.push(0.5, empty_batch());
    CHECK(memory.window().size() == 1);
    CHECK_FALSE(memory.full());
  }

  SUBCASE("oldest-first eviction preserves order") {
    memory.push(0.1, empty_batch());
    memory.push(0.2, empty_batch());
    memory.push(0.3, empty_batch());
    REQUIRE(memory.window().size() == 2);
    CHECK(memory.window()[0] == 0.2);
    CHECK(memory.window()[1] == 0.3);
  }

  SUBCASE("window holds the last K of K+1 pushes") {
    pirl::HistoryMemory m(4);
    for (int i = 0; i <= 4; ++i) m.push(0.1 * i, empty_batch());
    REQUIRE(m.window().size() == 4);
    CHECK(m.window().front() == doctest::Approx(0.1).epsilon(1e-15));
  }

  SUBCASE("K=1 is a configuration error") {
    CHECK_THROWS_AS(pirl::HistoryMemory(1), ConfigError);
  }
}

TEST_CASE("historical statistics use the K-1 divisor") {
  pirl::HistoryMemory memory(3);
  memory.push(0.4, empty_batch());
  memory.push(0.5, empty_batch());

  SUBCASE("warm-up while the window is short") {
    CHECK_FALSE(pirl::historical_stats(memory).has_value());
  }

  SUBCASE("sample standard deviation") {
    memory.push(0.6, empty_batch());
    const auto stats = pirl::historical_stats(memory);
    REQUIRE(stats.has_value());
    CHECK(stats->mu_his == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(stats->sigma_his == doctest::Approx(0.1).epsilon(1e-12));
  }

  SUBCASE("constant window has zero deviation") {
    pirl::HistoryMemory m(3);
    for (int i = 0; i < 3; ++i) m.push(0.5, empty_batch());
    const auto stats = pirl::historical_stats(m);
    REQUIRE(stats.has_value());
    CHECK(stats->sigma_his == 0.0);
  }

  SUBCASE("two-point window") {
    pirl::HistoryMemory m(2);
    m.push(0.0, empty_batch());
    m.push(1.0, empty_batch());
    const auto stats = pirl::historical_stats(m);
    REQUIRE(stats.has_value());
    CHECK(stats->mu_his == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(stats->sigma_his == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  }
}

TEST_CASE("standardized signal with the zero-variance guard") {
  CHECK(pirl::xi(0.6, 0.5, 0.05) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(pirl::xi(0.5, 0.5, 0.1) == doctest::Approx(0.0));
  CHECK_FALSE(pirl::xi(0.7, 0.5, 0.0).has_value());
  CHECK_FALSE(pirl::xi(0.7, 0.5, 1e-9).has_value());
}

TEST_CASE("asymmetric rectification") {
  CHECK(pirl::phi_lambda(2.0, 0.1) == 2.0);
  CHECK(pirl::phi_lambda(-2.0, 0.1) == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(pirl::phi_lambda(0.0, 0.7) == 0.0);
  CHECK_THROWS_AS(pirl::phi_lambda(1.0, 1.5), ConfigError);
  CHECK_THROWS_AS(pirl::phi_lambda(1.0, -0.1), ConfigError);

  SUBCASE("sign preserving for positive lambda") {
    auto rng = make_stream(53);
    for (int i = 0; i < 100; ++i) {
      const double x = rng.next_double() * 8.0 - 4.0;
      const double y = pirl::phi_lambda(x, 0.3);
      CHECK(((x > 0 && y > 0) || (x < 0 && y < 0) || (x == 0 && y == 0)));
    }
  }
}

TEST_CASE("normalized local advantages") {
  SUBCASE("two-point group") {
    const auto n = pirl::normalized_local_advantages({1.0, -1.0});
    REQUIRE(n.has_value());
    CHECK((*n)[0] == doctest::Approx(1.0));
    CHECK((*n)[1] == doctest::Approx(-1.0));
  }

  SUBCASE("G=4 with one success") {
    const double ap = std::sqrt(3.0);
    const double am = -1.0 / std::sqrt(3.0);
    const auto n = pirl::normalized_local_advantages({ap, am, am, am});
    REQUIRE(n.has_value());
    CHECK((*n)[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK((*n)[1] == doctest::Approx(-2.0 / 3.0).epsilon(1e-14));
  }

  SUBCASE("G=8 with two successes") {
    const double ap = std::sqrt(3.0);
    const double am = -1.0 / std::sqrt(3.0);
    const auto n =
        pirl::normalized_local_advantages({ap, ap, am, am, am, am, am, am});
    REQUIRE(n.has_value());
    CHECK((*n)[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK((*n)[2] == doctest::Approx(-2.0 / 3.0).epsilon(1e-14));
  }

  SUBCASE("degenerate groups are skipped") {
    CHECK_FALSE(pirl::normalized_local_advantages({0.0, 0.0}).has_value());
  }

  SUBCASE("zero sum and mass G") {
    auto rng = make_stream(59);
    for (int trial = 0; trial < 100; ++trial) {
      const int g = 2 + static_cast<int>(rng.next_u64() % 10);
      std::vector<double> adv(g);
      double mean = 0.0;
      for (int i = 0; i < g; ++i) {
        adv[i] = rng.next_double() * 2.0 - 1.0;
        mean += adv[i];
      }
      for (int i = 0; i < g; ++i) adv[i] -= mean / g;  // centered like real advantages
      const auto n = pirl::normalized_local_advantages(adv);
      REQUIRE(n.has_value());
      double sum = 0.0;
      double mass = 0.0;
      for (double a : *n) {
        sum += a;
        mass += std::abs(a);
      }
      CHECK(std::abs(sum) < 1e-12);
      CHECK(std::abs(mass - g) < 1e-12);
    }
  }
}

TEST_CASE("policy improvement rewards") {
  group::Advantages two_point{{1.0, -1.0}, false};
  group::Advantages degenerate{{0.0, 0.0}, true};

  SUBCASE("product with a positive signal") {
    const auto set = pirl::pi_rewards({two_point}, 2.0);
    REQUIRE(set.groups.size() == 1);
    CHECK(set.groups[0] == std::vector<double>{2.0, -2.0});
  }

  SUBCASE("zero signal zeroes the rewards") {
    const auto set = pirl::pi_rewards({two_point}, 0.0);
    CHECK(set.groups[0] == std::vector<double>{0.0, 0.0});
  }

  SUBCASE("degenerate groups yield empty entries") {
    const auto set = pirl::pi_rewards({degenerate, two_point}, 1.0);
    CHECK(set.groups[0].empty());
    CHECK(set.groups[1].size() == 2);
  }

  SUBCASE("a negative signal flips the credit against the reinforced direction") {
    const double ap = std::sqrt(3.0);
    const double am = -1.0 / std::sqrt(3.0);
    group::Advantages g4{{ap, am, am, am}, false};
    const auto set = pirl::pi_rewards({g4}, -0.2);
    REQUIRE(set.groups[0].size() == 4);
    CHECK(set.groups[0][0] == doctest::Approx(-0.4).epsilon(1e-13));
    CHECK(set.groups[0][1] == doctest::Approx(0.4 / 3.0).epsilon(1e-13));
  }

  SUBCASE("per-group reward sums vanish") {
    auto rng = make_stream(61);
    for (int trial = 0; trial < 50; ++trial) {
      const int g = 2 + static_cast<int>(rng.next_u64() % 8);
      std::vector<int> rewards(g);
      for (int i = 0; i < g; ++i) rewards[i] = rng.next_double() < 0.5 ? 1 : 0;
      const auto adv = group::grpo_advantages(rewards);
      const auto set = pirl::pi_rewards({adv}, 1.7);
      if (adv.degenerate) {
        CHECK(set.groups[0].empty());
        continue;
      }
      double sum = 0.0;
      double mass = 0.0;
      for (double r : set.groups[0]) {
        sum += r;
        mass += std::abs(r);
      }
      CHECK(std::abs(sum) < 1e-12);
      CHECK(std::abs(mass - g * 1.7) < 1e-12);
    }
  }
}

TEST_CASE("smoothed improvement against the window mean") {
  pirl::HistoryMemory memory(2);
  CHECK_FALSE(pirl::smoothed_improvement(0.6, memory).has_value());
  memory.push(0.2, empty_batch());
  memory.push(0.4, empty_batch());
  CHECK(*pirl::smoothed_improvement(0.5, memory) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(*pirl::smoothed_improvement(0.3, memory) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("telescoping identity") {
  const auto check = pirl::telescoping_check({0.3, 0.4, 0.35, 0.5});
  CHECK(check.lhs == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(check.rhs == doctest::Approx(0.2).epsilon(1e-15));

  SUBCASE("constant sequences telescope to zero") {
    const auto c = pirl::telescoping_check({0.7, 0.7, 0.7});
    CHECK(c.lhs == 0.0);
    CHECK(c.rhs == 0.0);
  }

  SUBCASE("random sequences agree to machine precision") {
    auto rng = make_stream(67);
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 2 + static_cast<int>(rng.next_u64() % 100);
      std::vector<double> seq(n);
      for (double& x : seq) x = rng.next_double();
      const auto c = pirl::telescoping_check(seq);
      CHECK(std::abs(c.lhs - c.rhs) < 1e-12);
    }
  }

  SUBCASE("too-short sequences are rejected") {
    CHECK_THROWS_AS(pirl::telescoping_check({0.5}), std::domain_error);
  }
}

TEST_CASE("weighted-average identity for the smoothed objective") {
  SUBCASE("constant sequences") {
    const std::vector<double> seq(10, 0.3);
    const auto c = pirl::weighted_sum_identity(seq, 0.3, 4);
    CHECK(std::abs(c.lhs) < 1e-14);
    CHECK(std::abs(c.rhs) < 1e-14);
  }

  SUBCASE("K=1 reduces to telescoping") {
    const std::vector<double> seq = {0.2, 0.5, 0.4, 0.9};
    const auto c = pirl::weighted_sum_identity(seq, 0.1, 1);
    CHECK(c.lhs == doctest::Approx(0.9 - 0.1).epsilon(1e-13));
    CHECK(std::abs(c.lhs - c.rhs) < 1e-14);
  }

  SUBCASE("random sequences, both sides built independently") {
    auto rng = make_stream(71);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> seq(20);
      for (double& x : seq) x = rng.next_double();
      const auto c = pirl::weighted_sum_identity(seq, rng.next_double(), 4);
      CHECK(std::abs(c.lhs - c.rhs) < 1e-12);
    }
  }

  SUBCASE("requires more steps than the window") {
    CHECK_THROWS_AS(pirl::weighted_sum_identity({0.1, 0.2}, 0.0, 4), std::domain_error);
  }
}

TEST_CASE("improvement signal assembly") {
  pirl::HistoryMemory memory(2);

  SUBCASE("warm-up skip") {
    const auto s = pirl::improvement_signal(0.5, memory, 0.1);
    CHECK(s.skipped());
    CHECK(*s.skip_reason == "warm-up");
    CHECK_FALSE(s.xi.has_value());
  }

  SUBCASE("zero-variance skip") {
    memory.push(0.5, empty_batch());
    memory.push(0.5, empty_batch());
    const auto s = pirl::improvement_signal(0.7, memory, 0.1);
    CHECK(s.skipped());
    CHECK(*s.skip_reason == "zero-variance history");
  }

  SUBCASE("live signal") {
    memory.push(0.3, empty_batch());
    memory.push(0.5, empty_batch());
    const auto s = pirl::improvement_signal(0.6, memory, 0.1);
    REQUIRE_FALSE(s.skipped());
    CHECK(*s.mu_his == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(*s.xi == doctest::Approx((0.6 - 0.4) / *s.sigma_his).epsilon(1e-12));
    CHECK(*s.phi_xi == doctest::Approx(*s.xi).epsilon(1e-13));
  }
}
