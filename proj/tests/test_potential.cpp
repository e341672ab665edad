#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "market.hpp"
#include "potential.hpp"
#include "support/samples.hpp"

using namespace taton;

namespace {

Market single_leontief() {
    return Market::create(2, {1.0}, {UtilitySpec::leontief({1.0, 1.0})});
}

Market two_symmetric_leontief() {
    return Market::create(2, {0.5, 0.5},
                          {UtilitySpec::leontief({2.0, 1.0}),
                           UtilitySpec::leontief({1.0, 2.0})});
}

Market random_market(Rng& rng, int buyers, int goods, bool linear_ok) {
    std::vector<double> budgets;
    std::vector<UtilitySpec> specs;
    for (int i = 0; i < buyers; ++i) {
        budgets.push_back(rng.uniform(0.5, 2.0));
        auto kind = linear_ok ? samples::kAllKinds[rng.below(5)]
                              : samples::kConcaveSmoothKinds[rng.below(4)];
        specs.push_back(samples::random_spec(kind, rng, goods));
    }
    return Market::create(goods, std::move(budgets), std::move(specs));
}

}  // namespace

TEST_CASE("potential matches hand-computed values") {
    auto market = single_leontief();
    auto at_eq = potential(market, {0.5, 0.5});
    CHECK(at_eq.phi == doctest::Approx(1.0).epsilon(1e-14));
    REQUIRE(at_eq.buyer_terms.size() == 1);
    CHECK(at_eq.buyer_terms[0] == doctest::Approx(0.0).epsilon(1e-14));

    auto off = potential(market, {1.0, 1.0});
    CHECK(off.phi == doctest::Approx(2.0 - std::log(2.0)).epsilon(1e-14));
    CHECK(off.buyer_terms[0] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("potential scaling identity from expenditure homogeneity") {
    Rng rng(301);
    for (int t = 0; t < 100; ++t) {
        auto market = random_market(rng, 3, 3, true);
        auto p = samples::interior_prices(rng, 3);
        double lambda = rng.uniform(0.2, 5.0);
        std::vector<double> ps(p);
        double sum_p = 0.0;
        for (size_t j = 0; j < p.size(); ++j) {
            ps[j] *= lambda;
            sum_p += p[j];
        }
        double b_total = 0.0;
        for (double b : market.budgets) b_total += b;
        double expected = potential_scalar(market, p) +
                          (lambda - 1.0) * sum_p - std::log(lambda) * b_total;
        CHECK(potential_scalar(market, ps) ==
              doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("potential and potential_scalar agree") {
    Rng rng(302);
    for (int t = 0; t < 50; ++t) {
        auto market = random_market(rng, 4, 3, true);
        auto p = samples::interior_prices(rng, 3);
        CHECK(potential(market, p).phi == potential_scalar(market, p));
    }
}

TEST_CASE("eg_dual differs from the potential by the budget entropy constant") {
    auto market = single_leontief();
    CHECK(eg_dual(market, {0.5, 0.5}) == doctest::Approx(0.0).epsilon(1e-14));

    auto two = two_symmetric_leontief();
    double offset = 2.0 * (0.5 * std::log(0.5) - 0.5);  // -log2 - 1
    CHECK(offset == doctest::Approx(-std::log(2.0) - 1.0).epsilon(1e-15));

    Rng rng(303);
    for (int t = 0; t < 100; ++t) {
        auto p = samples::interior_prices(rng, 2);
        CHECK(eg_dual(two, p) - potential_scalar(two, p) ==
              doctest::Approx(offset).epsilon(1e-12));
    }
}

TEST_CASE("eg_dual minus potential is constant in p for random markets") {
    Rng rng(304);
    for (int trial = 0; trial < 5; ++trial) {
        auto market = random_market(rng, 4, 3, true);
        double expected = 0.0;
        for (double b : market.budgets) expected += b * std::log(b) - b;

        std::vector<double> diffs;
        for (int t = 0; t < 100; ++t) {
            auto p = samples::interior_prices(rng, 3);
            diffs.push_back(eg_dual(market, p) - potential_scalar(market, p));
        }
        double mean = 0.0;
        for (double d : diffs) mean += d;
        mean /= diffs.size();
        double var = 0.0;
        for (double d : diffs) var += (d - mean) * (d - mean);
        CHECK(std::sqrt(var / diffs.size()) <= 1e-10);
        CHECK(mean == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("excess_demand matches hand-computed values") {
    auto market = single_leontief();
    auto eq = excess_demand(market, {0.5, 0.5});
    CHECK(eq.z[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(eq.z[1] == doctest::Approx(0.0).epsilon(1e-14));

    auto off = excess_demand(market, {1.0, 1.0});
    CHECK(off.demand[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(off.demand[1] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(off.z[0] == doctest::Approx(-0.5).epsilon(1e-14));

    // Opposed Leontief buyers clear the symmetric price exactly.
    auto two = two_symmetric_leontief();
    auto z2 = excess_demand(two, {0.5, 0.5});
    CHECK(z2.z[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(z2.z[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("walras law: p dot D equals total budget") {
    Rng rng(305);
    for (int t = 0; t < 200; ++t) {
        int goods = 2 + static_cast<int>(rng.below(3));
        auto market = random_market(rng, 3, goods, true);
        auto p = samples::interior_prices(rng, goods);
        auto ed = excess_demand(market, p);
        double pd = 0.0, sum_p = 0.0;
        for (int j = 0; j < goods; ++j) {
            pd += p[j] * ed.demand[j];
            sum_p += p[j];
        }
        CHECK(pd == doctest::Approx(1.0).epsilon(1e-10));
        // Equivalent statement on z when budgets sum to 1.
        double pz = 0.0;
        for (int j = 0; j < goods; ++j) pz += p[j] * ed.z[j];
        CHECK(pz == doctest::Approx(1.0 - sum_p).epsilon(1e-10));
    }
}

TEST_CASE("kl_divergence matches hand-computed values") {
    CHECK(kl_divergence({0.5, 0.5}, {0.5, 0.5}) == 0.0);
    CHECK(kl_divergence({1.0}, {2.0}) ==
          doctest::Approx(1.0 - std::log(2.0)).epsilon(1e-14));
    CHECK(kl_divergence({2.0}, {1.0}) ==
          doctest::Approx(2.0 * std::log(2.0) - 1.0).epsilon(1e-14));
    CHECK(kl_divergence({1.0}, {2.0}) != kl_divergence({2.0}, {1.0}));
}

TEST_CASE("kl_divergence is nonnegative and zero only at equality") {
    Rng rng(306);
    for (int t = 0; t < 500; ++t) {
        int m = 1 + static_cast<int>(rng.below(5));
        auto x = samples::positive_values(rng, m, 0.1, 4.0);
        auto y = samples::positive_values(rng, m, 0.1, 4.0);
        double kl = kl_divergence(x, y);
        CHECK(kl >= 0.0);
        CHECK(kl_divergence(x, x) == 0.0);
    }
}

TEST_CASE("kl_divergence boundary and error cases") {
    // Zero mass in x contributes the reference mass (the x log x limit).
    CHECK(kl_divergence({0.0}, {2.0}) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(kl_divergence({0.0}, {0.0}) == 0.0);
    // Positive mass against a zero reference is infinite.
    CHECK_THROWS_AS(kl_divergence({1.0}, {0.0}), std::domain_error);
    CHECK_THROWS_AS(kl_divergence({-1.0}, {1.0}), std::domain_error);
    CHECK_THROWS_AS(kl_divergence({1.0}, {-1.0}), std::domain_error);
    CHECK_THROWS_AS(kl_divergence({1.0}, {1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("kl lower bound for bounded relative steps") {
    // For |d|/p <= 1/4, d^2/p <= (9/2) kl(p+d, p); the step-size analysis
    // leans on this coordinatewise bound.
    Rng rng(307);
    for (int t = 0; t < 2000; ++t) {
        double p = rng.uniform(1e-6, 10.0);
        double d = p * rng.uniform(-0.25, 0.25);
        double kl = kl_divergence({p + d}, {p});
        CHECK(d * d / p <= 4.5 * kl + 1e-18);
    }
}

TEST_CASE("subgradient_check: FD of phi equals minus excess demand") {
    auto market = single_leontief();

    // Away from equilibrium: d(phi)/dp_j = 1 - 1/(p1+p2) = 0.5 at (1,1).
    auto ed = excess_demand(market, {1.0, 1.0});
    CHECK(-ed.z[0] == doctest::Approx(0.5).epsilon(1e-14));
    auto check = subgradient_check(market, {1.0, 1.0});
    CHECK(check.evaluated);
    CHECK(check.max_rel_error < 1e-8);

    // At equilibrium the gradient vanishes.
    auto at_eq = subgradient_check(market, {0.5, 0.5});
    CHECK(at_eq.evaluated);
    CHECK(at_eq.max_rel_error < 1e-8);
}

TEST_CASE("subgradient_check holds across smooth random markets") {
    Rng rng(308);
    for (int t = 0; t < 100; ++t) {
        int goods = 2 + static_cast<int>(rng.below(3));
        auto market = random_market(rng, 3, goods, false);
        auto p = samples::interior_prices(rng, goods);
        auto check = subgradient_check(market, p);
        REQUIRE(check.evaluated);
        CHECK(check.max_rel_error <= 1e-5);
    }
}

TEST_CASE("subgradient_check skips near linear ties with a note") {
    auto market = Market::create(2, {1.0}, {UtilitySpec::linear({1.0, 1.0})});
    auto tied = subgradient_check(market, {1.0, 1.0});
    CHECK_FALSE(tied.evaluated);
    CHECK(tied.note.find("tie") != std::string::npos);

    // Clearly away from the tie the check runs and passes.
    auto apart = subgradient_check(market, {0.5, 1.5});
    CHECK(apart.evaluated);
    CHECK(apart.max_rel_error <= 1e-5);
}

TEST_CASE("phi is convex along random segments") {
    Rng rng(309);
    int done = 0;
    while (done < 1000) {
        int goods = 2 + static_cast<int>(rng.below(3));
        auto market = random_market(rng, 2, goods, true);
        auto p = samples::interior_prices(rng, goods);
        auto q = samples::interior_prices(rng, goods);
        double alpha = rng.uniform(0.0, 1.0);
        std::vector<double> mid(goods);
        for (int j = 0; j < goods; ++j)
            mid[j] = alpha * p[j] + (1.0 - alpha) * q[j];
        double lhs = potential_scalar(market, mid);
        double rhs = alpha * potential_scalar(market, p) +
                     (1.0 - alpha) * potential_scalar(market, q);
        CHECK(lhs <= rhs + 1e-10);
        ++done;
    }
}
