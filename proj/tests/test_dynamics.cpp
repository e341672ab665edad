#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "demand.hpp"
#include "dynamics.hpp"
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

Market random_leontief_market(Rng& rng, int buyers, int goods) {
    std::vector<double> budgets;
    std::vector<UtilitySpec> specs;
    for (int i = 0; i < buyers; ++i) {
        budgets.push_back(rng.uniform(0.5, 2.0));
        specs.push_back(UtilitySpec::leontief(samples::positive_values(rng, goods)));
    }
    return Market::create(goods, std::move(budgets), std::move(specs));
}

}  // namespace

TEST_CASE("termination_name") {
    CHECK(std::string(termination_name(Termination::Converged)) == "converged");
    CHECK(std::string(termination_name(Termination::MaxIterations)) ==
          "max-iterations");
    CHECK(std::string(termination_name(Termination::Diverged)) == "diverged");
}

TEST_CASE("entropic_step matches hand-computed values") {
    auto p = entropic_step({0.5, 0.5}, {1.0, -1.0}, 5.0);
    CHECK(p[0] == doctest::Approx(0.5 * std::exp(0.2)).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.5 * std::exp(-0.2)).epsilon(1e-15));
    CHECK(p[0] == doctest::Approx(0.61070).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(0.40937).epsilon(1e-4));
}

TEST_CASE("entropic_step fixes market clearing exactly") {
    std::vector<double> p{0.3, 1.7, 0.25};
    CHECK(entropic_step(p, {0.0, 0.0, 0.0}, 7.0) == p);
}

TEST_CASE("entropic_step is scale covariant") {
    Rng rng(501);
    for (int t = 0; t < 100; ++t) {
        int m = 2 + static_cast<int>(rng.below(3));
        auto p = samples::interior_prices(rng, m);
        std::vector<double> z(m);
        for (double& zj : z) zj = rng.uniform(-1.0, 2.0);
        double gamma = rng.uniform(1.0, 20.0);
        double lambda = rng.uniform(0.2, 5.0);
        std::vector<double> ps(p);
        for (double& v : ps) v *= lambda;
        auto stepped = entropic_step(ps, z, gamma);
        auto base = entropic_step(p, z, gamma);
        for (int j = 0; j < m; ++j)
            CHECK(stepped[j] ==
                  doctest::Approx(lambda * base[j]).epsilon(1e-14));
    }
}

TEST_CASE("entropic_step rejects bad input") {
    CHECK_THROWS_AS(entropic_step({1.0}, {0.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(entropic_step({1.0}, {0.0}, -2.0), std::invalid_argument);
    CHECK_THROWS_AS(entropic_step({1.0, 1.0}, {0.0}, 1.0), std::invalid_argument);
}

TEST_CASE("adaptive step-size rule") {
    // Already large enough: 5 * max(1, 1.5) = 7.5 < 10.
    CHECK(step_size_adaptive_update(10.0, {1.5, 0.2}) == 10.0);
    // Demand spike forces an escalation to 5 * 3.
    CHECK(step_size_adaptive_update(5.0, {3.0, 1.0}) == 15.0);
    // The floor is 5 even when demand is slack.
    CHECK(step_size_adaptive_update(2.0, {0.1, 0.1}) == 5.0);
}

TEST_CASE("epsilon factor of the theoretical step size") {
    CHECK(step_size_epsilon_factor(0.0) == 6.0);
    CHECK(step_size_epsilon_factor(2.0) ==
          doctest::Approx(6.0 + 170.0 / 12.0 + 100.0 / 72.0).epsilon(1e-15));
    CHECK(step_size_epsilon_factor(2.0) == doctest::Approx(21.5556).epsilon(1e-5));
}

TEST_CASE("theoretical gamma for the single symmetric leontief buyer") {
    auto market = single_leontief();
    auto r = step_size_theoretical(market, {0.5, 0.5});
    REQUIRE(r.feasible);
    CHECK(r.epsilon == 0.0);
    // Indirect utility 1, sup h = 1, ratio term 2 per good: (1 + 3) * 6.
    CHECK(r.gamma == doctest::Approx(24.0).epsilon(1e-14));
    REQUIRE(r.hicksian_sup.size() == 2);
    CHECK(r.hicksian_sup[0] == 1.0);
    CHECK(r.ratio_term[0] == 2.0);
}

TEST_CASE("theoretical gamma for the opposed leontief pair") {
    auto market = two_symmetric_leontief();
    auto r = step_size_theoretical(market, {0.6, 0.4});
    REQUIRE(r.feasible);
    // Worst good: 0.3125*1 + 2 + (0.5/1.4)*2 + 8, from the hand calculation.
    CHECK(r.gamma == doctest::Approx(72.160714285714286).epsilon(1e-12));
    // Leontief suprema are the valuations themselves.
    CHECK(r.hicksian_sup == std::vector<double>{2.0, 1.0, 1.0, 2.0});
    CHECK(r.ratio_term == std::vector<double>{8.0, 2.0, 2.0, 8.0});
}

TEST_CASE("theoretical gamma is infeasible beyond leontief markets") {
    SUBCASE("linear buyer: elasticity is unbounded by convention") {
        auto market = Market::create(2, {1.0}, {UtilitySpec::linear({1.0, 2.0})});
        auto r = step_size_theoretical(market, {0.5, 0.5});
        CHECK_FALSE(r.feasible);
        CHECK(r.diagnostic.find("linear buyer") != std::string::npos);
    }
    SUBCASE("substitutes: the demand-ratio infimum collapses at the boundary") {
        auto market = Market::create(2, {1.0}, {UtilitySpec::ces({1.0, 1.0}, 0.5)});
        auto r = step_size_theoretical(market, {0.5, 0.5});
        CHECK_FALSE(r.feasible);
        CHECK(r.diagnostic.find("falls toward 0") != std::string::npos);
    }
    SUBCASE("complements: the demand supremum diverges at the boundary") {
        auto market = Market::create(2, {1.0}, {UtilitySpec::ces({1.0, 1.0}, -2.0)});
        auto r = step_size_theoretical(market, {0.5, 0.5});
        CHECK_FALSE(r.feasible);
        CHECK(r.diagnostic.find("keeps growing") != std::string::npos);
    }
    SUBCASE("cobb-douglas: the demand supremum diverges at the boundary") {
        auto market = Market::create(2, {1.0}, {UtilitySpec::cobb_douglas({0.5, 0.5})});
        auto r = step_size_theoretical(market, {0.5, 0.5});
        CHECK_FALSE(r.feasible);
        CHECK(r.diagnostic.find("keeps growing") != std::string::npos);
    }
    SUBCASE("run in theoretical mode surfaces the diagnostic") {
        auto market = Market::create(2, {1.0}, {UtilitySpec::ces({1.0, 1.0}, 0.5)});
        RunConfig config;
        config.mode = StepMode::Theoretical;
        CHECK_THROWS_AS(run(market, {0.5, 0.5}, config), std::domain_error);
    }
}

TEST_CASE("run terminates immediately at an equilibrium start") {
    auto traj = run(single_leontief(), {0.5, 0.5}, RunConfig{});
    CHECK(traj.termination == Termination::Converged);
    CHECK(traj.iterations == 0);
    REQUIRE(traj.ts.size() == 1);
    CHECK(traj.ts[0] == 0);
    CHECK(traj.final_prices == std::vector<double>{0.5, 0.5});
    CHECK(traj.final_max_excess == 0.0);
}

TEST_CASE("run preserves the price ratio of a single leontief buyer") {
    // With one buyer both goods see the same excess demand, so the entropic
    // update multiplies both prices by the same factor: the 3:2 start can
    // only converge to the equilibrium on that ray.
    auto traj = run(single_leontief(), {0.6, 0.4}, RunConfig{});
    CHECK(traj.termination == Termination::Converged);
    CHECK(traj.final_prices[0] / traj.final_prices[1] ==
          doctest::Approx(1.5).epsilon(1e-12));
    CHECK(traj.final_prices[0] + traj.final_prices[1] ==
          doctest::Approx(1.0).epsilon(1e-5));
    auto z = excess_demand(single_leontief(), traj.final_prices);
    CHECK(std::abs(z.z[0]) <= 1e-6);
    CHECK(std::abs(z.z[1]) <= 1e-6);
}

TEST_CASE("run converges to the unique symmetric equilibrium") {
    auto market = two_symmetric_leontief();
    for (auto mode : {StepMode::Adaptive, StepMode::Theoretical}) {
        RunConfig config;
        config.mode = mode;
        auto traj = run(market, {0.6, 0.4}, config);
        CHECK(traj.termination == Termination::Converged);
        CHECK(traj.final_prices[0] == doctest::Approx(0.5).epsilon(2e-5));
        CHECK(traj.final_prices[1] == doctest::Approx(0.5).epsilon(2e-5));
        CHECK(traj.final_max_excess <= config.tol);
        CHECK(traj.price_change_violations == 0);
        CHECK(traj.steps_checked == traj.iterations);
    }
}

TEST_CASE("theoretical mode keeps gamma fixed; adaptive may escalate") {
    auto market = two_symmetric_leontief();
    RunConfig config;
    config.mode = StepMode::Theoretical;
    auto traj = run(market, {0.6, 0.4}, config);
    CHECK(traj.gamma_initial == traj.gamma_final);
    CHECK(traj.escalation_count == 0);
    CHECK(traj.gamma_initial ==
          doctest::Approx(72.160714285714286).epsilon(1e-12));

    // Starting from very cheap goods, demand is huge and the adaptive rule
    // must raise gamma at t = 0.
    RunConfig adaptive;
    adaptive.mode = StepMode::Adaptive;
    auto esc = run(market, {0.01, 0.01}, adaptive);
    CHECK(esc.termination == Termination::Converged);
    CHECK(esc.escalation_count >= 1);
    REQUIRE(!esc.escalations.empty());
    CHECK(esc.escalations[0].t == 0);
    CHECK(esc.escalations[0].from == adaptive.gamma0);
    CHECK(esc.escalations[0].to > adaptive.gamma0);
    CHECK(esc.escalations[0].trigger_demand > 1.0);
    CHECK(esc.gamma_final >= esc.escalations[0].to);
    CHECK(esc.price_change_violations == 0);
}

TEST_CASE("every recorded entropic step respects the price-change lemma") {
    auto market = two_symmetric_leontief();
    RunConfig config;
    config.record_every = 1;
    auto traj = run(market, {0.9, 0.1}, config);
    REQUIRE(traj.termination == Termination::Converged);
    CHECK(traj.price_change_violations == 0);
    const double lo = std::exp(-0.2) - 1e-12;
    const double hi = std::exp(0.2) + 1e-12;
    for (size_t r = 1; r < traj.ts.size(); ++r) {
        auto prev = traj.price_row(r - 1);
        auto cur = traj.price_row(r);
        for (int j = 0; j < traj.goods; ++j) {
            double ratio = cur[j] / prev[j];
            CHECK(ratio >= lo);
            CHECK(ratio <= hi);
            // The additive form of the same lemma.
            CHECK(std::abs(cur[j] - prev[j]) / prev[j] <= 0.25);
        }
    }
}

TEST_CASE("bregman descent certificate holds along adaptive runs") {
    Rng rng(502);
    for (int trial = 0; trial < 5; ++trial) {
        auto market = random_leontief_market(rng, 4, 3);
        auto p0 = samples::interior_prices(rng, 3);
        RunConfig config;
        config.check_bregman = true;
        auto traj = run(market, p0, config);
        CHECK(traj.termination == Termination::Converged);
        CHECK(traj.bregman_checked);
        CHECK(traj.bregman_violations == 0);
        CHECK(traj.steps_checked > 0);
    }
}

TEST_CASE("indirect utility stays bounded by the step-size factors") {
    // Along the run, v_i(p^t) * sup_h never exceeds its starting value plus
    // the demand-ratio slack; this is the quantity the theoretical gamma is
    // built from.
    Rng rng(503);
    for (int trial = 0; trial < 3; ++trial) {
        auto market = random_leontief_market(rng, 3, 3);
        auto p0 = samples::interior_prices(rng, 3);
        auto factors = step_size_theoretical(market, p0);
        REQUIRE(factors.feasible);

        RunConfig config;
        config.record_every = 1;
        auto traj = run(market, p0, config);
        REQUIRE(traj.termination == Termination::Converged);

        const int m = market.goods;
        std::vector<double> u0(market.num_buyers());
        for (int i = 0; i < market.num_buyers(); ++i)
            u0[i] = indirect_utility(market.buyers[i], p0, market.budgets[i]);
        for (size_t r = 0; r < traj.ts.size(); ++r) {
            auto p = traj.price_row(r);
            for (int i = 0; i < market.num_buyers(); ++i) {
                double ut = indirect_utility(market.buyers[i], p, market.budgets[i]);
                for (int j = 0; j < m; ++j) {
                    double M = factors.hicksian_sup[static_cast<size_t>(i) * m + j];
                    if (M <= 0.0) continue;
                    CHECK(ut * M <=
                          u0[i] * M +
                              factors.ratio_term[static_cast<size_t>(i) * m + j] +
                              1e-6);
                }
            }
        }
    }
}

TEST_CASE("a good nobody wants converges to a collapsed price") {
    // The undemanded good keeps excess demand -1 forever; convergence relies
    // on the relaxed criterion once its price falls below 1e-12.
    auto market = Market::create(2, {1.0}, {UtilitySpec::cobb_douglas({1.0, 0.0})});
    RunConfig config;
    config.max_iters = 5000;
    auto traj = run(market, {1.0, 0.4}, config);
    CHECK(traj.termination == Termination::Converged);
    CHECK(traj.final_prices[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(traj.final_prices[1] < 1e-12);
    CHECK(traj.final_prices[1] > 0.0);
    auto z = excess_demand(market, traj.final_prices);
    CHECK(z.z[1] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("linear buyers orbit instead of converging") {
    // The equilibrium needs the buyer split across both goods, which only
    // happens on the bang-per-buck tie line; the uniform-split selection
    // never clears there, so prices hop around the tie forever.
    auto market = Market::create(2, {1.0}, {UtilitySpec::linear({3.0, 1.0})});
    RunConfig config;
    config.max_iters = 3000;
    auto traj = run(market, {0.5, 0.5}, config);
    CHECK(traj.termination == Termination::MaxIterations);
    CHECK(traj.iterations == config.max_iters);
    CHECK(traj.final_max_excess > config.tol);
}

TEST_CASE("euclidean kernel also reaches the symmetric equilibrium") {
    auto market = two_symmetric_leontief();
    RunConfig config;
    config.kernel = Kernel::SquaredEuclidean;
    config.gamma0 = 5.0;
    auto traj = run(market, {0.6, 0.4}, config);
    CHECK(traj.termination == Termination::Converged);
    CHECK(traj.final_prices[0] == doctest::Approx(0.5).epsilon(2e-5));
    // The multiplicative self-checks only instrument the entropy kernel.
    CHECK(traj.steps_checked == 0);
}

TEST_CASE("record_every thins the trajectory but keeps the endpoints") {
    auto market = two_symmetric_leontief();
    RunConfig config;
    config.record_every = 10;
    auto traj = run(market, {0.9, 0.1}, config);
    REQUIRE(traj.termination == Termination::Converged);
    REQUIRE(traj.ts.size() >= 3);
    CHECK(traj.ts.front() == 0);
    CHECK(traj.ts.back() == traj.iterations);
    for (size_t r = 0; r + 1 < traj.ts.size(); ++r) {
        CHECK(traj.ts[r] % 10 == 0);
        CHECK(traj.ts[r + 1] > traj.ts[r]);
    }
    // Parallel arrays stay aligned.
    CHECK(traj.prices.size() == traj.ts.size() * 2);
    CHECK(traj.phi.size() == traj.ts.size());
    CHECK(traj.max_excess.size() == traj.ts.size());
    CHECK(traj.kl_step.size() == traj.ts.size());
    CHECK(traj.gamma.size() == traj.ts.size());
}

TEST_CASE("an absurd fixed step size is reported as divergence") {
    auto market = two_symmetric_leontief();
    RunConfig config;
    config.mode = StepMode::Fixed;
    config.gamma0 = 1e-300;  // z / gamma overflows exp immediately
    auto traj = run(market, {0.6, 0.4}, config);
    CHECK(traj.termination == Termination::Diverged);
    CHECK(traj.diagnostic.find("non-finite") != std::string::npos);
}

TEST_CASE("run rejects malformed configuration") {
    auto market = single_leontief();
    RunConfig config;
    config.gamma0 = -1.0;
    CHECK_THROWS_AS(run(market, {0.5, 0.5}, config), std::invalid_argument);
    config = RunConfig{};
    config.record_every = 0;
    CHECK_THROWS_AS(run(market, {0.5, 0.5}, config), std::invalid_argument);
    CHECK_THROWS_AS(run(market, {0.5}, RunConfig{}), std::invalid_argument);
    CHECK_THROWS_AS(run(market, {0.5, -0.5}, RunConfig{}), std::domain_error);
}

TEST_CASE("fit_rate_exponent recovers synthetic decay rates") {
    std::vector<long> ts;
    std::vector<double> g1, g2, stalled;
    for (long t = 1; t <= 400; ++t) {
        ts.push_back(t);
        double td = static_cast<double>(t);
        g1.push_back(3.0 / td);
        g2.push_back(3.0 / (td * td));
        stalled.push_back(0.7);
    }
    auto e1 = fit_rate_exponent(ts, g1);
    REQUIRE(e1.has_value());
    CHECK(*e1 == doctest::Approx(-1.0).epsilon(0.05));

    int used = 0;
    auto e2 = fit_rate_exponent(ts, g2, &used);
    REQUIRE(e2.has_value());
    CHECK(*e2 == doctest::Approx(-2.0).epsilon(0.05));
    CHECK(used == 200);

    auto e3 = fit_rate_exponent(ts, stalled);
    REQUIRE(e3.has_value());
    CHECK(std::abs(*e3) < 0.05);

    // Too few usable points.
    CHECK_FALSE(fit_rate_exponent({0, 1}, {1.0, 0.5}).has_value());
    CHECK_FALSE(fit_rate_exponent({1, 2}, {-1.0, 0.5}).has_value());
}

TEST_CASE("convergence_report checks the mirror-descent bound") {
    auto market = two_symmetric_leontief();
    RunConfig config;
    config.record_every = 1;
    config.mode = StepMode::Theoretical;
    auto traj = run(market, {0.8, 0.2}, config);
    REQUIRE(traj.termination == Termination::Converged);

    double phi_star = potential_scalar(market, {0.5, 0.5});
    CHECK(phi_star == doctest::Approx(1.0 - std::log(1.5)).epsilon(1e-14));

    std::vector<double> p_star{0.5, 0.5};
    auto report = convergence_report(traj, phi_star, &p_star, true);
    CHECK(report.phi_star_from_oracle);
    CHECK(report.gaps.size() == traj.ts.size());
    CHECK(report.gaps.front() ==
          doctest::Approx(potential_scalar(market, {0.8, 0.2}) - phi_star)
              .epsilon(1e-12));
    CHECK(report.bound_checked);
    CHECK(report.bound_holds);
    CHECK(report.worst_bound_margin <= 1e-9);
    CHECK(report.kl0 == doctest::Approx(kl_divergence({0.5, 0.5}, {0.8, 0.2}))
                            .epsilon(1e-15));
    CHECK(report.gamma == doctest::Approx(traj.gamma_final).epsilon(1e-15));
    REQUIRE(report.fitted_exponent.has_value());
    CHECK(*report.fitted_exponent <= -0.9);
}

TEST_CASE("convergence_report rejects an inconsistent oracle") {
    auto traj = run(two_symmetric_leontief(), {0.6, 0.4}, RunConfig{});
    double too_high = traj.min_phi() + 0.01;
    CHECK_THROWS_AS(convergence_report(traj, too_high), std::runtime_error);
    // phi* slightly above the minimum is tolerated as grid resolution error.
    CHECK_NOTHROW(convergence_report(traj, traj.min_phi() + 1e-7));
}

TEST_CASE("gap_collapsed flags a trajectory already at the optimum") {
    auto traj = run(single_leontief(), {0.5, 0.5}, RunConfig{});
    auto report = convergence_report(traj, 1.0);
    CHECK(report.gap_collapsed);
    CHECK_FALSE(report.fitted_exponent.has_value());
}
