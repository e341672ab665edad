#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dynamics.hpp"
#include "market.hpp"

namespace taton {

// Random-market generation and the batch harness. Everything here is a
// deterministic function of the configuration: market `index` of a batch is
// generated from an RNG stream derived from (seed, index), so batches are
// reproducible and independent of worker count.

struct KindWeight {
    UtilityKind kind;
    double weight = 1.0;
};

struct GenConfig {
    int buyers = 10;
    int goods = 5;
    std::pair<double, double> valuation_range{2.0, 3.0};
    std::pair<double, double> budget_range{2.0, 3.0};
    // rho is drawn from the union of these intervals, each weighted by its
    // length; the default covers mild substitutes and a wide complement
    // range while staying away from 0 and 1.
    std::vector<std::pair<double, double>> rho_intervals{{0.25, 0.75},
                                                         {-101.0, -1.0}};
    std::pair<double, double> price_range{2.0, 3.0};
    std::vector<KindWeight> palette{{UtilityKind::CES, 1.0},
                                    {UtilityKind::CobbDouglas, 1.0},
                                    {UtilityKind::Leontief, 1.0}};
    uint64_t seed = 2024;
    bool normalize_budgets = true;
};

void validate_gen_config(const GenConfig& config);

struct GeneratedMarket {
    Market market;
    std::vector<double> p0;
};

// Deterministic in (config.seed, index); independent of any other draw.
GeneratedMarket generate_market(const GenConfig& config, long index);

struct BatchRunConfig {
    RunConfig run;
    // Budget for the reference solver that supplies phi* for rate fitting.
    // Markets with a linear buyer skip it (the dual residual test is
    // meaningless there) and fall back to the trajectory minimum.
    long oracle_iters = 20000;
    int oracle_restarts = 2;
    double oracle_tol = 1e-6;
    int grid_resolution = 2001;  // used instead of the dual when goods <= 2
    double tail_fraction = 0.10;
    double oscillation_factor = 10.0;  // tail phi range > factor * tol
};

struct MarketRecord {
    long index = 0;
    uint64_t seed = 0;
    double epsilon = 0.0;  // market elasticity bound; meaningful iff finite
    bool epsilon_finite = false;
    double max_sigma = 0.0;  // same quantity, kept for grouping convenience
    Termination termination = Termination::MaxIterations;
    bool converged = false;
    long iterations = 0;
    double final_max_excess = 0.0;
    std::optional<double> exponent;
    bool exponent_vs_oracle = false;  // false: fitted against trajectory min
    bool oracle_certified = false;
    double phi_star = 0.0;  // the reference value the fit used
    long escalations = 0;
    double gamma_final = 0.0;
    long steps_checked = 0;
    long price_change_violations = 0;
    long bregman_violations = 0;
    bool bregman_checked = false;
    bool oscillating = false;
    double tail_phi_range = 0.0;
    std::string diagnostic;
};

struct BatchResult {
    GenConfig gen;
    BatchRunConfig batch;
    long count = 0;
    std::vector<MarketRecord> records;
    long converged_count = 0;
    // Absent when count == 0.
    std::optional<double> convergence_fraction;
};

BatchResult batch_run(const GenConfig& gen, long count,
                      const BatchRunConfig& batch);

struct RateTable {
    bool empty = true;
    std::string diagnostic;
    long count = 0;  // converged runs with a fitted exponent
    double min = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, max = 0.0;
    long at_most_minus_1 = 0;
    long at_most_minus_2 = 0;
};

// Quantiles of fitted exponents among converged runs.
RateTable rate_table(const BatchResult& results);

}  // namespace taton
