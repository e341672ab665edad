#pragma once

#include <string>
#include <vector>

#include "market.hpp"

namespace taton {

// Reference solvers for equilibrium prices. These are deliberately simple
// and independent of the tatonnement loop so they can sit on the other side
// of cross-checks: a projected subgradient method on the price simplex and,
// for small markets, an exhaustive grid scan.

struct OracleConfig {
    long iters = 200000;   // subgradient steps per restart
    int restarts = 8;      // Dirichlet(1) starting points
    double tol = 1e-6;     // certification threshold on ||projected z||_inf
    uint64_t seed = 1234;
    // The dual objective is nonsmooth when a buyer is linear; the residual
    // test is unreliable there, so by default such markets are rejected and
    // callers opt in to best-effort subgradient mode.
    bool allow_subgradient = false;
};

struct OracleResult {
    std::vector<double> prices;
    double phi = 0.0;
    double residual = 0.0;  // ||z - mean(z)||_inf at `prices`
    bool certified = false;
    long iterations = 0;  // total excess-demand evaluations spent
    std::string method;
};

// Minimizes phi over {p > 0 : sum p = sum budgets} by projected subgradient
// with diminishing steps c/sqrt(t), c = 0.1, multi-restart. Returns the best
// point found; `certified` reports whether the residual met config.tol.
OracleResult solve_dual(const Market& market, const OracleConfig& config = {});

// Exhaustive scan of phi over the interior lattice with `resolution` points
// per simplex edge. Supports at most 3 goods. Ties within floating-point
// noise break toward the point closest to the simplex center so flat optima
// return a canonical representative instead of a scan-order artifact.
OracleResult solve_grid(const Market& market, int resolution = 2001,
                        double tol = 1e-4);

struct EquilibriumCertificate {
    std::vector<double> prices;
    std::vector<double> allocation;  // buyers x goods, row-major
    double clearing_violation = 0.0;
    double optimality_gap = 0.0;  // relative shortfall vs indirect utility
    double walras_residual = 0.0;
    double tol = 0.0;
    bool valid = false;
    std::string method;

    bool valid_at(double t) const {
        return clearing_violation <= t && optimality_gap <= t &&
               walras_residual <= t;
    }
};

// Checks whether `prices` clears the market: positive-price goods must have
// total demand 1, near-zero-price goods (below 1e-8 of the max price) at
// most 1. Also reports how far the implied allocation is from the buyers'
// optima and from exact budget exhaustion.
EquilibriumCertificate certify(const Market& market,
                               const std::vector<double>& prices, double tol);

}  // namespace taton
