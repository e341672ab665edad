#pragma once

#include <string>
#include <vector>

#include "market.hpp"

namespace taton {

// Value of the convex price potential phi(p) = sum_j p_j - sum_i b_i log e_i(p,1),
// whose minimizers are exactly the competitive equilibrium prices.
struct PotentialValue {
    double phi = 0.0;
    std::vector<double> buyer_terms;  // b_i * log e_i(p,1)
};

struct ExcessDemand {
    std::vector<double> z;       // demand minus unit supply
    std::vector<double> demand;  // aggregate Marshallian demand D
};

PotentialValue potential(const Market& market, const std::vector<double>& p);

// Allocation-free phi for hot loops.
double potential_scalar(const Market& market, const std::vector<double>& p);

// Classic Eisenberg-Gale dual objective
// sum_j p_j + sum_i (b_i log v_i(p, b_i) - b_i); differs from phi by the
// price-independent constant sum_i (b_i log b_i - b_i).
double eg_dual(const Market& market, const std::vector<double>& p);

ExcessDemand excess_demand(const Market& market, const std::vector<double>& p);

// One pass over the buyers producing demand, z and (optionally) phi.
ExcessDemand evaluate_market(const Market& market, const std::vector<double>& p,
                             double* phi_out);

// Generalized KL divergence sum_i [x_i log(x_i/y_i) - x_i + y_i] over the
// nonnegative orthant (not restricted to probability vectors). Zero entries
// in x contribute y_i; positive mass where y_i = 0 is infinite and throws.
double kl_divergence(const std::vector<double>& x, const std::vector<double>& y);

// Compares central finite differences of phi against -z coordinatewise.
// Linear buyers make phi non-differentiable where two bang-per-buck ratios
// tie; near such a point (relative gap < 1e-8) the check is skipped and the
// note says why.
struct SubgradientCheck {
    bool evaluated = false;
    double max_rel_error = 0.0;
    std::string note;
};

SubgradientCheck subgradient_check(const Market& market,
                                   const std::vector<double>& p,
                                   double rel_step = 1e-6);

}  // namespace taton
