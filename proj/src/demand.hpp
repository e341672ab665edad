#pragma once

#include <vector>

#include "market.hpp"

namespace taton {

// Closed-form consumer functions for every utility kind. All take strictly
// positive prices (std::domain_error otherwise) and assume canonicalized
// specs (std::invalid_argument on a CES spec that should have been folded
// into a limit kind).

// Minimum spending that reaches utility level 1. Homogeneity gives the
// general level for free: e(p, u) = u * e(p, 1).
double expenditure_unit(const UtilitySpec& spec, const std::vector<double>& p);

// Cost-minimizing bundle at utility level 1. For linear utilities the
// minimizer is a correspondence at tied bang-per-buck prices; this returns
// the lowest-index selection.
std::vector<double> hicksian_unit(const UtilitySpec& spec,
                                  const std::vector<double>& p);

// Highest utility reachable with budget b: v(p, b) = b / e(p, 1).
double indirect_utility(const UtilitySpec& spec, const std::vector<double>& p,
                        double budget);

// Utility-maximizing bundle under the budget: x = b * h(p,1) / e(p,1).
// Linear buyers split the budget uniformly across tied best goods.
std::vector<double> marshallian(const UtilitySpec& spec,
                                const std::vector<double>& p, double budget);

// Direct evaluation of u(x); degree-1 homogeneous for every kind.
double utility_value(const UtilitySpec& spec, const std::vector<double>& x);

}  // namespace taton
