#pragma once

#include <vector>

#include "market.hpp"

namespace taton {

// Price elasticity of Hicksian demand, E_{h_j,p_k}(p,u) = dlog h_j / dlog p_k,
// by central finite differences in log space (delta is the relative price
// bump). Homogeneity makes the value independent of the utility level u;
// u_level is exposed so that invariance can be tested directly.
// Throws std::domain_error when h_j(p,1) = 0 (elasticity undefined) and
// std::invalid_argument for linear specs (demand is not differentiable).
double hicksian_elasticity_fd(const UtilitySpec& spec,
                              const std::vector<double>& p, int j, int k,
                              double delta = 1e-5, double u_level = 1.0);

// Supremum over prices of |E_{h_j,p_k}|, per kind: 0 for Leontief, 1 for
// Cobb-Douglas, sigma for CES, max node sigma for nested trees, +inf for
// Linear (by convention). The supremum is approached as expenditure shares
// concentrate; it need not be attained at any interior price.
double elasticity_bound(const UtilitySpec& spec);

struct ElasticityBound {
    double epsilon = 0.0;  // +inf when a linear buyer is present
    std::vector<double> per_buyer;
    bool finite = true;
};

// Market-level elasticity parameter: the max of the per-buyer bounds.
ElasticityBound market_elasticity(const Market& market);

}  // namespace taton
