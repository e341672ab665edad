#include "elasticity.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "demand.hpp"

namespace taton {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double node_sigma(const NestNode& n) {
    if (n.rho == 0.0) return 1.0;
    if (n.rho <= kRhoLeontiefCutoff) return 0.0;
    return sigma_from_rho(n.rho);
}
}  // namespace

double hicksian_elasticity_fd(const UtilitySpec& spec,
                              const std::vector<double>& p, int j, int k,
                              double delta, double u_level) {
    check_prices(p);
    if (j < 0 || k < 0 || j >= static_cast<int>(p.size()) ||
        k >= static_cast<int>(p.size()))
        throw std::invalid_argument("good index out of range");
    if (spec.kind == UtilityKind::Linear)
        throw std::invalid_argument(
            "linear utilities have no finite Hicksian elasticity");
    if (!(u_level > 0.0))
        throw std::invalid_argument("utility level must be positive");

    auto h_j = [&](const std::vector<double>& q) {
        // h(q, u) = u * h(q, 1) by homogeneity.
        return u_level * hicksian_unit(spec, q)[j];
    };

    std::vector<double> q = p;
    q[k] = p[k] * (1.0 + delta);
    double hi = h_j(q);
    q[k] = p[k] * (1.0 - delta);
    double lo = h_j(q);
    if (!(hi > 0.0) || !(lo > 0.0))
        throw std::domain_error("elasticity undefined: Hicksian demand is zero");
    return (std::log(hi) - std::log(lo)) /
           (std::log1p(delta) - std::log1p(-delta));
}

double elasticity_bound(const UtilitySpec& spec) {
    switch (spec.kind) {
        case UtilityKind::Leontief: return 0.0;
        case UtilityKind::Linear: return kInf;
        case UtilityKind::CobbDouglas: return 1.0;
        case UtilityKind::CES: return sigma_from_rho(spec.rho);
        case UtilityKind::NestedCES: {
            double hi = 0.0;
            for (const auto& n : spec.nest.nodes)
                hi = std::max(hi, node_sigma(n));
            return hi;
        }
    }
    throw std::logic_error("unknown utility kind");
}

ElasticityBound market_elasticity(const Market& market) {
    ElasticityBound out;
    out.per_buyer.reserve(market.buyers.size());
    for (const auto& spec : market.buyers) {
        double b = elasticity_bound(spec);
        out.per_buyer.push_back(b);
        out.epsilon = std::max(out.epsilon, b);
    }
    out.finite = std::isfinite(out.epsilon);
    return out;
}

}  // namespace taton
