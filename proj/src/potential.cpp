#include "potential.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "demand.hpp"

namespace taton {

PotentialValue potential(const Market& market, const std::vector<double>& p) {
    check_prices(p);
    PotentialValue out;
    out.buyer_terms.reserve(market.buyers.size());
    double sum_p = 0.0;
    for (double pj : p) sum_p += pj;
    double acc = 0.0;
    for (size_t i = 0; i < market.buyers.size(); ++i) {
        double term = market.budgets[i] *
                      std::log(expenditure_unit(market.buyers[i], p));
        out.buyer_terms.push_back(term);
        acc += term;
    }
    out.phi = sum_p - acc;
    return out;
}

double potential_scalar(const Market& market, const std::vector<double>& p) {
    double sum_p = 0.0;
    for (double pj : p) sum_p += pj;
    double acc = 0.0;
    for (size_t i = 0; i < market.buyers.size(); ++i)
        acc += market.budgets[i] * std::log(expenditure_unit(market.buyers[i], p));
    return sum_p - acc;
}

double eg_dual(const Market& market, const std::vector<double>& p) {
    check_prices(p);
    double sum_p = 0.0;
    for (double pj : p) sum_p += pj;
    double acc = 0.0;
    for (size_t i = 0; i < market.buyers.size(); ++i) {
        double b = market.budgets[i];
        acc += b * std::log(indirect_utility(market.buyers[i], p, b)) - b;
    }
    return sum_p + acc;
}

ExcessDemand evaluate_market(const Market& market, const std::vector<double>& p,
                             double* phi_out) {
    check_prices(p);
    ExcessDemand out;
    out.demand.assign(p.size(), 0.0);
    double log_e_acc = 0.0;
    for (size_t i = 0; i < market.buyers.size(); ++i) {
        const UtilitySpec& spec = market.buyers[i];
        double b = market.budgets[i];
        std::vector<double> x = marshallian(spec, p, b);
        for (size_t j = 0; j < p.size(); ++j) out.demand[j] += x[j];
        if (phi_out) log_e_acc += b * std::log(expenditure_unit(spec, p));
    }
    out.z = out.demand;
    for (double& zj : out.z) zj -= 1.0;
    if (phi_out) {
        double sum_p = 0.0;
        for (double pj : p) sum_p += pj;
        *phi_out = sum_p - log_e_acc;
    }
    return out;
}

ExcessDemand excess_demand(const Market& market, const std::vector<double>& p) {
    return evaluate_market(market, p, nullptr);
}

double kl_divergence(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("kl_divergence: length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] >= 0.0) || !(y[i] >= 0.0) || !std::isfinite(x[i]) ||
            !std::isfinite(y[i]))
            throw std::domain_error("kl_divergence needs nonnegative entries");
        if (x[i] == 0.0) {
            // lim_{x->0} x log(x/y) = 0, so the term reduces to y.
            acc += y[i];
        } else if (y[i] == 0.0) {
            throw std::domain_error(
                "kl_divergence is infinite: positive mass where the "
                "reference is zero");
        } else {
            acc += x[i] * std::log(x[i] / y[i]) - x[i] + y[i];
        }
    }
    return acc;
}

SubgradientCheck subgradient_check(const Market& market,
                                   const std::vector<double>& p,
                                   double rel_step) {
    check_prices(p);
    SubgradientCheck out;

    // phi has kinks where a linear buyer's best bang-per-buck good changes;
    // a central difference straddling a kink would report a spurious error.
    for (size_t i = 0; i < market.buyers.size(); ++i) {
        const UtilitySpec& s = market.buyers[i];
        if (s.kind != UtilityKind::Linear) continue;
        double best = std::numeric_limits<double>::infinity();
        double second = best;
        for (size_t j = 0; j < s.values.size(); ++j) {
            if (s.values[j] <= 0.0) continue;
            double c = p[j] / s.values[j];
            if (c < best) {
                second = best;
                best = c;
            } else if (c < second) {
                second = c;
            }
        }
        if (std::isfinite(second) && (second - best) <= 1e-8 * best) {
            std::ostringstream note;
            note << "skipped: buyer " << i
                 << " is within 1e-8 of a bang-per-buck tie; phi is not "
                    "differentiable there";
            out.note = note.str();
            return out;
        }
    }

    ExcessDemand ed = excess_demand(market, p);
    double max_err = 0.0;
    std::vector<double> q = p;
    for (size_t j = 0; j < p.size(); ++j) {
        double h = rel_step * p[j];
        q[j] = p[j] + h;
        double hi = potential_scalar(market, q);
        q[j] = p[j] - h;
        double lo = potential_scalar(market, q);
        q[j] = p[j];
        double fd = (hi - lo) / (2.0 * h);
        double err = std::abs(fd + ed.z[j]) / std::max(1.0, std::abs(ed.z[j]));
        max_err = std::max(max_err, err);
    }
    out.evaluated = true;
    out.max_rel_error = max_err;
    return out;
}

}  // namespace taton
