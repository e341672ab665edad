#include "demand.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace taton {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_canonical_ces(const UtilitySpec& spec) {
    if (spec.rho == 1.0 || std::abs(spec.rho) < kRhoEps ||
        spec.rho <= kRhoLeontiefCutoff || spec.rho > 1.0 ||
        !std::isfinite(spec.rho))
        throw std::invalid_argument(
            "ces spec must be canonicalized before demand evaluation");
}

// log sum of exp over the finite entries of `terms`; -inf entries are
// dropped (they correspond to zero-valued goods).
double logsumexp(const std::vector<double>& terms) {
    double hi = -kInf;
    for (double t : terms) hi = std::max(hi, t);
    if (hi == -kInf) return -kInf;
    double s = 0.0;
    for (double t : terms)
        if (t != -kInf) s += std::exp(t - hi);
    return hi + std::log(s);
}

// log e(p,1) for a CES utility with weights v and substitution sigma:
// e = (sum_j v_j^sigma p_j^(1-sigma))^(1/(1-sigma)). Evaluated in log space
// so sigma up to ~100 survives without overflow; v_j = 0 terms drop out
// (v_j^sigma = 0 for sigma > 0 by convention).
double ces_log_expenditure(const std::vector<double>& v,
                           const std::vector<double>& logp, double sigma) {
    std::vector<double> terms(v.size(), -kInf);
    for (size_t j = 0; j < v.size(); ++j)
        if (v[j] > 0.0)
            terms[j] = sigma * std::log(v[j]) + (1.0 - sigma) * logp[j];
    return logsumexp(terms) / (1.0 - sigma);
}

struct NestEval {
    // log unit expenditure per node, indexed like the node pool.
    std::vector<double> log_e;
};

double nested_log_expenditure(const NestTree& tree, int node,
                              const std::vector<double>& logp, NestEval& ev);

// log of the node's price index given its children's log unit expenditures.
double node_log_index(const NestNode& n, const std::vector<double>& child_log_e) {
    if (n.rho == 0.0) {
        // Cobb-Douglas node: e = prod (e_c / a_c)^(a_c) with normalized a.
        double acc = 0.0;
        for (size_t c = 0; c < n.weights.size(); ++c)
            if (n.weights[c] > 0.0)
                acc += n.weights[c] * (child_log_e[c] - std::log(n.weights[c]));
        return acc;
    }
    if (n.rho <= kRhoLeontiefCutoff) {
        // Leontief node: e = sum_c w_c e_c.
        double acc = 0.0;
        for (size_t c = 0; c < n.weights.size(); ++c)
            if (n.weights[c] > 0.0)
                acc += n.weights[c] * std::exp(child_log_e[c]);
        return std::log(acc);
    }
    double sigma = sigma_from_rho(n.rho);
    std::vector<double> terms(n.weights.size(), -kInf);
    for (size_t c = 0; c < n.weights.size(); ++c)
        if (n.weights[c] > 0.0)
            terms[c] = sigma * std::log(n.weights[c]) +
                       (1.0 - sigma) * child_log_e[c];
    return logsumexp(terms) / (1.0 - sigma);
}

double nested_log_expenditure(const NestTree& tree, int node,
                              const std::vector<double>& logp, NestEval& ev) {
    const NestNode& n = tree.nodes[node];
    std::vector<double> child_log_e(n.children.size(), 0.0);
    for (size_t c = 0; c < n.children.size(); ++c) {
        if (n.weights[c] <= 0.0) continue;
        child_log_e[c] = n.children[c].is_good
                             ? logp[n.children[c].index]
                             : nested_log_expenditure(tree, n.children[c].index,
                                                      logp, ev);
    }
    double le = node_log_index(n, child_log_e);
    ev.log_e[node] = le;
    return le;
}

// Walks the tree multiplying per-node aggregate demands down each path.
// At a node with unit expenditure e and child expenditures e_c, the node's
// cost-minimizing demand for child aggregate c is the CES Hicksian
// w_c^sigma e_c^(-sigma) e^sigma (a_c e / e_c for Cobb-Douglas nodes, w_c for
// Leontief nodes); a leaf's demand is the product of the factors above it.
void nested_hicksian(const NestTree& tree, int node,
                     const std::vector<double>& logp, const NestEval& ev,
                     double log_mult, std::vector<double>& h) {
    const NestNode& n = tree.nodes[node];
    for (size_t c = 0; c < n.children.size(); ++c) {
        if (n.weights[c] <= 0.0) continue;
        double child_log_e = n.children[c].is_good
                                 ? logp[n.children[c].index]
                                 : ev.log_e[n.children[c].index];
        double log_factor;
        if (n.rho == 0.0) {
            log_factor = std::log(n.weights[c]) + ev.log_e[node] - child_log_e;
        } else if (n.rho <= kRhoLeontiefCutoff) {
            log_factor = std::log(n.weights[c]);
        } else {
            double sigma = sigma_from_rho(n.rho);
            log_factor = sigma * (std::log(n.weights[c]) - child_log_e +
                                  ev.log_e[node]);
        }
        if (n.children[c].is_good)
            h[n.children[c].index] = std::exp(log_mult + log_factor);
        else
            nested_hicksian(tree, n.children[c].index, logp, ev,
                            log_mult + log_factor, h);
    }
}

// Bottom-up utility of a nested spec; leaves contribute x_j directly.
double nested_utility(const NestTree& tree, int node,
                      const std::vector<double>& x) {
    const NestNode& n = tree.nodes[node];
    if (n.rho == 0.0) {
        double acc = 0.0;
        for (size_t c = 0; c < n.children.size(); ++c) {
            if (n.weights[c] <= 0.0) continue;
            double uc = n.children[c].is_good
                            ? x[n.children[c].index]
                            : nested_utility(tree, n.children[c].index, x);
            if (uc <= 0.0) return 0.0;
            acc += n.weights[c] * std::log(uc);
        }
        return std::exp(acc);
    }
    if (n.rho <= kRhoLeontiefCutoff) {
        double lo = kInf;
        for (size_t c = 0; c < n.children.size(); ++c) {
            if (n.weights[c] <= 0.0) continue;
            double uc = n.children[c].is_good
                            ? x[n.children[c].index]
                            : nested_utility(tree, n.children[c].index, x);
            lo = std::min(lo, uc / n.weights[c]);
        }
        return lo;
    }
    // CES node, rho != 0: u = (sum w_c u_c^rho)^(1/rho) in log space.
    std::vector<double> terms(n.children.size(), -kInf);
    for (size_t c = 0; c < n.children.size(); ++c) {
        if (n.weights[c] <= 0.0) continue;
        double uc = n.children[c].is_good
                        ? x[n.children[c].index]
                        : nested_utility(tree, n.children[c].index, x);
        if (uc <= 0.0) {
            if (n.rho < 0.0) return 0.0;  // complements need every child
            continue;
        }
        terms[c] = std::log(n.weights[c]) + n.rho * std::log(uc);
    }
    double ls = logsumexp(terms);
    if (ls == -kInf) return 0.0;
    return std::exp(ls / n.rho);
}

std::vector<double> log_prices(const std::vector<double>& p) {
    std::vector<double> lp(p.size());
    for (size_t j = 0; j < p.size(); ++j) lp[j] = std::log(p[j]);
    return lp;
}

void require_sizes(const UtilitySpec& spec, size_t m) {
    if (spec.kind == UtilityKind::NestedCES) {
        for (const auto& n : spec.nest.nodes)
            for (const auto& c : n.children)
                if (c.is_good && (c.index < 0 || c.index >= static_cast<int>(m)))
                    throw std::invalid_argument("nest leaf good index out of range");
        return;
    }
    if (spec.values.size() != m)
        throw std::invalid_argument("valuation count does not match price dimension");
}

// Lowest-index good maximizing bang per buck v_j/p_j (minimizing p_j/v_j).
size_t linear_best_good(const UtilitySpec& spec, const std::vector<double>& p) {
    size_t best = spec.values.size();
    double best_cost = kInf;
    for (size_t j = 0; j < spec.values.size(); ++j) {
        if (spec.values[j] <= 0.0) continue;
        double cost = p[j] / spec.values[j];
        if (cost < best_cost) {
            best_cost = cost;
            best = j;
        }
    }
    if (best == spec.values.size())
        throw std::invalid_argument("degenerate utility: all valuations zero");
    return best;
}

}  // namespace

double expenditure_unit(const UtilitySpec& spec, const std::vector<double>& p) {
    check_prices(p);
    require_sizes(spec, p.size());
    switch (spec.kind) {
        case UtilityKind::Leontief: {
            double e = 0.0;
            for (size_t j = 0; j < spec.values.size(); ++j)
                e += spec.values[j] * p[j];
            if (!(e > 0.0))
                throw std::invalid_argument("degenerate utility: all valuations zero");
            return e;
        }
        case UtilityKind::Linear: {
            size_t j = linear_best_good(spec, p);
            return p[j] / spec.values[j];
        }
        case UtilityKind::CobbDouglas: {
            double acc = 0.0;
            for (size_t j = 0; j < spec.values.size(); ++j)
                if (spec.values[j] > 0.0)
                    acc += spec.values[j] *
                           (std::log(p[j]) - std::log(spec.values[j]));
            return std::exp(acc);
        }
        case UtilityKind::CES: {
            require_canonical_ces(spec);
            return std::exp(ces_log_expenditure(spec.values, log_prices(p),
                                                sigma_from_rho(spec.rho)));
        }
        case UtilityKind::NestedCES: {
            NestEval ev{std::vector<double>(spec.nest.nodes.size(), 0.0)};
            return std::exp(nested_log_expenditure(spec.nest, spec.nest.root,
                                                   log_prices(p), ev));
        }
    }
    throw std::logic_error("unknown utility kind");
}

std::vector<double> hicksian_unit(const UtilitySpec& spec,
                                  const std::vector<double>& p) {
    check_prices(p);
    require_sizes(spec, p.size());
    std::vector<double> h(p.size(), 0.0);
    switch (spec.kind) {
        case UtilityKind::Leontief:
            return spec.values;
        case UtilityKind::Linear: {
            size_t j = linear_best_good(spec, p);
            h[j] = 1.0 / spec.values[j];
            return h;
        }
        case UtilityKind::CobbDouglas: {
            double e = expenditure_unit(spec, p);
            for (size_t j = 0; j < spec.values.size(); ++j)
                if (spec.values[j] > 0.0) h[j] = spec.values[j] * e / p[j];
            return h;
        }
        case UtilityKind::CES: {
            require_canonical_ces(spec);
            double sigma = sigma_from_rho(spec.rho);
            auto lp = log_prices(p);
            double log_e = ces_log_expenditure(spec.values, lp, sigma);
            for (size_t j = 0; j < spec.values.size(); ++j)
                if (spec.values[j] > 0.0)
                    h[j] = std::exp(
                        sigma * (std::log(spec.values[j]) - lp[j] + log_e));
            return h;
        }
        case UtilityKind::NestedCES: {
            NestEval ev{std::vector<double>(spec.nest.nodes.size(), 0.0)};
            auto lp = log_prices(p);
            nested_log_expenditure(spec.nest, spec.nest.root, lp, ev);
            nested_hicksian(spec.nest, spec.nest.root, lp, ev, 0.0, h);
            return h;
        }
    }
    throw std::logic_error("unknown utility kind");
}

double indirect_utility(const UtilitySpec& spec, const std::vector<double>& p,
                        double budget) {
    if (budget < 0.0 || !std::isfinite(budget))
        throw std::invalid_argument("budget must be finite and nonnegative");
    return budget / expenditure_unit(spec, p);
}

std::vector<double> marshallian(const UtilitySpec& spec,
                                const std::vector<double>& p, double budget) {
    if (budget < 0.0 || !std::isfinite(budget))
        throw std::invalid_argument("budget must be finite and nonnegative");
    check_prices(p);
    require_sizes(spec, p.size());
    if (spec.kind == UtilityKind::Linear) {
        // Exact bang-per-buck ties split the budget uniformly so symmetric
        // markets produce symmetric demand.
        double best_cost = kInf;
        for (size_t j = 0; j < spec.values.size(); ++j)
            if (spec.values[j] > 0.0)
                best_cost = std::min(best_cost, p[j] / spec.values[j]);
        if (best_cost == kInf)
            throw std::invalid_argument("degenerate utility: all valuations zero");
        std::vector<size_t> tied;
        for (size_t j = 0; j < spec.values.size(); ++j)
            if (spec.values[j] > 0.0 && p[j] / spec.values[j] == best_cost)
                tied.push_back(j);
        std::vector<double> x(p.size(), 0.0);
        for (size_t j : tied) x[j] = budget / (static_cast<double>(tied.size()) * p[j]);
        return x;
    }
    double e = expenditure_unit(spec, p);
    std::vector<double> x = hicksian_unit(spec, p);
    for (double& xj : x) xj *= budget / e;
    return x;
}

double utility_value(const UtilitySpec& spec, const std::vector<double>& x) {
    for (double xj : x)
        if (xj < 0.0 || !std::isfinite(xj))
            throw std::invalid_argument("bundle entries must be finite and nonnegative");
    require_sizes(spec, x.size());
    switch (spec.kind) {
        case UtilityKind::Linear: {
            double u = 0.0;
            for (size_t j = 0; j < spec.values.size(); ++j)
                u += spec.values[j] * x[j];
            return u;
        }
        case UtilityKind::CobbDouglas: {
            double acc = 0.0;
            for (size_t j = 0; j < spec.values.size(); ++j) {
                if (spec.values[j] <= 0.0) continue;
                if (x[j] <= 0.0) return 0.0;
                acc += spec.values[j] * std::log(x[j]);
            }
            return std::exp(acc);
        }
        case UtilityKind::Leontief: {
            double lo = kInf;
            for (size_t j = 0; j < spec.values.size(); ++j)
                if (spec.values[j] > 0.0)
                    lo = std::min(lo, x[j] / spec.values[j]);
            if (lo == kInf)
                throw std::invalid_argument("degenerate utility: all valuations zero");
            return lo;
        }
        case UtilityKind::CES: {
            require_canonical_ces(spec);
            std::vector<double> terms(spec.values.size(), -kInf);
            for (size_t j = 0; j < spec.values.size(); ++j) {
                if (spec.values[j] <= 0.0) continue;
                if (x[j] <= 0.0) {
                    if (spec.rho < 0.0) return 0.0;
                    continue;
                }
                terms[j] = std::log(spec.values[j]) + spec.rho * std::log(x[j]);
            }
            double ls = logsumexp(terms);
            if (ls == -kInf) return 0.0;
            return std::exp(ls / spec.rho);
        }
        case UtilityKind::NestedCES:
            return nested_utility(spec.nest, spec.nest.root, x);
    }
    throw std::logic_error("unknown utility kind");
}

}  // namespace taton
