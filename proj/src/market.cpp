#include "market.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace taton {

const char* kind_name(UtilityKind kind) {
    switch (kind) {
        case UtilityKind::Linear: return "linear";
        case UtilityKind::CobbDouglas: return "cobb_douglas";
        case UtilityKind::Leontief: return "leontief";
        case UtilityKind::CES: return "ces";
        case UtilityKind::NestedCES: return "nested_ces";
    }
    return "?";
}

UtilitySpec UtilitySpec::linear(std::vector<double> v) {
    UtilitySpec s;
    s.kind = UtilityKind::Linear;
    s.values = std::move(v);
    return s;
}

UtilitySpec UtilitySpec::cobb_douglas(std::vector<double> v) {
    UtilitySpec s;
    s.kind = UtilityKind::CobbDouglas;
    s.values = std::move(v);
    return canonicalize(std::move(s));
}

UtilitySpec UtilitySpec::leontief(std::vector<double> v) {
    UtilitySpec s;
    s.kind = UtilityKind::Leontief;
    s.values = std::move(v);
    return s;
}

UtilitySpec UtilitySpec::ces(std::vector<double> v, double rho) {
    UtilitySpec s;
    s.kind = UtilityKind::CES;
    s.values = std::move(v);
    s.rho = rho;
    return s;
}

UtilitySpec UtilitySpec::nested(NestTree tree) {
    UtilitySpec s;
    s.kind = UtilityKind::NestedCES;
    s.nest = std::move(tree);
    return s;
}

namespace {

bool any_positive(const std::vector<double>& v) {
    for (double x : v)
        if (x > 0.0) return true;
    return false;
}

double positive_sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

// Accumulates, per good, whether some buyer puts positive weight on it.
void mark_tree_goods(const NestTree& tree, int node, std::vector<char>& seen) {
    const NestNode& n = tree.nodes[node];
    for (size_t c = 0; c < n.children.size(); ++c) {
        if (n.weights[c] <= 0.0) continue;
        if (n.children[c].is_good) {
            int g = n.children[c].index;
            if (g >= 0 && g < static_cast<int>(seen.size())) seen[g] = 1;
        } else {
            mark_tree_goods(tree, n.children[c].index, seen);
        }
    }
}

// Structural checks on a nest tree: indices in range, acyclic reachability,
// weight/child arity, each good referenced by at most one leaf.
void validate_tree(const NestTree& tree, int goods, const std::string& where,
                   std::vector<Diagnostic>& out) {
    auto error = [&](const std::string& msg) {
        out.push_back({Diagnostic::Severity::Error, where, msg});
    };
    if (tree.nodes.empty()) {
        error("nest tree has no nodes");
        return;
    }
    if (tree.root < 0 || tree.root >= static_cast<int>(tree.nodes.size())) {
        error("nest root index out of range");
        return;
    }
    std::vector<char> good_used(goods, 0);
    std::vector<char> visiting(tree.nodes.size(), 0);
    bool has_leaf = false;

    // Recursive descent with an explicit stack of (node, child cursor).
    struct Frame { int node; size_t child; };
    std::vector<Frame> stack{{tree.root, 0}};
    visiting[tree.root] = 1;
    while (!stack.empty()) {
        Frame& f = stack.back();
        const NestNode& n = tree.nodes[f.node];
        if (f.child == 0) {
            std::ostringstream at;
            at << where << ".node[" << f.node << "]";
            if (n.children.empty()) error(at.str() + " has no children");
            if (n.weights.size() != n.children.size())
                error(at.str() + " weight count != child count");
            if (!(n.rho < 1.0) || !std::isfinite(n.rho))
                error(at.str() + " rho must be finite and < 1");
            bool pos = false;
            for (double w : n.weights) {
                if (w < 0.0) error(at.str() + " has a negative weight");
                if (w > 0.0) pos = true;
            }
            if (!pos) error(at.str() + " has no positive weight");
        }
        if (f.child >= n.children.size() ||
            n.weights.size() != n.children.size()) {
            visiting[f.node] = 0;
            stack.pop_back();
            continue;
        }
        const NestChild& c = n.children[f.child++];
        if (c.is_good) {
            has_leaf = true;
            if (c.index < 0 || c.index >= goods) {
                error(where + " leaf good index out of range");
            } else if (good_used[c.index]++) {
                std::ostringstream msg;
                msg << where << " good " << c.index
                    << " appears in more than one leaf";
                error(msg.str());
            }
        } else {
            if (c.index < 0 || c.index >= static_cast<int>(tree.nodes.size())) {
                error(where + " child node index out of range");
            } else if (visiting[c.index]) {
                error(where + " nest tree contains a cycle");
                break;
            } else {
                visiting[c.index] = 1;
                stack.push_back({c.index, 0});
            }
        }
    }
    if (!has_leaf) error(where + " nest tree has no leaves");
}

}  // namespace

Market Market::create(int goods, std::vector<double> budgets,
                      std::vector<UtilitySpec> buyers, bool normalize) {
    if (goods <= 0) throw std::invalid_argument("market needs at least one good");
    if (budgets.empty() || budgets.size() != buyers.size())
        throw std::invalid_argument("budget count must match buyer count and be positive");
    for (double b : budgets)
        if (!(b > 0.0) || !std::isfinite(b))
            throw std::invalid_argument("budgets must be finite and strictly positive");
    if (normalize) {
        double sum = positive_sum(budgets);
        // The dead zone keeps re-creating an already normalized market from
        // churning the last ulp of every budget.
        if (std::abs(sum - 1.0) > 1e-12)
            for (double& b : budgets) b /= sum;
    }
    Market m;
    m.goods = goods;
    m.budgets = std::move(budgets);
    m.buyers.reserve(buyers.size());
    for (auto& spec : buyers) m.buyers.push_back(canonicalize(std::move(spec)));
    m.normalize_budgets = normalize;

    auto diags = validate_market(m);
    for (const auto& d : diags)
        if (d.severity == Diagnostic::Severity::Error)
            throw std::invalid_argument(d.where + ": " + d.message);
    return m;
}

std::vector<Diagnostic> validate_market(const Market& market) {
    std::vector<Diagnostic> out;
    auto error = [&](const std::string& where, const std::string& msg) {
        out.push_back({Diagnostic::Severity::Error, where, msg});
    };
    auto warn = [&](const std::string& where, const std::string& msg) {
        out.push_back({Diagnostic::Severity::Warning, where, msg});
    };

    if (market.goods <= 0) error("market", "number of goods must be positive");
    if (market.buyers.empty()) error("market", "market has no buyers");
    if (market.budgets.size() != market.buyers.size())
        error("market", "budget count does not match buyer count");

    double budget_sum = 0.0;
    for (size_t i = 0; i < market.budgets.size(); ++i) {
        double b = market.budgets[i];
        if (!(b > 0.0) || !std::isfinite(b)) {
            std::ostringstream w;
            w << "budgets[" << i << "]";
            error(w.str(), "budget must be finite and strictly positive");
        } else {
            budget_sum += b;
        }
    }
    // The convergence theory assumes budgets sum to 1; markets built with
    // normalization off merely get flagged.
    if (!market.budgets.empty() && std::abs(budget_sum - 1.0) > 1e-9) {
        std::ostringstream msg;
        msg << "budgets sum " << budget_sum << " != 1";
        warn("budgets", msg.str());
    }

    std::vector<char> demanded(std::max(market.goods, 0), 0);
    for (size_t i = 0; i < market.buyers.size(); ++i) {
        const UtilitySpec& s = market.buyers[i];
        std::ostringstream at;
        at << "buyers[" << i << "]";
        const std::string where = at.str();

        if (s.kind == UtilityKind::NestedCES) {
            size_t errors_before = out.size();
            validate_tree(s.nest, market.goods, where, out);
            // A malformed tree (cycle, bad index) cannot be walked safely.
            if (out.size() == errors_before && market.goods > 0)
                mark_tree_goods(s.nest, s.nest.root, demanded);
            continue;
        }
        if (s.values.size() != static_cast<size_t>(market.goods)) {
            error(where, "valuation count does not match number of goods");
            continue;
        }
        bool pos = false;
        for (size_t j = 0; j < s.values.size(); ++j) {
            double v = s.values[j];
            if (v < 0.0 || !std::isfinite(v))
                error(where, "valuations must be finite and nonnegative");
            if (v > 0.0) {
                pos = true;
                demanded[j] = 1;
            }
        }
        if (!pos) error(where, "all valuations are zero (degenerate utility)");

        if (s.kind == UtilityKind::CES) {
            if (!std::isfinite(s.rho)) error(where, "rho must be finite");
            else if (s.rho == 1.0)
                error(where, "rho=1 must be canonicalized to linear");
            else if (s.rho > 1.0)
                error(where, "rho must be <= 1");
            else if (std::abs(s.rho) < kRhoEps)
                error(where, "rho~0 must be canonicalized to cobb_douglas");
            else if (s.rho < kRhoLeontiefCutoff)
                error(where, "very negative rho must be canonicalized to leontief");
        }
        if (s.kind == UtilityKind::CobbDouglas && pos) {
            double sum = positive_sum(s.values);
            if (std::abs(sum - 1.0) > 1e-9)
                error(where, "cobb_douglas weights must be normalized to sum 1");
        }
    }
    for (int j = 0; j < market.goods; ++j) {
        if (!demanded[j]) {
            std::ostringstream at, msg;
            at << "goods[" << j << "]";
            msg << "no buyer values good " << j
                << "; its equilibrium price is 0";
            warn(at.str(), msg.str());
        }
    }
    return out;
}

UtilitySpec canonicalize(UtilitySpec spec, std::vector<std::string>* notes) {
    auto note = [&](const std::string& msg) {
        if (notes) notes->push_back(msg);
    };
    if (spec.kind == UtilityKind::NestedCES) {
        // Node-level limits mirror the flat kinds: weights of a Cobb-Douglas
        // node are normalized, a very negative rho is snapped to the Leontief
        // cutoff sentinel.
        for (auto& n : spec.nest.nodes) {
            if (std::abs(n.rho) < kRhoEps && n.rho != 0.0) n.rho = 0.0;
            if (n.rho == 0.0) {
                // The 1e-12 dead zone keeps repeated normalization from
                // churning the last ulp, so canonicalize stays idempotent.
                double sum = positive_sum(n.weights);
                if (sum > 0.0 && std::abs(sum - 1.0) > 1e-12)
                    for (double& w : n.weights) w /= sum;
            }
            if (n.rho < kRhoLeontiefCutoff) n.rho = kRhoLeontiefCutoff;
        }
        return spec;
    }
    if (!any_positive(spec.values))
        throw std::invalid_argument("degenerate utility: all valuations zero");

    if (spec.kind == UtilityKind::CES) {
        if (spec.rho == 1.0) {
            spec.kind = UtilityKind::Linear;
            note("ces with rho=1 canonicalized to linear");
        } else if (std::abs(spec.rho) < kRhoEps) {
            spec.kind = UtilityKind::CobbDouglas;
            note("ces with rho~0 canonicalized to cobb_douglas");
        } else if (spec.rho < kRhoLeontiefCutoff) {
            // In the rho -> -inf limit the weights stop mattering: the CES
            // utility tends to min over the positively-valued goods, i.e. a
            // Leontief utility with indicator valuations.
            for (double& v : spec.values) v = v > 0.0 ? 1.0 : 0.0;
            spec.kind = UtilityKind::Leontief;
            note("ces with very negative rho canonicalized to leontief");
        }
    }
    if (spec.kind == UtilityKind::CobbDouglas) {
        double sum = positive_sum(spec.values);
        if (std::abs(sum - 1.0) > 1e-12)
            for (double& v : spec.values) v /= sum;
    }
    return spec;
}

UtilitySpec quasilinear_to_linear(const std::vector<double>& values) {
    if (!any_positive(values))
        throw std::invalid_argument("degenerate utility: all valuations zero");
    std::vector<double> v = values;
    v.push_back(1.0);  // the money good
    return UtilitySpec::linear(std::move(v));
}

void check_prices(const std::vector<double>& p) {
    if (p.empty()) throw std::domain_error("empty price vector");
    for (double pj : p)
        if (!(pj > 0.0) || !std::isfinite(pj))
            throw std::domain_error("prices must be finite and strictly positive");
}

}  // namespace taton
