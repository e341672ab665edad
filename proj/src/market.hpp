#pragma once

#include <optional>
#include <string>
#include <vector>

namespace taton {

// Canonicalization thresholds for the CES substitution parameter rho.
// rho = 1, rho -> 0 and rho -> -inf are the linear, Cobb-Douglas and Leontief
// limits; representing them as their own kinds avoids catastrophic
// cancellation in the CES closed forms near the limits.
inline constexpr double kRhoEps = 1e-9;
inline constexpr double kRhoLeontiefCutoff = -1e6;

enum class UtilityKind { Linear, CobbDouglas, Leontief, CES, NestedCES };

const char* kind_name(UtilityKind kind);

// sigma = 1/(1-rho), the substitution parameter's standard derived quantity.
inline double sigma_from_rho(double rho) { return 1.0 / (1.0 - rho); }

// A nested CES aggregator is stored as a pool of nodes so UtilitySpec stays
// copyable. A child is either a good index (leaf) or another node in the pool.
struct NestChild {
    bool is_good = true;
    int index = 0;  // good index when is_good, else node index
};

struct NestNode {
    double rho = 0.5;  // aggregator curvature, rho < 1; |rho| < kRhoEps
                       // means a Cobb-Douglas node, rho <= kRhoLeontiefCutoff
                       // a Leontief node
    std::vector<double> weights;
    std::vector<NestChild> children;
};

struct NestTree {
    std::vector<NestNode> nodes;
    int root = 0;
};

struct UtilitySpec {
    UtilityKind kind = UtilityKind::Linear;
    std::vector<double> values;  // per-good valuations, unused for NestedCES
    double rho = 0.5;            // CES only
    NestTree nest;               // NestedCES only

    static UtilitySpec linear(std::vector<double> v);
    static UtilitySpec cobb_douglas(std::vector<double> v);
    static UtilitySpec leontief(std::vector<double> v);
    static UtilitySpec ces(std::vector<double> v, double rho);
    static UtilitySpec nested(NestTree tree);
};

struct Market {
    int goods = 0;
    std::vector<double> budgets;
    std::vector<UtilitySpec> buyers;
    bool normalize_budgets = true;  // whether budgets were scaled to sum 1

    int num_buyers() const { return static_cast<int>(buyers.size()); }

    // Builds a market; normalizes budgets to sum 1 unless told otherwise and
    // canonicalizes every utility. Throws std::invalid_argument on degenerate
    // input (empty market, non-positive budget, all-zero valuations).
    static Market create(int goods, std::vector<double> budgets,
                         std::vector<UtilitySpec> buyers,
                         bool normalize = true);
};

struct Diagnostic {
    enum class Severity { Warning, Error };
    Severity severity = Severity::Error;
    std::string where;
    std::string message;
};

// Non-throwing invariant scan; an empty result means the market is sound.
// Budgets not summing to 1 is a warning (the convergence theory assumes it),
// structural violations are errors.
std::vector<Diagnostic> validate_market(const Market& market);

// Folds CES limit cases into their own kinds and normalizes Cobb-Douglas
// weights. Idempotent. Appends a human-readable note per rewrite when `notes`
// is given. Throws std::invalid_argument for all-zero valuations.
UtilitySpec canonicalize(UtilitySpec spec,
                         std::vector<std::string>* notes = nullptr);

// A quasilinear buyer with valuations v over m goods behaves exactly like a
// linear buyer with valuations (v, 1) over m+1 goods when the extra good
// (money) is priced at 1. Returns that linear spec.
UtilitySpec quasilinear_to_linear(const std::vector<double>& values);

// Throws std::domain_error unless every price is finite and strictly positive.
void check_prices(const std::vector<double>& p);

}  // namespace taton
