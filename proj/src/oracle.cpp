#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "demand.hpp"
#include "potential.hpp"
#include "rng.hpp"
#include "threading.hpp"

namespace taton {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double budget_scale(const Market& market) {
    double s = 0.0;
    for (double b : market.budgets) s += b;
    return s;
}

bool has_linear_buyer(const Market& market) {
    for (const auto& spec : market.buyers)
        if (spec.kind == UtilityKind::Linear) return true;
    return false;
}

// ||z - mean(z)||_inf: the first-order residual of phi restricted to the
// fixed-sum slice, since grad phi = -z.
double projected_residual(const std::vector<double>& z) {
    double mean = 0.0;
    for (double zj : z) mean += zj;
    mean /= static_cast<double>(z.size());
    double res = 0.0;
    for (double zj : z) res = std::max(res, std::abs(zj - mean));
    return res;
}

struct RestartOutcome {
    std::vector<double> prices;
    double phi = kInf;
    double residual = kInf;
    bool certified = false;
    long evals = 0;
};

// Smooth markets: projected steepest descent on the fixed-sum slice with
// Armijo backtracking. The direction z - mean(z) sums to zero, so iterates
// stay on the slice; the step cap keeps every coordinate above the floor and
// at most halved, so prices can never leave the domain.
RestartOutcome run_descent(const Market& market, std::vector<double> p,
                           const OracleConfig& config) {
    const double scale = budget_scale(market);
    const double floor = 1e-12 * scale;
    const size_t m = p.size();

    RestartOutcome best;
    double phi = potential_scalar(market, p);
    ++best.evals;
    double alpha = 0.1 * scale;
    std::vector<double> d(m), q(m);
    for (long t = 1; t <= config.iters; ++t) {
        ExcessDemand ed = excess_demand(market, p);
        ++best.evals;
        double res = projected_residual(ed.z);
        if (res < best.residual) {
            best.residual = res;
            best.prices = p;
        }
        if (res <= config.tol) break;

        double mean = 0.0;
        for (double zj : ed.z) mean += zj;
        mean /= static_cast<double>(m);
        double norm2 = 0.0;
        for (size_t j = 0; j < m; ++j) {
            d[j] = ed.z[j] - mean;
            norm2 += d[j] * d[j];
        }

        double amax = alpha;
        for (size_t j = 0; j < m; ++j)
            if (d[j] < 0.0)
                amax = std::min(
                    amax, std::min(0.5 * p[j], p[j] - floor) / -d[j]);
        if (!(amax > 0.0)) break;  // pinned against the floor

        double a = amax;
        bool accepted = false;
        double phi_q = phi;
        for (int halvings = 0; halvings < 40; ++halvings) {
            for (size_t j = 0; j < m; ++j) q[j] = p[j] + a * d[j];
            phi_q = potential_scalar(market, q);
            ++best.evals;
            if (phi_q <= phi - 1e-4 * a * norm2) {
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        if (!accepted) break;  // fp noise floor, or a kink
        p.swap(q);
        phi = phi_q;
        alpha = std::min(2.0 * a, 1e6 * scale);
    }
    best.phi = potential_scalar(market, best.prices);
    best.certified = best.residual <= config.tol;
    return best;
}

// Linear buyers make phi nonsmooth, where a line search can stall at a kink
// far from the optimum. Normalized diminishing steps still creep toward the
// minimum; the post-rescale floor keeps a blown-up coordinate from dragging
// the rest of the price vector below the domain.
RestartOutcome run_subgradient(const Market& market, std::vector<double> p,
                               const OracleConfig& config) {
    const double scale = budget_scale(market);
    const double floor = 1e-12 * scale;
    const double c = 0.1;

    RestartOutcome best;
    for (long t = 1; t <= config.iters; ++t) {
        ExcessDemand ed = excess_demand(market, p);
        ++best.evals;
        double res = projected_residual(ed.z);
        if (res < best.residual) {
            best.residual = res;
            best.prices = p;
        }
        if (res <= config.tol) break;

        double mean = 0.0;
        double dmax = 0.0;
        for (double zj : ed.z) mean += zj;
        mean /= static_cast<double>(ed.z.size());
        for (double zj : ed.z) dmax = std::max(dmax, std::abs(zj - mean));
        double step =
            c * scale / (std::sqrt(static_cast<double>(t)) * std::max(1.0, dmax));
        double sum = 0.0;
        for (size_t j = 0; j < p.size(); ++j) {
            p[j] = std::max(p[j] + step * (ed.z[j] - mean), floor);
            sum += p[j];
        }
        for (double& pj : p) pj = std::max(pj * scale / sum, floor);
    }
    best.phi = potential_scalar(market, best.prices);
    best.certified = best.residual <= config.tol;
    return best;
}

RestartOutcome run_restart(const Market& market, std::vector<double> p,
                           const OracleConfig& config) {
    return has_linear_buyer(market) ? run_subgradient(market, std::move(p), config)
                                    : run_descent(market, std::move(p), config);
}
}  // namespace

OracleResult solve_dual(const Market& market, const OracleConfig& config) {
    if (config.iters < 1 || config.restarts < 1 || !(config.tol > 0.0))
        throw std::invalid_argument("invalid oracle config");
    if (has_linear_buyer(market) && !config.allow_subgradient)
        throw std::invalid_argument(
            "market has linear buyers; the dual is nonsmooth there. Use the "
            "grid method or enable subgradient mode");

    const int m = market.goods;
    const double scale = budget_scale(market);

    std::vector<std::vector<double>> starts;
    starts.emplace_back(m, scale / m);  // the center is a strong default
    Rng rng(config.seed);
    for (int r = 1; r < config.restarts; ++r) {
        std::vector<double> p = rng.dirichlet(m);
        for (double& pj : p) pj = std::max(pj * scale, 1e-6 * scale);
        double sum = 0.0;
        for (double pj : p) sum += pj;
        for (double& pj : p) pj *= scale / sum;
        starts.push_back(std::move(p));
    }

    std::vector<RestartOutcome> outs(starts.size());
    parallel_for(starts.size(), [&](size_t r) {
        outs[r] = run_restart(market, starts[r], config);
    });

    OracleResult out;
    out.method = "dual";
    int pick = -1;
    for (size_t r = 0; r < outs.size(); ++r) {
        out.iterations += outs[r].evals;
        bool better;
        if (pick < 0) {
            better = true;
        } else if (outs[r].certified != outs[pick].certified) {
            better = outs[r].certified;
        } else if (outs[r].certified) {
            better = outs[r].phi < outs[pick].phi;
        } else {
            better = outs[r].residual < outs[pick].residual;
        }
        if (better) pick = static_cast<int>(r);
    }
    out.prices = outs[pick].prices;
    out.phi = outs[pick].phi;
    out.residual = outs[pick].residual;
    out.certified = outs[pick].certified;
    return out;
}

OracleResult solve_grid(const Market& market, int resolution, double tol) {
    const int m = market.goods;
    if (m > 3) throw std::invalid_argument("grid oracle supports at most 3 goods");
    if (resolution < 3) throw std::invalid_argument("resolution must be >= 3");
    const double scale = budget_scale(market);

    OracleResult out;
    out.method = "grid";

    if (m == 1) {
        out.prices = {scale};
        out.phi = potential_scalar(market, out.prices);
        out.residual = 0.0;  // the slice is a single point
        out.certified = true;
        out.iterations = 1;
        return out;
    }

    const double step = scale / static_cast<double>(resolution - 1);
    // The scan covers the closed simplex: equilibria can sit on the boundary
    // (a good in excess supply at price zero), and skipping those cells would
    // bias the minimum upward by a first-order term. Zero coordinates are
    // represented by a tiny positive price so the closed forms stay in
    // domain; that perturbs phi by O(1e-12).
    const double lo = 1e-12 * scale;
    // Pass 1 finds the minimum value, pass 2 picks the center-closest point
    // attaining it (within noise). Evaluating twice avoids storing the grid.
    auto scan = [&](auto&& visit) {
        if (m == 2) {
            for (int k = 0; k <= resolution - 1; ++k) {
                double p1 = step * k;
                visit(std::vector<double>{std::max(p1, lo),
                                          std::max(scale - p1, lo)});
            }
        } else {
            for (int k1 = 0; k1 <= resolution - 1; ++k1) {
                for (int k2 = 0; k1 + k2 <= resolution - 1; ++k2) {
                    double p1 = step * k1;
                    double p2 = step * k2;
                    visit(std::vector<double>{
                        std::max(p1, lo), std::max(p2, lo),
                        std::max(scale - p1 - p2, lo)});
                }
            }
        }
    };

    double min_phi = kInf;
    long evals = 0;
    scan([&](const std::vector<double>& p) {
        ++evals;
        min_phi = std::min(min_phi, potential_scalar(market, p));
    });
    if (!std::isfinite(min_phi))
        throw std::runtime_error("potential is not finite anywhere on the grid");

    const double tie = 1e-12 * std::max(1.0, std::abs(min_phi));
    double best_dist = kInf;
    std::vector<double> best_p;
    scan([&](const std::vector<double>& p) {
        double phi = potential_scalar(market, p);
        if (phi > min_phi + tie) return;
        double dist = 0.0;
        for (double pj : p) {
            double d = pj - scale / m;
            dist += d * d;
        }
        if (dist < best_dist) {
            best_dist = dist;
            best_p = p;
        }
    });

    out.prices = std::move(best_p);
    out.phi = potential_scalar(market, out.prices);
    out.iterations = evals;
    ExcessDemand ed = excess_demand(market, out.prices);
    out.residual = projected_residual(ed.z);
    out.certified = out.residual <= tol;
    return out;
}

EquilibriumCertificate certify(const Market& market,
                               const std::vector<double>& prices, double tol) {
    check_prices(prices);
    if (prices.size() != static_cast<size_t>(market.goods))
        throw std::invalid_argument("price dimension mismatch");

    const int n = market.num_buyers();
    const int m = market.goods;
    EquilibriumCertificate cert;
    cert.prices = prices;
    cert.tol = tol;
    cert.method = "certify";
    cert.allocation.assign(static_cast<size_t>(n) * m, 0.0);

    for (int i = 0; i < n; ++i) {
        const UtilitySpec& spec = market.buyers[i];
        double b = market.budgets[i];
        std::vector<double> x = marshallian(spec, prices, b);
        std::copy(x.begin(), x.end(),
                  cert.allocation.begin() + static_cast<size_t>(i) * m);

        double v = indirect_utility(spec, prices, b);
        double u = utility_value(spec, x);
        if (v > 0.0)
            cert.optimality_gap =
                std::max(cert.optimality_gap, std::max(0.0, (v - u) / v));

        double spend = 0.0;
        for (int j = 0; j < m; ++j) spend += prices[j] * x[j];
        cert.walras_residual =
            std::max(cert.walras_residual, std::abs(spend - b) / b);
    }

    double max_p = *std::max_element(prices.begin(), prices.end());
    double near_zero = 1e-8 * max_p;
    for (int j = 0; j < m; ++j) {
        double demand = 0.0;
        for (int i = 0; i < n; ++i)
            demand += cert.allocation[static_cast<size_t>(i) * m + j];
        double viol = prices[j] > near_zero ? std::abs(demand - 1.0)
                                            : std::max(demand - 1.0, 0.0);
        cert.clearing_violation = std::max(cert.clearing_violation, viol);
    }

    cert.valid = cert.valid_at(tol);
    return cert;
}

}  // namespace taton
