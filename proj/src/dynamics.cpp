#include "dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "demand.hpp"
#include "elasticity.hpp"
#include "potential.hpp"
#include "rng.hpp"

namespace taton {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}
}  // namespace

const char* termination_name(Termination t) {
    switch (t) {
        case Termination::Converged: return "converged";
        case Termination::MaxIterations: return "max-iterations";
        case Termination::Diverged: return "diverged";
    }
    return "?";
}

std::vector<double> entropic_step(const std::vector<double>& p,
                                  const std::vector<double>& z, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (p.size() != z.size())
        throw std::invalid_argument("price/excess dimension mismatch");
    std::vector<double> out(p.size());
    for (size_t j = 0; j < p.size(); ++j) out[j] = p[j] * std::exp(z[j] / gamma);
    return out;
}

double step_size_adaptive_update(double gamma,
                                 const std::vector<double>& demand) {
    double hi = 1.0;
    for (double d : demand) hi = std::max(hi, d);
    return std::max(gamma, 5.0 * hi);
}

// ---------------------------------------------------------------------------
// Theoretical step size: suprema of Hicksian demand over the price simplex.

namespace {

// Local search for an extremum of f over {p > 0 : sum p = scale,
// p_j >= clip * scale}. Multiplicative coordinate moves keep iterates
// positive; a probe gradient in log coordinates drives the ascent.
double simplex_extremum(const std::function<double(const std::vector<double>&)>& f,
                        int m, double scale, double clip, bool maximize,
                        Rng& rng, int starts) {
    auto project = [&](std::vector<double> q) {
        double lo = clip * scale;
        for (double& qj : q) qj = std::max(qj, lo);
        double sum = 0.0;
        for (double qj : q) sum += qj;
        for (double& qj : q) qj *= scale / sum;
        // One more clamp pass: renormalizing can push a coordinate slightly
        // below the floor again; the resulting sum error is O(m * clip).
        for (double& qj : q) qj = std::max(qj, lo);
        return q;
    };
    auto value = [&](const std::vector<double>& q) {
        double v = f(q);
        return maximize ? v : -v;
    };

    if (m == 1) return f({scale});

    double best = -kInf;
    for (int s = 0; s < starts; ++s) {
        std::vector<double> q = rng.dirichlet(m);
        for (double& qj : q) qj *= scale;
        q = project(q);
        double fq = value(q);
        double eta = 0.5;
        const double probe = 1e-4;
        for (int iter = 0; iter < 80 && eta > 1e-7; ++iter) {
            // Probe gradient: bump each coordinate multiplicatively.
            std::vector<double> g(m);
            double gmax = 0.0;
            for (int k = 0; k < m; ++k) {
                std::vector<double> qk = q;
                qk[k] *= 1.0 + probe;
                g[k] = value(project(qk)) - fq;
                gmax = std::max(gmax, std::abs(g[k]));
            }
            if (gmax == 0.0) break;
            bool improved = false;
            while (eta > 1e-7) {
                std::vector<double> trial = q;
                for (int k = 0; k < m; ++k)
                    trial[k] *= std::exp(eta * g[k] / gmax);
                trial = project(trial);
                double ft = value(trial);
                if (ft > fq) {
                    q = std::move(trial);
                    fq = ft;
                    improved = true;
                    break;
                }
                eta *= 0.5;
            }
            if (!improved) break;
        }
        best = std::max(best, fq);
    }
    return maximize ? best : -best;
}

struct SimplexBounds {
    double sup = 0.0;         // at the tight clip
    double sup_loose = 0.0;   // at the 10x looser clip
    bool unbounded = false;   // value still growing toward the boundary
};

// Extremizes at two clip levels; a value that keeps growing as the clip
// tightens signals a supremum on the simplex boundary (an infinite one for
// the quantities used here).
SimplexBounds clipped_extremum(
    const std::function<double(const std::vector<double>&)>& f, int m,
    double scale, bool maximize, Rng& rng) {
    const int starts = 10 * m;
    SimplexBounds out;
    out.sup_loose = simplex_extremum(f, m, scale, 1e-5, maximize, rng, starts);
    out.sup = simplex_extremum(f, m, scale, 1e-6, maximize, rng, starts);
    // Never report a worse extremum at the looser clip than the tight one
    // admits (the feasible region only grows as the clip tightens).
    if (maximize) {
        out.sup = std::max(out.sup, out.sup_loose);
        out.unbounded = out.sup > out.sup_loose * 1.02 + 1e-12;
    } else {
        out.sup = std::min(out.sup, out.sup_loose);
        out.unbounded = out.sup < out.sup_loose * 0.98 - 1e-12;
    }
    return out;
}

}  // namespace

StepSizeResult step_size_theoretical(const Market& market,
                                     const std::vector<double>& p0) {
    check_prices(p0);
    StepSizeResult out;

    ElasticityBound eb = market_elasticity(market);
    if (!eb.finite) {
        out.diagnostic =
            "theoretical step size undefined: a linear buyer makes the "
            "Hicksian elasticity unbounded";
        return out;
    }
    out.epsilon = eb.epsilon;
    const double factor = step_size_epsilon_factor(eb.epsilon);

    const int m = market.goods;
    const int n = market.num_buyers();
    double scale = 0.0;  // equilibrium prices live on {sum p = sum budgets}
    for (double b : market.budgets) scale += b;

    std::vector<double> sup_h(static_cast<size_t>(n) * m, 0.0);
    std::vector<double> inf_h(n, kInf);
    Rng rng(0x7a70u);

    for (int i = 0; i < n; ++i) {
        const UtilitySpec& spec = market.buyers[i];
        if (spec.kind == UtilityKind::Leontief) {
            // h = v at every price: the suprema are the valuations themselves.
            for (int j = 0; j < m; ++j) {
                double v = spec.values[j];
                sup_h[static_cast<size_t>(i) * m + j] = v;
                if (v > 0.0) inf_h[i] = std::min(inf_h[i], v);
            }
            continue;
        }
        std::vector<char> support(m, 0);
        {
            std::vector<double> probe(m, scale / m);
            auto h = hicksian_unit(spec, probe);
            for (int j = 0; j < m; ++j) support[j] = h[j] > 0.0 ? 1 : 0;
        }
        for (int j = 0; j < m; ++j) {
            if (!support[j]) continue;
            auto hj = [&](const std::vector<double>& q) {
                return hicksian_unit(spec, q)[j];
            };
            SimplexBounds b = clipped_extremum(hj, m, scale, true, rng);
            if (b.unbounded) {
                std::ostringstream d;
                d << "theoretical step size infeasible: sup of Hicksian "
                     "demand for buyer "
                  << i << ", good " << j
                  << " keeps growing toward the simplex boundary ("
                  << b.sup_loose << " -> " << b.sup
                  << " as the clip tightens)";
                out.diagnostic = d.str();
                return out;
            }
            sup_h[static_cast<size_t>(i) * m + j] = b.sup;
        }
        auto hmin = [&](const std::vector<double>& q) {
            auto h = hicksian_unit(spec, q);
            double lo = kInf;
            for (int j = 0; j < m; ++j)
                if (support[j]) lo = std::min(lo, h[j]);
            return lo;
        };
        SimplexBounds b = clipped_extremum(hmin, m, scale, false, rng);
        if (b.unbounded || !(b.sup > 0.0)) {
            std::ostringstream d;
            d << "theoretical step size infeasible: inf of positive Hicksian "
                 "demand for buyer "
              << i << " falls toward 0 at the simplex boundary ("
              << b.sup_loose << " -> " << b.sup
              << " as the clip tightens), so the demand-ratio term is "
                 "unbounded";
            out.diagnostic = d.str();
            return out;
        }
        inf_h[i] = b.sup;
    }

    std::vector<double> ratio(static_cast<size_t>(n) * m, 0.0);
    double worst_good = 0.0;
    for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            double M = sup_h[static_cast<size_t>(i) * m + j];
            if (M <= 0.0) continue;
            double u0 = indirect_utility(market.buyers[i], p0, market.budgets[i]);
            ratio[static_cast<size_t>(i) * m + j] =
                2.0 * (M * M) / (inf_h[i] * inf_h[i]);
            acc += u0 * M + ratio[static_cast<size_t>(i) * m + j];
        }
        worst_good = std::max(worst_good, acc);
    }
    out.feasible = true;
    out.gamma = (1.0 + worst_good) * factor;
    out.hicksian_sup = std::move(sup_h);
    out.ratio_term = std::move(ratio);
    return out;
}

// ---------------------------------------------------------------------------
// The tatonnement loop.

std::vector<double> Trajectory::price_row(size_t r) const {
    auto begin = prices.begin() + static_cast<long>(r) * goods;
    return std::vector<double>(begin, begin + goods);
}

double Trajectory::min_phi() const {
    double lo = kInf;
    for (double v : phi) lo = std::min(lo, v);
    return lo;
}

Trajectory run(const Market& market, const std::vector<double>& p0,
               const RunConfig& config) {
    check_prices(p0);
    if (p0.size() != static_cast<size_t>(market.goods))
        throw std::invalid_argument("initial price dimension mismatch");
    if (config.max_iters < 0 || config.record_every < 1 || !(config.tol >= 0.0))
        throw std::invalid_argument("invalid run config");
    if (config.mode != StepMode::Theoretical && !(config.gamma0 > 0.0))
        throw std::invalid_argument("gamma0 must be positive");

    double gamma = config.gamma0;
    if (config.mode == StepMode::Theoretical) {
        StepSizeResult r = step_size_theoretical(market, p0);
        if (!r.feasible) throw std::domain_error(r.diagnostic);
        gamma = r.gamma;
    }

    Trajectory traj;
    traj.goods = market.goods;
    traj.gamma_initial = gamma;
    traj.bregman_checked = config.check_bregman;

    std::vector<double> p = p0;
    double kl_last = 0.0;
    double cur_phi = std::numeric_limits<double>::quiet_NaN();
    bool have_phi = false;

    auto record = [&](long t, double max_z) {
        if (!traj.ts.empty() && traj.ts.back() == t) return;
        if (!have_phi) {
            cur_phi = potential_scalar(market, p);
            have_phi = true;
        }
        traj.ts.push_back(t);
        traj.prices.insert(traj.prices.end(), p.begin(), p.end());
        traj.phi.push_back(cur_phi);
        traj.max_excess.push_back(max_z);
        traj.kl_step.push_back(kl_last);
        traj.gamma.push_back(gamma);
    };

    for (long t = 0;; ++t) {
        // Prices must be vetted before the demand oracles see them; an
        // overflowed iterate would otherwise throw instead of reporting.
        bool prices_ok = true;
        for (double pj : p)
            if (!(pj > 0.0) || !std::isfinite(pj)) prices_ok = false;
        if (!prices_ok) {
            traj.termination = Termination::Diverged;
            traj.diagnostic = "non-finite or non-positive price at t = " +
                              std::to_string(t);
            traj.iterations = t;
            traj.final_max_excess = kInf;
            break;
        }

        ExcessDemand ed =
            evaluate_market(market, p, config.check_bregman ? &cur_phi : nullptr);
        have_phi = config.check_bregman;

        if (!all_finite(ed.z)) {
            traj.termination = Termination::Diverged;
            traj.diagnostic =
                "non-finite excess demand at t = " + std::to_string(t);
            traj.iterations = t;
            traj.final_max_excess = kInf;
            break;
        }

        double max_z = 0.0;
        bool converged = true;
        for (size_t j = 0; j < p.size(); ++j) {
            double a = std::abs(ed.z[j]);
            max_z = std::max(max_z, a);
            // A good whose price has collapsed only needs to avoid excess
            // demand: zero-price goods may be under-supplied... under-demanded.
            double viol = p[j] < 1e-12 ? std::max(ed.z[j], 0.0) : a;
            if (viol > config.tol) converged = false;
        }

        if (converged) {
            traj.termination = Termination::Converged;
            traj.iterations = t;
            traj.final_max_excess = max_z;
            record(t, max_z);
            break;
        }
        if (t >= config.max_iters) {
            traj.termination = Termination::MaxIterations;
            traj.iterations = t;
            traj.final_max_excess = max_z;
            record(t, max_z);
            break;
        }

        if (config.mode == StepMode::Adaptive) {
            double next_gamma = step_size_adaptive_update(gamma, ed.demand);
            if (next_gamma > gamma) {
                if (traj.escalation_count < kMaxLoggedEscalations) {
                    double trigger = 0.0;
                    for (double d : ed.demand) trigger = std::max(trigger, d);
                    traj.escalations.push_back({t, gamma, next_gamma, trigger});
                }
                ++traj.escalation_count;
                gamma = next_gamma;
            }
        }

        if (t % config.record_every == 0) record(t, max_z);

        std::vector<double> p_next;
        if (config.kernel == Kernel::WeightedEntropy) {
            p_next = entropic_step(p, ed.z, gamma);
            ++traj.steps_checked;
            for (size_t j = 0; j < p.size(); ++j) {
                // |z_j|/gamma <= 1/5 is exactly the multiplicative bound
                // e^(-1/5) <= p'/p <= e^(1/5); the slack only absorbs the
                // rounding of the division.
                if (std::abs(ed.z[j]) / gamma > 0.2 + 1e-12)
                    ++traj.price_change_violations;
            }
        } else {
            p_next = p;
            for (size_t j = 0; j < p.size(); ++j)
                p_next[j] = std::max(p[j] + ed.z[j] / gamma, config.p_floor);
        }

        bool next_finite = all_finite(p_next);
        double kl = next_finite ? kl_divergence(p_next, p) : kInf;
        if (config.check_bregman && next_finite) {
            double phi_next = potential_scalar(market, p_next);
            double lin = cur_phi;
            for (size_t j = 0; j < p.size(); ++j)
                lin -= ed.z[j] * (p_next[j] - p[j]);
            double margin = phi_next - (lin + gamma * kl);
            if (margin > config.bregman_slack) {
                ++traj.bregman_violations;
                traj.worst_bregman_violation =
                    std::max(traj.worst_bregman_violation, margin);
            }
            cur_phi = phi_next;  // reused as the next iterate's phi
        } else {
            have_phi = false;
        }
        kl_last = kl;
        p = std::move(p_next);
    }

    traj.final_prices = p;
    traj.gamma_final = gamma;
    return traj;
}

// ---------------------------------------------------------------------------
// Rate fitting and the theorem-style bound check.

std::optional<double> fit_rate_exponent(const std::vector<long>& ts,
                                        const std::vector<double>& gaps,
                                        int* points_used) {
    if (points_used) *points_used = 0;
    std::vector<std::pair<double, double>> pts;  // (log t, log gap)
    for (size_t r = 0; r < ts.size(); ++r)
        if (ts[r] >= 1 && gaps[r] > 0.0 && std::isfinite(gaps[r]))
            pts.emplace_back(std::log(static_cast<double>(ts[r])),
                             std::log(gaps[r]));
    if (pts.size() < 2) return std::nullopt;
    size_t from = pts.size() / 2;
    double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t r = from; r < pts.size(); ++r) {
        n += 1;
        sx += pts[r].first;
        sy += pts[r].second;
        sxx += pts[r].first * pts[r].first;
        sxy += pts[r].first * pts[r].second;
    }
    double denom = n * sxx - sx * sx;
    if (!(denom > 0.0)) return std::nullopt;
    if (points_used) *points_used = static_cast<int>(pts.size() - from);
    return (n * sxy - sx * sy) / denom;
}

ConvergenceReport convergence_report(const Trajectory& traj, double phi_star,
                                     const std::vector<double>* p_star,
                                     bool phi_star_from_oracle) {
    if (traj.ts.empty()) throw std::invalid_argument("empty trajectory");
    ConvergenceReport out;
    out.phi_star_from_oracle = phi_star_from_oracle;

    // A grid oracle sits above the true optimum by resolution error, so a
    // converged trajectory may dip below phi_star by ~1e-7. Only a gap far
    // beyond that scale means the oracle solved a different problem.
    double min_phi = traj.min_phi();
    if (phi_star > min_phi + 1e-5 * std::max(1.0, std::abs(phi_star)))
        throw std::runtime_error(
            "inconsistent oracle: phi* exceeds the trajectory minimum");

    out.gaps.reserve(traj.ts.size());
    for (double v : traj.phi) out.gaps.push_back(v - phi_star);

    // Gaps below double-precision resolution of phi* carry no rate
    // information; the fit uses the tail half of the informative points.
    double floor = 1e-13 * std::max(1.0, std::abs(phi_star));
    std::vector<long> ts;
    std::vector<double> gaps;
    for (size_t r = 0; r < traj.ts.size(); ++r)
        if (out.gaps[r] > floor) {
            ts.push_back(traj.ts[r]);
            gaps.push_back(out.gaps[r]);
        }
    out.fitted_exponent = fit_rate_exponent(ts, gaps, &out.fit_points);
    out.gap_collapsed = !out.fitted_exponent.has_value();

    for (double g : traj.gamma) out.gamma = std::max(out.gamma, g);
    if (p_star) {
        out.bound_checked = true;
        out.kl0 = kl_divergence(*p_star, traj.price_row(0));
        out.bound_holds = true;
        out.worst_bound_margin = -kInf;
        for (size_t r = 0; r < traj.ts.size(); ++r) {
            if (traj.ts[r] < 1) continue;
            double bound = out.gamma * out.kl0 / static_cast<double>(traj.ts[r]);
            double margin = out.gaps[r] - bound;
            out.worst_bound_margin = std::max(out.worst_bound_margin, margin);
            if (margin > 1e-9) out.bound_holds = false;
        }
    }
    return out;
}

}  // namespace taton
