#include "experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "elasticity.hpp"
#include "oracle.hpp"
#include "potential.hpp"
#include "rng.hpp"
#include "threading.hpp"

namespace taton {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double sample_range(Rng& rng, const std::pair<double, double>& range) {
    return rng.uniform(range.first, range.second);
}

double sample_rho(const GenConfig& config, Rng& rng) {
    double total = 0.0;
    for (const auto& iv : config.rho_intervals) total += iv.second - iv.first;
    double u = rng.uniform() * total;
    for (const auto& iv : config.rho_intervals) {
        double len = iv.second - iv.first;
        if (u <= len || &iv == &config.rho_intervals.back())
            return iv.first + std::min(u, len);
        u -= len;
    }
    return config.rho_intervals.back().second;
}

UtilityKind sample_kind(const GenConfig& config, Rng& rng) {
    double total = 0.0;
    for (const auto& kw : config.palette) total += kw.weight;
    double u = rng.uniform() * total;
    for (const auto& kw : config.palette) {
        if (u <= kw.weight || &kw == &config.palette.back()) return kw.kind;
        u -= kw.weight;
    }
    return config.palette.back().kind;
}

std::vector<double> sample_values(const GenConfig& config, Rng& rng, int count) {
    std::vector<double> v(count);
    for (double& x : v) x = sample_range(rng, config.valuation_range);
    return v;
}

// Two-level tree when there are enough goods for two nests, otherwise a
// single CES node over all goods.
UtilitySpec sample_nested(const GenConfig& config, Rng& rng) {
    int m = config.goods;
    NestTree tree;
    if (m < 4) {
        NestNode root;
        root.rho = sample_rho(config, rng);
        root.weights = sample_values(config, rng, m);
        for (int j = 0; j < m; ++j) root.children.push_back({true, j});
        tree.nodes.push_back(std::move(root));
        tree.root = 0;
        return UtilitySpec::nested(std::move(tree));
    }
    int split = m / 2;
    NestNode root;
    root.rho = sample_rho(config, rng);
    for (int nest = 0; nest < 2; ++nest) {
        NestNode node;
        node.rho = sample_rho(config, rng);
        int lo = nest == 0 ? 0 : split;
        int hi = nest == 0 ? split : m;
        node.weights = sample_values(config, rng, hi - lo);
        for (int j = lo; j < hi; ++j) node.children.push_back({true, j});
        tree.nodes.push_back(std::move(node));
        root.children.push_back({false, nest});
    }
    root.weights = sample_values(config, rng, 2);
    tree.nodes.push_back(std::move(root));
    tree.root = 2;
    return UtilitySpec::nested(std::move(tree));
}

UtilitySpec sample_spec(const GenConfig& config, Rng& rng) {
    UtilityKind kind = sample_kind(config, rng);
    switch (kind) {
        case UtilityKind::Linear:
            return UtilitySpec::linear(sample_values(config, rng, config.goods));
        case UtilityKind::CobbDouglas:
            return UtilitySpec::cobb_douglas(
                sample_values(config, rng, config.goods));
        case UtilityKind::Leontief:
            return UtilitySpec::leontief(sample_values(config, rng, config.goods));
        case UtilityKind::CES: {
            auto v = sample_values(config, rng, config.goods);
            return UtilitySpec::ces(std::move(v), sample_rho(config, rng));
        }
        case UtilityKind::NestedCES:
            return sample_nested(config, rng);
    }
    throw std::logic_error("unreachable palette kind");
}
}  // namespace

void validate_gen_config(const GenConfig& config) {
    auto bad_range = [](const std::pair<double, double>& r) {
        return !(r.first <= r.second) || !std::isfinite(r.first) ||
               !std::isfinite(r.second);
    };
    if (config.buyers < 1 || config.goods < 1)
        throw std::invalid_argument("need at least one buyer and one good");
    if (bad_range(config.valuation_range) || config.valuation_range.first <= 0.0)
        throw std::invalid_argument("valuation range must be positive");
    if (bad_range(config.budget_range) || config.budget_range.first <= 0.0)
        throw std::invalid_argument("budget range must be positive");
    if (bad_range(config.price_range) || config.price_range.first <= 0.0)
        throw std::invalid_argument("price range must be positive");
    if (config.rho_intervals.empty())
        throw std::invalid_argument("need at least one rho interval");
    double mass = 0.0;
    for (const auto& iv : config.rho_intervals) {
        if (bad_range(iv) || iv.second >= 1.0)
            throw std::invalid_argument("rho intervals must be finite and < 1");
        mass += iv.second - iv.first;
    }
    if (!(mass > 0.0))
        throw std::invalid_argument("rho intervals must have positive total length");
    if (config.palette.empty())
        throw std::invalid_argument("palette must not be empty");
    double w = 0.0;
    for (const auto& kw : config.palette) {
        if (!(kw.weight >= 0.0) || !std::isfinite(kw.weight))
            throw std::invalid_argument("palette weights must be >= 0");
        w += kw.weight;
    }
    if (!(w > 0.0))
        throw std::invalid_argument("palette weights must have positive sum");
}

GeneratedMarket generate_market(const GenConfig& config, long index) {
    validate_gen_config(config);
    Rng rng(config.seed, static_cast<uint64_t>(index));

    std::vector<double> budgets(config.buyers);
    for (double& b : budgets) b = sample_range(rng, config.budget_range);

    std::vector<UtilitySpec> specs;
    specs.reserve(config.buyers);
    for (int i = 0; i < config.buyers; ++i)
        specs.push_back(sample_spec(config, rng));

    std::vector<double> p0(config.goods);
    for (double& p : p0) p = sample_range(rng, config.price_range);

    GeneratedMarket out{Market::create(config.goods, std::move(budgets),
                                       std::move(specs),
                                       config.normalize_budgets),
                        std::move(p0)};
    return out;
}

namespace {

bool has_linear_buyer(const Market& market) {
    for (const auto& spec : market.buyers)
        if (spec.kind == UtilityKind::Linear) return true;
    return false;
}

void fill_record(MarketRecord& rec, const GenConfig& gen, long index,
                 const BatchRunConfig& batch) {
    rec.index = index;
    rec.seed = gen.seed;

    GeneratedMarket g = generate_market(gen, index);
    ElasticityBound eb = market_elasticity(g.market);
    rec.epsilon = eb.epsilon;
    rec.epsilon_finite = eb.finite;
    rec.max_sigma = eb.epsilon;

    Trajectory traj = run(g.market, g.p0, batch.run);
    rec.termination = traj.termination;
    rec.converged = traj.termination == Termination::Converged;
    rec.iterations = traj.iterations;
    rec.final_max_excess = traj.final_max_excess;
    rec.escalations = traj.escalation_count;
    rec.gamma_final = traj.gamma_final;
    rec.steps_checked = traj.steps_checked;
    rec.price_change_violations = traj.price_change_violations;
    rec.bregman_violations = traj.bregman_violations;
    rec.bregman_checked = traj.bregman_checked;
    rec.diagnostic = traj.diagnostic;

    // Tail oscillation over the last tail_fraction of iterations; together
    // with the max-iterations flag this separates genuine oscillation from
    // slow-but-monotone descent.
    long tail_from = traj.iterations -
                     std::max<long>(1, static_cast<long>(
                                           static_cast<double>(traj.iterations) *
                                           batch.tail_fraction));
    double lo = kInf, hi = -kInf;
    for (size_t r = 0; r < traj.ts.size(); ++r) {
        if (traj.ts[r] < tail_from) continue;
        lo = std::min(lo, traj.phi[r]);
        hi = std::max(hi, traj.phi[r]);
    }
    rec.tail_phi_range = hi >= lo ? hi - lo : 0.0;
    rec.oscillating = traj.termination == Termination::MaxIterations &&
                      rec.tail_phi_range >
                          batch.oscillation_factor * batch.run.tol;

    if (traj.ts.empty()) return;

    // phi* for rate fitting: a reference solve when it can be trusted,
    // otherwise the trajectory minimum (flagged as such).
    double phi_star = traj.min_phi();
    bool from_oracle = false;
    if (!has_linear_buyer(g.market)) {
        try {
            OracleResult ref;
            if (g.market.goods <= 2) {
                ref = solve_grid(g.market, batch.grid_resolution,
                                 batch.oracle_tol);
            } else {
                OracleConfig oc;
                oc.iters = batch.oracle_iters;
                oc.restarts = batch.oracle_restarts;
                oc.tol = batch.oracle_tol;
                ref = solve_dual(g.market, oc);
            }
            rec.oracle_certified = ref.certified;
            if (ref.certified && ref.phi < phi_star) {
                phi_star = ref.phi;
                from_oracle = true;
            } else if (ref.certified) {
                // The trajectory dipped below the reference by solver
                // noise; keep the smaller value but credit the oracle.
                from_oracle = true;
            }
        } catch (const std::exception& e) {
            rec.diagnostic = rec.diagnostic.empty()
                                 ? std::string("oracle: ") + e.what()
                                 : rec.diagnostic + "; oracle: " + e.what();
        }
    }
    rec.phi_star = phi_star;
    rec.exponent_vs_oracle = from_oracle;
    ConvergenceReport rep = convergence_report(traj, phi_star, nullptr,
                                               from_oracle);
    rec.exponent = rep.fitted_exponent;
}

double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    double pos = q * static_cast<double>(sorted.size() - 1);
    size_t lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}
}  // namespace

BatchResult batch_run(const GenConfig& gen, long count,
                      const BatchRunConfig& batch) {
    validate_gen_config(gen);
    if (count < 0) throw std::invalid_argument("count must be >= 0");

    BatchResult out;
    out.gen = gen;
    out.batch = batch;
    out.count = count;
    out.records.resize(static_cast<size_t>(count));

    parallel_for(static_cast<size_t>(count), [&](size_t i) {
        fill_record(out.records[i], gen, static_cast<long>(i), batch);
    });

    for (const auto& rec : out.records)
        if (rec.converged) ++out.converged_count;
    if (count > 0)
        out.convergence_fraction = static_cast<double>(out.converged_count) /
                                   static_cast<double>(count);
    return out;
}

RateTable rate_table(const BatchResult& results) {
    RateTable table;
    std::vector<double> exps;
    for (const auto& rec : results.records)
        if (rec.converged && rec.exponent) exps.push_back(*rec.exponent);
    if (exps.empty()) {
        table.diagnostic = "no converged runs with a fitted exponent";
        return table;
    }
    std::sort(exps.begin(), exps.end());
    table.empty = false;
    table.count = static_cast<long>(exps.size());
    table.min = exps.front();
    table.q25 = quantile(exps, 0.25);
    table.median = quantile(exps, 0.5);
    table.q75 = quantile(exps, 0.75);
    table.max = exps.back();
    for (double e : exps) {
        if (e <= -1.0) ++table.at_most_minus_1;
        if (e <= -2.0) ++table.at_most_minus_2;
    }
    return table;
}

}  // namespace taton
