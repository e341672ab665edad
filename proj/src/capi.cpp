#include "taton/taton.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <new>
#include <stdexcept>
#include <string>

#include "demand.hpp"
#include "dynamics.hpp"
#include "experiments.hpp"
#include "io.hpp"
#include "market.hpp"
#include "oracle.hpp"
#include "potential.hpp"

struct taton_market {
    taton::ParsedMarket pm;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

// Exceptions cross the C boundary as status codes; the message is parked in
// thread-local storage for taton_last_error.
template <typename Fn>
taton_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return TATON_OK;
    } catch (const taton::ParseError& e) {
        set_error(e.what());
        return TATON_EPARSE;
    } catch (const std::invalid_argument& e) {
        set_error(e.what());
        return TATON_EINVAL;
    } catch (const std::domain_error& e) {
        set_error(e.what());
        return TATON_EDOMAIN;
    } catch (const std::bad_alloc&) {
        set_error("out of memory");
        return TATON_ENOMEM;
    } catch (const std::exception& e) {
        set_error(e.what());
        return TATON_ERUNTIME;
    }
}

taton_status require(bool ok, const char* msg) {
    if (ok) return TATON_OK;
    set_error(msg);
    return TATON_EINVAL;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::vector<double> to_vector(const double* p, int n) {
    return std::vector<double>(p, p + n);
}

taton::RunConfig run_config_from(const taton_sim_params& params) {
    taton::RunConfig config;
    std::string mode = params.gamma_mode ? params.gamma_mode : "adaptive";
    if (mode == "theoretical") {
        config.mode = taton::StepMode::Theoretical;
    } else if (mode == "adaptive") {
        config.mode = taton::StepMode::Adaptive;
    } else if (mode == "fixed") {
        config.mode = taton::StepMode::Fixed;
        config.gamma0 = params.gamma;
    } else {
        throw std::invalid_argument("unknown gamma mode \"" + mode + "\"");
    }
    std::string kernel = params.kernel ? params.kernel : "entropy";
    if (kernel == "entropy") {
        config.kernel = taton::Kernel::WeightedEntropy;
    } else if (kernel == "euclidean") {
        config.kernel = taton::Kernel::SquaredEuclidean;
    } else {
        throw std::invalid_argument("unknown kernel \"" + kernel + "\"");
    }
    config.max_iters = params.max_iters;
    config.tol = params.tol;
    config.record_every = params.record_every;
    config.check_bregman = params.check_bregman != 0;
    return config;
}

taton::GenConfig gen_config_from(const taton_gen_params& params) {
    taton::GenConfig config;
    config.buyers = params.buyers;
    config.goods = params.goods;
    config.valuation_range = {params.valuation_lo, params.valuation_hi};
    config.budget_range = {params.budget_lo, params.budget_hi};
    config.price_range = {params.price_lo, params.price_hi};
    config.seed = params.seed;
    config.normalize_budgets = params.normalize_budgets != 0;

    if (params.palette && *params.palette) {
        config.palette.clear();
        std::string s = params.palette;
        size_t pos = 0;
        while (pos <= s.size()) {
            size_t end = s.find(',', pos);
            if (end == std::string::npos) end = s.size();
            std::string entry = s.substr(pos, end - pos);
            pos = end + 1;
            if (entry.empty()) continue;
            double weight = 1.0;
            size_t colon = entry.find(':');
            std::string name = entry.substr(0, colon);
            if (colon != std::string::npos) {
                try {
                    size_t used = 0;
                    weight = std::stod(entry.substr(colon + 1), &used);
                    if (used != entry.size() - colon - 1) throw std::exception();
                } catch (...) {
                    throw std::invalid_argument("bad palette weight in \"" +
                                                entry + "\"");
                }
            }
            taton::UtilityKind kind;
            if (name == "linear") kind = taton::UtilityKind::Linear;
            else if (name == "cobb_douglas") kind = taton::UtilityKind::CobbDouglas;
            else if (name == "leontief") kind = taton::UtilityKind::Leontief;
            else if (name == "ces") kind = taton::UtilityKind::CES;
            else if (name == "nested_ces") kind = taton::UtilityKind::NestedCES;
            else
                throw std::invalid_argument("unknown palette kind \"" + name +
                                            "\"");
            config.palette.push_back({kind, weight});
        }
        if (config.palette.empty())
            throw std::invalid_argument("palette parsed to no kinds");
    }

    if (params.rho_intervals && *params.rho_intervals) {
        config.rho_intervals.clear();
        std::string s = params.rho_intervals;
        size_t pos = 0;
        while (pos <= s.size()) {
            size_t end = s.find(',', pos);
            if (end == std::string::npos) end = s.size();
            std::string entry = s.substr(pos, end - pos);
            pos = end + 1;
            if (entry.empty()) continue;
            size_t colon = entry.find(':');
            if (colon == std::string::npos)
                throw std::invalid_argument("rho interval \"" + entry +
                                            "\" is not lo:hi");
            try {
                double lo = std::stod(entry.substr(0, colon));
                double hi = std::stod(entry.substr(colon + 1));
                config.rho_intervals.push_back({lo, hi});
            } catch (const std::invalid_argument&) {
                throw std::invalid_argument("bad rho interval \"" + entry + "\"");
            }
        }
        if (config.rho_intervals.empty())
            throw std::invalid_argument("rho intervals parsed empty");
    }
    return config;
}

std::vector<double> default_p0(const taton::Market& market) {
    double scale = 0.0;
    for (double b : market.budgets) scale += b;
    return std::vector<double>(market.goods, scale / market.goods);
}

}  // namespace

extern "C" {

const char* taton_version(void) { return "0.1.0"; }

const char* taton_last_error(void) { return g_last_error.c_str(); }

void taton_string_free(char* s) { std::free(s); }

taton_status taton_market_parse_json(const char* text, taton_market** out) {
    if (taton_status st = require(text && out, "null argument")) return st;
    return guarded([&] {
        auto handle = new taton_market{taton::parse_market(text)};
        *out = handle;
    });
}

taton_status taton_market_parse_file(const char* path, taton_market** out) {
    if (taton_status st = require(path && out, "null argument")) return st;
    return guarded([&] {
        auto handle = new taton_market{taton::parse_market_file(path)};
        *out = handle;
    });
}

void taton_market_free(taton_market* market) { delete market; }

int taton_market_goods(const taton_market* market) {
    return market ? market->pm.market.goods : 0;
}

int taton_market_buyers(const taton_market* market) {
    return market ? market->pm.market.num_buyers() : 0;
}

int taton_market_has_initial_prices(const taton_market* market) {
    return market && market->pm.initial_prices ? 1 : 0;
}

taton_status taton_market_initial_prices(const taton_market* market,
                                         double* out) {
    if (taton_status st = require(market && out, "null argument")) return st;
    if (taton_status st =
            require(market->pm.initial_prices.has_value(),
                    "market file carries no initial prices"))
        return st;
    const auto& p0 = *market->pm.initial_prices;
    std::memcpy(out, p0.data(), p0.size() * sizeof(double));
    g_last_error.clear();
    return TATON_OK;
}

taton_status taton_market_notes(const taton_market* market, char** out) {
    if (taton_status st = require(market && out, "null argument")) return st;
    return guarded([&] {
        std::string joined;
        for (const auto& note : market->pm.notes) {
            joined += note;
            joined += '\n';
        }
        *out = dup_string(joined);
    });
}

taton_status taton_market_to_json(const taton_market* market, char** out) {
    if (taton_status st = require(market && out, "null argument")) return st;
    return guarded([&] {
        *out = dup_string(taton::serialize_market(market->pm.market,
                                                  market->pm.initial_prices));
    });
}

taton_status taton_excess_demand(const taton_market* market, const double* p,
                                 double* z_out) {
    if (taton_status st = require(market && p && z_out, "null argument"))
        return st;
    return guarded([&] {
        auto ed = taton::excess_demand(market->pm.market,
                                       to_vector(p, market->pm.market.goods));
        std::memcpy(z_out, ed.z.data(), ed.z.size() * sizeof(double));
    });
}

taton_status taton_potential(const taton_market* market, const double* p,
                             double* phi_out) {
    if (taton_status st = require(market && p && phi_out, "null argument"))
        return st;
    return guarded([&] {
        *phi_out = taton::potential_scalar(
            market->pm.market, to_vector(p, market->pm.market.goods));
    });
}

taton_status taton_solve(const taton_market* market, const char* method,
                         double tol, double* prices_out, double* phi_out,
                         double* residual_out, int* certified_out) {
    if (taton_status st = require(market && prices_out && phi_out &&
                                      residual_out && certified_out,
                                  "null argument"))
        return st;
    return guarded([&] {
        std::string name = method ? method : "dual";
        taton::OracleResult result;
        if (name == "dual") {
            taton::OracleConfig config;
            config.tol = tol;
            result = taton::solve_dual(market->pm.market, config);
        } else if (name == "grid") {
            result = taton::solve_grid(market->pm.market, 2001, tol);
        } else {
            throw std::invalid_argument("unknown solve method \"" + name + "\"");
        }
        std::memcpy(prices_out, result.prices.data(),
                    result.prices.size() * sizeof(double));
        *phi_out = result.phi;
        *residual_out = result.residual;
        *certified_out = result.certified ? 1 : 0;
    });
}

taton_status taton_certify(const taton_market* market, const double* prices,
                           double tol, double* clearing_out,
                           double* optimality_out, double* walras_out,
                           int* valid_out) {
    if (taton_status st = require(market && prices && clearing_out &&
                                      optimality_out && walras_out && valid_out,
                                  "null argument"))
        return st;
    return guarded([&] {
        auto cert = taton::certify(market->pm.market,
                                   to_vector(prices, market->pm.market.goods),
                                   tol);
        *clearing_out = cert.clearing_violation;
        *optimality_out = cert.optimality_gap;
        *walras_out = cert.walras_residual;
        *valid_out = cert.valid ? 1 : 0;
    });
}

void taton_sim_params_init(taton_sim_params* params) {
    if (!params) return;
    params->gamma_mode = "adaptive";
    params->gamma = 5.0;
    params->kernel = "entropy";
    params->max_iters = 50000;
    params->tol = 1e-6;
    params->record_every = 1;
    params->check_bregman = 0;
}

taton_status taton_simulate(const taton_market* market, const double* p0,
                            const taton_sim_params* params,
                            const char* csv_path, double* final_prices_out,
                            taton_sim_summary* summary_out) {
    if (taton_status st = require(market && params && summary_out,
                                  "null argument"))
        return st;
    return guarded([&] {
        const taton::Market& mk = market->pm.market;
        std::vector<double> start;
        if (p0) {
            start = to_vector(p0, mk.goods);
        } else if (market->pm.initial_prices) {
            start = *market->pm.initial_prices;
        } else {
            start = default_p0(mk);
        }
        taton::Trajectory traj = taton::run(mk, start, run_config_from(*params));
        if (csv_path) taton::write_trajectory_csv_file(csv_path, traj);
        if (final_prices_out)
            std::memcpy(final_prices_out, traj.final_prices.data(),
                        traj.final_prices.size() * sizeof(double));
        taton_sim_summary s{};
        s.converged = traj.termination == taton::Termination::Converged ? 1 : 0;
        std::snprintf(s.termination, sizeof s.termination, "%s",
                      taton::termination_name(traj.termination));
        s.iterations = traj.iterations;
        s.final_max_excess = traj.final_max_excess;
        s.gamma_initial = traj.gamma_initial;
        s.gamma_final = traj.gamma_final;
        s.escalations = traj.escalation_count;
        s.steps_checked = traj.steps_checked;
        s.price_change_violations = traj.price_change_violations;
        s.bregman_violations = traj.bregman_violations;
        *summary_out = s;
    });
}

taton_status taton_elasticity_report(const taton_market* market, long samples,
                                     uint64_t seed, char** json_out) {
    if (taton_status st = require(market && json_out, "null argument"))
        return st;
    return guarded([&] {
        *json_out = dup_string(
            taton::elasticity_report_json(market->pm.market, samples, seed));
    });
}

void taton_gen_params_init(taton_gen_params* params) {
    if (!params) return;
    taton::GenConfig defaults;
    params->buyers = defaults.buyers;
    params->goods = defaults.goods;
    params->valuation_lo = defaults.valuation_range.first;
    params->valuation_hi = defaults.valuation_range.second;
    params->budget_lo = defaults.budget_range.first;
    params->budget_hi = defaults.budget_range.second;
    params->price_lo = defaults.price_range.first;
    params->price_hi = defaults.price_range.second;
    params->palette = nullptr;  /* keep the library default */
    params->rho_intervals = nullptr;
    params->seed = defaults.seed;
    params->normalize_budgets = defaults.normalize_budgets ? 1 : 0;
}

taton_status taton_generate_market_json(const taton_gen_params* gen,
                                        long index, char** json_out) {
    if (taton_status st = require(gen && json_out, "null argument")) return st;
    return guarded([&] {
        taton::GeneratedMarket g =
            taton::generate_market(gen_config_from(*gen), index);
        *json_out = dup_string(taton::serialize_market(g.market, g.p0));
    });
}

void taton_bench_params_init(taton_bench_params* params) {
    if (!params) return;
    params->count = 200;
    taton_sim_params_init(&params->sim);
    params->sim.record_every = 10;
    taton::BatchRunConfig defaults;
    params->oracle_iters = defaults.oracle_iters;
    params->oracle_restarts = defaults.oracle_restarts;
    params->oracle_tol = defaults.oracle_tol;
}

taton_status taton_bench(const taton_gen_params* gen,
                         const taton_bench_params* bench, char** json_out) {
    if (taton_status st = require(gen && bench && json_out, "null argument"))
        return st;
    return guarded([&] {
        taton::BatchRunConfig batch;
        batch.run = run_config_from(bench->sim);
        batch.oracle_iters = bench->oracle_iters;
        batch.oracle_restarts = bench->oracle_restarts;
        batch.oracle_tol = bench->oracle_tol;
        taton::BatchResult results =
            taton::batch_run(gen_config_from(*gen), bench->count, batch);
        taton::RateTable table = taton::rate_table(results);
        *json_out = dup_string(taton::batch_to_json(results, table));
    });
}

}  // extern "C"
