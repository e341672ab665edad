// Command-line front end. Everything market-related goes through the public
// C API so this binary doubles as a consumer test of that surface.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "taton/taton.h"

namespace {

struct MarketDeleter {
    void operator()(taton_market* m) const { taton_market_free(m); }
};
using MarketHandle = std::unique_ptr<taton_market, MarketDeleter>;

struct StringDeleter {
    void operator()(char* s) const { taton_string_free(s); }
};
using ApiString = std::unique_ptr<char, StringDeleter>;

[[noreturn]] void die(const std::string& context) {
    std::cerr << "error: " << context;
    const char* detail = taton_last_error();
    if (detail && *detail) std::cerr << ": " << detail;
    std::cerr << "\n";
    std::exit(1);
}

MarketHandle load_market(const std::string& path) {
    taton_market* raw = nullptr;
    if (taton_market_parse_file(path.c_str(), &raw) != TATON_OK)
        die("cannot load " + path);
    MarketHandle market(raw);
    ApiString notes;
    char* raw_notes = nullptr;
    if (taton_market_notes(market.get(), &raw_notes) == TATON_OK) {
        notes.reset(raw_notes);
        if (notes && *notes) std::cerr << notes.get();
    }
    return market;
}

void print_prices(const char* label, const std::vector<double>& p) {
    std::printf("%s", label);
    for (double v : p) std::printf(" %.10g", v);
    std::printf("\n");
}

int cmd_solve(const std::string& path, const std::string& method, double tol) {
    MarketHandle market = load_market(path);
    int m = taton_market_goods(market.get());
    std::vector<double> prices(m);
    double phi = 0.0, residual = 0.0;
    int certified = 0;
    if (taton_solve(market.get(), method.c_str(), tol, prices.data(), &phi,
                    &residual, &certified) != TATON_OK)
        die("solve failed");

    double clearing = 0.0, optimality = 0.0, walras = 0.0;
    int valid = 0;
    if (taton_certify(market.get(), prices.data(), tol, &clearing, &optimality,
                      &walras, &valid) != TATON_OK)
        die("certify failed");

    print_prices("p*:", prices);
    std::printf("phi*: %.17g\n", phi);
    std::printf("residual: %.6g (method %s, tol %g)\n", residual,
                method.c_str(), tol);
    std::printf("certificate: clearing %.6g, optimality %.6g, walras %.6g\n",
                clearing, optimality, walras);
    std::printf("certified: %s\n", certified ? "yes" : "no");
    return certified ? 0 : 1;
}

int cmd_simulate(const std::string& path, const std::string& gamma,
                 const std::string& kernel, long iters, double tol,
                 const std::string& out_csv) {
    MarketHandle market = load_market(path);

    taton_sim_params params;
    taton_sim_params_init(&params);
    std::string mode = gamma;
    if (gamma.rfind("fixed=", 0) == 0) {
        mode = "fixed";
        try {
            params.gamma = std::stod(gamma.substr(6));
        } catch (...) {
            std::cerr << "error: bad fixed step size in \"" << gamma << "\"\n";
            return 1;
        }
    }
    params.gamma_mode = mode.c_str();
    params.kernel = kernel.c_str();
    params.max_iters = iters;
    params.tol = tol;

    int m = taton_market_goods(market.get());
    std::vector<double> final_prices(m);
    taton_sim_summary summary{};
    if (taton_simulate(market.get(), nullptr, &params,
                       out_csv.empty() ? nullptr : out_csv.c_str(),
                       final_prices.data(), &summary) != TATON_OK)
        die("simulate failed");

    std::printf("termination: %s after %ld iterations\n", summary.termination,
                summary.iterations);
    print_prices("final prices:", final_prices);
    std::printf("max excess demand: %.6g\n", summary.final_max_excess);
    std::printf("gamma: %.6g -> %.6g (%ld escalations)\n",
                summary.gamma_initial, summary.gamma_final,
                summary.escalations);
    if (!out_csv.empty()) std::printf("trajectory: %s\n", out_csv.c_str());
    return summary.converged ? 0 : 1;
}

int cmd_elasticity(const std::string& path, long samples, uint64_t seed) {
    MarketHandle market = load_market(path);
    char* raw = nullptr;
    if (taton_elasticity_report(market.get(), samples, seed, &raw) != TATON_OK)
        die("elasticity report failed");
    ApiString json_text(raw);

    auto doc = nlohmann::json::parse(json_text.get());
    std::printf("%-6s %-13s %-12s %-12s\n", "buyer", "kind", "bound",
                "sampled max");
    for (const auto& b : doc["buyers"]) {
        std::string bound = b["bound"].is_null()
                                ? "unbounded"
                                : std::to_string(b["bound"].get<double>());
        std::string sampled =
            b["sampled_max"].is_null()
                ? "-"
                : std::to_string(b["sampled_max"].get<double>());
        std::printf("%-6d %-13s %-12s %-12s\n", b["index"].get<int>(),
                    b["kind"].get<std::string>().c_str(), bound.c_str(),
                    sampled.c_str());
    }
    if (doc["market_epsilon"].is_null())
        std::printf("market epsilon: unbounded (linear buyer present)\n");
    else
        std::printf("market epsilon: %.6g\n",
                    doc["market_epsilon"].get<double>());
    return 0;
}

int cmd_gen(uint64_t seed, long count, int buyers, int goods,
            const std::string& palette, const std::string& out_dir) {
    taton_gen_params gen;
    taton_gen_params_init(&gen);
    gen.seed = seed;
    gen.buyers = buyers;
    gen.goods = goods;
    if (!palette.empty()) gen.palette = palette.c_str();

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        std::cerr << "error: cannot create " << out_dir << ": " << ec.message()
                  << "\n";
        return 1;
    }

    for (long i = 0; i < count; ++i) {
        char* raw = nullptr;
        if (taton_generate_market_json(&gen, i, &raw) != TATON_OK)
            die("generation failed at index " + std::to_string(i));
        ApiString text(raw);
        std::string name =
            out_dir + "/market_" + std::to_string(seed) + "_" +
            std::to_string(i) + ".json";
        std::ofstream out(name, std::ios::binary);
        if (!out) {
            std::cerr << "error: cannot write " << name << "\n";
            return 1;
        }
        out << text.get();
        std::printf("%s\n", name.c_str());
    }
    return 0;
}

int cmd_bench(const std::string& config_path, long count,
              const std::string& palette, uint64_t seed, int buyers, int goods,
              long iters, double tol, const std::string& out_path,
              const std::vector<bool>& flag_given) {
    taton_gen_params gen;
    taton_gen_params_init(&gen);
    taton_bench_params bench;
    taton_bench_params_init(&bench);
    std::string palette_storage = palette;
    std::string rho_storage;

    // A config file provides the base values; explicit flags override.
    if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) {
            std::cerr << "error: cannot open " << config_path << "\n";
            return 1;
        }
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const std::exception& e) {
            std::cerr << "error: bad bench config: " << e.what() << "\n";
            return 1;
        }
        for (const auto& item : doc.items()) {
            const auto& key = item.key();
            const auto& value = item.value();
            try {
                if (key == "buyers") gen.buyers = value.get<int>();
                else if (key == "goods") gen.goods = value.get<int>();
                else if (key == "seed") gen.seed = value.get<uint64_t>();
                else if (key == "palette") palette_storage = value.get<std::string>();
                else if (key == "rho_intervals") rho_storage = value.get<std::string>();
                else if (key == "count") bench.count = value.get<long>();
                else if (key == "max_iters") bench.sim.max_iters = value.get<long>();
                else if (key == "tol") bench.sim.tol = value.get<double>();
                else if (key == "record_every") bench.sim.record_every = value.get<long>();
                else if (key == "kernel") {
                    static std::string kernel_storage;
                    kernel_storage = value.get<std::string>();
                    bench.sim.kernel = kernel_storage.c_str();
                } else {
                    std::cerr << "error: unknown bench config field \"" << key
                              << "\"\n";
                    return 1;
                }
            } catch (const std::exception& e) {
                std::cerr << "error: bench config field \"" << key
                          << "\": " << e.what() << "\n";
                return 1;
            }
        }
    }

    enum { kCount, kPalette, kSeed, kBuyers, kGoods, kIters, kTol };
    if (flag_given[kCount]) bench.count = count;
    if (flag_given[kPalette]) palette_storage = palette;
    if (flag_given[kSeed]) gen.seed = seed;
    if (flag_given[kBuyers]) gen.buyers = buyers;
    if (flag_given[kGoods]) gen.goods = goods;
    if (flag_given[kIters]) bench.sim.max_iters = iters;
    if (flag_given[kTol]) bench.sim.tol = tol;
    if (!palette_storage.empty()) gen.palette = palette_storage.c_str();
    if (!rho_storage.empty()) gen.rho_intervals = rho_storage.c_str();

    char* raw = nullptr;
    if (taton_bench(&gen, &bench, &raw) != TATON_OK) die("bench failed");
    ApiString json_text(raw);

    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) {
            std::cerr << "error: cannot write " << out_path << "\n";
            return 1;
        }
        out << json_text.get();
    }

    auto doc = nlohmann::json::parse(json_text.get());
    std::printf("markets: %ld, converged: %ld", doc["count"].get<long>(),
                doc["converged_count"].get<long>());
    if (!doc["convergence_fraction"].is_null())
        std::printf(" (fraction %.4f)",
                    doc["convergence_fraction"].get<double>());
    std::printf("\n");
    const auto& rt = doc["rate_table"];
    if (rt["empty"].get<bool>()) {
        std::printf("rate table: %s\n",
                    rt["diagnostic"].get<std::string>().c_str());
    } else {
        std::printf(
            "fitted exponents (n=%ld): min %.3f, q25 %.3f, median %.3f, "
            "q75 %.3f, max %.3f\n",
            rt["count"].get<long>(), rt["min"].get<double>(),
            rt["q25"].get<double>(), rt["median"].get<double>(),
            rt["q75"].get<double>(), rt["max"].get<double>());
        std::printf("exponent <= -1: %ld, <= -2: %ld\n",
                    rt["at_most_minus_1"].get<long>(),
                    rt["at_most_minus_2"].get<long>());
    }
    if (!out_path.empty()) std::printf("results: %s\n", out_path.c_str());
    return 0;
}

int cmd_verify(const std::string& path, const std::vector<double>& prices,
               double tol) {
    MarketHandle market = load_market(path);
    int m = taton_market_goods(market.get());
    if (static_cast<int>(prices.size()) != m) {
        std::cerr << "error: expected " << m << " prices, got " << prices.size()
                  << "\n";
        return 1;
    }
    double clearing = 0.0, optimality = 0.0, walras = 0.0;
    int valid = 0;
    if (taton_certify(market.get(), prices.data(), tol, &clearing, &optimality,
                      &walras, &valid) != TATON_OK)
        die("certify failed");
    std::printf("clearing violation: %.6g\n", clearing);
    std::printf("optimality gap: %.6g\n", optimality);
    std::printf("walras residual: %.6g\n", walras);
    std::printf("valid at tol %g: %s\n", tol, valid ? "yes" : "no");
    return valid ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fisher-market equilibria: tatonnement, reference solvers "
                 "and batch experiments"};
    app.require_subcommand(1);
    std::string market_path, method = "dual", gamma = "adaptive";
    std::string kernel = "entropy", out_csv, out_dir = "generated";
    std::string palette, config_path, out_path;
    double tol = 1e-6;
    long iters = 50000, count = 10, samples = 1000;
    int buyers = 10, goods = 5;
    uint64_t seed = 2024;
    std::vector<double> prices;

    auto* solve = app.add_subcommand("solve", "compute equilibrium prices");
    solve->add_option("market", market_path, "market JSON file")->required();
    solve->add_option("--method", method, "dual or grid")
        ->check(CLI::IsMember({"dual", "grid"}));
    solve->add_option("--tol", tol, "certification tolerance");

    auto* simulate = app.add_subcommand("simulate", "run tatonnement");
    simulate->add_option("market", market_path, "market JSON file")->required();
    simulate->add_option("--gamma", gamma,
                         "theoretical, adaptive or fixed=<step>");
    simulate->add_option("--kernel", kernel, "entropy or euclidean")
        ->check(CLI::IsMember({"entropy", "euclidean"}));
    simulate->add_option("--iters", iters, "iteration cap");
    simulate->add_option("--tol", tol, "convergence tolerance on excess demand");
    simulate->add_option("--out", out_csv, "trajectory CSV path");

    auto* elasticity =
        app.add_subcommand("elasticity", "demand elasticity bounds");
    elasticity->add_option("market", market_path, "market JSON file")
        ->required();
    elasticity->add_option("--samples", samples, "random price draws");
    elasticity->add_option("--seed", seed, "sampling seed");

    auto* gen = app.add_subcommand("gen", "write random market files");
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--count", count, "number of markets");
    gen->add_option("--buyers", buyers, "buyers per market");
    gen->add_option("--goods", goods, "goods per market");
    gen->add_option("--palette", palette,
                    "comma-separated kinds, optional :weight");
    gen->add_option("--out", out_dir, "output directory");

    auto* bench = app.add_subcommand("bench", "batch convergence study");
    auto* f_config = bench->add_option("--config", config_path,
                                       "JSON config (flags override)");
    auto* f_count = bench->add_option("--count", count, "number of markets");
    auto* f_palette = bench->add_option("--palette", palette,
                                        "comma-separated kinds");
    auto* f_seed = bench->add_option("--seed", seed, "generator seed");
    auto* f_buyers = bench->add_option("--buyers", buyers, "buyers per market");
    auto* f_goods = bench->add_option("--goods", goods, "goods per market");
    auto* f_iters = bench->add_option("--iters", iters, "iteration cap");
    auto* f_tol = bench->add_option("--tol", tol, "convergence tolerance");
    bench->add_option("--out", out_path, "results JSON path");

    auto* verify = app.add_subcommand("verify", "certify given prices");
    verify->add_option("market", market_path, "market JSON file")->required();
    verify->add_option("prices", prices, "candidate equilibrium prices")
        ->required();
    verify->add_option("--tol", tol, "certificate tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        std::cerr << "run with --help for usage\n";
        return 2;
    }

    try {
        if (solve->parsed()) return cmd_solve(market_path, method, tol);
        if (simulate->parsed())
            return cmd_simulate(market_path, gamma, kernel, iters, tol, out_csv);
        if (elasticity->parsed())
            return cmd_elasticity(market_path, samples, seed);
        if (gen->parsed())
            return cmd_gen(seed, count, buyers, goods, palette, out_dir);
        if (bench->parsed()) {
            std::vector<bool> given{
                f_count->count() > 0,  f_palette->count() > 0,
                f_seed->count() > 0,   f_buyers->count() > 0,
                f_goods->count() > 0,  f_iters->count() > 0,
                f_tol->count() > 0};
            (void)f_config;
            return cmd_bench(config_path, count, palette, seed, buyers, goods,
                             iters, tol, out_path, given);
        }
        if (verify->parsed()) return cmd_verify(market_path, prices, tol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
