#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <taton/taton.h>

namespace {

const char* kSymmetricLeontief = R"({
    "version": "1",
    "goods": 2,
    "buyers": [
        {"budget": 0.5, "utility": {"type": "leontief", "values": [2, 1]}},
        {"budget": 0.5, "utility": {"type": "leontief", "values": [1, 2]}}
    ],
    "initial_prices": [0.6, 0.4]
})";

taton_market* parse_or_die(const char* text) {
    taton_market* market = nullptr;
    REQUIRE(taton_market_parse_json(text, &market) == TATON_OK);
    REQUIRE(market != nullptr);
    return market;
}

std::string take_string(char* s) {
    REQUIRE(s != nullptr);
    std::string out = s;
    taton_string_free(s);
    return out;
}

}  // namespace

TEST_CASE("version and error strings are always available") {
    REQUIRE(taton_version() != nullptr);
    CHECK(std::strlen(taton_version()) > 0);
    REQUIRE(taton_last_error() != nullptr);
    taton_string_free(nullptr);  // must be a no-op
    taton_market_free(nullptr);
}

TEST_CASE("parse exposes market shape, initial prices and notes") {
    taton_market* market = parse_or_die(kSymmetricLeontief);
    CHECK(taton_market_goods(market) == 2);
    CHECK(taton_market_buyers(market) == 2);
    REQUIRE(taton_market_has_initial_prices(market) == 1);
    double p0[2] = {0, 0};
    REQUIRE(taton_market_initial_prices(market, p0) == TATON_OK);
    CHECK(p0[0] == 0.6);
    CHECK(p0[1] == 0.4);

    char* notes = nullptr;
    REQUIRE(taton_market_notes(market, &notes) == TATON_OK);
    CHECK(take_string(notes).empty());

    char* json_text = nullptr;
    REQUIRE(taton_market_to_json(market, &json_text) == TATON_OK);
    std::string serialized = take_string(json_text);
    taton_market* again = parse_or_die(serialized.c_str());
    CHECK(taton_market_goods(again) == 2);
    CHECK(taton_market_buyers(again) == 2);
    CHECK(taton_market_has_initial_prices(again) == 1);
    taton_market_free(again);
    taton_market_free(market);

    // Canonicalization notes surface through the C API.
    taton_market* folded = parse_or_die(R"({
        "version": "1", "goods": 2,
        "buyers": [{"budget": 1, "utility": {"type": "ces", "values": [2, 3], "rho": 1}}]
    })");
    char* fold_notes = nullptr;
    REQUIRE(taton_market_notes(folded, &fold_notes) == TATON_OK);
    CHECK(take_string(fold_notes).find("linear") != std::string::npos);
    taton_market_free(folded);

    // Accessors tolerate a null market.
    CHECK(taton_market_goods(nullptr) == 0);
    CHECK(taton_market_buyers(nullptr) == 0);
    CHECK(taton_market_has_initial_prices(nullptr) == 0);
}

TEST_CASE("status codes distinguish failure classes") {
    taton_market* market = nullptr;
    CHECK(taton_market_parse_json("{oops", &market) == TATON_EPARSE);
    CHECK(std::string(taton_last_error()).find("syntax") != std::string::npos);

    CHECK(taton_market_parse_json(R"({
        "version": "1", "goods": 2, "wat": 1,
        "buyers": [{"budget": 1, "utility": {"type": "leontief", "values": [1, 1]}}]
    })", &market) == TATON_EPARSE);
    CHECK(std::string(taton_last_error()).find("$.wat") != std::string::npos);

    CHECK(taton_market_parse_json(nullptr, &market) == TATON_EINVAL);
    CHECK(std::string(taton_last_error()).find("null") != std::string::npos);

    CHECK(taton_market_parse_file("does/not/exist.json", &market) ==
          TATON_EPARSE);

    market = parse_or_die(kSymmetricLeontief);
    double bad[2] = {0.0, 0.5};
    double z[2];
    CHECK(taton_excess_demand(market, bad, z) == TATON_EDOMAIN);
    CHECK(std::strlen(taton_last_error()) > 0);

    double p0_short[2];
    taton_market* no_p0 = parse_or_die(R"({
        "version": "1", "goods": 1,
        "buyers": [{"budget": 1, "utility": {"type": "leontief", "values": [1]}}]
    })");
    CHECK(taton_market_initial_prices(no_p0, p0_short) == TATON_EINVAL);
    taton_market_free(no_p0);

    // A successful call clears the error slot.
    double good[2] = {0.5, 0.5};
    REQUIRE(taton_excess_demand(market, good, z) == TATON_OK);
    CHECK(std::strlen(taton_last_error()) == 0);
    taton_market_free(market);
}

TEST_CASE("excess demand and potential match the closed forms") {
    taton_market* market = parse_or_die(kSymmetricLeontief);
    double p[2] = {0.5, 0.5};
    double z[2] = {99, 99};
    REQUIRE(taton_excess_demand(market, p, z) == TATON_OK);
    CHECK(std::abs(z[0]) <= 1e-12);
    CHECK(std::abs(z[1]) <= 1e-12);

    double phi = 0;
    REQUIRE(taton_potential(market, p, &phi) == TATON_OK);
    CHECK(phi == doctest::Approx(1.0 - std::log(1.5)).epsilon(1e-12));

    CHECK(taton_potential(market, p, nullptr) == TATON_EINVAL);
    taton_market_free(market);
}

TEST_CASE("solve and certify work through the C surface") {
    taton_market* market = parse_or_die(kSymmetricLeontief);
    double prices[2], phi, residual;
    int certified = 0;

    REQUIRE(taton_solve(market, "grid", 1e-3, prices, &phi, &residual,
                        &certified) == TATON_OK);
    CHECK(certified == 1);
    CHECK(prices[0] == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(phi == doctest::Approx(1.0 - std::log(1.5)).epsilon(1e-6));

    REQUIRE(taton_solve(market, "dual", 1e-6, prices, &phi, &residual,
                        &certified) == TATON_OK);
    CHECK(certified == 1);
    CHECK(prices[0] == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(residual <= 1e-6);

    CHECK(taton_solve(market, "annealing", 1e-6, prices, &phi, &residual,
                      &certified) == TATON_EINVAL);

    double clearing, optimality, walras;
    int valid = 0;
    double star[2] = {0.5, 0.5};
    REQUIRE(taton_certify(market, star, 1e-6, &clearing, &optimality, &walras,
                          &valid) == TATON_OK);
    CHECK(valid == 1);
    CHECK(clearing <= 1e-12);

    double off[2] = {0.6, 0.4};
    REQUIRE(taton_certify(market, off, 1e-4, &clearing, &optimality, &walras,
                          &valid) == TATON_OK);
    CHECK(valid == 0);
    double d1 = 0.5 * 1.0 / 1.6 + 0.5 * 2.0 / 1.4;
    CHECK(clearing == doctest::Approx(d1 - 1.0).epsilon(1e-12));
    taton_market_free(market);
}

TEST_CASE("simulate runs to convergence and writes the trajectory") {
    taton_market* market = parse_or_die(kSymmetricLeontief);
    taton_sim_params params;
    taton_sim_params_init(&params);
    CHECK(params.max_iters == 50000);
    CHECK(params.tol == 1e-6);

    const char* csv_path = "capi_traj.csv";
    double final_prices[2] = {0, 0};
    taton_sim_summary summary;
    REQUIRE(taton_simulate(market, nullptr, &params, csv_path, final_prices,
                           &summary) == TATON_OK);
    CHECK(summary.converged == 1);
    CHECK(std::string(summary.termination) == "converged");
    CHECK(summary.iterations > 0);
    CHECK(summary.final_max_excess <= params.tol);
    CHECK(summary.gamma_initial > 0);
    CHECK(summary.gamma_final >= summary.gamma_initial);
    CHECK(summary.steps_checked == summary.iterations);
    CHECK(summary.price_change_violations == 0);
    CHECK(final_prices[0] == doctest::Approx(0.5).epsilon(2e-5));
    CHECK(final_prices[1] == doctest::Approx(0.5).epsilon(2e-5));

    std::ifstream csv(csv_path);
    REQUIRE(csv.good());
    std::string header;
    std::getline(csv, header);
    CHECK(header == "t,p_1,p_2,phi,max_excess,kl_step,gamma");
    csv.close();
    std::remove(csv_path);

    // Explicit p0 overrides the file's initial prices.
    double p0[2] = {0.5, 0.5};
    REQUIRE(taton_simulate(market, p0, &params, nullptr, nullptr, &summary) ==
            TATON_OK);
    CHECK(summary.converged == 1);
    CHECK(summary.iterations == 0);  // started at the equilibrium

    // A vanishing fixed step cannot move the prices; the run hits the cap.
    params.gamma_mode = "fixed";
    params.gamma = 1e-300;
    params.max_iters = 50;
    REQUIRE(taton_simulate(market, nullptr, &params, nullptr, nullptr,
                           &summary) == TATON_OK);
    CHECK(summary.converged == 0);

    taton_sim_params bad;
    taton_sim_params_init(&bad);
    bad.kernel = "poisson";
    CHECK(taton_simulate(market, nullptr, &bad, nullptr, nullptr, &summary) ==
          TATON_EINVAL);
    taton_sim_params_init(&bad);
    bad.gamma_mode = "sideways";
    CHECK(taton_simulate(market, nullptr, &bad, nullptr, nullptr, &summary) ==
          TATON_EINVAL);
    CHECK(taton_simulate(market, nullptr, nullptr, nullptr, nullptr,
                         &summary) == TATON_EINVAL);
    taton_market_free(market);
}

TEST_CASE("elasticity report arrives as parseable JSON") {
    taton_market* market = parse_or_die(kSymmetricLeontief);
    char* text = nullptr;
    REQUIRE(taton_elasticity_report(market, 25, 7, &text) == TATON_OK);
    auto doc = nlohmann::json::parse(take_string(text));
    CHECK(doc["samples"] == 25);
    REQUIRE(doc["buyers"].size() == 2);
    CHECK(doc["buyers"][0]["bound"] == 0.0);
    CHECK(doc["market_epsilon"] == 0.0);
    CHECK(doc["market_epsilon_finite"] == true);
    taton_market_free(market);
}

TEST_CASE("generation is deterministic and validates its inputs") {
    taton_gen_params gen;
    taton_gen_params_init(&gen);
    CHECK(gen.buyers == 10);
    CHECK(gen.goods == 5);
    gen.buyers = 2;
    gen.goods = 3;
    gen.palette = "leontief";
    gen.seed = 77;

    char* a = nullptr;
    char* b = nullptr;
    REQUIRE(taton_generate_market_json(&gen, 3, &a) == TATON_OK);
    REQUIRE(taton_generate_market_json(&gen, 3, &b) == TATON_OK);
    std::string text_a = take_string(a);
    CHECK(text_a == take_string(b));

    taton_market* market = parse_or_die(text_a.c_str());
    CHECK(taton_market_goods(market) == 3);
    CHECK(taton_market_buyers(market) == 2);
    CHECK(taton_market_has_initial_prices(market) == 1);
    taton_market_free(market);

    char* out = nullptr;
    gen.palette = "warm_glow";
    CHECK(taton_generate_market_json(&gen, 0, &out) == TATON_EINVAL);
    gen.palette = "ces:x";
    CHECK(taton_generate_market_json(&gen, 0, &out) == TATON_EINVAL);
    gen.palette = "ces:2,leontief:1";
    gen.rho_intervals = "0.5";
    CHECK(taton_generate_market_json(&gen, 0, &out) == TATON_EINVAL);
    gen.rho_intervals = "0.3:0.6";
    REQUIRE(taton_generate_market_json(&gen, 0, &out) == TATON_OK);
    taton_string_free(out);
    CHECK(taton_generate_market_json(nullptr, 0, &out) == TATON_EINVAL);
}

TEST_CASE("bench returns the full results document") {
    taton_gen_params gen;
    taton_gen_params_init(&gen);
    gen.buyers = 3;
    gen.goods = 3;
    gen.palette = "leontief,cobb_douglas";
    gen.seed = 99;

    taton_bench_params bench;
    taton_bench_params_init(&bench);
    CHECK(bench.count == 200);
    bench.count = 4;

    char* text = nullptr;
    REQUIRE(taton_bench(&gen, &bench, &text) == TATON_OK);
    auto doc = nlohmann::json::parse(take_string(text));
    CHECK(doc["count"] == 4);
    REQUIRE(doc["records"].size() == 4);
    REQUIRE(doc["convergence_fraction"].is_number());
    CHECK(doc["convergence_fraction"].get<double>() == 1.0);
    CHECK(doc["rate_table"].contains("empty"));
    for (const auto& rec : doc["records"]) {
        CHECK(rec["converged"] == true);
        CHECK(rec["termination"] == "converged");
    }

    CHECK(taton_bench(&gen, nullptr, &text) == TATON_EINVAL);
}
