#include "io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "demand.hpp"
#include "elasticity.hpp"
#include "rng.hpp"

namespace taton {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ParseError(path + ": " + what);
}

void reject_unknown(const json& node, const std::string& path,
                    std::initializer_list<const char*> allowed) {
    for (const auto& item : node.items()) {
        bool ok = false;
        for (const char* key : allowed)
            if (item.key() == key) {
                ok = true;
                break;
            }
        if (!ok) fail(path + "." + item.key(), "unknown field");
    }
}

double get_number(const json& node, const std::string& path) {
    if (!node.is_number()) fail(path, "expected a number");
    return node.get<double>();
}

long get_integer(const json& node, const std::string& path) {
    if (!node.is_number_integer()) fail(path, "expected an integer");
    return node.get<long>();
}

std::vector<double> get_number_array(const json& node, const std::string& path) {
    if (!node.is_array()) fail(path, "expected an array of numbers");
    std::vector<double> out;
    out.reserve(node.size());
    for (size_t i = 0; i < node.size(); ++i)
        out.push_back(get_number(node[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

UtilityKind kind_from_name(const std::string& name, const std::string& path) {
    if (name == "linear") return UtilityKind::Linear;
    if (name == "cobb_douglas") return UtilityKind::CobbDouglas;
    if (name == "leontief") return UtilityKind::Leontief;
    if (name == "ces") return UtilityKind::CES;
    if (name == "nested_ces") return UtilityKind::NestedCES;
    fail(path, "unknown utility type \"" + name + "\"");
}

// Nest nodes are written inline: {rho, weights, children}, a child being
// either {"good": j} or another node object. Parsing flattens them into the
// node pool, children before parents.
int parse_nest_node(const json& node, const std::string& path, NestTree& tree) {
    if (!node.is_object()) fail(path, "expected a nest node object");
    reject_unknown(node, path, {"rho", "weights", "children"});
    for (const char* key : {"rho", "weights", "children"})
        if (!node.contains(key))
            fail(path + "." + key, "missing required field");

    NestNode out;
    out.rho = get_number(node["rho"], path + ".rho");
    out.weights = get_number_array(node["weights"], path + ".weights");
    const json& children = node["children"];
    if (!children.is_array()) fail(path + ".children", "expected an array");
    for (size_t c = 0; c < children.size(); ++c) {
        std::string cpath = path + ".children[" + std::to_string(c) + "]";
        const json& child = children[c];
        if (!child.is_object()) fail(cpath, "expected an object");
        if (child.contains("good")) {
            reject_unknown(child, cpath, {"good"});
            out.children.push_back(
                {true, static_cast<int>(get_integer(child["good"], cpath + ".good"))});
        } else {
            out.children.push_back({false, parse_nest_node(child, cpath, tree)});
        }
    }
    tree.nodes.push_back(std::move(out));
    return static_cast<int>(tree.nodes.size()) - 1;
}

UtilitySpec parse_utility(const json& node, const std::string& path) {
    if (!node.is_object()) fail(path, "expected an object");
    reject_unknown(node, path, {"type", "values", "rho", "nest"});
    if (!node.contains("type")) fail(path + ".type", "missing required field");
    if (!node["type"].is_string()) fail(path + ".type", "expected a string");
    UtilityKind kind = kind_from_name(node["type"].get<std::string>(),
                                      path + ".type");

    auto forbid = [&](const char* key) {
        if (node.contains(key))
            fail(path + "." + key,
                 std::string("not allowed for type \"") + kind_name(kind) + "\"");
    };
    auto require = [&](const char* key) {
        if (!node.contains(key))
            fail(path + "." + key,
                 std::string("required for type \"") + kind_name(kind) + "\"");
    };

    UtilitySpec spec;
    spec.kind = kind;
    switch (kind) {
        case UtilityKind::Linear:
        case UtilityKind::CobbDouglas:
        case UtilityKind::Leontief:
            require("values");
            forbid("rho");
            forbid("nest");
            spec.values = get_number_array(node["values"], path + ".values");
            break;
        case UtilityKind::CES:
            require("values");
            require("rho");
            forbid("nest");
            spec.values = get_number_array(node["values"], path + ".values");
            spec.rho = get_number(node["rho"], path + ".rho");
            break;
        case UtilityKind::NestedCES: {
            require("nest");
            forbid("values");
            forbid("rho");
            NestTree tree;
            tree.root = parse_nest_node(node["nest"], path + ".nest", tree);
            spec.nest = std::move(tree);
            break;
        }
    }
    return spec;
}

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

json nest_node_to_json(const NestTree& tree, int index) {
    const NestNode& node = tree.nodes[index];
    json out;
    out["rho"] = node.rho;
    out["weights"] = node.weights;
    json children = json::array();
    for (const NestChild& child : node.children) {
        if (child.is_good)
            children.push_back(json{{"good", child.index}});
        else
            children.push_back(nest_node_to_json(tree, child.index));
    }
    out["children"] = std::move(children);
    return out;
}

json finite_or_null(double x) {
    if (std::isfinite(x)) return json(x);
    return json(nullptr);
}

}  // namespace

ParsedMarket parse_market(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("syntax error: ") + e.what());
    }

    if (!doc.is_object()) fail("$", "expected a JSON object");
    reject_unknown(doc, "$",
                   {"version", "goods", "buyers", "initial_prices",
                    "normalize_budgets"});
    for (const char* key : {"version", "goods", "buyers"})
        if (!doc.contains(key)) fail(std::string("$.") + key, "missing required field");

    if (!doc["version"].is_string() || doc["version"].get<std::string>() != "1")
        fail("$.version", "unsupported version (expected \"1\")");

    long goods = get_integer(doc["goods"], "$.goods");
    if (goods < 1) fail("$.goods", "must be >= 1");

    if (!doc["buyers"].is_array() || doc["buyers"].empty())
        fail("$.buyers", "expected a non-empty array");

    ParsedMarket out;
    std::vector<double> budgets;
    std::vector<UtilitySpec> specs;
    for (size_t i = 0; i < doc["buyers"].size(); ++i) {
        std::string path = "$.buyers[" + std::to_string(i) + "]";
        const json& buyer = doc["buyers"][i];
        if (!buyer.is_object()) fail(path, "expected an object");
        reject_unknown(buyer, path, {"budget", "utility"});
        for (const char* key : {"budget", "utility"})
            if (!buyer.contains(key)) fail(path + "." + key, "missing required field");
        budgets.push_back(get_number(buyer["budget"], path + ".budget"));
        UtilitySpec raw = parse_utility(buyer["utility"], path + ".utility");
        try {
            specs.push_back(canonicalize(std::move(raw), &out.notes));
        } catch (const std::invalid_argument& e) {
            fail(path + ".utility", e.what());
        }
    }

    bool normalize = true;
    if (doc.contains("normalize_budgets")) {
        if (!doc["normalize_budgets"].is_boolean())
            fail("$.normalize_budgets", "expected a boolean");
        normalize = doc["normalize_budgets"].get<bool>();
    }

    if (doc.contains("initial_prices")) {
        auto p0 = get_number_array(doc["initial_prices"], "$.initial_prices");
        if (p0.size() != static_cast<size_t>(goods))
            fail("$.initial_prices", "expected exactly " +
                                         std::to_string(goods) + " entries");
        for (size_t j = 0; j < p0.size(); ++j)
            if (!(p0[j] > 0.0) || !std::isfinite(p0[j]))
                fail("$.initial_prices[" + std::to_string(j) + "]",
                     "must be a positive finite number");
        out.initial_prices = std::move(p0);
    }

    try {
        out.market = Market::create(static_cast<int>(goods), std::move(budgets),
                                    std::move(specs), normalize);
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("validation: ") + e.what());
    }
    return out;
}

ParsedMarket parse_market_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_market(ss.str());
}

std::string serialize_market(
    const Market& market, const std::optional<std::vector<double>>& initial_prices) {
    json doc;
    doc["version"] = "1";
    doc["goods"] = market.goods;
    json buyers = json::array();
    for (int i = 0; i < market.num_buyers(); ++i) {
        const UtilitySpec& spec = market.buyers[i];
        json utility;
        utility["type"] = kind_name(spec.kind);
        switch (spec.kind) {
            case UtilityKind::CES:
                utility["rho"] = spec.rho;
                [[fallthrough]];
            case UtilityKind::Linear:
            case UtilityKind::CobbDouglas:
            case UtilityKind::Leontief:
                utility["values"] = spec.values;
                break;
            case UtilityKind::NestedCES:
                utility["nest"] = nest_node_to_json(spec.nest, spec.nest.root);
                break;
        }
        buyers.push_back(json{{"budget", market.budgets[i]},
                              {"utility", std::move(utility)}});
    }
    doc["buyers"] = std::move(buyers);
    // Budgets were already scaled at build time; re-normalizing the stored
    // values is a no-op, so the flag round-trips as written.
    doc["normalize_budgets"] = market.normalize_budgets;
    if (initial_prices) doc["initial_prices"] = *initial_prices;
    return doc.dump(2) + "\n";
}

const char* kernel_name(Kernel kernel) {
    return kernel == Kernel::WeightedEntropy ? "entropy" : "euclidean";
}

const char* step_mode_name(StepMode mode) {
    switch (mode) {
        case StepMode::Theoretical: return "theoretical";
        case StepMode::Adaptive: return "adaptive";
        case StepMode::Fixed: return "fixed";
    }
    return "?";
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "t";
    for (int j = 1; j <= traj.goods; ++j) os << ",p_" << j;
    os << ",phi,max_excess,kl_step,gamma\n";
    for (size_t r = 0; r < traj.ts.size(); ++r) {
        os << traj.ts[r];
        for (int j = 0; j < traj.goods; ++j)
            os << ',' << fmt17(traj.prices[r * traj.goods + j]);
        os << ',' << fmt17(traj.phi[r]) << ',' << fmt17(traj.max_excess[r])
           << ',' << fmt17(traj.kl_step[r]) << ',' << fmt17(traj.gamma[r])
           << '\n';
    }
}

void write_trajectory_csv_file(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_trajectory_csv(out, traj);
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + path);
}

TrajectoryTable read_trajectory_csv(std::istream& is) {
    TrajectoryTable table;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty trajectory file");
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) table.header.push_back(cell);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream rs(line);
        while (std::getline(rs, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        if (row.size() != table.header.size())
            throw std::runtime_error("ragged trajectory row");
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string batch_to_json(const BatchResult& results, const RateTable& table) {
    json doc;
    json gen;
    gen["buyers"] = results.gen.buyers;
    gen["goods"] = results.gen.goods;
    gen["valuation_range"] = {results.gen.valuation_range.first,
                              results.gen.valuation_range.second};
    gen["budget_range"] = {results.gen.budget_range.first,
                           results.gen.budget_range.second};
    gen["price_range"] = {results.gen.price_range.first,
                          results.gen.price_range.second};
    json intervals = json::array();
    for (const auto& iv : results.gen.rho_intervals)
        intervals.push_back({iv.first, iv.second});
    gen["rho_intervals"] = std::move(intervals);
    json palette = json::array();
    for (const auto& kw : results.gen.palette)
        palette.push_back(json{{"kind", kind_name(kw.kind)}, {"weight", kw.weight}});
    gen["palette"] = std::move(palette);
    gen["seed"] = results.gen.seed;
    gen["normalize_budgets"] = results.gen.normalize_budgets;
    doc["config"] = std::move(gen);

    const RunConfig& run = results.batch.run;
    doc["run"] = json{{"kernel", kernel_name(run.kernel)},
                      {"mode", step_mode_name(run.mode)},
                      {"gamma0", run.gamma0},
                      {"max_iters", run.max_iters},
                      {"tol", run.tol},
                      {"record_every", run.record_every},
                      {"check_bregman", run.check_bregman}};

    doc["count"] = results.count;
    doc["converged_count"] = results.converged_count;
    doc["convergence_fraction"] = results.convergence_fraction
                                      ? json(*results.convergence_fraction)
                                      : json(nullptr);

    json records = json::array();
    for (const MarketRecord& rec : results.records) {
        json r;
        r["index"] = rec.index;
        r["seed"] = rec.seed;
        r["epsilon"] = rec.epsilon_finite ? json(rec.epsilon) : json(nullptr);
        r["max_sigma"] = finite_or_null(rec.max_sigma);
        r["termination"] = termination_name(rec.termination);
        r["converged"] = rec.converged;
        r["iterations"] = rec.iterations;
        r["final_max_excess"] = finite_or_null(rec.final_max_excess);
        r["exponent"] = rec.exponent ? json(*rec.exponent) : json(nullptr);
        r["exponent_vs_oracle"] = rec.exponent_vs_oracle;
        r["oracle_certified"] = rec.oracle_certified;
        r["phi_star"] = finite_or_null(rec.phi_star);
        r["escalations"] = rec.escalations;
        r["gamma_final"] = rec.gamma_final;
        r["steps_checked"] = rec.steps_checked;
        r["price_change_violations"] = rec.price_change_violations;
        r["bregman_violations"] = rec.bregman_violations;
        r["bregman_checked"] = rec.bregman_checked;
        r["oscillating"] = rec.oscillating;
        r["tail_phi_range"] = finite_or_null(rec.tail_phi_range);
        if (!rec.diagnostic.empty()) r["diagnostic"] = rec.diagnostic;
        records.push_back(std::move(r));
    }
    doc["records"] = std::move(records);

    json rt;
    if (table.empty) {
        rt["empty"] = true;
        rt["diagnostic"] = table.diagnostic;
    } else {
        rt["empty"] = false;
        rt["count"] = table.count;
        rt["min"] = table.min;
        rt["q25"] = table.q25;
        rt["median"] = table.median;
        rt["q75"] = table.q75;
        rt["max"] = table.max;
        rt["at_most_minus_1"] = table.at_most_minus_1;
        rt["at_most_minus_2"] = table.at_most_minus_2;
    }
    doc["rate_table"] = std::move(rt);
    return doc.dump(2) + "\n";
}

std::string elasticity_report_json(const Market& market, long samples,
                                   uint64_t seed) {
    if (samples < 0) throw std::invalid_argument("samples must be >= 0");
    const int m = market.goods;
    Rng rng(seed);

    json buyers = json::array();
    std::vector<double> sampled_max(market.num_buyers(), 0.0);
    std::vector<char> sampled_any(market.num_buyers(), 0);

    for (long s = 0; s < samples; ++s) {
        std::vector<double> p = rng.dirichlet(m);
        // Keep draws away from the boundary; the analytic bounds are suprema
        // and FD estimates degrade where demand vanishes.
        for (double& pj : p) pj = std::max(pj, 1e-6);
        for (int i = 0; i < market.num_buyers(); ++i) {
            const UtilitySpec& spec = market.buyers[i];
            if (spec.kind == UtilityKind::Linear) continue;
            std::vector<double> h = hicksian_unit(spec, p);
            for (int j = 0; j < m; ++j) {
                if (!(h[j] > 0.0)) continue;
                for (int k = 0; k < m; ++k) {
                    double e = hicksian_elasticity_fd(spec, p, j, k);
                    sampled_max[i] = std::max(sampled_max[i], std::abs(e));
                    sampled_any[i] = 1;
                }
            }
        }
    }

    for (int i = 0; i < market.num_buyers(); ++i) {
        const UtilitySpec& spec = market.buyers[i];
        double bound = elasticity_bound(spec);
        json b;
        b["index"] = i;
        b["kind"] = kind_name(spec.kind);
        b["bound"] = finite_or_null(bound);
        b["bound_finite"] = std::isfinite(bound);
        b["sampled_max"] = sampled_any[i] ? json(sampled_max[i]) : json(nullptr);
        buyers.push_back(std::move(b));
    }

    ElasticityBound eps = market_elasticity(market);
    json doc;
    doc["samples"] = samples;
    doc["seed"] = seed;
    doc["buyers"] = std::move(buyers);
    doc["market_epsilon"] = eps.finite ? json(eps.epsilon) : json(nullptr);
    doc["market_epsilon_finite"] = eps.finite;
    return doc.dump(2) + "\n";
}

}  // namespace taton
