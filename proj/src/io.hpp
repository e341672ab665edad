#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "experiments.hpp"
#include "market.hpp"

namespace taton {

// Raised for anything wrong with a market file: JSON syntax, schema shape
// (with the JSON path of the offending field), or semantic validation.
class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ParsedMarket {
    Market market;
    std::optional<std::vector<double>> initial_prices;
    std::vector<std::string> notes;  // canonicalization rewrites
};

// Strict parse: unknown fields are rejected, version must be "1".
ParsedMarket parse_market(const std::string& text);
ParsedMarket parse_market_file(const std::string& path);

std::string serialize_market(
    const Market& market,
    const std::optional<std::vector<double>>& initial_prices = std::nullopt);

const char* kernel_name(Kernel kernel);
const char* step_mode_name(StepMode mode);

// CSV with header t,p_1..p_m,phi,max_excess,kl_step,gamma; 17 significant
// digits so values round-trip bit-exactly; LF line endings.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_trajectory_csv_file(const std::string& path, const Trajectory& traj);

struct TrajectoryTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};
TrajectoryTable read_trajectory_csv(std::istream& is);

std::string batch_to_json(const BatchResult& results, const RateTable& table);

// Per-buyer analytic elasticity bounds plus a sampled max |E| over `samples`
// Dirichlet price draws, as a JSON document.
std::string elasticity_report_json(const Market& market, long samples,
                                   uint64_t seed);

}  // namespace taton
