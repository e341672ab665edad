#pragma once

#include <optional>
#include <string>
#include <vector>

#include "market.hpp"

namespace taton {

enum class Kernel { WeightedEntropy, SquaredEuclidean };
enum class StepMode { Theoretical, Adaptive, Fixed };
enum class Termination { Converged, MaxIterations, Diverged };

const char* termination_name(Termination t);

// Multiplicative mirror-descent update p_j <- p_j * exp(z_j / gamma), the
// entropy-kernel step. Coordinatewise increasing in z; a fixed point exactly
// when z = 0.
std::vector<double> entropic_step(const std::vector<double>& p,
                                  const std::vector<double>& z, double gamma);

// Escalation rule for the adaptive policy: gamma must stay at or above
// 5 * max{1, max_j D_j}, which keeps every multiplicative price change within
// [e^(-1/5), e^(1/5)]. Returns the (possibly raised) gamma.
double step_size_adaptive_update(double gamma, const std::vector<double>& demand);

// The fixed step size with a worst-case convergence guarantee:
//   gamma = (1 + max_j sum_i [v_i(p0,b_i) * sup_q h_ij(q,1)
//                             + 2 * sup h_ij^2 / inf h_ik^2])
//           * (6 + 85 eps/12 + 25 eps^2/72),
// suprema over the price simplex (scaled to sum of budgets). Leontief buyers
// have price-free Hicksian demand, so their factors are closed-form; other
// kinds are maximized numerically with a multi-start local search clipped to
// p >= 1e-6 of the simplex scale. When the search detects that a supremum
// keeps growing at the clip boundary (the infimum of positive demand falls to
// zero there for substitutes and Cobb-Douglas, and the supremum itself
// diverges for complements) the result is marked infeasible instead of
// returning a clip-dependent number.
struct StepSizeResult {
    bool feasible = false;
    double gamma = 0.0;
    double epsilon = 0.0;
    std::string diagnostic;
    // Per (buyer, good), row-major; populated when feasible. hicksian_sup is
    // sup_q h_ij(q,1), ratio_term is 2 * sup h_ij^2 / inf h_ik^2. Consumed by
    // the bounded-indirect-utility diagnostics.
    std::vector<double> hicksian_sup;
    std::vector<double> ratio_term;
};

StepSizeResult step_size_theoretical(const Market& market,
                                     const std::vector<double>& p0);

// The elasticity-dependent factor of the theoretical step size.
inline double step_size_epsilon_factor(double epsilon) {
    return 6.0 + 85.0 * epsilon / 12.0 + 25.0 * epsilon * epsilon / 72.0;
}

struct RunConfig {
    Kernel kernel = Kernel::WeightedEntropy;
    StepMode mode = StepMode::Adaptive;
    double gamma0 = 5.0;  // initial gamma for Adaptive, the value for Fixed
    long max_iters = 50000;
    double tol = 1e-6;
    long record_every = 1;
    bool check_bregman = false;  // per-step descent-certificate accounting
    double p_floor = 1e-9;       // projection floor for SquaredEuclidean
    double bregman_slack = 1e-9;
};

struct GammaEvent {
    long t = 0;
    double from = 0.0, to = 0.0;
    double trigger_demand = 0.0;
};

struct Trajectory {
    int goods = 0;
    // Parallel arrays, one entry per recorded iterate (always includes t = 0
    // and the terminal iterate). kl_step[r] is the KL divergence of the step
    // that arrived at ts[r] (0 at t = 0); gamma[r] is the step size in force
    // when leaving ts[r].
    std::vector<long> ts;
    std::vector<double> prices;  // ts.size() x goods, row-major
    std::vector<double> phi;
    std::vector<double> max_excess;
    std::vector<double> kl_step;
    std::vector<double> gamma;

    Termination termination = Termination::MaxIterations;
    long iterations = 0;  // executed steps
    std::vector<double> final_prices;
    double final_max_excess = 0.0;
    double gamma_initial = 0.0;
    double gamma_final = 0.0;
    std::vector<GammaEvent> escalations;  // first kMaxLoggedEscalations only
    long escalation_count = 0;

    // Per-step self-checks (entropy kernel): multiplicative price-change
    // bounds always, Bregman smoothness when check_bregman was set.
    long steps_checked = 0;
    long price_change_violations = 0;
    long bregman_violations = 0;
    bool bregman_checked = false;
    double worst_bregman_violation = 0.0;
    std::string diagnostic;  // set when termination = Diverged

    std::vector<double> price_row(size_t r) const;
    double min_phi() const;
};

inline constexpr long kMaxLoggedEscalations = 1000;

// Runs tatonnement from p0. Stops when every good has |z_j| <= tol (goods
// priced below 1e-12 only need demand <= 1 + tol), at max_iters, or when a
// price or demand goes non-finite. Theoretical mode computes its gamma up
// front and throws std::domain_error when that is infeasible.
Trajectory run(const Market& market, const std::vector<double>& p0,
               const RunConfig& config);

struct ConvergenceReport {
    std::vector<double> gaps;  // phi(p^t) - phi*, aligned with traj.ts
    std::optional<double> fitted_exponent;
    int fit_points = 0;
    bool gap_collapsed = false;  // too few positive gaps to fit
    bool bound_checked = false;
    bool bound_holds = false;
    double worst_bound_margin = 0.0;  // max over t of gap - bound
    double kl0 = 0.0;                 // KL(p*, p0), when p* given
    double gamma = 0.0;               // max recorded gamma, used in the bound
    bool phi_star_from_oracle = false;
};

// Measures the trajectory against a reference optimum. With p_star given the
// theorem-style bound gap_t <= gamma * KL(p*, p0) / t is checked at every
// recorded t >= 1 (1e-9 absolute slack). The rate exponent is the
// least-squares slope of log gap vs log t over the tail half of the points
// whose gap is numerically positive. Throws std::runtime_error when phi_star
// exceeds the recorded minimum (inconsistent oracle).
ConvergenceReport convergence_report(const Trajectory& traj, double phi_star,
                                     const std::vector<double>* p_star = nullptr,
                                     bool phi_star_from_oracle = false);

// Slope of log(gap) against log(t) over the tail half of the positive-gap
// points; nullopt when fewer than two usable points remain.
std::optional<double> fit_rate_exponent(const std::vector<long>& ts,
                                        const std::vector<double>& gaps,
                                        int* points_used = nullptr);

}  // namespace taton
