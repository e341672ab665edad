/* C interface to the taton market library.
 *
 * Conventions:
 *   - Every function returns a taton_status; out-parameters are written only
 *     on TATON_OK. taton_last_error() describes the most recent failure on
 *     the calling thread.
 *   - An opaque taton_market owns a parsed market plus the optional initial
 *     price vector from its file.
 *   - Strings returned through char** are heap-allocated; release them with
 *     taton_string_free.
 */
#ifndef TATON_H
#define TATON_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum taton_status {
    TATON_OK = 0,
    TATON_EINVAL = 1,   /* invalid argument or configuration */
    TATON_EPARSE = 2,   /* market file: syntax, schema or validation */
    TATON_EDOMAIN = 3,  /* numerically undefined request */
    TATON_ERUNTIME = 4, /* I/O or internal failure */
    TATON_ENOMEM = 5
} taton_status;

typedef struct taton_market taton_market;

const char* taton_version(void);

/* Message for the last failing call on this thread; empty string if none. */
const char* taton_last_error(void);

void taton_string_free(char* s);

/* ----- markets ----------------------------------------------------------- */

taton_status taton_market_parse_json(const char* text, taton_market** out);
taton_status taton_market_parse_file(const char* path, taton_market** out);
void taton_market_free(taton_market* market);

int taton_market_goods(const taton_market* market);
int taton_market_buyers(const taton_market* market);

/* 1 if the source file carried initial prices, else 0. */
int taton_market_has_initial_prices(const taton_market* market);
/* Writes goods() entries. Fails with TATON_EINVAL when none were given. */
taton_status taton_market_initial_prices(const taton_market* market,
                                         double* out);

/* Canonicalization notes accumulated while parsing, one per line ('\n'
 * separated); empty string when nothing was rewritten. */
taton_status taton_market_notes(const taton_market* market, char** out);

taton_status taton_market_to_json(const taton_market* market, char** out);

/* ----- market quantities -------------------------------------------------- */

/* z = aggregate demand - supply at prices p (length goods()). */
taton_status taton_excess_demand(const taton_market* market, const double* p,
                                 double* z_out);
taton_status taton_potential(const taton_market* market, const double* p,
                             double* phi_out);

/* ----- equilibrium -------------------------------------------------------- */

/* method: "dual" or "grid". prices_out has goods() entries. */
taton_status taton_solve(const taton_market* market, const char* method,
                         double tol, double* prices_out, double* phi_out,
                         double* residual_out, int* certified_out);

taton_status taton_certify(const taton_market* market, const double* prices,
                           double tol, double* clearing_out,
                           double* optimality_out, double* walras_out,
                           int* valid_out);

/* ----- tatonnement -------------------------------------------------------- */

typedef struct taton_sim_params {
    const char* gamma_mode; /* "theoretical", "adaptive" or "fixed" */
    double gamma;           /* step size for "fixed"; ignored otherwise */
    const char* kernel;     /* "entropy" or "euclidean" */
    long max_iters;
    double tol;
    long record_every;
    int check_bregman; /* track the per-step smoothness inequality */
} taton_sim_params;

/* Sensible defaults: adaptive entropy, 50000 iterations, tol 1e-6. */
void taton_sim_params_init(taton_sim_params* params);

typedef struct taton_sim_summary {
    int converged;        /* 1 iff the excess-demand test was met */
    char termination[24]; /* "converged", "max-iterations", "diverged" */
    long iterations;
    double final_max_excess;
    double gamma_initial;
    double gamma_final;
    long escalations;
    long steps_checked;
    long price_change_violations;
    long bregman_violations;
} taton_sim_summary;

/* p0 may be NULL: the file's initial prices are used when present, else the
 * uniform point on the budget-sum slice. csv_path may be NULL to skip the
 * trajectory file. final_prices_out (goods() entries) may be NULL. */
taton_status taton_simulate(const taton_market* market, const double* p0,
                            const taton_sim_params* params,
                            const char* csv_path, double* final_prices_out,
                            taton_sim_summary* summary_out);

/* ----- elasticity --------------------------------------------------------- */

/* JSON report: per-buyer analytic bounds, sampled max |E| over `samples`
 * random prices, market-level bound. */
taton_status taton_elasticity_report(const taton_market* market, long samples,
                                     uint64_t seed, char** json_out);

/* ----- generation and batch experiments ----------------------------------- */

typedef struct taton_gen_params {
    int buyers;
    int goods;
    double valuation_lo, valuation_hi;
    double budget_lo, budget_hi;
    double price_lo, price_hi;
    /* Comma-separated kinds with optional :weight, e.g.
     * "ces,cobb_douglas,leontief" or "ces:2,linear:1". */
    const char* palette;
    /* Intervals "lo:hi" separated by commas, e.g. "0.25:0.75,-101:-1";
     * NULL keeps the default. */
    const char* rho_intervals;
    uint64_t seed;
    int normalize_budgets;
} taton_gen_params;

void taton_gen_params_init(taton_gen_params* params);

/* Market file text for batch member `index` (deterministic in seed/index).
 * The embedded initial_prices field carries the sampled starting point. */
taton_status taton_generate_market_json(const taton_gen_params* gen,
                                        long index, char** json_out);

typedef struct taton_bench_params {
    long count;
    taton_sim_params sim;
    long oracle_iters;
    int oracle_restarts;
    double oracle_tol;
} taton_bench_params;

void taton_bench_params_init(taton_bench_params* params);

/* Runs the batch study and returns the results document (config echo,
 * per-market records, convergence fraction, fitted-rate table) as JSON. */
taton_status taton_bench(const taton_gen_params* gen,
                         const taton_bench_params* bench, char** json_out);

#ifdef __cplusplus
}
#endif

#endif /* TATON_H */
