#ifndef DRIS_CERTIFY_HPP
#define DRIS_CERTIFY_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dris/scores.hpp"

namespace dris {

// Inputs to the closed-form certificates. All rates are fractions of N.
struct TheoremParams {
    std::size_t N = 0;
    int K = 2;
    double delta = 0.05;      // confidence level, in (0,1)
    double tau = 0.1;         // bulk rank-concentration width, in (0,1)
    double gamma = 0.01;      // bulk escape probability, in (0,1)
    double tau_bdry = 0.3;    // boundary disagreement scale, > 0
    double alpha_trim = 0.1;  // corrupted-tail trim fraction, in [0,1)
    double eps = 0.1;         // contamination rate, in [0, 0.5)
    double alpha = 0.25;      // keep fraction, in (0,1]
    double v_tail = 0.0;      // tail mean rank-variance bound, >= 0

    void validate() const;  // throws std::invalid_argument
};

struct CertificateReport {
    TheoremParams params;
    double mcdiarmid_radius = 0.0;
    double theta_star = 0.0;
    double bdry_lower = 0.0;
    double delta_prime = 0.0;
    double contamination_cap = 0.0;
    bool bdry_at_least_alpha_n = false;  // caller-asserted precondition
    bool separated = false;
    std::string notes;
};

// sqrt(log(2N/delta) / (2K))
double mcdiarmid_radius(std::size_t N, int K, double delta);

// (1 - 1/K)(tau^2/4 + gamma) + radius
double theta_star(const TheoremParams& p);

// (1 - 1/K) tau_bdry^2 - radius
double boundary_lower(const TheoremParams& p);

// (1 - 1/K)(tau_bdry^2 - tau^2/4 - gamma)
double delta_prime(const TheoremParams& p);

// (alpha_trim * eps / alpha) * min(1, v_tail / (tau^2/4 + gamma)), clamped to
// [0,1]; the min term is defined as 1 when its denominator is zero.
double contamination_cap(const TheoremParams& p);

// Full report. `bdry_at_least_alpha_n` is the caller-asserted size condition;
// separated = (delta_prime > 2 * radius) AND that flag.
CertificateReport separation_and_contamination(const TheoremParams& p,
                                               bool bdry_at_least_alpha_n);

std::string report_to_json(const CertificateReport& r);

struct MassBounds {
    double corrupted_mass = 0.0;  // sum of corrupted scores / sum of all scores
    double mass_lower = 0.0;      // eps * s_min_corr / s_max_full
    double ratio = 0.0;           // corrupted mass / clean mass
    double ratio_lower = 0.0;     // eps/(1-eps) * s_min_corr / mean clean score
};

// Throws std::invalid_argument on all-zero scores or an empty class.
MassBounds magnitude_mass_bounds(const ScoreVector& scores,
                                 const std::vector<std::uint8_t>& corrupt_mask);

struct AurocBound {
    double bound = 0.0;           // 1 - exp(-d0^2 / (4 sigma^2 + 2 nu^2))
    double marginal_bound = 0.0;  // fallback with 8 nu^2 in place of 2 nu^2
};

AurocBound aum_auroc_bound(double delta0, double sigma, double nu_t);

// Population rank laws used by the Monte-Carlo verifier. Each example is one
// of four stripes; its K ranks per trial are drawn i.i.d. (easy examples draw
// one value per trial and repeat it, so their variance is exactly zero).
enum class planted_class { bulk_corrupt, tail_corrupt, boundary_clean, easy_clean };

struct PlantedMix {
    double bdry_fraction = 0.3;  // fraction of N that is boundary-clean
};

// Deterministic per-example class layout:
// [bulk | tail | boundary | easy], sizes from eps, alpha_trim, bdry_fraction.
std::vector<planted_class> planted_assignment(const TheoremParams& p,
                                              const PlantedMix& mix);

// Draw one trial's N x K rank matrix (column-major) for the assignment.
void planted_trial_ranks(const std::vector<planted_class>& cls,
                         const TheoremParams& p, std::mt19937_64& gen,
                         std::vector<double>& out);

struct McSummary {
    long trials = 0;
    double violation_freq_bulk = 0.0;   // any bulk sigma2 above theta_star
    double violation_freq_bdry = 0.0;   // any boundary sigma2 below bdry_lower
    double violation_freq_joint = 0.0;  // either, per trial
    long trials_with_bulk_in_subset = 0;
    double max_tail_contamination = 0.0;  // max over trials of tail frac in top-alpha
    double mean_sigma2_bulk = 0.0;
    double mean_sigma2_bdry = 0.0;
    double mean_sigma2_tail = 0.0;
    CertificateReport report;
};

// Samples planted rank matrices and measures how often the closed-form
// bounds fail. Throws std::invalid_argument on infeasible parameters
// (e.g. tau_bdry^2 > 0.25).
McSummary planted_rank_montecarlo(const TheoremParams& p, const PlantedMix& mix,
                                  long trials, std::uint64_t seed);

struct AssumptionEstimates {
    double tau_hat = 0.0;
    double gamma_hat = 0.0;
    double tau_bdry_sq_hat = 0.0;  // median sigma2 over the boundary mask
    double v_tail_hat = 0.0;       // mean sigma2 over the trimmed corrupted tail
    double gap = 0.0;              // mean sigma2 clean minus mean sigma2 corrupt
};

// Back out assumption parameters from an empirical rank matrix. tau_hat uses
// the esc_mass quantile of pooled corrupted ranks; the tail is the top
// tail_trim fraction of corrupted examples by sigma2.
AssumptionEstimates estimate_assumption_params(
    const RankMatrix& rm, const std::vector<std::uint8_t>& corrupt_mask,
    const std::vector<std::uint8_t>& bdry_mask, double esc_mass = 0.05,
    double tail_trim = 0.1);

}  // namespace dris

#endif
