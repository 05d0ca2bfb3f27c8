#include "dris/certify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dris/rng.hpp"

namespace dris {

void TheoremParams::validate() const {
    // Ranges are closed where the formulas remain well defined, so the
    // documented degenerate cases (tau=0, gamma=1, tau_bdry=0) evaluate.
    if (N < 1) throw std::invalid_argument("params: N must be >= 1");
    if (K < 1) throw std::invalid_argument("params: K must be >= 1");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("params: delta must be in (0,1)");
    if (!(tau >= 0.0 && tau < 1.0))
        throw std::invalid_argument("params: tau must be in [0,1)");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw std::invalid_argument("params: gamma must be in [0,1]");
    if (!(tau_bdry >= 0.0))
        throw std::invalid_argument("params: tau_bdry must be >= 0");
    if (!(alpha_trim >= 0.0 && alpha_trim < 1.0))
        throw std::invalid_argument("params: alpha_trim must be in [0,1)");
    if (!(eps >= 0.0 && eps < 0.5))
        throw std::invalid_argument("params: eps must be in [0, 0.5)");
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw std::invalid_argument("params: alpha must be in (0,1]");
    if (!(v_tail >= 0.0))
        throw std::invalid_argument("params: v_tail must be >= 0");
}

double mcdiarmid_radius(std::size_t N, int K, double delta) {
    if (N < 1) throw std::invalid_argument("mcdiarmid_radius: N must be >= 1");
    if (K < 1) throw std::invalid_argument("mcdiarmid_radius: K must be >= 1");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("mcdiarmid_radius: delta must be in (0,1)");
    return std::sqrt(std::log(2.0 * static_cast<double>(N) / delta) /
                     (2.0 * static_cast<double>(K)));
}

double theta_star(const TheoremParams& p) {
    p.validate();
    const double structural = (1.0 - 1.0 / p.K) * (p.tau * p.tau / 4.0 + p.gamma);
    return structural + mcdiarmid_radius(p.N, p.K, p.delta);
}

double boundary_lower(const TheoremParams& p) {
    p.validate();
    return (1.0 - 1.0 / p.K) * p.tau_bdry * p.tau_bdry -
           mcdiarmid_radius(p.N, p.K, p.delta);
}

double delta_prime(const TheoremParams& p) {
    p.validate();
    return (1.0 - 1.0 / p.K) *
           (p.tau_bdry * p.tau_bdry - p.tau * p.tau / 4.0 - p.gamma);
}

double contamination_cap(const TheoremParams& p) {
    p.validate();
    const double denom = p.tau * p.tau / 4.0 + p.gamma;
    const double min_term =
        denom > 0.0 ? std::min(1.0, p.v_tail / denom) : 1.0;
    const double cap = (p.alpha_trim * p.eps / p.alpha) * min_term;
    return std::clamp(cap, 0.0, 1.0);
}

CertificateReport separation_and_contamination(const TheoremParams& p,
                                               bool bdry_at_least_alpha_n) {
    p.validate();
    CertificateReport r;
    r.params = p;
    r.mcdiarmid_radius = mcdiarmid_radius(p.N, p.K, p.delta);
    r.theta_star = theta_star(p);
    r.bdry_lower = boundary_lower(p);
    r.delta_prime = delta_prime(p);
    r.contamination_cap = contamination_cap(p);
    r.bdry_at_least_alpha_n = bdry_at_least_alpha_n;
    r.separated = r.delta_prime > 2.0 * r.mcdiarmid_radius && bdry_at_least_alpha_n;
    if (!bdry_at_least_alpha_n)
        r.notes = "boundary-size condition |D_bdry| >= alpha*N not asserted";
    else if (!r.separated)
        r.notes = "expectation gap does not clear twice the concentration radius";
    else
        r.notes = "separated: top-alpha subset certified free of bulk-corrupted examples";
    return r;
}

std::string report_to_json(const CertificateReport& r) {
    nlohmann::json j;
    j["params"] = {{"N", r.params.N},
                   {"K", r.params.K},
                   {"delta", r.params.delta},
                   {"tau", r.params.tau},
                   {"gamma", r.params.gamma},
                   {"tau_bdry", r.params.tau_bdry},
                   {"alpha_trim", r.params.alpha_trim},
                   {"eps", r.params.eps},
                   {"alpha", r.params.alpha},
                   {"v_tail", r.params.v_tail}};
    j["mcdiarmid_radius"] = r.mcdiarmid_radius;
    j["theta_star"] = r.theta_star;
    j["bdry_lower"] = r.bdry_lower;
    j["delta_prime"] = r.delta_prime;
    j["contamination_cap"] = r.contamination_cap;
    j["bdry_at_least_alpha_n"] = r.bdry_at_least_alpha_n;
    j["separated"] = r.separated;
    j["notes"] = r.notes;
    return j.dump(2);
}

MassBounds magnitude_mass_bounds(const ScoreVector& scores,
                                 const std::vector<std::uint8_t>& corrupt_mask) {
    const std::size_t n = scores.values.size();
    if (n == 0) throw std::invalid_argument("magnitude_mass_bounds: empty scores");
    if (corrupt_mask.size() != n)
        throw std::invalid_argument("magnitude_mass_bounds: mask length mismatch");
    double sum_all = 0.0, sum_corr = 0.0;
    double min_corr = std::numeric_limits<double>::infinity();
    double max_full = 0.0;
    double sum_clean = 0.0;
    std::size_t n_corr = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = scores.values[i];
        if (s < 0.0)
            throw std::invalid_argument("magnitude_mass_bounds: negative score");
        sum_all += s;
        max_full = std::max(max_full, s);
        if (corrupt_mask[i]) {
            ++n_corr;
            sum_corr += s;
            min_corr = std::min(min_corr, s);
        } else {
            sum_clean += s;
        }
    }
    if (n_corr == 0 || n_corr == n)
        throw std::invalid_argument(
            "magnitude_mass_bounds: need nonempty corrupt and clean sets");
    if (sum_all <= 0.0)
        throw std::invalid_argument("magnitude_mass_bounds: all scores zero");
    const double eps = static_cast<double>(n_corr) / static_cast<double>(n);
    const double mean_clean = sum_clean / static_cast<double>(n - n_corr);
    MassBounds b;
    b.corrupted_mass = sum_corr / sum_all;
    b.mass_lower = max_full > 0.0 ? eps * min_corr / max_full : 0.0;
    b.ratio = sum_clean > 0.0 ? sum_corr / sum_clean
                              : std::numeric_limits<double>::infinity();
    b.ratio_lower = mean_clean > 0.0
                        ? (eps / (1.0 - eps)) * min_corr / mean_clean
                        : (min_corr > 0.0
                               ? std::numeric_limits<double>::infinity()
                               : 0.0);
    return b;
}

AurocBound aum_auroc_bound(double delta0, double sigma, double nu_t) {
    if (delta0 < 0.0 || sigma < 0.0 || nu_t < 0.0)
        throw std::invalid_argument("aum_auroc_bound: arguments must be >= 0");
    AurocBound b;
    const double denom = 4.0 * sigma * sigma + 2.0 * nu_t * nu_t;
    const double denom_marginal = 4.0 * sigma * sigma + 8.0 * nu_t * nu_t;
    if (denom == 0.0) {
        if (delta0 == 0.0)
            throw std::invalid_argument(
                "aum_auroc_bound: all parameters zero");
        b.bound = 1.0;
        b.marginal_bound = 1.0;
        return b;
    }
    b.bound = 1.0 - std::exp(-delta0 * delta0 / denom);
    b.marginal_bound =
        denom_marginal > 0.0 ? 1.0 - std::exp(-delta0 * delta0 / denom_marginal)
                             : 1.0;
    return b;
}

namespace {

std::size_t real_floor(double x) {
    return static_cast<std::size_t>(std::floor(x + 1e-9));
}

struct StripeCounts {
    std::size_t bulk = 0, tail = 0, bdry = 0, easy = 0;
};

StripeCounts stripe_counts(const TheoremParams& p, const PlantedMix& mix) {
    StripeCounts c;
    const std::size_t n_corr = real_floor(p.eps * static_cast<double>(p.N));
    c.tail = real_floor(p.alpha_trim * static_cast<double>(n_corr));
    c.bulk = n_corr - c.tail;
    c.bdry = real_floor(mix.bdry_fraction * static_cast<double>(p.N));
    const std::size_t used = n_corr + c.bdry;
    if (used > p.N)
        throw std::invalid_argument(
            "planted model: eps and bdry_fraction exceed the dataset");
    c.easy = p.N - used;
    return c;
}

double sample_variance_biased(const double* x, std::size_t k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < k; ++i) mean += x[i];
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double d = x[i] - mean;
        var += d * d;
    }
    return var / static_cast<double>(k);
}

}  // namespace

std::vector<planted_class> planted_assignment(const TheoremParams& p,
                                              const PlantedMix& mix) {
    p.validate();
    if (!(mix.bdry_fraction >= 0.0 && mix.bdry_fraction <= 1.0))
        throw std::invalid_argument("planted model: bdry_fraction must be in [0,1]");
    const StripeCounts c = stripe_counts(p, mix);
    std::vector<planted_class> cls;
    cls.reserve(p.N);
    cls.insert(cls.end(), c.bulk, planted_class::bulk_corrupt);
    cls.insert(cls.end(), c.tail, planted_class::tail_corrupt);
    cls.insert(cls.end(), c.bdry, planted_class::boundary_clean);
    cls.insert(cls.end(), c.easy, planted_class::easy_clean);
    return cls;
}

void planted_trial_ranks(const std::vector<planted_class>& cls,
                         const TheoremParams& p, std::mt19937_64& gen,
                         std::vector<double>& out) {
    const std::size_t n = cls.size();
    const std::size_t k = static_cast<std::size_t>(p.K);
    out.resize(n * k);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> hi(1.0 - p.tau, 1.0);
    std::uniform_real_distribution<double> lo(0.0, 1.0 - p.tau);
    const double bdry_step = p.tau_bdry;
    const double tail_step = std::sqrt(p.v_tail);
    for (std::size_t i = 0; i < n; ++i) {
        switch (cls[i]) {
            case planted_class::bulk_corrupt:
                for (std::size_t c = 0; c < k; ++c)
                    out[c * n + i] = unit(gen) < p.gamma ? lo(gen) : hi(gen);
                break;
            case planted_class::tail_corrupt:
                for (std::size_t c = 0; c < k; ++c)
                    out[c * n + i] =
                        0.5 + (unit(gen) < 0.5 ? tail_step : -tail_step);
                break;
            case planted_class::boundary_clean:
                for (std::size_t c = 0; c < k; ++c)
                    out[c * n + i] =
                        0.5 + (unit(gen) < 0.5 ? bdry_step : -bdry_step);
                break;
            case planted_class::easy_clean: {
                const double v = unit(gen);
                for (std::size_t c = 0; c < k; ++c) out[c * n + i] = v;
                break;
            }
        }
    }
}

McSummary planted_rank_montecarlo(const TheoremParams& p, const PlantedMix& mix,
                                  long trials, std::uint64_t seed) {
    p.validate();
    if (p.K < 2)
        throw std::invalid_argument("planted model: K must be >= 2");
    if (trials < 1)
        throw std::invalid_argument("planted model: trials must be >= 1");
    if (p.tau_bdry * p.tau_bdry > 0.25)
        throw std::invalid_argument(
            "planted model: tau_bdry^2 > 0.25 is infeasible for ranks in [0,1]");
    if (p.v_tail > 0.25)
        throw std::invalid_argument(
            "planted model: v_tail > 0.25 is infeasible for ranks in [0,1]");
    const auto cls = planted_assignment(p, mix);
    const StripeCounts c = stripe_counts(p, mix);
    const std::size_t n = p.N;
    const std::size_t m = real_floor(p.alpha * static_cast<double>(n));
    if (m == 0)
        throw std::invalid_argument("planted model: alpha*N selects nothing");

    McSummary s;
    s.trials = trials;
    s.report = separation_and_contamination(p, c.bdry >= m);

    long bulk_viol = 0, bdry_viol = 0, joint_viol = 0;
    double sum_bulk = 0.0, sum_bdry = 0.0, sum_tail = 0.0;
    std::vector<double> ranks, sigma2(n);
    std::vector<std::size_t> order(n);
    for (long t = 0; t < trials; ++t) {
        std::mt19937_64 gen(derive_seed(seed, "planted-trial-" + std::to_string(t)));
        planted_trial_ranks(cls, p, gen, ranks);
        for (std::size_t i = 0; i < n; ++i) {
            // Gather row i across the K columns.
            double row[64];
            std::vector<double> big;
            const std::size_t k = static_cast<std::size_t>(p.K);
            const double* src;
            if (k <= 64) {
                for (std::size_t cc = 0; cc < k; ++cc) row[cc] = ranks[cc * n + i];
                src = row;
            } else {
                big.resize(k);
                for (std::size_t cc = 0; cc < k; ++cc) big[cc] = ranks[cc * n + i];
                src = big.data();
            }
            sigma2[i] = sample_variance_biased(src, k);
        }
        bool any_bulk_above = false, any_bdry_below = false;
        for (std::size_t i = 0; i < c.bulk; ++i) {
            sum_bulk += sigma2[i];
            if (sigma2[i] > s.report.theta_star) any_bulk_above = true;
        }
        for (std::size_t i = c.bulk; i < c.bulk + c.tail; ++i) sum_tail += sigma2[i];
        for (std::size_t i = c.bulk + c.tail; i < c.bulk + c.tail + c.bdry; ++i) {
            sum_bdry += sigma2[i];
            if (sigma2[i] < s.report.bdry_lower) any_bdry_below = true;
        }
        if (any_bulk_above) ++bulk_viol;
        if (any_bdry_below) ++bdry_viol;
        if (any_bulk_above || any_bdry_below) ++joint_viol;

        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return sigma2[a] > sigma2[b];
        });
        std::size_t bulk_in = 0, tail_in = 0;
        for (std::size_t pos = 0; pos < m; ++pos) {
            const std::size_t i = order[pos];
            if (i < c.bulk)
                ++bulk_in;
            else if (i < c.bulk + c.tail)
                ++tail_in;
        }
        if (bulk_in > 0) ++s.trials_with_bulk_in_subset;
        const double contamination =
            static_cast<double>(tail_in) / static_cast<double>(m);
        s.max_tail_contamination = std::max(s.max_tail_contamination, contamination);
    }
    const double tr = static_cast<double>(trials);
    s.violation_freq_bulk = static_cast<double>(bulk_viol) / tr;
    s.violation_freq_bdry = static_cast<double>(bdry_viol) / tr;
    s.violation_freq_joint = static_cast<double>(joint_viol) / tr;
    if (c.bulk > 0) s.mean_sigma2_bulk = sum_bulk / (tr * static_cast<double>(c.bulk));
    if (c.bdry > 0) s.mean_sigma2_bdry = sum_bdry / (tr * static_cast<double>(c.bdry));
    if (c.tail > 0) s.mean_sigma2_tail = sum_tail / (tr * static_cast<double>(c.tail));
    return s;
}

AssumptionEstimates estimate_assumption_params(
    const RankMatrix& rm, const std::vector<std::uint8_t>& corrupt_mask,
    const std::vector<std::uint8_t>& bdry_mask, double esc_mass,
    double tail_trim) {
    if (corrupt_mask.size() != rm.n || bdry_mask.size() != rm.n)
        throw std::invalid_argument(
            "estimate_assumption_params: mask length mismatch");
    if (!(esc_mass > 0.0 && esc_mass < 1.0))
        throw std::invalid_argument(
            "estimate_assumption_params: esc_mass must be in (0,1)");
    if (!(tail_trim >= 0.0 && tail_trim < 1.0))
        throw std::invalid_argument(
            "estimate_assumption_params: tail_trim must be in [0,1)");
    std::vector<double> pooled_corrupt;
    std::vector<double> sigma2(rm.n);
    std::vector<double> corr_sigma2, bdry_sigma2;
    double sum_clean = 0.0, sum_corr = 0.0;
    std::size_t n_clean = 0, n_corr = 0;
    const ScoreVector rv = rank_variance(rm);
    for (std::size_t i = 0; i < rm.n; ++i) {
        sigma2[i] = rv.values[i];
        if (corrupt_mask[i]) {
            ++n_corr;
            sum_corr += sigma2[i];
            corr_sigma2.push_back(sigma2[i]);
            for (std::size_t c = 0; c < rm.k; ++c)
                pooled_corrupt.push_back(rm.at(i, c));
        } else {
            ++n_clean;
            sum_clean += sigma2[i];
        }
        if (bdry_mask[i]) bdry_sigma2.push_back(sigma2[i]);
    }
    if (n_corr == 0 || n_clean == 0 || bdry_sigma2.empty())
        throw std::invalid_argument(
            "estimate_assumption_params: empty mask selection");

    AssumptionEstimates e;
    std::sort(pooled_corrupt.begin(), pooled_corrupt.end());
    const std::size_t qi =
        std::min(pooled_corrupt.size() - 1,
                 static_cast<std::size_t>(std::floor(
                     esc_mass * static_cast<double>(pooled_corrupt.size()))));
    const double quantile = pooled_corrupt[qi];
    e.tau_hat = std::max(0.0, 1.0 - quantile);
    const auto below = std::lower_bound(pooled_corrupt.begin(), pooled_corrupt.end(),
                                        1.0 - e.tau_hat);
    e.gamma_hat = static_cast<double>(below - pooled_corrupt.begin()) /
                  static_cast<double>(pooled_corrupt.size());

    std::sort(bdry_sigma2.begin(), bdry_sigma2.end());
    const std::size_t nb = bdry_sigma2.size();
    e.tau_bdry_sq_hat = nb % 2 == 1
                            ? bdry_sigma2[nb / 2]
                            : 0.5 * (bdry_sigma2[nb / 2 - 1] + bdry_sigma2[nb / 2]);

    std::sort(corr_sigma2.begin(), corr_sigma2.end());
    const std::size_t nt = static_cast<std::size_t>(
        std::floor(tail_trim * static_cast<double>(n_corr) + 1e-9));
    if (nt > 0) {
        double s = 0.0;
        for (std::size_t i = corr_sigma2.size() - nt; i < corr_sigma2.size(); ++i)
            s += corr_sigma2[i];
        e.v_tail_hat = s / static_cast<double>(nt);
    }
    e.gap = sum_clean / static_cast<double>(n_clean) -
            sum_corr / static_cast<double>(n_corr);
    return e;
}

}  // namespace dris
