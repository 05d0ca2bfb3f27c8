// dris: subcommand front end for the disagreement-regularized importance
// sampling library. Exit codes: 0 success, 1 assertion/certificate failure,
// 2 usage error. Every randomized subcommand prints the master seed that
// determines its outputs.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"

#include "dris/certify.hpp"
#include "dris/dataset.hpp"
#include "dris/harness.hpp"
#include "dris/model.hpp"
#include "dris/rng.hpp"
#include "dris/sampler.hpp"
#include "dris/scores.hpp"

namespace {

// Maps to exit 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Maps to exit 1.
struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

dris::ExperimentConfig load_config(const std::string& path) {
    try {
        return dris::parse_config_file(path);
    } catch (const std::invalid_argument&) {
        throw;  // parse/validation problem, already exit-2 class
    } catch (const std::runtime_error& e) {
        throw UsageError(e.what());  // unreadable file
    }
}

dris::LabeledDataset load_data(const dris::ExperimentConfig& cfg,
                               const std::string& path) {
    try {
        return dris::load_dense(path, cfg.dataset.format, cfg.dataset.header);
    } catch (const std::runtime_error& e) {
        throw UsageError(e.what());
    }
}

std::string fmt(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out_path);
    if (!f) throw UsageError("cannot write " + out_path);
    f << text;
    std::cout << "wrote " << out_path << "\n";
}

bool online_method(dris::method_kind m) {
    return m == dris::method_kind::dris_online ||
           m == dris::method_kind::grad_norm_is ||
           m == dris::method_kind::loss_is ||
           m == dris::method_kind::uniform_mix;
}

dris::score_kind default_score_kind(dris::method_kind m) {
    using dris::method_kind;
    using dris::score_kind;
    switch (m) {
        case method_kind::dris_static:
        case method_kind::dris_online: return score_kind::rank_variance;
        case method_kind::el2n: return score_kind::el2n;
        case method_kind::consensus: return score_kind::consensus_mean_rank;
        case method_kind::grad_norm_is: return score_kind::grad_norm;
        case method_kind::loss_is: return score_kind::loss;
        case method_kind::hybrid: return score_kind::hybrid;
        case method_kind::uniform_mix: return score_kind::uniform_mix;
        case method_kind::forgetting:
        case method_kind::aum:
            throw UsageError(
                "forgetting/aum scores come from full training trajectories; "
                "run the method through `dris sweep`");
        default:
            throw UsageError("method '" + dris::to_string(m) +
                             "' does not use per-example scores");
    }
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
    std::string config, out = "data.csv";
    std::uint64_t seed = 0;
    bool has_seed = false;
};

void run_generate(const GenerateArgs& a) {
    dris::ExperimentConfig cfg = load_config(a.config);
    if (!cfg.dataset.synthetic)
        throw UsageError("generate requires dataset.synthetic = true");
    dris::SyntheticSpec sp = cfg.dataset.spec;
    if (a.has_seed) sp.seed = a.seed;
    dris::LabeledDataset ds = dris::generate_synthetic(sp);
    dris::save_csv(ds, a.out);
    std::cout << "master seed: " << sp.seed << "\n"
              << "wrote " << a.out << ": " << ds.n << " examples, dim "
              << ds.dim << ", " << ds.num_classes << " classes\n";
}

// ---------------------------------------------------------------- corrupt

struct CorruptArgs {
    std::string config, in, out, mask_out;
    std::uint64_t seed = 0;
    bool has_seed = false;
};

void run_corrupt(const CorruptArgs& a) {
    dris::ExperimentConfig cfg = load_config(a.config);
    const std::uint64_t master = a.has_seed ? a.seed : cfg.seeds.front();
    dris::LabeledDataset ds = load_data(cfg, a.in);
    dris::LabeledDataset noisy;
    if (cfg.noise == dris::noise_kind::uniform) {
        noisy = dris::inject_uniform_noise(ds, cfg.noise_rate,
                                           dris::derive_seed(master, "noise"));
    } else if (cfg.noise == dris::noise_kind::targeted) {
        dris::ModelSpec aspec = cfg.target_model;
        aspec.input_dim = ds.dim;
        aspec.num_classes = ds.num_classes;
        dris::TrainConfig ac = cfg.target_train;
        ac.seed = dris::derive_seed(master, "attacker");
        dris::TrainedModel attacker = dris::train(aspec, ac, ds);
        noisy = dris::inject_targeted_noise(ds, cfg.noise_rate, attacker,
                                            dris::derive_seed(master, "noise"));
    } else {
        throw UsageError("config has noise.kind = none; nothing to corrupt");
    }
    dris::save_csv(noisy, a.out);
    if (!a.mask_out.empty()) dris::save_mask(noisy, a.mask_out);
    std::cout << "master seed: " << master << "\n"
              << "flipped " << noisy.num_corrupt() << " of " << noisy.n
              << " labels; wrote " << a.out;
    if (!a.mask_out.empty()) std::cout << " and " << a.mask_out;
    std::cout << "\n";
}

// ----------------------------------------------------------- train-proxies

struct TrainProxiesArgs {
    std::string config, data, out_dir;
    std::uint64_t seed = 0;
    bool has_seed = false;
};

void run_train_proxies(const TrainProxiesArgs& a) {
    dris::ExperimentConfig cfg = load_config(a.config);
    const std::uint64_t master = a.has_seed ? a.seed : cfg.seeds.front();
    dris::LabeledDataset ds = load_data(cfg, a.data);
    dris::ProxyPhase pp = dris::run_proxy_phase(cfg, ds, master);
    std::filesystem::create_directories(a.out_dir);
    std::cout << "master seed: " << master << "\n";
    for (std::size_t k = 0; k < pp.snapshot_models.size(); ++k) {
        const std::string path =
            a.out_dir + "/proxy-" + std::to_string(k) + ".json";
        dris::save_model(pp.snapshot_models[k], path);
        double acc = 0.0;
        for (auto c : pp.snapshot_stats[k].correct) acc += c ? 1.0 : 0.0;
        acc /= static_cast<double>(ds.n);
        std::cout << "proxy " << k << ": snapshot epoch "
                  << cfg.proxy.resolved_snapshot() << ", train accuracy "
                  << fmt(acc, "%.4f") << ", saved " << path << "\n";
    }
    if (pp.has_rank_matrix) {
        const std::string path = a.out_dir + "/rank-matrix.csv";
        dris::save_rank_matrix(pp.rank_matrix, path);
        std::cout << "rank matrix: " << pp.rank_matrix.n << " x "
                  << pp.rank_matrix.k << ", saved " << path << "\n";
    }
}

// ------------------------------------------------------------------- score

struct ScoreArgs {
    std::string config, data, proxies, out, kind;
};

void run_score(const ScoreArgs& a) {
    dris::ExperimentConfig cfg = load_config(a.config);
    dris::LabeledDataset ds = load_data(cfg, a.data);
    dris::score_kind kind = a.kind.empty()
                                ? default_score_kind(cfg.method)
                                : dris::score_kind_from_string(a.kind);
    using dris::score_kind;
    if (kind == score_kind::forgetting || kind == score_kind::aum)
        throw UsageError(
            "forgetting/aum scores come from full training trajectories; "
            "run the method through `dris sweep`");

    const bool needs_rank = kind == score_kind::rank_variance ||
                            kind == score_kind::consensus_mean_rank ||
                            kind == score_kind::hybrid ||
                            kind == score_kind::uniform_mix;
    const bool needs_models = kind == score_kind::el2n ||
                              kind == score_kind::grad_norm ||
                              kind == score_kind::loss ||
                              kind == score_kind::hybrid;

    dris::RankMatrix rm;
    if (needs_rank) {
        try {
            rm = dris::load_rank_matrix(a.proxies + "/rank-matrix.csv");
        } catch (const std::runtime_error& e) {
            throw UsageError(e.what());
        }
    }
    std::vector<dris::TrainedModel> models;
    if (needs_models) {
        for (int k = 0; k < cfg.K; ++k) {
            const std::string path =
                a.proxies + "/proxy-" + std::to_string(k) + ".json";
            try {
                models.push_back(dris::load_model(path));
            } catch (const std::runtime_error& e) {
                throw UsageError(e.what());
            }
        }
    }

    dris::ScoreVector s;
    switch (kind) {
        case score_kind::rank_variance: s = dris::rank_variance(rm); break;
        case score_kind::consensus_mean_rank:
            s = dris::consensus_mean_rank(rm);
            break;
        case score_kind::el2n: s = dris::el2n(models, ds); break;
        case score_kind::grad_norm:
        case score_kind::loss: {
            std::vector<dris::PerSampleStats> stats;
            stats.reserve(models.size());
            for (const auto& m : models) stats.push_back(dris::eval_stats(m, ds));
            s = dris::mean_stat_score(stats, kind);
            break;
        }
        case score_kind::hybrid: {
            std::vector<dris::PerSampleStats> stats;
            stats.reserve(models.size());
            for (const auto& m : models) stats.push_back(dris::eval_stats(m, ds));
            s = dris::hybrid(dris::mean_stat_score(stats, score_kind::grad_norm),
                             dris::rank_variance(rm), cfg.beta);
            break;
        }
        case score_kind::uniform_mix:
            s = dris::uniform_mix(dris::rank_variance(rm), cfg.mix_k);
            break;
        default:
            throw UsageError("unsupported score kind");
    }
    dris::save_scores(s, a.out);
    std::cout << "wrote " << a.out << ": kind=" << dris::to_string(s.kind)
              << ", N=" << s.values.size() << "\n";
}

// ------------------------------------------------------------------ select

struct SelectArgs {
    std::string config, scores, out;
    double alpha = 0.0, xi = 0.0;
    bool has_alpha = false, has_xi = false;
};

void run_select(const SelectArgs& a) {
    dris::ExperimentConfig cfg = load_config(a.config);
    dris::ScoreVector s;
    try {
        s = dris::load_scores(a.scores);
    } catch (const std::runtime_error& e) {
        throw UsageError(e.what());
    }
    const double alpha = a.has_alpha ? a.alpha : cfg.alpha;
    const double xi = a.has_xi ? a.xi : cfg.xi;
    dris::SamplingPlan plan;
    if (cfg.method == dris::method_kind::random ||
        cfg.method == dris::method_kind::uniform_sgd)
        throw UsageError("method '" + dris::to_string(cfg.method) +
                         "' does not select by scores; use `dris sweep` "
                         "(or train-target without --plan for the full set)");
    if (cfg.method == dris::method_kind::uniform_mix) {
        dris::ScoreVector masses =
            s.kind == dris::score_kind::uniform_mix
                ? s
                : dris::uniform_mix(s, cfg.mix_k);
        plan = dris::online_from_masses(masses);
    } else if (online_method(cfg.method)) {
        plan = dris::online_distribution(s, xi);
    } else {
        plan = dris::select_top_alpha(s, alpha);
    }
    dris::save_plan(plan, a.out);
    if (plan.mode == dris::plan_mode::static_subset)
        std::cout << "kept " << plan.kept_indices.size() << " of "
                  << s.values.size() << " examples (alpha=" << alpha
                  << "); wrote " << a.out << "\n";
    else
        std::cout << "online plan over " << plan.probs.size()
                  << " examples; wrote " << a.out << "\n";
}

// ------------------------------------------------------------ train-target

struct TrainTargetArgs {
    std::string config, data, plan, out, test;
    std::uint64_t seed = 0;
    bool has_seed = false;
};

void run_train_target(const TrainTargetArgs& a) {
    dris::ExperimentConfig cfg = load_config(a.config);
    const std::uint64_t master = a.has_seed ? a.seed : cfg.seeds.front();
    dris::LabeledDataset ds = load_data(cfg, a.data);
    dris::ModelSpec spec = cfg.target_model;
    spec.input_dim = ds.dim;
    spec.num_classes = ds.num_classes;
    dris::TrainConfig tc = cfg.target_train;
    tc.seed = dris::derive_seed(master, "target");

    dris::TrainedModel model;
    int epochs_effective = tc.epochs;
    if (a.plan.empty()) {
        model = dris::train(spec, tc, ds);
    } else {
        dris::SamplingPlan plan;
        try {
            plan = dris::load_plan(a.plan);
        } catch (const std::runtime_error& e) {
            throw UsageError(e.what());
        }
        if (plan.mode == dris::plan_mode::static_subset) {
            dris::LabeledDataset sub = dris::subset(ds, plan.kept_indices);
            tc.epochs = dris::step_parity_epochs(cfg.target_train.epochs,
                                                 plan.alpha);
            epochs_effective = tc.epochs;
            model = dris::train(spec, tc, sub);
        } else {
            model = dris::train_online(spec, tc, ds, plan);
        }
    }
    dris::save_model(model, a.out);
    std::cout << "master seed: " << master << "\n"
              << "epochs effective: " << epochs_effective << "\n"
              << "train accuracy: " << fmt(dris::accuracy(model, ds), "%.4f")
              << "\n";
    if (!a.test.empty()) {
        dris::LabeledDataset test_ds = load_data(cfg, a.test);
        std::cout << "test accuracy: "
                  << fmt(dris::accuracy(model, test_ds), "%.4f") << "\n";
    }
    std::cout << "wrote " << a.out << "\n";
}

// ----------------------------------------------------------------- certify

struct CertifyArgs {
    dris::TheoremParams p;
    dris::PlantedMix mix;
    long trials = 0;
    std::uint64_t mc_seed = 1234;
    bool bdry_size_ok = false;
    bool json = false;
    bool assert_separated = false;
    bool assert_mc = false;
    std::string out;
};

void run_certify(const CertifyArgs& a) {
    dris::CertificateReport rep =
        dris::separation_and_contamination(a.p, a.bdry_size_ok);
    bool have_mc = a.trials > 0;
    dris::McSummary mc;
    if (have_mc)
        mc = dris::planted_rank_montecarlo(a.p, a.mix, a.trials, a.mc_seed);
    const double joint_threshold =
        have_mc ? a.p.delta +
                      3.0 * std::sqrt(a.p.delta * (1.0 - a.p.delta) /
                                      static_cast<double>(a.trials))
                : 0.0;

    std::string text;
    if (a.json) {
        nlohmann::json j = nlohmann::json::parse(dris::report_to_json(rep));
        if (have_mc) {
            j["monte_carlo"] = {
                {"trials", mc.trials},
                {"seed", a.mc_seed},
                {"bdry_fraction", a.mix.bdry_fraction},
                {"violation_freq_bulk", mc.violation_freq_bulk},
                {"violation_freq_bdry", mc.violation_freq_bdry},
                {"violation_freq_joint", mc.violation_freq_joint},
                {"joint_threshold", joint_threshold},
                {"trials_with_bulk_in_subset", mc.trials_with_bulk_in_subset},
                {"max_tail_contamination", mc.max_tail_contamination},
                {"mean_sigma2_bulk", mc.mean_sigma2_bulk},
                {"mean_sigma2_bdry", mc.mean_sigma2_bdry},
                {"mean_sigma2_tail", mc.mean_sigma2_tail},
            };
        }
        text = j.dump(2) + "\n";
    } else {
        std::ostringstream os;
        os << "N=" << a.p.N << " K=" << a.p.K << " delta=" << a.p.delta
           << " tau=" << a.p.tau << " gamma=" << a.p.gamma
           << " tau_bdry=" << a.p.tau_bdry << " alpha_trim=" << a.p.alpha_trim
           << " eps=" << a.p.eps << " alpha=" << a.p.alpha
           << " v_tail=" << a.p.v_tail << "\n";
        os << "radius            = " << fmt(rep.mcdiarmid_radius) << "\n";
        os << "theta_star        = " << fmt(rep.theta_star) << "\n";
        os << "boundary_lower    = " << fmt(rep.bdry_lower) << "\n";
        os << "delta_prime       = " << fmt(rep.delta_prime) << "\n";
        os << "2*radius          = " << fmt(2.0 * rep.mcdiarmid_radius) << "\n";
        os << "separated         = " << (rep.separated ? "yes" : "no");
        if (!a.bdry_size_ok)
            os << " (boundary size condition not asserted; pass "
                  "--bdry-size-ok when |boundary| >= alpha*N)";
        os << "\n";
        os << "contamination_cap = " << fmt(rep.contamination_cap) << "\n";
        if (!rep.notes.empty()) os << "notes: " << rep.notes << "\n";
        if (have_mc) {
            os << "monte carlo (seed " << a.mc_seed << ", bdry_fraction "
               << a.mix.bdry_fraction << "):\n";
            os << "  trials                   = " << mc.trials << "\n";
            os << "  bulk violation freq      = " << fmt(mc.violation_freq_bulk)
               << "\n";
            os << "  boundary violation freq  = " << fmt(mc.violation_freq_bdry)
               << "\n";
            os << "  joint violation freq     = " << fmt(mc.violation_freq_joint)
               << " (threshold " << fmt(joint_threshold) << ")\n";
            os << "  trials with bulk kept    = " << mc.trials_with_bulk_in_subset
               << "\n";
            os << "  max tail contamination   = "
               << fmt(mc.max_tail_contamination) << " (cap "
               << fmt(rep.contamination_cap) << ")\n";
            os << "  mean sigma2 bulk/bdry/tail = " << fmt(mc.mean_sigma2_bulk)
               << " / " << fmt(mc.mean_sigma2_bdry) << " / "
               << fmt(mc.mean_sigma2_tail) << "\n";
        }
        text = os.str();
    }
    if (!a.out.empty()) {
        std::ofstream f(a.out);
        if (!f) throw UsageError("cannot write " + a.out);
        f << text;
    }
    std::cout << text;

    if (a.assert_separated && !rep.separated)
        throw CheckFailure("separation condition not met (delta_prime " +
                           fmt(rep.delta_prime) + " vs 2*radius " +
                           fmt(2.0 * rep.mcdiarmid_radius) +
                           (a.bdry_size_ok ? ")"
                                           : "; boundary size not asserted)"));
    if (a.assert_mc) {
        if (!have_mc) throw UsageError("--assert-mc requires --trials > 0");
        if (mc.violation_freq_joint > joint_threshold)
            throw CheckFailure("joint violation frequency " +
                               fmt(mc.violation_freq_joint) +
                               " exceeds threshold " + fmt(joint_threshold));
        if (mc.trials_with_bulk_in_subset > 0)
            throw CheckFailure(
                std::to_string(mc.trials_with_bulk_in_subset) +
                " trials kept a bulk-corrupted point in the top-alpha subset");
        if (mc.max_tail_contamination > rep.contamination_cap + 1e-12)
            throw CheckFailure("tail contamination " +
                               fmt(mc.max_tail_contamination) +
                               " exceeds cap " + fmt(rep.contamination_cap));
    }
}

// ------------------------------------------------------------------- sweep

struct SweepArgs {
    std::string config, axis, out_dir;
    std::vector<double> values;
    std::uint64_t seed = 0;
    bool has_seed = false;
};

void run_sweep(const SweepArgs& a) {
    dris::ExperimentConfig cfg = load_config(a.config);
    if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;
    if (a.has_seed) cfg.seeds = {a.seed};
    if (a.axis.empty() != a.values.empty())
        throw UsageError("--axis and --values must be given together");

    std::cout << "master seeds:";
    for (auto s : cfg.seeds) std::cout << " " << s;
    std::cout << "\n";

    std::vector<dris::RunMetrics> rows;
    if (a.axis.empty()) {
        rows = dris::run_experiment(cfg);
    } else {
        rows = dris::sweep(cfg, dris::sweep_axis_from_string(a.axis), a.values);
    }
    const char* env = std::getenv("DRIS_OUTPUT_DIR");
    const std::string dir = env && *env ? env : cfg.output_dir;
    std::cout << "wrote " << rows.size() << " rows to " << dir
              << "/metrics.csv\n";
    for (const auto& r : rows) {
        std::cout << "  method=" << r.method;
        if (!r.axis.empty())
            std::cout << " " << r.axis << "=" << fmt(r.axis_value, "%g");
        std::cout << " seed=" << r.seed << " test_acc="
                  << fmt(r.test_accuracy, "%.4f")
                  << " frac_corrupt_kept=" << fmt(r.frac_corrupt_in_subset, "%.4f")
                  << " epochs=" << r.epochs_effective << "\n";
    }
}

// ------------------------------------------------------------------ report

struct ReportArgs {
    std::vector<std::string> metrics;
    std::string baseline, out;
    bool json = false;
};

std::string render_report_table(const std::vector<dris::ReportRow>& rows,
                                const std::string& baseline) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof(line),
                  "%-14s %-9s %-6s %-6s %-8s %3s  %-17s %-17s", "method",
                  "noise", "rate", "axis", "value", "n", "test_acc",
                  "frac_corrupt");
    os << line;
    if (!baseline.empty()) os << "  t_vs_" << baseline << "  p";
    os << "\n";
    bool any_single = false;
    for (const auto& r : rows) {
        const char* axis = r.axis.empty() ? "-" : r.axis.c_str();
        std::string acc = fmt(r.acc_mean, "%.4f") + "±" + fmt(r.acc_std, "%.4f");
        std::string frac =
            fmt(r.frac_mean, "%.4f") + "±" + fmt(r.frac_std, "%.4f");
        if (r.n == 1) {
            acc += "*";
            any_single = true;
        }
        std::snprintf(line, sizeof(line),
                      "%-14s %-9s %-6g %-6s %-8g %3ld  %-17s %-17s",
                      r.method.c_str(), r.noise.c_str(), r.noise_rate, axis,
                      r.axis_value, r.n, acc.c_str(), frac.c_str());
        os << line;
        if (!baseline.empty()) {
            if (r.has_t) {
                os << "  " << fmt(r.t_vs_baseline.t, "%.3f") << "  "
                   << fmt(r.t_vs_baseline.p_two_sided, "%.4g");
                if (r.t_vs_baseline.zero_variance) os << " (zero variance)";
            } else {
                os << "  -  -";
            }
        }
        os << "\n";
    }
    if (any_single) os << "* single seed; std reported as 0\n";
    os << "std: sample standard deviation (n-1)\n";
    return os.str();
}

std::string render_report_json(const std::vector<dris::ReportRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j = {
            {"method", r.method},
            {"noise", r.noise},
            {"noise_rate", r.noise_rate},
            {"axis", r.axis},
            {"axis_value", r.axis_value},
            {"n", r.n},
            {"test_accuracy_mean", r.acc_mean},
            {"test_accuracy_std", r.acc_std},
            {"frac_corrupt_mean", r.frac_mean},
            {"frac_corrupt_std", r.frac_std},
            {"single_seed", r.n == 1},
        };
        if (r.has_t) {
            j["t_vs_baseline"] = r.t_vs_baseline.t;
            j["p_two_sided"] = r.t_vs_baseline.p_two_sided;
            j["t_n"] = r.t_vs_baseline.n;
            j["t_zero_variance"] = r.t_vs_baseline.zero_variance;
        }
        arr.push_back(j);
    }
    return arr.dump(2) + "\n";
}

void run_report(const ReportArgs& a) {
    std::vector<dris::MetricsRow> rows;
    for (const auto& path : a.metrics) {
        try {
            auto part = dris::read_metrics(path);
            rows.insert(rows.end(), part.begin(), part.end());
        } catch (const std::runtime_error& e) {
            throw UsageError(e.what());
        }
    }
    std::string baseline = a.baseline;
    if (!baseline.empty()) {
        bool present = false;
        for (const auto& r : rows)
            if (r.method == baseline) {
                present = true;
                break;
            }
        if (!present) {
            std::cerr << "warning: baseline '" << baseline
                      << "' not present in metrics; t columns omitted\n";
            baseline.clear();
        }
    }
    std::vector<dris::ReportRow> rrows = dris::report(rows, baseline);
    emit(a.json ? render_report_json(rrows)
                : render_report_table(rrows, baseline),
         a.out);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"disagreement-regularized importance sampling toolkit"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* c_gen = app.add_subcommand("generate", "draw a synthetic dataset");
    c_gen->add_option("--config", gen.config, "experiment config file")
        ->required();
    c_gen->add_option("--out", gen.out, "output CSV path");
    auto* gen_seed = c_gen->add_option("--seed", gen.seed, "master seed");

    CorruptArgs cor;
    auto* c_cor = app.add_subcommand("corrupt", "inject label noise");
    c_cor->add_option("--config", cor.config, "experiment config file")
        ->required();
    c_cor->add_option("--in", cor.in, "input dataset CSV")->required();
    c_cor->add_option("--out", cor.out, "output dataset CSV")->required();
    c_cor->add_option("--mask-out", cor.mask_out, "corruption mask path");
    auto* cor_seed = c_cor->add_option("--seed", cor.seed, "master seed");

    TrainProxiesArgs tp;
    auto* c_tp = app.add_subcommand("train-proxies",
                                    "train the proxy ensemble and rank matrix");
    c_tp->add_option("--config", tp.config, "experiment config file")
        ->required();
    c_tp->add_option("--data", tp.data, "training dataset CSV")->required();
    c_tp->add_option("--out-dir", tp.out_dir, "output directory")->required();
    auto* tp_seed = c_tp->add_option("--seed", tp.seed, "master seed");

    ScoreArgs sc;
    auto* c_sc = app.add_subcommand("score", "compute per-example scores");
    c_sc->add_option("--config", sc.config, "experiment config file")
        ->required();
    c_sc->add_option("--data", sc.data, "dataset CSV")->required();
    c_sc->add_option("--proxies", sc.proxies, "train-proxies output directory")
        ->required();
    c_sc->add_option("--out", sc.out, "output scores CSV")->required();
    c_sc->add_option("--kind", sc.kind,
                     "score kind override (default: the config method's)");

    SelectArgs sel;
    auto* c_sel =
        app.add_subcommand("select", "build a sampling plan from scores");
    c_sel->add_option("--config", sel.config, "experiment config file")
        ->required();
    c_sel->add_option("--scores", sel.scores, "scores CSV")->required();
    c_sel->add_option("--out", sel.out, "output plan JSON")->required();
    auto* sel_alpha =
        c_sel->add_option("--alpha", sel.alpha, "keep fraction override");
    auto* sel_xi = c_sel->add_option("--xi", sel.xi, "mixing weight override");

    TrainTargetArgs tt;
    auto* c_tt = app.add_subcommand("train-target",
                                    "train the target model (optional plan)");
    c_tt->add_option("--config", tt.config, "experiment config file")
        ->required();
    c_tt->add_option("--data", tt.data, "training dataset CSV")->required();
    c_tt->add_option("--plan", tt.plan, "sampling plan JSON");
    c_tt->add_option("--out", tt.out, "output model JSON")->required();
    c_tt->add_option("--test", tt.test, "held-out dataset CSV");
    auto* tt_seed = c_tt->add_option("--seed", tt.seed, "master seed");

    CertifyArgs cert;
    auto* c_cert = app.add_subcommand(
        "certify", "evaluate the closed-form bounds (optionally Monte Carlo)");
    c_cert->add_option("--N", cert.p.N, "number of examples");
    c_cert->add_option("--K", cert.p.K, "ensemble size");
    c_cert->add_option("--delta", cert.p.delta, "confidence level");
    c_cert->add_option("--tau", cert.p.tau, "bulk concentration width");
    c_cert->add_option("--gamma", cert.p.gamma, "bulk escape probability");
    c_cert->add_option("--tau-bdry", cert.p.tau_bdry,
                       "boundary disagreement scale");
    c_cert->add_option("--alpha-trim", cert.p.alpha_trim,
                       "corrupted-tail trim fraction");
    c_cert->add_option("--eps", cert.p.eps, "contamination rate");
    c_cert->add_option("--alpha", cert.p.alpha, "keep fraction");
    c_cert->add_option("--v-tail", cert.p.v_tail,
                       "tail mean rank-variance bound");
    c_cert->add_flag("--bdry-size-ok", cert.bdry_size_ok,
                     "assert |boundary| >= alpha*N");
    c_cert->add_option("--trials", cert.trials,
                       "planted Monte-Carlo trials (0 = skip)");
    c_cert->add_option("--bdry-fraction", cert.mix.bdry_fraction,
                       "planted boundary fraction of N");
    c_cert->add_option("--mc-seed", cert.mc_seed, "Monte-Carlo seed");
    c_cert->add_flag("--json", cert.json, "machine-readable output");
    c_cert->add_option("--out", cert.out, "also write the report to a file");
    c_cert->add_flag("--assert-separated", cert.assert_separated,
                     "exit 1 unless the separation condition holds");
    c_cert->add_flag("--assert-mc", cert.assert_mc,
                     "exit 1 on any Monte-Carlo bound violation");

    SweepArgs sw;
    auto* c_sw =
        app.add_subcommand("sweep", "run experiment cells into metrics.csv");
    c_sw->add_option("--config", sw.config, "experiment config file")
        ->required();
    c_sw->add_option("--axis", sw.axis, "sweep axis: K|alpha|eps|beta|mix_k");
    c_sw->add_option("--values", sw.values, "comma-separated axis values")
        ->delimiter(',');
    c_sw->add_option("--out-dir", sw.out_dir, "output directory override");
    auto* sw_seed =
        c_sw->add_option("--seed", sw.seed, "replace config seeds with one");

    ReportArgs rep;
    auto* c_rep =
        app.add_subcommand("report", "aggregate metrics.csv files into a table");
    c_rep->add_option("--metrics", rep.metrics, "metrics.csv paths")
        ->required()
        ->expected(-1);
    c_rep->add_option("--baseline", rep.baseline,
                      "method name for paired-t columns");
    c_rep->add_flag("--json", rep.json, "machine-readable output");
    c_rep->add_option("--out", rep.out, "write the table to a file");

    try {
        app.parse(argc, argv);
        if (*c_gen) {
            gen.has_seed = gen_seed->count() > 0;
            run_generate(gen);
        } else if (*c_cor) {
            cor.has_seed = cor_seed->count() > 0;
            run_corrupt(cor);
        } else if (*c_tp) {
            tp.has_seed = tp_seed->count() > 0;
            run_train_proxies(tp);
        } else if (*c_sc) {
            run_score(sc);
        } else if (*c_sel) {
            sel.has_alpha = sel_alpha->count() > 0;
            sel.has_xi = sel_xi->count() > 0;
            run_select(sel);
        } else if (*c_tt) {
            tt.has_seed = tt_seed->count() > 0;
            run_train_target(tt);
        } else if (*c_cert) {
            run_certify(cert);
        } else if (*c_sw) {
            sw.has_seed = sw_seed->count() > 0;
            run_sweep(sw);
        } else if (*c_rep) {
            run_report(rep);
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const CheckFailure& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
