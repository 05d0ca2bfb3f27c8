#include "dris/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "dris/rng.hpp"

namespace dris {

std::string to_string(noise_kind k) {
    switch (k) {
        case noise_kind::none: return "none";
        case noise_kind::uniform: return "uniform";
        case noise_kind::targeted: return "targeted";
    }
    throw std::invalid_argument("unknown noise kind");
}

noise_kind noise_kind_from_string(const std::string& s) {
    if (s == "none") return noise_kind::none;
    if (s == "uniform") return noise_kind::uniform;
    if (s == "targeted") return noise_kind::targeted;
    throw std::invalid_argument("unknown noise kind: " + s);
}

std::string to_string(method_kind m) {
    switch (m) {
        case method_kind::random: return "random";
        case method_kind::dris_static: return "dris-static";
        case method_kind::dris_online: return "dris-online";
        case method_kind::el2n: return "el2n";
        case method_kind::consensus: return "consensus";
        case method_kind::forgetting: return "forgetting";
        case method_kind::aum: return "aum";
        case method_kind::grad_norm_is: return "grad-norm-is";
        case method_kind::loss_is: return "loss-is";
        case method_kind::uniform_sgd: return "uniform-sgd";
        case method_kind::hybrid: return "hybrid";
        case method_kind::uniform_mix: return "uniform-mix";
    }
    throw std::invalid_argument("unknown method");
}

method_kind method_kind_from_string(const std::string& s) {
    if (s == "random") return method_kind::random;
    if (s == "dris-static") return method_kind::dris_static;
    if (s == "dris-online") return method_kind::dris_online;
    if (s == "el2n") return method_kind::el2n;
    if (s == "consensus") return method_kind::consensus;
    if (s == "forgetting") return method_kind::forgetting;
    if (s == "aum") return method_kind::aum;
    if (s == "grad-norm-is") return method_kind::grad_norm_is;
    if (s == "loss-is") return method_kind::loss_is;
    if (s == "uniform-sgd") return method_kind::uniform_sgd;
    if (s == "hybrid") return method_kind::hybrid;
    if (s == "uniform-mix") return method_kind::uniform_mix;
    throw std::invalid_argument("unknown method: " + s);
}

std::string to_string(sweep_axis a) {
    switch (a) {
        case sweep_axis::K: return "K";
        case sweep_axis::alpha: return "alpha";
        case sweep_axis::eps: return "eps";
        case sweep_axis::beta: return "beta";
        case sweep_axis::mix_k: return "mix_k";
    }
    throw std::invalid_argument("unknown sweep axis");
}

sweep_axis sweep_axis_from_string(const std::string& s) {
    if (s == "K") return sweep_axis::K;
    if (s == "alpha") return sweep_axis::alpha;
    if (s == "eps") return sweep_axis::eps;
    if (s == "beta") return sweep_axis::beta;
    if (s == "mix_k") return sweep_axis::mix_k;
    throw std::invalid_argument("unknown sweep axis: " + s);
}

int ProxyConfig::resolved_snapshot() const {
    if (snapshot_epoch >= 1) return std::min(snapshot_epoch, train.epochs);
    return std::max(1, train.epochs / 2);
}

namespace {

bool uses_proxies(method_kind m) {
    return m != method_kind::random && m != method_kind::uniform_sgd;
}

bool needs_rank_scores(method_kind m) {
    return m == method_kind::dris_static || m == method_kind::dris_online ||
           m == method_kind::consensus || m == method_kind::hybrid ||
           m == method_kind::uniform_mix;
}

bool is_online(method_kind m) {
    return m == method_kind::dris_online || m == method_kind::grad_norm_is ||
           m == method_kind::loss_is || m == method_kind::uniform_mix;
}

bool is_static_subset(method_kind m) {
    return m == method_kind::random || m == method_kind::dris_static ||
           m == method_kind::el2n || m == method_kind::consensus ||
           m == method_kind::forgetting || m == method_kind::aum ||
           m == method_kind::hybrid;
}

std::size_t real_floor(double x) {
    return static_cast<std::size_t>(std::floor(x + 1e-9));
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

double lower_quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const std::size_t idx = std::min(
        v.size() - 1, static_cast<std::size_t>(std::floor(p * static_cast<double>(v.size()))));
    return v[idx];
}

}  // namespace

void ExperimentConfig::validate() const {
    if (schema_version != 1)
        throw std::invalid_argument("config: schema_version must be 1");
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw std::invalid_argument("config: alpha must be in (0,1]");
    if (!(xi > 0.0)) throw std::invalid_argument("config: xi must be > 0");
    if (!(beta >= 0.0 && beta <= 1.0))
        throw std::invalid_argument("config: beta must be in [0,1]");
    if (!(mix_k >= 0.0 && mix_k <= 1.0))
        throw std::invalid_argument("config: mix_k must be in [0,1]");
    if (noise != noise_kind::none && !(noise_rate >= 0.0 && noise_rate < 1.0))
        throw std::invalid_argument("config: noise_rate must be in [0,1)");
    if (uses_proxies(method) && K < 1)
        throw std::invalid_argument("config: K must be >= 1");
    if (needs_rank_scores(method) && K < 2)
        throw std::invalid_argument(
            "config: rank-disagreement methods need K >= 2 proxies");
    if (output_dir.empty())
        throw std::invalid_argument("config: output_dir must be set");
    if (!dataset.synthetic && dataset.path.empty())
        throw std::invalid_argument("config: dataset.path required for file datasets");
}

Histogram build_histogram(const ScoreVector& scores,
                          const std::vector<std::uint8_t>& corrupt_mask, int bins) {
    if (bins < 2) throw std::invalid_argument("build_histogram: bins must be >= 2");
    if (scores.values.size() != corrupt_mask.size())
        throw std::invalid_argument("build_histogram: mask length mismatch");
    Histogram h;
    h.edges.resize(static_cast<std::size_t>(bins) + 1);
    const double hi = 0.25;
    for (int j = 0; j <= bins; ++j)
        h.edges[static_cast<std::size_t>(j)] = hi * static_cast<double>(j) /
                                               static_cast<double>(bins);
    h.clean_counts.assign(static_cast<std::size_t>(bins), 0);
    h.corrupt_counts.assign(static_cast<std::size_t>(bins), 0);
    std::vector<double> clean_vals, corrupt_vals;
    for (std::size_t i = 0; i < scores.values.size(); ++i) {
        const double v = scores.values[i];
        long j = static_cast<long>(std::floor(v / hi * static_cast<double>(bins)));
        j = std::clamp(j, 0L, static_cast<long>(bins) - 1);
        if (corrupt_mask[i]) {
            ++h.corrupt_counts[static_cast<std::size_t>(j)];
            corrupt_vals.push_back(v);
        } else {
            ++h.clean_counts[static_cast<std::size_t>(j)];
            clean_vals.push_back(v);
        }
    }
    if (!clean_vals.empty() && !corrupt_vals.empty()) {
        const double p10 = lower_quantile(clean_vals, 0.10);
        const double med = lower_quantile(clean_vals, 0.50);
        long below10 = 0, below50 = 0;
        for (double v : corrupt_vals) {
            if (v < p10) ++below10;
            if (v < med) ++below50;
        }
        h.frac_corrupt_below_clean_p10 =
            static_cast<double>(below10) / static_cast<double>(corrupt_vals.size());
        h.frac_corrupt_below_clean_median =
            static_cast<double>(below50) / static_cast<double>(corrupt_vals.size());
    }
    return h;
}

void save_histogram(const Histogram& h, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write " + csv_path);
    out << "bin_lo,bin_hi,clean_count,corrupt_count\n";
    for (std::size_t j = 0; j + 1 < h.edges.size(); ++j)
        out << fmt(h.edges[j]) << ',' << fmt(h.edges[j + 1]) << ','
            << h.clean_counts[j] << ',' << h.corrupt_counts[j] << '\n';
    out << "# frac_corrupt_below_clean_p10=" << fmt(h.frac_corrupt_below_clean_p10)
        << '\n';
    out << "# frac_corrupt_below_clean_median="
        << fmt(h.frac_corrupt_below_clean_median) << '\n';
}

const char* const kMetricsHeader =
    "schema_version,method,dataset,noise,noise_rate,axis,axis_value,seed,K,"
    "alpha,xi,epochs_base,epochs_effective,test_accuracy,"
    "frac_corrupt_in_subset,empirical_gap,per_proxy_corr_train_acc,mask_hash,"
    "wall_seconds";

void write_metrics_header(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << kMetricsHeader << '\n';
}

void append_metrics_row(const std::string& path, const ExperimentConfig& cfg,
                        const RunMetrics& m) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot write " + path);
    std::string proxy_accs;
    for (std::size_t i = 0; i < m.per_proxy_corr_train_acc.size(); ++i) {
        if (i) proxy_accs += ';';
        proxy_accs += fmt(m.per_proxy_corr_train_acc[i]);
    }
    out << cfg.schema_version << ',' << m.method << ','
        << (cfg.dataset.synthetic ? "synthetic" : cfg.dataset.path) << ','
        << to_string(cfg.noise) << ',' << fmt(cfg.noise_rate) << ',' << m.axis
        << ',' << fmt(m.axis_value) << ',' << m.seed << ',' << cfg.K << ','
        << fmt(cfg.alpha) << ',' << fmt(cfg.xi) << ',' << cfg.target_train.epochs
        << ',' << m.epochs_effective << ',' << fmt(m.test_accuracy) << ','
        << fmt(m.frac_corrupt_in_subset) << ',' << fmt(m.empirical_gap) << ','
        << proxy_accs << ',' << m.mask_hash << ',' << fmt(m.wall_seconds) << '\n';
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw std::runtime_error("metrics schema mismatch in " + path);
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (line.back() == ',') f.push_back("");
        if (f.size() != 19)
            throw std::runtime_error("metrics schema mismatch: bad row in " + path);
        MetricsRow r;
        r.schema_version = std::stoi(f[0]);
        if (r.schema_version != 1)
            throw std::runtime_error("metrics schema mismatch: version " + f[0]);
        r.method = f[1];
        r.dataset = f[2];
        r.noise = f[3];
        r.noise_rate = std::stod(f[4]);
        r.axis = f[5];
        r.axis_value = std::stod(f[6]);
        r.seed = std::stoull(f[7]);
        r.K = std::stoi(f[8]);
        r.alpha = std::stod(f[9]);
        r.xi = std::stod(f[10]);
        r.epochs_base = std::stoi(f[11]);
        r.epochs_effective = std::stoi(f[12]);
        r.test_accuracy = std::stod(f[13]);
        r.frac_corrupt_in_subset = std::stod(f[14]);
        r.empirical_gap = std::stod(f[15]);
        if (!f[16].empty()) {
            std::istringstream ps(f[16]);
            std::string p;
            while (std::getline(ps, p, ';'))
                r.per_proxy_corr_train_acc.push_back(std::stod(p));
        }
        r.mask_hash = f[17];
        r.wall_seconds = std::stod(f[18]);
        rows.push_back(std::move(r));
    }
    return rows;
}

PairedT paired_t(const std::vector<double>& deltas) {
    if (deltas.size() < 2)
        throw std::invalid_argument("paired_t: need at least 2 pairs");
    PairedT r;
    r.n = static_cast<long>(deltas.size());
    r.mean = std::accumulate(deltas.begin(), deltas.end(), 0.0) /
             static_cast<double>(r.n);
    double ss = 0.0;
    for (double d : deltas) ss += (d - r.mean) * (d - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(r.n - 1));
    if (r.sd == 0.0) {
        r.zero_variance = true;
        if (r.mean == 0.0) {
            r.t = 0.0;
            r.p_two_sided = 1.0;
        } else {
            r.t = r.mean > 0.0 ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
            r.p_two_sided = 0.0;
        }
        return r;
    }
    r.t = r.mean / (r.sd / std::sqrt(static_cast<double>(r.n)));
    boost::math::students_t dist(static_cast<double>(r.n - 1));
    r.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    return r;
}

namespace {

struct ProxyArtifacts {
    std::vector<TrainedModel> snapshot_models;
    std::vector<PerSampleStats> snapshot_stats;
    std::vector<std::vector<double>> snapshot_losses;          // per proxy
    std::vector<std::vector<std::vector<std::uint8_t>>> correct_rows;  // [k][i][t]
    std::vector<std::vector<double>> proxy0_margin_rows;       // [i][t]
};

ProxyArtifacts train_proxy_ensemble(const ExperimentConfig& cfg,
                                    const ModelSpec& proxy_spec,
                                    const LabeledDataset& ds,
                                    std::uint64_t run_seed) {
    ProxyArtifacts art;
    const int snapshot = cfg.proxy.resolved_snapshot();
    const bool want_correct = cfg.method == method_kind::forgetting;
    const bool want_margin = cfg.method == method_kind::aum;
    const std::size_t n = ds.n;
    if (want_correct)
        art.correct_rows.assign(static_cast<std::size_t>(cfg.K),
                                std::vector<std::vector<std::uint8_t>>(n));
    if (want_margin) art.proxy0_margin_rows.assign(n, {});
    for (int k = 0; k < cfg.K; ++k) {
        TrainConfig pc = cfg.proxy.train;
        pc.seed = derive_seed(run_seed, "proxy-" + std::to_string(k));
        std::vector<epoch_hook> hooks;
        hooks.push_back([&, k](int epoch, const TrainedModel& m,
                               const PerSampleStats& st) {
            if (epoch == snapshot) {
                art.snapshot_models.push_back(m);
                art.snapshot_stats.push_back(st);
                art.snapshot_losses.push_back(st.loss);
            }
            if (want_correct)
                for (std::size_t i = 0; i < n; ++i)
                    art.correct_rows[static_cast<std::size_t>(k)][i].push_back(
                        st.correct[i]);
            if (want_margin && k == 0)
                for (std::size_t i = 0; i < n; ++i)
                    art.proxy0_margin_rows[i].push_back(st.margin[i]);
        });
        train(proxy_spec, pc, ds, hooks);
    }
    if (art.snapshot_models.size() != static_cast<std::size_t>(cfg.K))
        throw std::runtime_error("proxy snapshot epoch never reached");
    return art;
}

TrainedModel train_online_target(const ModelSpec& spec, const TrainConfig& cfg,
                                 const LabeledDataset& ds,
                                 const SamplingPlan& plan) {
    if (cfg.epochs < 1)
        throw std::invalid_argument("online training: epochs must be >= 1");
    if (cfg.batch_size < 1)
        throw std::invalid_argument("online training: batch_size must be >= 1");
    TrainedModel model = init_model(spec, cfg.seed);
    const std::size_t n = ds.n;
    const std::size_t bs = std::min(cfg.batch_size, n);
    const long batches_per_epoch = static_cast<long>((n + bs - 1) / bs);
    const long total_steps = static_cast<long>(cfg.epochs) * batches_per_epoch;
    std::vector<double> velocity;
    if (cfg.momentum > 0.0) velocity.assign(model.num_params(), 0.0);
    long t = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto idx = weighted_epoch_indices(
            plan, n, derive_seed(cfg.seed, "online-epoch-" + std::to_string(epoch)));
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(start + bs, n);
            std::vector<std::size_t> batch(idx.begin() + static_cast<long>(start),
                                           idx.begin() + static_cast<long>(end));
            if (!std::isfinite(batch_objective(model, ds, batch)))
                throw divergence_error(epoch);
            auto grad = unbiased_batch_gradient(model, ds, batch, plan);
            add_weight_regularizer_gradient(spec, model.params, grad);
            if (cfg.weight_decay > 0.0)
                for (std::size_t i = 0; i < grad.size(); ++i)
                    grad[i] += cfg.weight_decay * model.params[i];
            const double lr = lr_at_step(cfg, t, total_steps);
            if (cfg.momentum > 0.0) {
                for (std::size_t i = 0; i < grad.size(); ++i) {
                    velocity[i] = cfg.momentum * velocity[i] - lr * grad[i];
                    model.params[i] += velocity[i];
                }
            } else {
                for (std::size_t i = 0; i < grad.size(); ++i)
                    model.params[i] -= lr * grad[i];
            }
            ++t;
        }
    }
    return model;
}

LabeledDataset subset_dataset(const LabeledDataset& ds,
                              const std::vector<std::size_t>& kept) {
    return subset(ds, kept);
}

RunMetrics run_one_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                        const std::string& axis, double axis_value,
                        const std::string& output_dir,
                        const std::string& file_tag) {
    const auto t0 = std::chrono::steady_clock::now();
    RunMetrics m;
    m.seed = seed;
    m.method = to_string(cfg.method);
    m.axis = axis;
    m.axis_value = axis_value;
    m.empirical_gap = std::numeric_limits<double>::quiet_NaN();

    // Data: train/test are independent draws of the same mixture; file
    // datasets fall back to evaluating on their own clean labels when no
    // test path is given.
    LabeledDataset ds, test_ds;
    if (cfg.dataset.synthetic) {
        SyntheticSpec sp = cfg.dataset.spec;
        sp.seed = derive_seed(seed, "train-data");
        ds = generate_synthetic(sp);
        sp.seed = derive_seed(seed, "test-data");
        test_ds = generate_synthetic(sp);
    } else {
        ds = load_dense(cfg.dataset.path, cfg.dataset.format, cfg.dataset.header);
        if (!cfg.dataset.test_path.empty()) {
            test_ds = load_dense(cfg.dataset.test_path, cfg.dataset.format,
                                 cfg.dataset.header);
        } else {
            test_ds = ds;
            test_ds.labels = test_ds.clean_labels;
            std::fill(test_ds.corrupt_mask.begin(), test_ds.corrupt_mask.end(),
                      std::uint8_t{0});
        }
    }

    ModelSpec target_spec = cfg.target_model;
    target_spec.input_dim = ds.dim;
    target_spec.num_classes = ds.num_classes;

    // Label corruption. The mask depends only on (dataset, noise, seed), so
    // every method sees the identical mask; the targeted attacker trains on
    // the still-clean labels with a method-independent seed.
    if (cfg.noise == noise_kind::uniform) {
        ds = inject_uniform_noise(ds, cfg.noise_rate, derive_seed(seed, "noise"));
    } else if (cfg.noise == noise_kind::targeted) {
        TrainConfig ac = cfg.target_train;
        ac.seed = derive_seed(seed, "attacker");
        const TrainedModel attacker = train(target_spec, ac, ds);
        ds = inject_targeted_noise(ds, cfg.noise_rate, attacker,
                                   derive_seed(seed, "noise"));
    }
    m.mask_hash = mask_hash(ds);
    const std::size_t n_corrupt = ds.num_corrupt();

    // Proxy phase.
    ModelSpec proxy_spec = cfg.proxy.model;
    proxy_spec.input_dim = ds.dim;
    proxy_spec.num_classes = ds.num_classes;
    ScoreVector score;
    ScoreVector sigma2;
    bool have_sigma2 = false;
    if (uses_proxies(cfg.method)) {
        const ProxyArtifacts art = train_proxy_ensemble(cfg, proxy_spec, ds, seed);
        for (const auto& st : art.snapshot_stats) {
            double acc = 0.0;
            for (std::size_t i = 0; i < ds.n; ++i) acc += st.correct[i];
            m.per_proxy_corr_train_acc.push_back(acc / static_cast<double>(ds.n));
        }
        RankMatrix rm;
        if (cfg.K >= 2) {
            rm = make_rank_matrix(art.snapshot_losses, cfg.proxy.resolved_snapshot());
            sigma2 = rank_variance(rm);
            have_sigma2 = true;
        }
        switch (cfg.method) {
            case method_kind::dris_static:
            case method_kind::dris_online:
                score = sigma2;
                break;
            case method_kind::el2n:
                score = el2n(art.snapshot_models, ds);
                break;
            case method_kind::consensus:
                score = consensus_mean_rank(rm);
                break;
            case method_kind::forgetting: {
                ScoreVector total;
                for (int k = 0; k < cfg.K; ++k) {
                    const auto ev = forgetting_events(
                        art.correct_rows[static_cast<std::size_t>(k)]);
                    total = k == 0 ? ev : add_scores(total, ev);
                }
                total.kind = score_kind::forgetting;
                score = total;
                break;
            }
            case method_kind::aum:
                score = aum(art.proxy0_margin_rows);
                break;
            case method_kind::grad_norm_is:
                score = mean_stat_score(art.snapshot_stats, score_kind::grad_norm);
                break;
            case method_kind::loss_is:
                score = mean_stat_score(art.snapshot_stats, score_kind::loss);
                break;
            case method_kind::hybrid:
                score = hybrid(mean_stat_score(art.snapshot_stats,
                                               score_kind::grad_norm),
                               sigma2, cfg.beta);
                break;
            case method_kind::uniform_mix:
                score = uniform_mix(sigma2, cfg.mix_k);
                break;
            default:
                break;
        }
    }

    // Metrics that read the corruption mask live only in this block and
    // below; scoring and selection above never touch it.
    if (have_sigma2 && n_corrupt > 0 && n_corrupt < ds.n) {
        double clean_sum = 0.0, corr_sum = 0.0;
        for (std::size_t i = 0; i < ds.n; ++i)
            (ds.corrupt_mask[i] ? corr_sum : clean_sum) += sigma2.values[i];
        m.empirical_gap =
            clean_sum / static_cast<double>(ds.n - n_corrupt) -
            corr_sum / static_cast<double>(n_corrupt);
    }
    if (have_sigma2) {
        m.histogram = build_histogram(sigma2, ds.corrupt_mask, 50);
        m.has_histogram = true;
    }

    // Selection and target training.
    TrainConfig tc = cfg.target_train;
    tc.seed = derive_seed(seed, "target");
    TrainedModel target;
    m.epochs_effective = tc.epochs;
    if (cfg.method == method_kind::uniform_sgd) {
        target = train(target_spec, tc, ds);
        m.frac_corrupt_in_subset =
            static_cast<double>(n_corrupt) / static_cast<double>(ds.n);
    } else if (is_static_subset(cfg.method)) {
        std::vector<std::size_t> kept;
        if (cfg.method == method_kind::random) {
            std::vector<std::size_t> order(ds.n);
            std::iota(order.begin(), order.end(), 0);
            auto gen = named_stream(seed, "random-select");
            std::shuffle(order.begin(), order.end(), gen);
            const std::size_t keep =
                real_floor(cfg.alpha * static_cast<double>(ds.n));
            if (keep == 0)
                throw std::invalid_argument("random selection: alpha*N is zero");
            kept.assign(order.begin(), order.begin() + static_cast<long>(keep));
            std::sort(kept.begin(), kept.end());
        } else {
            kept = select_top_alpha(score, cfg.alpha).kept_indices;
        }
        std::size_t kept_corrupt = 0;
        for (std::size_t i : kept) kept_corrupt += ds.corrupt_mask[i] ? 1 : 0;
        m.frac_corrupt_in_subset =
            static_cast<double>(kept_corrupt) / static_cast<double>(kept.size());
        const LabeledDataset sub = subset_dataset(ds, kept);
        tc.epochs = step_parity_epochs(cfg.target_train.epochs, cfg.alpha);
        m.epochs_effective = tc.epochs;
        target = train(target_spec, tc, sub);
    } else {
        if (!is_online(cfg.method))
            throw std::invalid_argument("method has no target-training mode");
        SamplingPlan plan;
        if (cfg.method == method_kind::uniform_mix)
            plan = online_from_masses(score);
        else
            plan = online_distribution(score, cfg.xi);
        double mass = 0.0;
        for (std::size_t i = 0; i < ds.n; ++i)
            if (ds.corrupt_mask[i]) mass += plan.probs[i];
        m.frac_corrupt_in_subset = mass;
        target = train_online_target(target_spec, tc, ds, plan);
    }

    m.test_accuracy = accuracy(target, test_ds);

    // Per-seed side outputs.
    if (m.has_histogram)
        save_histogram(m.histogram, output_dir + "/histogram" + file_tag + "-seed" +
                                        std::to_string(seed) + ".csv");
    if (have_sigma2 && n_corrupt > 0 && n_corrupt < ds.n) {
        // Diagnostic certificate from the per-seed score distribution: the
        // boundary scale comes from the clean median (the empirical pipeline
        // has no boundary oracle) and tau/gamma are left at their vacuous
        // values, so the report reflects only what this run can measure.
        try {
            TheoremParams tp;
            tp.N = ds.n;
            tp.K = cfg.K;
            tp.delta = 0.05;
            std::vector<double> clean_vals;
            for (std::size_t i = 0; i < ds.n; ++i)
                if (!ds.corrupt_mask[i]) clean_vals.push_back(sigma2.values[i]);
            const double bdry_med = lower_quantile(clean_vals, 0.50);
            tp.tau_bdry = std::sqrt(std::max(0.0, bdry_med));
            std::vector<double> corr_vals;
            for (std::size_t i = 0; i < ds.n; ++i)
                if (ds.corrupt_mask[i]) corr_vals.push_back(sigma2.values[i]);
            std::sort(corr_vals.begin(), corr_vals.end());
            tp.alpha_trim = 0.1;
            const std::size_t nt = std::max<std::size_t>(
                1, real_floor(0.1 * static_cast<double>(corr_vals.size())));
            double vt = 0.0;
            for (std::size_t i = corr_vals.size() - nt; i < corr_vals.size(); ++i)
                vt += corr_vals[i];
            tp.v_tail = vt / static_cast<double>(nt);
            tp.eps = static_cast<double>(n_corrupt) / static_cast<double>(ds.n);
            tp.alpha = cfg.alpha;
            tp.tau = 0.0;
            tp.gamma = 1.0;  // no concentration estimate without pooled ranks here
            const std::size_t keep = real_floor(cfg.alpha * static_cast<double>(ds.n));
            const auto rep = separation_and_contamination(
                tp, clean_vals.size() >= keep);
            std::ofstream out(output_dir + "/certificate" + file_tag + "-seed" +
                              std::to_string(seed) + ".json");
            if (out) out << report_to_json(rep) << '\n';
        } catch (const std::exception&) {
            // Diagnostics only; infeasible estimates are skipped.
        }
    }

    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return m;
}

std::string resolved_output_dir(const ExperimentConfig& cfg) {
    const char* env = std::getenv("DRIS_OUTPUT_DIR");
    return env && *env ? std::string(env) : cfg.output_dir;
}

std::vector<RunMetrics> run_cells(const ExperimentConfig& cfg,
                                  const std::string& axis, double axis_value,
                                  const std::string& file_tag) {
    cfg.validate();
    const std::string dir = resolved_output_dir(cfg);
    std::filesystem::create_directories(dir);
    const std::string metrics_path = dir + "/metrics.csv";
    if (!std::filesystem::exists(metrics_path)) write_metrics_header(metrics_path);
    const std::string mask_path = dir + "/mask.hash";
    if (!std::filesystem::exists(mask_path)) {
        std::ofstream out(mask_path);
        out << "axis,axis_value,seed,mask_hash\n";
    }
    std::vector<RunMetrics> all;
    for (std::uint64_t seed : cfg.seeds) {
        RunMetrics m;
        try {
            m = run_one_seed(cfg, seed, axis, axis_value, dir, file_tag);
        } catch (const divergence_error& e) {
            throw std::runtime_error("seed " + std::to_string(seed) + ": " +
                                     e.what());
        }
        append_metrics_row(metrics_path, cfg, m);
        {
            std::ofstream out(mask_path, std::ios::app);
            out << axis << ',' << fmt_short(axis_value) << ',' << seed << ','
                << m.mask_hash << '\n';
        }
        all.push_back(std::move(m));
    }
    return all;
}

}  // namespace

std::vector<RunMetrics> run_experiment(const ExperimentConfig& cfg) {
    return run_cells(cfg, "", 0.0, "");
}

ProxyPhase run_proxy_phase(const ExperimentConfig& cfg, const LabeledDataset& ds,
                           std::uint64_t run_seed) {
    ModelSpec proxy_spec = cfg.proxy.model;
    proxy_spec.input_dim = ds.dim;
    proxy_spec.num_classes = ds.num_classes;
    ProxyArtifacts art = train_proxy_ensemble(cfg, proxy_spec, ds, run_seed);
    ProxyPhase p;
    p.snapshot_models = std::move(art.snapshot_models);
    p.snapshot_stats = std::move(art.snapshot_stats);
    if (cfg.K >= 2) {
        p.rank_matrix =
            make_rank_matrix(art.snapshot_losses, cfg.proxy.resolved_snapshot());
        p.has_rank_matrix = true;
    }
    return p;
}

TrainedModel train_online(const ModelSpec& spec, const TrainConfig& cfg,
                          const LabeledDataset& ds, const SamplingPlan& plan) {
    return train_online_target(spec, cfg, ds, plan);
}

std::vector<RunMetrics> sweep(const ExperimentConfig& cfg, sweep_axis axis,
                              const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("sweep: no values");
    switch (axis) {
        case sweep_axis::K:
            if (!uses_proxies(cfg.method))
                throw std::invalid_argument("sweep: K axis needs a proxy method");
            break;
        case sweep_axis::alpha:
            if (!is_static_subset(cfg.method))
                throw std::invalid_argument(
                    "sweep: alpha axis needs a static-subset method");
            break;
        case sweep_axis::eps:
            if (cfg.noise == noise_kind::none)
                throw std::invalid_argument(
                    "sweep: eps axis needs noise uniform or targeted");
            break;
        case sweep_axis::beta:
            if (cfg.method != method_kind::hybrid)
                throw std::invalid_argument("sweep: beta axis needs method=hybrid");
            break;
        case sweep_axis::mix_k:
            if (cfg.method != method_kind::uniform_mix)
                throw std::invalid_argument(
                    "sweep: mix_k axis needs method=uniform-mix");
            break;
    }
    std::vector<RunMetrics> all;
    const std::string axis_name = to_string(axis);
    for (double v : values) {
        ExperimentConfig c = cfg;
        switch (axis) {
            case sweep_axis::K: {
                const double r = std::round(v);
                if (std::abs(v - r) > 1e-9 || r < 1.0)
                    throw std::invalid_argument("sweep: K values must be integers >= 1");
                c.K = static_cast<int>(r);
                break;
            }
            case sweep_axis::alpha: c.alpha = v; break;
            case sweep_axis::eps: c.noise_rate = v; break;
            case sweep_axis::beta: c.beta = v; break;
            case sweep_axis::mix_k: c.mix_k = v; break;
        }
        const std::string tag = "-" + axis_name + fmt_short(v);
        try {
            auto rows = run_cells(c, axis_name, v, tag);
            for (auto& r : rows) all.push_back(std::move(r));
        } catch (const std::exception& e) {
            std::cerr << "sweep cell " << axis_name << "=" << fmt_short(v)
                      << " failed: " << e.what() << "\n";
        }
    }
    return all;
}

std::vector<ReportRow> report(const std::vector<MetricsRow>& rows,
                              const std::string& baseline) {
    struct Key {
        std::string method, noise, axis;
        double noise_rate, axis_value;
        bool operator<(const Key& o) const {
            return std::tie(axis, axis_value, noise, noise_rate, method) <
                   std::tie(o.axis, o.axis_value, o.noise, o.noise_rate, o.method);
        }
    };
    std::map<Key, std::map<std::uint64_t, std::pair<double, double>>> cells;
    for (const auto& r : rows) {
        const Key k{r.method, r.noise, r.axis, r.noise_rate, r.axis_value};
        cells[k][r.seed] = {r.test_accuracy, r.frac_corrupt_in_subset};
    }
    auto mean_std = [](const std::vector<double>& v) {
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) /
                            static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd =
            v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        return std::pair<double, double>{mean, sd};
    };
    std::vector<ReportRow> out;
    for (const auto& [key, by_seed] : cells) {
        ReportRow rr;
        rr.method = key.method;
        rr.noise = key.noise;
        rr.axis = key.axis;
        rr.noise_rate = key.noise_rate;
        rr.axis_value = key.axis_value;
        rr.n = static_cast<long>(by_seed.size());
        std::vector<double> accs, fracs;
        for (const auto& [seed, av] : by_seed) {
            accs.push_back(av.first);
            fracs.push_back(av.second);
        }
        std::tie(rr.acc_mean, rr.acc_std) = mean_std(accs);
        std::tie(rr.frac_mean, rr.frac_std) = mean_std(fracs);
        if (!baseline.empty() && key.method != baseline) {
            const Key bk{baseline, key.noise, key.axis, key.noise_rate,
                         key.axis_value};
            const auto it = cells.find(bk);
            if (it != cells.end()) {
                std::vector<double> deltas;
                for (const auto& [seed, av] : by_seed) {
                    const auto bit = it->second.find(seed);
                    if (bit != it->second.end())
                        deltas.push_back(av.first - bit->second.first);
                }
                if (deltas.size() >= 2) {
                    rr.t_vs_baseline = paired_t(deltas);
                    rr.has_t = true;
                }
            }
        }
        out.push_back(std::move(rr));
    }
    return out;
}

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

void apply_train_key(TrainConfig& t, const std::string& sub, const std::string& v,
                     const std::string& full) {
    if (sub == "epochs") t.epochs = std::stoi(v);
    else if (sub == "batch_size") t.batch_size = std::stoull(v);
    else if (sub == "lr") t.lr = std::stod(v);
    else if (sub == "schedule") t.schedule = lr_schedule_from_string(v);
    else if (sub == "momentum") t.momentum = std::stod(v);
    else if (sub == "weight_decay") t.weight_decay = std::stod(v);
    else throw std::invalid_argument("config: unknown key " + full);
}

void apply_model_key(ModelSpec& m, const std::string& sub, const std::string& v,
                     const std::string& full) {
    if (sub == "kind") m.kind = model_kind_from_string(v);
    else if (sub == "hidden_width") m.hidden_width = std::stoull(v);
    else if (sub == "l2_lambda") m.l2_lambda = std::stod(v);
    else throw std::invalid_argument("config: unknown key " + full);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg = synthetic_benchmark_config();
    cfg.schema_version = 0;  // must be set explicitly by the file
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " has no '='");
        const std::string key = trim(s.substr(0, eq));
        const std::string v = trim(s.substr(eq + 1));
        try {
            if (key == "schema_version") cfg.schema_version = std::stoi(v);
            else if (key == "dataset.synthetic") cfg.dataset.synthetic = parse_bool(v, key);
            else if (key == "dataset.path") cfg.dataset.path = v;
            else if (key == "dataset.test_path") cfg.dataset.test_path = v;
            else if (key == "dataset.format") cfg.dataset.format = dense_format_from_string(v);
            else if (key == "dataset.header") cfg.dataset.header = parse_bool(v, key);
            else if (key == "dataset.spec.n") cfg.dataset.spec.n = std::stoull(v);
            else if (key == "dataset.spec.d") cfg.dataset.spec.d = std::stoull(v);
            else if (key == "dataset.spec.rare_ratio") cfg.dataset.spec.rare_ratio = std::stod(v);
            else if (key == "dataset.spec.var_rare") cfg.dataset.spec.var_rare = std::stod(v);
            else if (key == "dataset.spec.var_common") cfg.dataset.spec.var_common = std::stod(v);
            else if (key == "dataset.spec.seed") cfg.dataset.spec.seed = std::stoull(v);
            else if (key == "noise.kind") cfg.noise = noise_kind_from_string(v);
            else if (key == "noise.rate") cfg.noise_rate = std::stod(v);
            else if (key == "method") cfg.method = method_kind_from_string(v);
            else if (key == "beta") cfg.beta = std::stod(v);
            else if (key == "mix_k") cfg.mix_k = std::stod(v);
            else if (key == "K") cfg.K = std::stoi(v);
            else if (key == "alpha") cfg.alpha = std::stod(v);
            else if (key == "xi") cfg.xi = std::stod(v);
            else if (key == "output_dir") cfg.output_dir = v;
            else if (key == "seeds") {
                cfg.seeds.clear();
                std::istringstream ss(v);
                std::string tok;
                while (std::getline(ss, tok, ','))
                    cfg.seeds.push_back(std::stoull(trim(tok)));
            } else if (key.rfind("proxy.model.", 0) == 0)
                apply_model_key(cfg.proxy.model, key.substr(12), v, key);
            else if (key.rfind("proxy.train.", 0) == 0)
                apply_train_key(cfg.proxy.train, key.substr(12), v, key);
            else if (key == "proxy.snapshot_epoch")
                cfg.proxy.snapshot_epoch = std::stoi(v);
            else if (key.rfind("target.model.", 0) == 0)
                apply_model_key(cfg.target_model, key.substr(13), v, key);
            else if (key.rfind("target.train.", 0) == 0)
                apply_train_key(cfg.target_train, key.substr(13), v, key);
            else
                throw std::invalid_argument("config: unknown key " + key);
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("config: bad value for " + key + ": " + v);
        }
    }
    if (cfg.schema_version == 0)
        throw std::invalid_argument("config: schema_version is required");
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string config_to_text(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "schema_version = " << cfg.schema_version << '\n';
    out << "dataset.synthetic = " << (cfg.dataset.synthetic ? "true" : "false") << '\n';
    if (!cfg.dataset.path.empty()) out << "dataset.path = " << cfg.dataset.path << '\n';
    if (!cfg.dataset.test_path.empty())
        out << "dataset.test_path = " << cfg.dataset.test_path << '\n';
    out << "dataset.format = " << to_string(cfg.dataset.format) << '\n';
    out << "dataset.header = " << (cfg.dataset.header ? "true" : "false") << '\n';
    out << "dataset.spec.n = " << cfg.dataset.spec.n << '\n';
    out << "dataset.spec.d = " << cfg.dataset.spec.d << '\n';
    out << "dataset.spec.rare_ratio = " << fmt_short(cfg.dataset.spec.rare_ratio) << '\n';
    out << "dataset.spec.var_rare = " << fmt_short(cfg.dataset.spec.var_rare) << '\n';
    out << "dataset.spec.var_common = " << fmt_short(cfg.dataset.spec.var_common) << '\n';
    out << "dataset.spec.seed = " << cfg.dataset.spec.seed << '\n';
    out << "noise.kind = " << to_string(cfg.noise) << '\n';
    out << "noise.rate = " << fmt_short(cfg.noise_rate) << '\n';
    out << "method = " << to_string(cfg.method) << '\n';
    out << "beta = " << fmt_short(cfg.beta) << '\n';
    out << "mix_k = " << fmt_short(cfg.mix_k) << '\n';
    out << "K = " << cfg.K << '\n';
    out << "alpha = " << fmt_short(cfg.alpha) << '\n';
    out << "xi = " << fmt_short(cfg.xi) << '\n';
    out << "seeds = ";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
        out << (i ? "," : "") << cfg.seeds[i];
    out << '\n';
    out << "output_dir = " << cfg.output_dir << '\n';
    out << "proxy.model.kind = " << to_string(cfg.proxy.model.kind) << '\n';
    out << "proxy.model.hidden_width = " << cfg.proxy.model.hidden_width << '\n';
    out << "proxy.model.l2_lambda = " << fmt_short(cfg.proxy.model.l2_lambda) << '\n';
    out << "proxy.train.epochs = " << cfg.proxy.train.epochs << '\n';
    out << "proxy.train.batch_size = " << cfg.proxy.train.batch_size << '\n';
    out << "proxy.train.lr = " << fmt_short(cfg.proxy.train.lr) << '\n';
    out << "proxy.train.schedule = " << to_string(cfg.proxy.train.schedule) << '\n';
    out << "proxy.train.momentum = " << fmt_short(cfg.proxy.train.momentum) << '\n';
    out << "proxy.train.weight_decay = " << fmt_short(cfg.proxy.train.weight_decay)
        << '\n';
    out << "proxy.snapshot_epoch = " << cfg.proxy.snapshot_epoch << '\n';
    out << "target.model.kind = " << to_string(cfg.target_model.kind) << '\n';
    out << "target.model.hidden_width = " << cfg.target_model.hidden_width << '\n';
    out << "target.model.l2_lambda = " << fmt_short(cfg.target_model.l2_lambda) << '\n';
    out << "target.train.epochs = " << cfg.target_train.epochs << '\n';
    out << "target.train.batch_size = " << cfg.target_train.batch_size << '\n';
    out << "target.train.lr = " << fmt_short(cfg.target_train.lr) << '\n';
    out << "target.train.schedule = " << to_string(cfg.target_train.schedule) << '\n';
    out << "target.train.momentum = " << fmt_short(cfg.target_train.momentum) << '\n';
    out << "target.train.weight_decay = " << fmt_short(cfg.target_train.weight_decay)
        << '\n';
    return out.str();
}

ExperimentConfig synthetic_benchmark_config() {
    ExperimentConfig cfg;
    cfg.schema_version = 1;
    cfg.dataset.synthetic = true;
    cfg.dataset.spec = SyntheticSpec{};
    cfg.noise = noise_kind::none;
    cfg.noise_rate = 0.0;
    cfg.method = method_kind::uniform_sgd;
    cfg.K = 4;
    cfg.alpha = 0.12;
    cfg.xi = 0.1;
    cfg.seeds = {1, 2, 3, 4, 5};
    cfg.output_dir = "out";

    cfg.proxy.model.kind = model_kind::linear_squared_hinge;
    cfg.proxy.model.l2_lambda = 0.1;
    cfg.proxy.train.epochs = 10;
    cfg.proxy.train.batch_size = 2000;
    cfg.proxy.train.lr = 0.022;
    cfg.proxy.train.schedule = lr_schedule::decreasing_clamped;
    cfg.proxy.train.momentum = 0.0;
    cfg.proxy.snapshot_epoch = 10;

    cfg.target_model.kind = model_kind::linear_squared_hinge;
    cfg.target_model.l2_lambda = 0.1;
    cfg.target_train.epochs = 200;
    cfg.target_train.batch_size = 2000;
    cfg.target_train.lr = 0.01;
    cfg.target_train.schedule = lr_schedule::decreasing_clamped;
    cfg.target_train.momentum = 0.0;
    return cfg;
}

}  // namespace dris
