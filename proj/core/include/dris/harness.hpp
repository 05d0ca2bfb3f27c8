#ifndef DRIS_HARNESS_HPP
#define DRIS_HARNESS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dris/certify.hpp"
#include "dris/dataset.hpp"
#include "dris/model.hpp"
#include "dris/sampler.hpp"
#include "dris/scores.hpp"

namespace dris {

enum class noise_kind { none, uniform, targeted };

enum class method_kind {
    random,
    dris_static,
    dris_online,
    el2n,
    consensus,
    forgetting,
    aum,
    grad_norm_is,
    loss_is,
    uniform_sgd,
    hybrid,
    uniform_mix,
};

std::string to_string(noise_kind k);
noise_kind noise_kind_from_string(const std::string& s);
std::string to_string(method_kind m);
method_kind method_kind_from_string(const std::string& s);

struct DatasetConfig {
    bool synthetic = true;
    SyntheticSpec spec;
    std::string path;           // when !synthetic
    std::string test_path;      // optional held-out set for file datasets
    dense_format format = dense_format::csv;
    bool header = false;
};

struct ProxyConfig {
    ModelSpec model;
    TrainConfig train;
    int snapshot_epoch = 0;  // 0 -> mid-training (epochs / 2)
    int resolved_snapshot() const;
};

struct ExperimentConfig {
    int schema_version = 1;
    DatasetConfig dataset;
    noise_kind noise = noise_kind::none;
    double noise_rate = 0.0;
    method_kind method = method_kind::uniform_sgd;
    double beta = 0.5;   // hybrid
    double mix_k = 0.5;  // uniform_mix
    int K = 4;
    ProxyConfig proxy;
    ModelSpec target_model;
    TrainConfig target_train;
    double alpha = 0.25;
    double xi = 0.1;
    std::vector<std::uint64_t> seeds;
    std::string output_dir;  // DRIS_OUTPUT_DIR env var overrides

    void validate() const;
};

struct Histogram {
    std::vector<double> edges;  // bins + 1
    std::vector<long> clean_counts;
    std::vector<long> corrupt_counts;
    double frac_corrupt_below_clean_p10 = 0.0;
    double frac_corrupt_below_clean_median = 0.0;
};

Histogram build_histogram(const ScoreVector& scores,
                          const std::vector<std::uint8_t>& corrupt_mask, int bins);
void save_histogram(const Histogram& h, const std::string& csv_path);

struct RunMetrics {
    std::uint64_t seed = 0;
    std::string method;
    std::string axis;        // empty outside sweeps
    double axis_value = 0.0;
    double test_accuracy = 0.0;
    double frac_corrupt_in_subset = 0.0;  // probability mass for online plans
    std::vector<double> per_proxy_corr_train_acc;
    double empirical_gap = 0.0;  // NaN when no rank matrix was built
    int epochs_effective = 0;
    std::string mask_hash;
    double wall_seconds = 0.0;
    Histogram histogram;  // of the method's primary scores, when any
    bool has_histogram = false;
};

// Run one experiment cell per seed. Proxies see only the corrupted labels;
// the corruption mask for a given (dataset, noise, seed) does not depend on
// the method, so all methods share it.
std::vector<RunMetrics> run_experiment(const ExperimentConfig& cfg);

// The proxy phase on its own: K models trained with seeds derived from
// run_seed, snapshots taken at the resolved snapshot epoch. The rank matrix
// is present when K >= 2.
struct ProxyPhase {
    std::vector<TrainedModel> snapshot_models;
    std::vector<PerSampleStats> snapshot_stats;
    RankMatrix rank_matrix;
    bool has_rank_matrix = false;
};
ProxyPhase run_proxy_phase(const ExperimentConfig& cfg, const LabeledDataset& ds,
                           std::uint64_t run_seed);

// Importance-sampled training: each epoch draws N indices i.i.d. from the
// online plan, partitions them into contiguous batches, and steps on the
// unbiasing-weighted gradient. No step parity: epochs are taken as given.
TrainedModel train_online(const ModelSpec& spec, const TrainConfig& cfg,
                          const LabeledDataset& ds, const SamplingPlan& plan);

enum class sweep_axis { K, alpha, eps, beta, mix_k };
std::string to_string(sweep_axis a);
sweep_axis sweep_axis_from_string(const std::string& s);

// One row per (value, seed), appended to <output_dir>/metrics.csv as each
// cell finishes; per-cell failures are recorded and the sweep continues.
std::vector<RunMetrics> sweep(const ExperimentConfig& cfg, sweep_axis axis,
                              const std::vector<double>& values);

struct PairedT {
    double mean = 0.0;
    double sd = 0.0;  // sample sd, n-1
    double t = 0.0;   // +-inf convention when sd == 0 and mean != 0
    double p_two_sided = 0.0;
    long n = 0;
    bool zero_variance = false;
};

PairedT paired_t(const std::vector<double>& deltas);

// metrics.csv frozen schema (version 1); `report` refuses other layouts.
extern const char* const kMetricsHeader;

void write_metrics_header(const std::string& path);
void append_metrics_row(const std::string& path, const ExperimentConfig& cfg,
                        const RunMetrics& m);

struct MetricsRow {
    int schema_version = 1;
    std::string method, dataset, noise, axis, mask_hash;
    double noise_rate = 0.0, axis_value = 0.0, alpha = 0.0, xi = 0.0;
    std::uint64_t seed = 0;
    int K = 0, epochs_base = 0, epochs_effective = 0;
    double test_accuracy = 0.0, frac_corrupt_in_subset = 0.0, empirical_gap = 0.0,
           wall_seconds = 0.0;
    std::vector<double> per_proxy_corr_train_acc;
};

std::vector<MetricsRow> read_metrics(const std::string& path);

struct ReportRow {
    std::string method, noise, axis;
    double noise_rate = 0.0, axis_value = 0.0;
    long n = 0;
    double acc_mean = 0.0, acc_std = 0.0;  // sample std, n-1
    double frac_mean = 0.0, frac_std = 0.0;
    bool has_t = false;
    PairedT t_vs_baseline;
};

// Aggregate per (method, noise, noise_rate, axis, axis_value); when
// `baseline` names a method present in the same cells, adds paired-t columns
// (pairing rows by seed).
std::vector<ReportRow> report(const std::vector<MetricsRow>& rows,
                              const std::string& baseline);

// Key-value config file with dotted nesting ("target.train.lr = 0.01").
// Unknown keys are rejected; schema_version is required.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);
std::string config_to_text(const ExperimentConfig& cfg);

// Defaults reproducing the synthetic heavy-tailed benchmark.
ExperimentConfig synthetic_benchmark_config();

}  // namespace dris

#endif
