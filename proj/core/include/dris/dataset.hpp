#ifndef DRIS_DATASET_HPP
#define DRIS_DATASET_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dris {

struct TrainedModel;  // defined in model.hpp

// Dense labeled dataset with ground-truth corruption tracking.
// `labels` is what training sees; `clean_labels` is the pre-corruption truth
// and must only be consulted by evaluation/metrics code.
struct LabeledDataset {
    std::vector<double> features;  // row-major, n x dim
    std::vector<int> labels;
    std::vector<int> clean_labels;
    std::vector<std::uint8_t> corrupt_mask;
    std::size_t n = 0;
    std::size_t dim = 0;
    int num_classes = 0;

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * dim, dim};
    }
    std::size_t num_corrupt() const;
    void check_consistent() const;  // throws std::invalid_argument on violation
};

struct SyntheticSpec {
    std::size_t n = 2000;
    std::size_t d = 20;
    double rare_ratio = 0.1;
    double var_rare = 400.0;
    double var_common = 1.0;
    std::uint64_t seed = 0;
};

// Two-cluster Gaussian mixture: common cluster at the origin, rare cluster
// (floor(rare_ratio*n) points, label 1) isotropic with variance var_rare
// around a center on the first axis. Deterministic given the seed.
LabeledDataset generate_synthetic(const SyntheticSpec& spec);

// Distance of the rare-cluster center from the origin along axis 0.
double synthetic_rare_center_distance();

enum class dense_format { csv, idx_pair };

std::string to_string(dense_format f);
dense_format dense_format_from_string(const std::string& s);

// CSV: one row per example, last column is the integer label.
// idx_pair: `path` is "<images>,<labels>" naming an IDX image file
// (magic 0x803) and an IDX label file (magic 0x801); pixels are kept as
// raw byte values.
LabeledDataset load_dense(const std::string& path, dense_format format,
                          bool header = false);
LabeledDataset load_csv(const std::string& path, bool header = false);
LabeledDataset load_idx_pair(const std::string& images_path,
                             const std::string& labels_path);

// Rows at `indices`, in the given order, with labels and mask carried over.
LabeledDataset subset(const LabeledDataset& ds,
                      const std::vector<std::size_t>& indices);

// Flip a uniformly random floor(nu*n) subset of labels, each to a uniformly
// chosen *other* class. Updates corrupt_mask; preserves clean_labels.
LabeledDataset inject_uniform_noise(const LabeledDataset& ds, double nu,
                                    std::uint64_t seed);

// Flip the floor(nu*n) examples with the largest per-sample gradient norm
// under `attacker` evaluated at the clean labels (ties by ascending index).
LabeledDataset inject_targeted_noise(const LabeledDataset& ds, double nu,
                                     const TrainedModel& attacker,
                                     std::uint64_t seed);

void save_csv(const LabeledDataset& ds, const std::string& path);
void save_mask(const LabeledDataset& ds, const std::string& path);   // 0/1 lines
void save_labels(const std::vector<int>& labels, const std::string& path);
std::vector<std::uint8_t> load_mask(const std::string& path);
std::vector<int> load_labels(const std::string& path);

// FNV-1a digest of the corruption mask bytes, as fixed-width hex.
std::string mask_hash(const LabeledDataset& ds);

}  // namespace dris

#endif
