#ifndef DRIS_MODEL_HPP
#define DRIS_MODEL_HPP

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dris/dataset.hpp"

namespace dris {

enum class model_kind { linear_softmax, linear_squared_hinge, mlp_1hidden };

enum class lr_schedule { constant, cosine, decreasing_clamped };

std::string to_string(model_kind k);
model_kind model_kind_from_string(const std::string& s);
std::string to_string(lr_schedule s);
lr_schedule lr_schedule_from_string(const std::string& s);

struct ModelSpec {
    model_kind kind = model_kind::linear_squared_hinge;
    std::size_t input_dim = 0;
    int num_classes = 2;
    std::size_t hidden_width = 32;  // mlp only
    double l2_lambda = 0.0;
};

struct TrainConfig {
    int epochs = 1;
    std::size_t batch_size = 32;
    double lr = 0.01;
    lr_schedule schedule = lr_schedule::decreasing_clamped;
    double momentum = 0.0;     // in [0,1)
    double weight_decay = 0.0; // optimizer-side decay, separate from l2_lambda
    std::uint64_t seed = 0;
};

struct PerSampleStats {
    std::vector<double> loss;       // data term only, >= 0
    std::vector<double> margin;     // z_y - max_{k != y} z_k
    std::vector<double> grad_norm;  // exact per-example parameter-gradient norm
    std::vector<std::uint8_t> correct;
};

// Flat parameter layout:
//   linear: W (C x d, row-major) then bias (C)
//   mlp:    W1 (h x d) , b1 (h) , W2 (C x h) , b2 (C), tanh hidden
struct TrainedModel {
    ModelSpec spec;
    std::vector<double> params;

    std::size_t num_params() const;
    // logits for one example into `out` (size C)
    void logits(std::span<const double> x, std::vector<double>& out) const;
};

struct divergence_error : std::runtime_error {
    int epoch;
    explicit divergence_error(int e)
        : std::runtime_error("non-finite loss at epoch " + std::to_string(e)),
          epoch(e) {}
};

// Called after each completed epoch (1-based) during training.
using epoch_hook =
    std::function<void(int epoch, const TrainedModel&, const PerSampleStats&)>;

// Mini-batch SGD. Deterministic given cfg.seed (init and shuffling come from
// named streams derived from it). Per-epoch hooks receive stats over `ds`.
// Throws divergence_error when a batch objective becomes non-finite.
TrainedModel train(const ModelSpec& spec, const TrainConfig& cfg,
                   const LabeledDataset& ds,
                   const std::vector<epoch_hook>& hooks = {});

PerSampleStats eval_stats(const TrainedModel& model, const LabeledDataset& ds);

// Fraction correct over all of `ds`, or over mask-selected examples.
// Throws std::invalid_argument for an empty mask selection.
double accuracy(const TrainedModel& model, const LabeledDataset& ds);
double accuracy(const TrainedModel& model, const LabeledDataset& ds,
                const std::vector<std::uint8_t>& mask);

// Mean data loss over `indices` plus l2_lambda * ||weights||^2
// (biases unregularized).
double batch_objective(const TrainedModel& model, const LabeledDataset& ds,
                       const std::vector<std::size_t>& indices);

// Mean data-term gradient over `indices` (no regularizer), flat layout.
std::vector<double> batch_gradient(const TrainedModel& model,
                                   const LabeledDataset& ds,
                                   const std::vector<std::size_t>& indices);

// Per-example data-term gradient, flat layout.
std::vector<double> example_gradient(const TrainedModel& model,
                                     const LabeledDataset& ds, std::size_t i);

// JSON checkpoint with a mandatory version field.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

// Freshly initialized parameters (uniform +-1/sqrt(fan_in) per layer) from
// the "init" stream of `seed`; identical to what train() starts from.
TrainedModel init_model(const ModelSpec& spec, std::uint64_t seed);

// Adds the gradient of l2_lambda * ||weights||^2 (biases excluded) to grad.
void add_weight_regularizer_gradient(const ModelSpec& spec,
                                     const std::vector<double>& params,
                                     std::vector<double>& grad);

// Learning rate at 0-based step t of total_steps under cfg's schedule.
double lr_at_step(const TrainConfig& cfg, long t, long total_steps);

}  // namespace dris

#endif
