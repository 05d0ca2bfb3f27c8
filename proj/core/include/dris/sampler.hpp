#ifndef DRIS_SAMPLER_HPP
#define DRIS_SAMPLER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dris/model.hpp"
#include "dris/scores.hpp"

namespace dris {

enum class plan_mode { static_subset, online };

struct SamplingPlan {
    plan_mode mode = plan_mode::static_subset;
    // static
    std::vector<std::size_t> kept_indices;  // unique, sorted
    double alpha = 1.0;
    // online
    std::vector<double> probs;    // sum to 1, all > 0
    std::vector<double> weights;  // 1 / (N * probs[i])
    double xi = 0.0;
};

// Indices of the floor(alpha*N) largest scores; ties by ascending index.
SamplingPlan select_top_alpha(const ScoreVector& scores, double alpha);

// probs[i] proportional to s_i + xi * mean(s); weights[i] = 1/(N probs[i]).
// Throws std::invalid_argument when every mass is zero.
SamplingPlan online_distribution(const ScoreVector& scores, double xi);

// As above but the scores are used directly as masses (xi recorded as 0);
// used for pre-mixed mass vectors such as uniform_mix output.
SamplingPlan online_from_masses(const ScoreVector& masses);

// floor(base_epochs / alpha): keeps total gradient steps constant when
// training on an alpha-fraction subset.
int step_parity_epochs(int base_epochs, double alpha);

// N i.i.d. draws from plan.probs; deterministic given seed.
std::vector<std::size_t> weighted_epoch_indices(const SamplingPlan& plan,
                                                std::size_t n, std::uint64_t seed);

// (1/|B|) sum_{i in B} weights[i] * grad_i(model), flat layout.
std::vector<double> unbiased_batch_gradient(const TrainedModel& model,
                                            const LabeledDataset& ds,
                                            const std::vector<std::size_t>& batch,
                                            const SamplingPlan& plan);

// Masses (1-k)/N + k * s_i as a score vector (kind=uniform_mix, param=k).
ScoreVector uniform_mix(const ScoreVector& scores, double k);

void save_plan(const SamplingPlan& plan, const std::string& path);
SamplingPlan load_plan(const std::string& path);

}  // namespace dris

#endif
