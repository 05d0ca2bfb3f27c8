#include "dris/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dris/rng.hpp"

namespace dris {

namespace {

// floor() intended over the reals: nudge so products like 0.12*2000, whose
// double value sits just below the integer, still land on it.
std::size_t real_floor(double x) {
    return static_cast<std::size_t>(std::floor(x + 1e-9));
}

SamplingPlan plan_from_masses(std::vector<double> masses, double xi) {
    const std::size_t n = masses.size();
    double total = 0.0;
    for (double m : masses) {
        if (!(m >= 0.0) || !std::isfinite(m))
            throw std::invalid_argument("sampling masses must be finite and >= 0");
        total += m;
    }
    if (total <= 0.0)
        throw std::invalid_argument(
            "degenerate sampling distribution: all masses are zero");
    SamplingPlan plan;
    plan.mode = plan_mode::online;
    plan.xi = xi;
    plan.probs.resize(n);
    plan.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        plan.probs[i] = masses[i] / total;
        if (plan.probs[i] <= 0.0)
            throw std::invalid_argument(
                "degenerate sampling distribution: zero-probability example");
        plan.weights[i] = 1.0 / (static_cast<double>(n) * plan.probs[i]);
    }
    return plan;
}

}  // namespace

SamplingPlan select_top_alpha(const ScoreVector& scores, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw std::invalid_argument("select_top_alpha: alpha must be in (0,1]");
    const std::size_t n = scores.values.size();
    if (n == 0) throw std::invalid_argument("select_top_alpha: empty scores");
    const std::size_t m = real_floor(alpha * static_cast<double>(n));
    if (m == 0)
        throw std::invalid_argument("select_top_alpha: alpha*N selects nothing");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores.values[a] > scores.values[b];
    });
    SamplingPlan plan;
    plan.mode = plan_mode::static_subset;
    plan.alpha = alpha;
    plan.kept_indices.assign(order.begin(), order.begin() + static_cast<long>(m));
    std::sort(plan.kept_indices.begin(), plan.kept_indices.end());
    return plan;
}

SamplingPlan online_distribution(const ScoreVector& scores, double xi) {
    if (!(xi > 0.0))
        throw std::invalid_argument("online_distribution: xi must be > 0");
    const std::size_t n = scores.values.size();
    if (n == 0) throw std::invalid_argument("online_distribution: empty scores");
    const double mean =
        std::accumulate(scores.values.begin(), scores.values.end(), 0.0) /
        static_cast<double>(n);
    std::vector<double> masses(n);
    for (std::size_t i = 0; i < n; ++i) masses[i] = scores.values[i] + xi * mean;
    return plan_from_masses(std::move(masses), xi);
}

SamplingPlan online_from_masses(const ScoreVector& masses) {
    return plan_from_masses(masses.values, 0.0);
}

int step_parity_epochs(int base_epochs, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw std::invalid_argument("step_parity_epochs: alpha must be in (0,1]");
    if (base_epochs < 1)
        throw std::invalid_argument("step_parity_epochs: base_epochs must be >= 1");
    return static_cast<int>(
        real_floor(static_cast<double>(base_epochs) / alpha));
}

std::vector<std::size_t> weighted_epoch_indices(const SamplingPlan& plan,
                                                std::size_t n, std::uint64_t seed) {
    if (plan.mode != plan_mode::online)
        throw std::invalid_argument("weighted_epoch_indices: plan must be online");
    if (plan.probs.empty())
        throw std::invalid_argument("weighted_epoch_indices: empty distribution");
    auto gen = named_stream(seed, "epoch-indices");
    std::discrete_distribution<std::size_t> dist(plan.probs.begin(),
                                                 plan.probs.end());
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = dist(gen);
    return out;
}

std::vector<double> unbiased_batch_gradient(const TrainedModel& model,
                                            const LabeledDataset& ds,
                                            const std::vector<std::size_t>& batch,
                                            const SamplingPlan& plan) {
    if (plan.mode != plan_mode::online)
        throw std::invalid_argument("unbiased_batch_gradient: plan must be online");
    if (batch.empty())
        throw std::invalid_argument("unbiased_batch_gradient: empty batch");
    std::vector<double> grad(model.num_params(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i : batch) {
        if (i >= plan.weights.size())
            throw std::invalid_argument(
                "unbiased_batch_gradient: index outside plan");
        const auto g = example_gradient(model, ds, i);
        const double w = plan.weights[i] * inv;
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += w * g[j];
    }
    return grad;
}

ScoreVector uniform_mix(const ScoreVector& scores, double k) {
    if (!(k >= 0.0 && k <= 1.0))
        throw std::invalid_argument("uniform_mix: k must be in [0,1]");
    const std::size_t n = scores.values.size();
    if (n == 0) throw std::invalid_argument("uniform_mix: empty scores");
    ScoreVector out;
    out.kind = score_kind::uniform_mix;
    out.param = k;
    out.values.resize(n);
    const double base = (1.0 - k) / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.values[i] = base + k * scores.values[i];
        total += out.values[i];
    }
    if (total <= 0.0)
        throw std::invalid_argument("uniform_mix: degenerate all-zero masses");
    return out;
}

void save_plan(const SamplingPlan& plan, const std::string& path) {
    nlohmann::json j;
    j["version"] = 1;
    if (plan.mode == plan_mode::static_subset) {
        j["mode"] = "static";
        j["alpha"] = plan.alpha;
        j["kept_indices"] = plan.kept_indices;
    } else {
        j["mode"] = "online";
        j["xi"] = plan.xi;
        j["probs"] = plan.probs;
        j["weights"] = plan.weights;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

SamplingPlan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw std::runtime_error("sampling plan: missing or unsupported version");
    SamplingPlan plan;
    const std::string mode = j["mode"].get<std::string>();
    if (mode == "static") {
        plan.mode = plan_mode::static_subset;
        plan.alpha = j["alpha"].get<double>();
        plan.kept_indices = j["kept_indices"].get<std::vector<std::size_t>>();
    } else if (mode == "online") {
        plan.mode = plan_mode::online;
        plan.xi = j["xi"].get<double>();
        plan.probs = j["probs"].get<std::vector<double>>();
        plan.weights = j["weights"].get<std::vector<double>>();
        if (plan.probs.size() != plan.weights.size())
            throw std::runtime_error("sampling plan: probs/weights length mismatch");
    } else {
        throw std::runtime_error("sampling plan: unknown mode " + mode);
    }
    return plan;
}

}  // namespace dris
