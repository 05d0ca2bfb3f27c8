#include "dris/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <span>

#include <nlohmann/json.hpp>

#include "dris/rng.hpp"

namespace dris {

std::string to_string(model_kind k) {
    switch (k) {
        case model_kind::linear_softmax: return "linear-softmax";
        case model_kind::linear_squared_hinge: return "linear-squared-hinge";
        case model_kind::mlp_1hidden: return "mlp-1hidden";
    }
    throw std::invalid_argument("unknown model kind");
}

model_kind model_kind_from_string(const std::string& s) {
    if (s == "linear-softmax") return model_kind::linear_softmax;
    if (s == "linear-squared-hinge") return model_kind::linear_squared_hinge;
    if (s == "mlp-1hidden") return model_kind::mlp_1hidden;
    throw std::invalid_argument("unknown model kind: " + s);
}

std::string to_string(lr_schedule s) {
    switch (s) {
        case lr_schedule::constant: return "constant";
        case lr_schedule::cosine: return "cosine";
        case lr_schedule::decreasing_clamped: return "decreasing-clamped";
    }
    throw std::invalid_argument("unknown schedule");
}

lr_schedule lr_schedule_from_string(const std::string& s) {
    if (s == "constant") return lr_schedule::constant;
    if (s == "cosine") return lr_schedule::cosine;
    if (s == "decreasing-clamped") return lr_schedule::decreasing_clamped;
    throw std::invalid_argument("unknown schedule: " + s);
}

namespace {

void validate_spec(const ModelSpec& spec) {
    if (spec.input_dim == 0) throw std::invalid_argument("model: input_dim must be > 0");
    if (spec.num_classes < 2) throw std::invalid_argument("model: num_classes must be >= 2");
    if (spec.kind == model_kind::mlp_1hidden && spec.hidden_width < 1)
        throw std::invalid_argument("model: hidden_width must be >= 1");
    if (spec.l2_lambda < 0.0) throw std::invalid_argument("model: l2_lambda must be >= 0");
}

struct Layout {
    std::size_t d, h, c;
    bool mlp;
    // linear: [W (c x d) | b (c)]
    // mlp:    [W1 (h x d) | b1 (h) | W2 (c x h) | b2 (c)]
    std::size_t w1_off() const { return 0; }
    std::size_t b1_off() const { return h * d; }
    std::size_t w2_off() const { return h * d + h; }
    std::size_t b2_off() const { return h * d + h + c * h; }
    std::size_t total() const {
        return mlp ? h * d + h + c * h + c : c * d + c;
    }
};

Layout layout_of(const ModelSpec& spec) {
    Layout l{};
    l.d = spec.input_dim;
    l.h = spec.hidden_width;
    l.c = static_cast<std::size_t>(spec.num_classes);
    l.mlp = spec.kind == model_kind::mlp_1hidden;
    return l;
}

// Adds 2*lambda*w over weight-matrix entries (biases unregularized).
void add_l2_gradient(const ModelSpec& spec, const std::vector<double>& params,
                     std::vector<double>& grad) {
    if (spec.l2_lambda == 0.0) return;
    const Layout l = layout_of(spec);
    const double two_lambda = 2.0 * spec.l2_lambda;
    if (!l.mlp) {
        for (std::size_t i = 0; i < l.c * l.d; ++i) grad[i] += two_lambda * params[i];
    } else {
        for (std::size_t i = 0; i < l.h * l.d; ++i) grad[i] += two_lambda * params[i];
        for (std::size_t i = l.w2_off(); i < l.w2_off() + l.c * l.h; ++i)
            grad[i] += two_lambda * params[i];
    }
}

double weight_sq_norm(const ModelSpec& spec, const std::vector<double>& params) {
    const Layout l = layout_of(spec);
    double s = 0.0;
    if (!l.mlp) {
        for (std::size_t i = 0; i < l.c * l.d; ++i) s += params[i] * params[i];
    } else {
        for (std::size_t i = 0; i < l.h * l.d; ++i) s += params[i] * params[i];
        for (std::size_t i = l.w2_off(); i < l.w2_off() + l.c * l.h; ++i)
            s += params[i] * params[i];
    }
    return s;
}

struct ExampleWork {
    std::vector<double> logits, dlogits, probs, hidden, dact;
};

// Forward pass; logits into w.logits (and w.hidden for the mlp).
void forward(const TrainedModel& m, std::span<const double> x, ExampleWork& w) {
    const Layout l = layout_of(m.spec);
    const auto& p = m.params;
    w.logits.assign(l.c, 0.0);
    if (!l.mlp) {
        for (std::size_t c = 0; c < l.c; ++c) {
            double z = p[l.c * l.d + c];
            const double* row = p.data() + c * l.d;
            for (std::size_t j = 0; j < l.d; ++j) z += row[j] * x[j];
            w.logits[c] = z;
        }
        return;
    }
    w.hidden.assign(l.h, 0.0);
    for (std::size_t u = 0; u < l.h; ++u) {
        double a = p[l.b1_off() + u];
        const double* row = p.data() + l.w1_off() + u * l.d;
        for (std::size_t j = 0; j < l.d; ++j) a += row[j] * x[j];
        w.hidden[u] = std::tanh(a);
    }
    for (std::size_t c = 0; c < l.c; ++c) {
        double z = p[l.b2_off() + c];
        const double* row = p.data() + l.w2_off() + c * l.h;
        for (std::size_t u = 0; u < l.h; ++u) z += row[u] * w.hidden[u];
        w.logits[c] = z;
    }
}

void softmax_into(const std::vector<double>& z, std::vector<double>& p) {
    p.resize(z.size());
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - zmax);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
}

// Loss and dloss/dlogits for one example.
double loss_and_dlogits(const ModelSpec& spec, const std::vector<double>& logits,
                        int y, std::vector<double>& dlogits,
                        std::vector<double>& probs) {
    const std::size_t c = logits.size();
    dlogits.assign(c, 0.0);
    if (spec.kind == model_kind::linear_squared_hinge) {
        double loss = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            const double t = static_cast<int>(k) == y ? 1.0 : -1.0;
            const double u = std::max(0.0, 1.0 - t * logits[k]);
            loss += u * u;
            dlogits[k] = -2.0 * u * t;
        }
        return loss;
    }
    softmax_into(logits, probs);
    for (std::size_t k = 0; k < c; ++k)
        dlogits[k] = probs[k] - (static_cast<int>(k) == y ? 1.0 : 0.0);
    const double py = std::max(probs[static_cast<std::size_t>(y)], 1e-300);
    return -std::log(py);
}

// Accumulates this example's parameter gradient (scaled by `scale`) into
// `grad`; returns the squared norm of the unscaled per-example gradient.
double backward_accumulate(const TrainedModel& m, std::span<const double> x,
                           const ExampleWork& w, double scale,
                           std::vector<double>* grad) {
    const Layout l = layout_of(m.spec);
    double x_sq = 0.0;
    for (std::size_t j = 0; j < l.d; ++j) x_sq += x[j] * x[j];
    if (!l.mlp) {
        double dz_sq = 0.0;
        for (std::size_t c = 0; c < l.c; ++c) dz_sq += w.dlogits[c] * w.dlogits[c];
        if (grad) {
            for (std::size_t c = 0; c < l.c; ++c) {
                const double g = scale * w.dlogits[c];
                double* row = grad->data() + c * l.d;
                for (std::size_t j = 0; j < l.d; ++j) row[j] += g * x[j];
                (*grad)[l.c * l.d + c] += g;
            }
        }
        return dz_sq * (x_sq + 1.0);
    }
    const auto& p = m.params;
    double dz_sq = 0.0, h_sq = 0.0;
    for (std::size_t c = 0; c < l.c; ++c) dz_sq += w.dlogits[c] * w.dlogits[c];
    for (std::size_t u = 0; u < l.h; ++u) h_sq += w.hidden[u] * w.hidden[u];
    // dact = (W2^T dlogits) * (1 - hidden^2)
    thread_local std::vector<double> dact;
    dact.assign(l.h, 0.0);
    for (std::size_t c = 0; c < l.c; ++c) {
        const double dz = w.dlogits[c];
        const double* row = p.data() + l.w2_off() + c * l.h;
        for (std::size_t u = 0; u < l.h; ++u) dact[u] += dz * row[u];
    }
    double da_sq = 0.0;
    for (std::size_t u = 0; u < l.h; ++u) {
        dact[u] *= 1.0 - w.hidden[u] * w.hidden[u];
        da_sq += dact[u] * dact[u];
    }
    if (grad) {
        for (std::size_t u = 0; u < l.h; ++u) {
            const double g = scale * dact[u];
            double* row = grad->data() + l.w1_off() + u * l.d;
            for (std::size_t j = 0; j < l.d; ++j) row[j] += g * x[j];
            (*grad)[l.b1_off() + u] += g;
        }
        for (std::size_t c = 0; c < l.c; ++c) {
            const double g = scale * w.dlogits[c];
            double* row = grad->data() + l.w2_off() + c * l.h;
            for (std::size_t u = 0; u < l.h; ++u) row[u] += g * w.hidden[u];
            (*grad)[l.b2_off() + c] += g;
        }
    }
    return da_sq * (x_sq + 1.0) + dz_sq * (h_sq + 1.0);
}

}  // namespace

std::size_t TrainedModel::num_params() const { return layout_of(spec).total(); }

TrainedModel init_model(const ModelSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    const Layout l = layout_of(spec);
    TrainedModel model;
    model.spec = spec;
    model.params.resize(l.total());
    auto init_gen = named_stream(seed, "init");
    auto init_layer = [&](std::size_t off, std::size_t count, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t i = 0; i < count; ++i) model.params[off + i] = u(init_gen);
    };
    if (!l.mlp) {
        init_layer(0, l.c * l.d + l.c, l.d);
    } else {
        init_layer(l.w1_off(), l.h * l.d + l.h, l.d);
        init_layer(l.w2_off(), l.c * l.h + l.c, l.h);
    }
    return model;
}

void add_weight_regularizer_gradient(const ModelSpec& spec,
                                     const std::vector<double>& params,
                                     std::vector<double>& grad) {
    add_l2_gradient(spec, params, grad);
}

void TrainedModel::logits(std::span<const double> x, std::vector<double>& out) const {
    thread_local ExampleWork w;
    forward(*this, x, w);
    out = w.logits;
}

double lr_at_step(const TrainConfig& cfg, long t, long total_steps) {
    switch (cfg.schedule) {
        case lr_schedule::constant:
            return cfg.lr;
        case lr_schedule::cosine: {
            const double frac = total_steps > 0
                                    ? static_cast<double>(t) / static_cast<double>(total_steps)
                                    : 0.0;
            return cfg.lr * 0.5 * (1.0 + std::cos(M_PI * frac));
        }
        case lr_schedule::decreasing_clamped: {
            const double t0 = static_cast<double>(total_steps) / 10.0;
            const double lr = t0 > 0.0 ? cfg.lr / (1.0 + static_cast<double>(t) / t0)
                                       : cfg.lr;
            return std::max(lr, cfg.lr / 100.0);
        }
    }
    throw std::invalid_argument("unknown schedule");
}

TrainedModel train(const ModelSpec& spec, const TrainConfig& cfg,
                   const LabeledDataset& ds, const std::vector<epoch_hook>& hooks) {
    validate_spec(spec);
    if (spec.input_dim != ds.dim || spec.num_classes != ds.num_classes)
        throw std::invalid_argument("train: model/dataset shape mismatch");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
        throw std::invalid_argument("train: momentum must be in [0,1)");

    const Layout l = layout_of(spec);
    TrainedModel model = init_model(spec, cfg.seed);

    const std::size_t n = ds.n;
    const std::size_t bs = std::min(cfg.batch_size, n);
    const long batches_per_epoch = static_cast<long>((n + bs - 1) / bs);
    const long total_steps = static_cast<long>(cfg.epochs) * batches_per_epoch;

    auto shuffle_gen = named_stream(cfg.seed, "shuffle");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> grad(l.total());
    std::vector<double> velocity;
    if (cfg.momentum > 0.0) velocity.assign(l.total(), 0.0);
    ExampleWork w;
    long t = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_gen);
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(start + bs, n);
            const double inv = 1.0 / static_cast<double>(end - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t bi = start; bi < end; ++bi) {
                const std::size_t i = order[bi];
                forward(model, ds.row(i), w);
                batch_loss +=
                    loss_and_dlogits(spec, w.logits, ds.labels[i], w.dlogits, w.probs);
                backward_accumulate(model, ds.row(i), w, inv, &grad);
            }
            batch_loss = batch_loss * inv +
                         spec.l2_lambda * weight_sq_norm(spec, model.params);
            if (!std::isfinite(batch_loss)) throw divergence_error(epoch);
            add_l2_gradient(spec, model.params, grad);
            const double lr = lr_at_step(cfg, t, total_steps);
            if (cfg.weight_decay > 0.0)
                for (std::size_t i = 0; i < grad.size(); ++i)
                    grad[i] += cfg.weight_decay * model.params[i];
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
        if (!hooks.empty()) {
            const PerSampleStats stats = eval_stats(model, ds);
            for (const auto& hook : hooks) hook(epoch, model, stats);
        }
    }
    return model;
}

PerSampleStats eval_stats(const TrainedModel& model, const LabeledDataset& ds) {
    if (model.spec.input_dim != ds.dim || model.spec.num_classes != ds.num_classes)
        throw std::invalid_argument("eval_stats: model/dataset shape mismatch");
    const std::size_t n = ds.n;
    PerSampleStats s;
    s.loss.resize(n);
    s.margin.resize(n);
    s.grad_norm.resize(n);
    s.correct.resize(n);
    ExampleWork w;
    for (std::size_t i = 0; i < n; ++i) {
        forward(model, ds.row(i), w);
        const int y = ds.labels[i];
        s.loss[i] = loss_and_dlogits(model.spec, w.logits, y, w.dlogits, w.probs);
        double best_other = -std::numeric_limits<double>::infinity();
        std::size_t argmax = 0;
        for (std::size_t k = 0; k < w.logits.size(); ++k) {
            if (w.logits[k] > w.logits[argmax]) argmax = k;
            if (static_cast<int>(k) != y && w.logits[k] > best_other)
                best_other = w.logits[k];
        }
        s.margin[i] = w.logits[static_cast<std::size_t>(y)] - best_other;
        s.grad_norm[i] = std::sqrt(backward_accumulate(model, ds.row(i), w, 0.0, nullptr));
        s.correct[i] = static_cast<int>(argmax) == y ? 1 : 0;
    }
    return s;
}

double accuracy(const TrainedModel& model, const LabeledDataset& ds) {
    std::vector<std::uint8_t> all(ds.n, 1);
    return accuracy(model, ds, all);
}

double accuracy(const TrainedModel& model, const LabeledDataset& ds,
                const std::vector<std::uint8_t>& mask) {
    if (mask.size() != ds.n)
        throw std::invalid_argument("accuracy: mask length mismatch");
    std::size_t total = 0, correct = 0;
    ExampleWork w;
    for (std::size_t i = 0; i < ds.n; ++i) {
        if (!mask[i]) continue;
        ++total;
        forward(model, ds.row(i), w);
        std::size_t argmax = 0;
        for (std::size_t k = 1; k < w.logits.size(); ++k)
            if (w.logits[k] > w.logits[argmax]) argmax = k;
        if (static_cast<int>(argmax) == ds.labels[i]) ++correct;
    }
    if (total == 0)
        throw std::invalid_argument("accuracy: empty mask selection");
    return static_cast<double>(correct) / static_cast<double>(total);
}

double batch_objective(const TrainedModel& model, const LabeledDataset& ds,
                       const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("batch_objective: empty batch");
    ExampleWork w;
    double loss = 0.0;
    for (std::size_t i : indices) {
        forward(model, ds.row(i), w);
        loss += loss_and_dlogits(model.spec, w.logits, ds.labels[i], w.dlogits, w.probs);
    }
    return loss / static_cast<double>(indices.size()) +
           model.spec.l2_lambda * weight_sq_norm(model.spec, model.params);
}

std::vector<double> batch_gradient(const TrainedModel& model,
                                   const LabeledDataset& ds,
                                   const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    std::vector<double> grad(model.num_params(), 0.0);
    ExampleWork w;
    const double inv = 1.0 / static_cast<double>(indices.size());
    for (std::size_t i : indices) {
        forward(model, ds.row(i), w);
        loss_and_dlogits(model.spec, w.logits, ds.labels[i], w.dlogits, w.probs);
        backward_accumulate(model, ds.row(i), w, inv, &grad);
    }
    return grad;
}

std::vector<double> example_gradient(const TrainedModel& model,
                                     const LabeledDataset& ds, std::size_t i) {
    return batch_gradient(model, ds, {i});
}

void save_model(const TrainedModel& model, const std::string& path) {
    nlohmann::json j;
    j["version"] = 1;
    j["kind"] = to_string(model.spec.kind);
    j["input_dim"] = model.spec.input_dim;
    j["num_classes"] = model.spec.num_classes;
    j["hidden_width"] = model.spec.hidden_width;
    j["l2_lambda"] = model.spec.l2_lambda;
    j["params"] = model.params;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw std::runtime_error("model checkpoint: missing or unsupported version");
    TrainedModel m;
    m.spec.kind = model_kind_from_string(j["kind"].get<std::string>());
    m.spec.input_dim = j["input_dim"].get<std::size_t>();
    m.spec.num_classes = j["num_classes"].get<int>();
    m.spec.hidden_width = j["hidden_width"].get<std::size_t>();
    m.spec.l2_lambda = j["l2_lambda"].get<double>();
    m.params = j["params"].get<std::vector<double>>();
    if (m.params.size() != m.num_params())
        throw std::runtime_error("model checkpoint: parameter count mismatch");
    return m;
}

}  // namespace dris
