#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "dris/dataset.hpp"
#include "dris/model.hpp"

using namespace dris;

namespace {

LabeledDataset tiny_data(std::size_t n, std::size_t d, int classes,
                         std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> lab(0, classes - 1);
    LabeledDataset ds;
    ds.n = n;
    ds.dim = d;
    ds.num_classes = classes;
    ds.features.resize(n * d);
    for (auto& v : ds.features) v = normal(gen);
    ds.labels.resize(n);
    for (auto& y : ds.labels) y = lab(gen);
    ds.clean_labels = ds.labels;
    ds.corrupt_mask.assign(n, 0);
    return ds;
}

ModelSpec make_spec(model_kind kind, std::size_t d, int c, double l2 = 0.0) {
    ModelSpec spec;
    spec.kind = kind;
    spec.input_dim = d;
    spec.num_classes = c;
    spec.hidden_width = 4;
    spec.l2_lambda = l2;
    return spec;
}

// Central finite differences of the batch objective.
std::vector<double> fd_gradient(const TrainedModel& model,
                                const LabeledDataset& ds,
                                const std::vector<std::size_t>& batch,
                                double h = 1e-6) {
    std::vector<double> g(model.params.size());
    TrainedModel m = model;
    for (std::size_t j = 0; j < m.params.size(); ++j) {
        const double orig = m.params[j];
        m.params[j] = orig + h;
        const double up = batch_objective(m, ds, batch);
        m.params[j] = orig - h;
        const double dn = batch_objective(m, ds, batch);
        m.params[j] = orig;
        g[j] = (up - dn) / (2.0 * h);
    }
    return g;
}

double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("init_model draws uniform weights within the fan-in bound") {
    for (auto kind : {model_kind::linear_softmax, model_kind::linear_squared_hinge,
                      model_kind::mlp_1hidden}) {
        const auto spec = make_spec(kind, 9, 3);
        const auto m = init_model(spec, 5);
        const auto m2 = init_model(spec, 5);
        const auto m3 = init_model(spec, 6);
        CHECK(m.params == m2.params);
        CHECK(m.params != m3.params);
        const double bound = 1.0 / std::sqrt(9.0) + 1e-12;
        std::size_t first_block = spec.num_classes * spec.input_dim;
        if (kind == model_kind::mlp_1hidden)
            first_block = spec.hidden_width * spec.input_dim;
        for (std::size_t j = 0; j < first_block; ++j)
            CHECK(std::abs(m.params[j]) <= bound);
    }
}

TEST_CASE("parameter counts follow the layout") {
    const auto lin = init_model(make_spec(model_kind::linear_softmax, 7, 3), 1);
    CHECK(lin.num_params() == 3 * 7 + 3);
    auto spec = make_spec(model_kind::mlp_1hidden, 7, 3);
    spec.hidden_width = 5;
    const auto mlp = init_model(spec, 1);
    CHECK(mlp.num_params() == 5 * 7 + 5 + 3 * 5 + 3);
}

TEST_CASE("learning-rate schedules") {
    TrainConfig cfg;
    cfg.lr = 0.01;

    SUBCASE("constant") {
        cfg.schedule = lr_schedule::constant;
        CHECK(lr_at_step(cfg, 0, 100) == doctest::Approx(0.01));
        CHECK(lr_at_step(cfg, 99, 100) == doctest::Approx(0.01));
    }
    SUBCASE("cosine reaches zero at the horizon") {
        cfg.schedule = lr_schedule::cosine;
        CHECK(lr_at_step(cfg, 0, 100) == doctest::Approx(0.01));
        CHECK(lr_at_step(cfg, 50, 100) == doctest::Approx(0.005));
        CHECK(lr_at_step(cfg, 100, 100) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("decreasing schedule is clamped at one percent") {
        cfg.schedule = lr_schedule::decreasing_clamped;
        // t0 = total/10 = 10 steps
        CHECK(lr_at_step(cfg, 0, 100) == doctest::Approx(0.01));
        CHECK(lr_at_step(cfg, 10, 100) == doctest::Approx(0.005));
        CHECK(lr_at_step(cfg, 990, 100) == doctest::Approx(0.0001));
        CHECK(lr_at_step(cfg, 100000, 100) == doctest::Approx(0.0001));
    }
}

TEST_CASE("batch objective separates data term and weight penalty") {
    // Zero weights, explicit bias: the l2 term must ignore the bias.
    auto spec = make_spec(model_kind::linear_softmax, 2, 2, 0.5);
    TrainedModel m = init_model(spec, 1);
    std::fill(m.params.begin(), m.params.end(), 0.0);

    LabeledDataset ds = tiny_data(1, 2, 2, 3);
    ds.labels[0] = 0;
    ds.clean_labels[0] = 0;

    // All-zero parameters: softmax is uniform, loss = log 2, penalty = 0.
    CHECK(batch_objective(m, ds, {0}) == doctest::Approx(std::log(2.0)));

    // A pure bias shift changes the data term but adds no penalty.
    m.params[4] = 3.0;  // bias of class 0
    const double expect = std::log(1.0 + std::exp(-3.0));
    CHECK(batch_objective(m, ds, {0}) == doctest::Approx(expect));

    // A weight entry is penalized by lambda * w^2.
    std::fill(m.params.begin(), m.params.end(), 0.0);
    m.params[0] = 2.0;
    const double data = batch_objective(m, ds, {0}) - 0.5 * 4.0;
    TrainedModel unpenalized = m;
    unpenalized.spec.l2_lambda = 0.0;
    CHECK(batch_objective(unpenalized, ds, {0}) == doctest::Approx(data));
}

TEST_CASE("analytic gradients match central finite differences") {
    const LabeledDataset ds = tiny_data(6, 3, 3, 17);
    const std::vector<std::size_t> batch = {0, 1, 2, 3, 4, 5};
    for (auto kind : {model_kind::linear_softmax, model_kind::linear_squared_hinge,
                      model_kind::mlp_1hidden}) {
        const auto spec = make_spec(kind, 3, 3, 0.05);
        const auto m = init_model(spec, 23);
        auto g = batch_gradient(m, ds, batch);
        add_weight_regularizer_gradient(spec, m.params, g);
        const auto fd = fd_gradient(m, ds, batch);
        CHECK(max_rel_err(g, fd) < 1e-5);
    }
}

TEST_CASE("example gradient equals single-element batch gradient") {
    const LabeledDataset ds = tiny_data(4, 3, 2, 29);
    const auto spec = make_spec(model_kind::linear_squared_hinge, 3, 2, 0.0);
    const auto m = init_model(spec, 31);
    const auto ge = example_gradient(m, ds, 2);
    const auto gb = batch_gradient(m, ds, {2});
    CHECK(max_rel_err(ge, gb) < 1e-12);
}

TEST_CASE("eval_stats reports margins, correctness, losses") {
    auto spec = make_spec(model_kind::linear_softmax, 2, 3);
    TrainedModel m = init_model(spec, 1);
    std::fill(m.params.begin(), m.params.end(), 0.0);
    // logits = bias = (2, 0, 1)
    m.params[6] = 2.0;
    m.params[8] = 1.0;

    LabeledDataset ds = tiny_data(2, 2, 3, 3);
    ds.labels = {0, 1};
    ds.clean_labels = ds.labels;

    const auto st = eval_stats(m, ds);
    CHECK(st.margin[0] == doctest::Approx(1.0));   // 2 - max(0,1)
    CHECK(st.margin[1] == doctest::Approx(-2.0));  // 0 - max(2,1)
    CHECK(st.correct[0] == 1);
    CHECK(st.correct[1] == 0);
    const double z = std::exp(2.0) + 1.0 + std::exp(1.0);
    CHECK(st.loss[0] == doctest::Approx(-std::log(std::exp(2.0) / z)));
    CHECK(st.loss[1] == doctest::Approx(-std::log(1.0 / z)));
    CHECK(st.grad_norm[0] > 0.0);

    CHECK(accuracy(m, ds) == doctest::Approx(0.5));
    CHECK(accuracy(m, ds, std::vector<std::uint8_t>{1, 0}) ==
          doctest::Approx(1.0));
    CHECK_THROWS_AS(accuracy(m, ds, std::vector<std::uint8_t>{0, 0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(accuracy(m, ds, std::vector<std::uint8_t>{1}),
                    std::invalid_argument);
}

TEST_CASE("training is deterministic and validates its config") {
    const LabeledDataset ds = tiny_data(30, 4, 2, 41);
    const auto spec = make_spec(model_kind::linear_squared_hinge, 4, 2, 0.1);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.lr = 0.05;
    cfg.seed = 77;

    const auto a = train(spec, cfg, ds);
    const auto b = train(spec, cfg, ds);
    CHECK(a.params == b.params);

    TrainConfig bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(train(spec, bad, ds), std::invalid_argument);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(spec, bad, ds), std::invalid_argument);
    bad = cfg;
    bad.momentum = 1.0;
    CHECK_THROWS_AS(train(spec, bad, ds), std::invalid_argument);
}

TEST_CASE("training reduces the objective on a learnable problem") {
    const auto ds = generate_synthetic([] {
        SyntheticSpec sp;
        sp.n = 300;
        sp.d = 6;
        sp.seed = 3;
        return sp;
    }());
    const auto spec = make_spec(model_kind::linear_squared_hinge, 6, 2, 0.01);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = ds.n;
    cfg.lr = 0.05;
    cfg.seed = 5;
    std::vector<std::size_t> all(ds.n);
    std::iota(all.begin(), all.end(), 0);
    const auto start = init_model(spec, cfg.seed);
    const auto done = train(spec, cfg, ds);
    CHECK(batch_objective(done, ds, all) < batch_objective(start, ds, all));
    CHECK(accuracy(done, ds) > 0.85);
}

TEST_CASE("epoch hooks fire once per epoch with live statistics") {
    const LabeledDataset ds = tiny_data(20, 3, 2, 51);
    const auto spec = make_spec(model_kind::linear_softmax, 3, 2, 0.0);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 5;
    cfg.lr = 0.05;
    cfg.seed = 1;
    std::vector<int> epochs;
    const auto m = train(spec, cfg, ds,
                         {[&](int e, const TrainedModel& model,
                              const PerSampleStats& st) {
                             epochs.push_back(e);
                             CHECK(st.loss.size() == ds.n);
                             CHECK(model.num_params() == 3 * 2 + 2);
                         }});
    CHECK(epochs == std::vector<int>{1, 2, 3});
    CHECK(m.num_params() == 8);
}

TEST_CASE("divergence raises a structured error naming the epoch") {
    const LabeledDataset ds = tiny_data(16, 3, 2, 61);
    const auto spec = make_spec(model_kind::linear_squared_hinge, 3, 2, 0.0);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 16;
    cfg.lr = 1e12;  // squared-hinge loss explodes under this step size
    cfg.schedule = lr_schedule::constant;
    cfg.seed = 2;
    try {
        train(spec, cfg, ds);
        FAIL("expected divergence");
    } catch (const divergence_error& e) {
        CHECK(e.epoch >= 1);
        CHECK(e.epoch <= 50);
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
}

TEST_CASE("model save/load round trip") {
    const auto spec = make_spec(model_kind::mlp_1hidden, 4, 3, 0.2);
    const auto m = init_model(spec, 9);
    const auto path =
        (std::filesystem::temp_directory_path() / "dris_model.json").string();
    save_model(m, path);
    const auto back = load_model(path);
    CHECK(back.params == m.params);
    CHECK(back.spec.kind == m.spec.kind);
    CHECK(back.spec.input_dim == m.spec.input_dim);
    CHECK(back.spec.hidden_width == m.spec.hidden_width);
    CHECK(back.spec.l2_lambda == doctest::Approx(m.spec.l2_lambda));

    // Tampered parameter count must be rejected.
    {
        std::ofstream f(path);
        f << R"({"version":1,"kind":"linear-softmax","input_dim":2,)"
          << R"("num_classes":2,"hidden_width":4,"l2_lambda":0.0,)"
          << R"("params":[0.0,0.0,0.0]})";
    }
    CHECK_THROWS_AS(load_model(path), std::runtime_error);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_model("/nonexistent/m.json"), std::runtime_error);
}

TEST_CASE("regularizer gradient touches weights only") {
    const auto spec = make_spec(model_kind::linear_softmax, 3, 2, 0.25);
    const auto m = init_model(spec, 4);
    std::vector<double> grad(m.num_params(), 0.0);
    add_weight_regularizer_gradient(spec, m.params, grad);
    for (std::size_t j = 0; j < 6; ++j)
        CHECK(grad[j] == doctest::Approx(2.0 * 0.25 * m.params[j]));
    CHECK(grad[6] == 0.0);
    CHECK(grad[7] == 0.0);
}

TEST_CASE("model kind and schedule names round trip") {
    CHECK(to_string(model_kind::linear_softmax) == "linear-softmax");
    CHECK(model_kind_from_string("mlp-1hidden") == model_kind::mlp_1hidden);
    CHECK_THROWS_AS(model_kind_from_string("resnet"), std::invalid_argument);
    CHECK(to_string(lr_schedule::decreasing_clamped) == "decreasing-clamped");
    CHECK(lr_schedule_from_string("cosine") == lr_schedule::cosine);
    CHECK_THROWS_AS(lr_schedule_from_string("warmup"), std::invalid_argument);
}
