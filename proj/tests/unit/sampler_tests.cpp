#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "dris/model.hpp"
#include "dris/sampler.hpp"

using namespace dris;

namespace {

ScoreVector sv(std::vector<double> v) {
    ScoreVector s;
    s.values = std::move(v);
    s.kind = score_kind::rank_variance;
    return s;
}

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("top-alpha selection keeps the largest scores, ties by index") {
    const auto p = select_top_alpha(sv({0.3, 0.1, 0.2, 0.05}), 0.5);
    CHECK(p.mode == plan_mode::static_subset);
    CHECK(p.alpha == doctest::Approx(0.5));
    CHECK(p.kept_indices == std::vector<std::size_t>{0, 2});

    SUBCASE("alpha = 1 keeps everything") {
        const auto full = select_top_alpha(sv({0.3, 0.1, 0.2, 0.05}), 1.0);
        CHECK(full.kept_indices == std::vector<std::size_t>{0, 1, 2, 3});
    }
    SUBCASE("equal scores keep the earliest indices") {
        const auto tied = select_top_alpha(sv({1.0, 1.0, 1.0, 1.0}), 0.5);
        CHECK(tied.kept_indices == std::vector<std::size_t>{0, 1});
    }
    SUBCASE("awkward floors stay exact") {
        // floor(0.12 * 2000) must be 240 despite 0.12*2000 = 239.999...
        ScoreVector big;
        big.values.assign(2000, 0.0);
        std::iota(big.values.begin(), big.values.end(), 0.0);
        CHECK(select_top_alpha(big, 0.12).kept_indices.size() == 240);
    }
    SUBCASE("invalid alpha or empty keep rejected") {
        CHECK_THROWS_AS(select_top_alpha(sv({1, 2, 3, 4}), 0.0),
                        std::invalid_argument);
        CHECK_THROWS_AS(select_top_alpha(sv({1, 2, 3, 4}), 1.5),
                        std::invalid_argument);
        CHECK_THROWS_AS(select_top_alpha(sv({1, 2, 3, 4}), 0.1),
                        std::invalid_argument);  // floor(0.4) = 0 kept
    }
    SUBCASE("selection is invariant to monotone score transforms") {
        const std::vector<double> base = {0.9, 0.01, 0.4, 0.35, 0.07, 0.62};
        auto squared = base;
        for (auto& v : squared) v = v * v;  // monotone on nonnegatives
        CHECK(select_top_alpha(sv(base), 0.5).kept_indices ==
              select_top_alpha(sv(squared), 0.5).kept_indices);
    }
}

TEST_CASE("online distribution mixes scores with their mean") {
    const auto p = online_distribution(sv({0.1, 0.3}), 0.1);
    CHECK(p.mode == plan_mode::online);
    CHECK(p.xi == doctest::Approx(0.1));
    // masses 0.12 and 0.32 -> probs 3/11 and 8/11
    CHECK(p.probs[0] == doctest::Approx(3.0 / 11.0).epsilon(1e-14));
    CHECK(p.probs[1] == doctest::Approx(8.0 / 11.0).epsilon(1e-14));
    CHECK(p.weights[0] == doctest::Approx(11.0 / 6.0).epsilon(1e-14));
    CHECK(p.weights[1] == doctest::Approx(0.6875).epsilon(1e-14));

    SUBCASE("all-zero scores cannot form a distribution") {
        CHECK_THROWS_AS(online_distribution(sv({0.0, 0.0, 0.0, 0.0}), 0.1),
                        std::invalid_argument);
    }
    SUBCASE("xi must be positive") {
        CHECK_THROWS_AS(online_distribution(sv({0.1, 0.3}), 0.0),
                        std::invalid_argument);
    }
    SUBCASE("negative scores rejected") {
        CHECK_THROWS_AS(online_distribution(sv({-0.1, 0.3}), 0.1),
                        std::invalid_argument);
    }
    SUBCASE("probabilities scale-invariant in the scores") {
        auto a = online_distribution(sv({0.02, 0.1, 0.4}), 0.3);
        auto b = online_distribution(sv({0.2, 1.0, 4.0}), 0.3);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(a.probs[i] == doctest::Approx(b.probs[i]).epsilon(1e-13));
    }
}

TEST_CASE("plans from raw masses normalize and reject degenerates") {
    const auto p = online_from_masses(sv({0.12, 0.32}));
    CHECK(p.probs[0] == doctest::Approx(3.0 / 11.0).epsilon(1e-14));
    CHECK_THROWS_AS(online_from_masses(sv({0.0, 0.0})), std::invalid_argument);
    CHECK_THROWS_AS(online_from_masses(sv({0.5, -0.1})), std::invalid_argument);
    CHECK_THROWS_AS(online_from_masses(sv({0.0, 1.0})), std::invalid_argument);
}

TEST_CASE("plans keep expectations exactly unbiased") {
    std::mt19937_64 gen(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> scores(64), v(64);
    for (auto& x : scores) x = u(gen);
    for (auto& x : v) x = 2.0 * u(gen) - 1.0;
    const auto p = online_distribution(sv(scores), 0.2);
    double weighted = 0.0, plain = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        weighted += p.probs[i] * p.weights[i] * v[i];
        plain += v[i] / static_cast<double>(v.size());
    }
    CHECK(weighted == doctest::Approx(plain).epsilon(1e-12));
}

TEST_CASE("step parity stretches epochs by the kept fraction") {
    CHECK(step_parity_epochs(160, 0.25) == 640);
    CHECK(step_parity_epochs(200, 0.5) == 400);
    CHECK(step_parity_epochs(200, 1.0) == 200);
    CHECK(step_parity_epochs(200, 0.1) == 2000);   // guard against 1999.99...
    CHECK(step_parity_epochs(200, 0.12) == 1666);  // floor(1666.66)
    CHECK_THROWS_AS(step_parity_epochs(0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(step_parity_epochs(100, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(step_parity_epochs(100, 1.5), std::invalid_argument);
}

TEST_CASE("weighted epoch indices follow the plan distribution") {
    const auto plan = online_distribution(sv({0.05, 0.35}), 0.5);
    // expected probs: masses (0.15, 0.45) -> (0.25, 0.75)
    REQUIRE(plan.probs[0] == doctest::Approx(0.25));

    const auto a = weighted_epoch_indices(plan, 2, 9);
    const auto b = weighted_epoch_indices(plan, 2, 9);
    const auto c = weighted_epoch_indices(plan, 2, 10);
    CHECK(a == b);
    CHECK(a.size() == 2);

    std::size_t count1 = 0, total = 0;
    bool differs = false;
    for (std::uint64_t s = 0; s < 20000; ++s) {
        const auto idx = weighted_epoch_indices(plan, 2, s);
        differs = differs || idx != a;
        for (auto i : idx) {
            REQUIRE(i < 2);
            count1 += i;
            ++total;
        }
    }
    CHECK(differs);
    const double freq = static_cast<double>(count1) / static_cast<double>(total);
    CHECK(freq == doctest::Approx(0.75).epsilon(0.02));

    SUBCASE("static plans cannot drive online epochs") {
        const auto stat = select_top_alpha(sv({1, 2, 3, 4}), 0.5);
        CHECK_THROWS_AS(weighted_epoch_indices(stat, 4, 1),
                        std::invalid_argument);
    }
}

TEST_CASE("unbiased batch gradient reweights by 1/(N q_i)") {
    std::mt19937_64 gen(21);
    std::normal_distribution<double> normal(0.0, 1.0);
    LabeledDataset ds;
    ds.n = 5;
    ds.dim = 3;
    ds.num_classes = 2;
    ds.features.resize(15);
    for (auto& x : ds.features) x = normal(gen);
    ds.labels = {0, 1, 0, 1, 1};
    ds.clean_labels = ds.labels;
    ds.corrupt_mask.assign(5, 0);

    ModelSpec spec;
    spec.kind = model_kind::linear_squared_hinge;
    spec.input_dim = 3;
    spec.num_classes = 2;
    const auto m = init_model(spec, 2);

    const auto plan = online_distribution(sv({0.1, 0.2, 0.3, 0.15, 0.25}), 0.4);
    const std::vector<std::size_t> batch = {1, 3, 3};
    const auto g = unbiased_batch_gradient(m, ds, batch, plan);

    std::vector<double> expect(m.num_params(), 0.0);
    for (auto i : batch) {
        const auto gi = example_gradient(m, ds, i);
        for (std::size_t j = 0; j < expect.size(); ++j)
            expect[j] += plan.weights[i] * gi[j] / 3.0;
    }
    for (std::size_t j = 0; j < expect.size(); ++j)
        CHECK(g[j] == doctest::Approx(expect[j]).epsilon(1e-13));

    SUBCASE("static plans and out-of-range indices are rejected") {
        const auto stat = select_top_alpha(sv({5, 4, 3, 2, 1}), 0.4);
        CHECK_THROWS_AS(unbiased_batch_gradient(m, ds, {0}, stat),
                        std::invalid_argument);
        const auto small = online_distribution(sv({0.1, 0.2}), 0.4);
        CHECK_THROWS_AS(unbiased_batch_gradient(m, ds, {2}, small),
                        std::invalid_argument);
        CHECK_THROWS_AS(unbiased_batch_gradient(m, ds, {}, plan),
                        std::invalid_argument);
    }
}

TEST_CASE("uniform mix interpolates uniform mass with scores") {
    const auto mixed = uniform_mix(sv({0.0, 0.2}), 0.5);
    CHECK(mixed.kind == score_kind::uniform_mix);
    CHECK(mixed.param == doctest::Approx(0.5));
    CHECK(mixed.values[0] == doctest::Approx(0.25));
    CHECK(mixed.values[1] == doctest::Approx(0.35));

    SUBCASE("k = 0 is exactly uniform") {
        const auto u = uniform_mix(sv({0.9, 0.1}), 0.0);
        CHECK(u.values[0] == doctest::Approx(0.5));
        CHECK(u.values[1] == doctest::Approx(0.5));
    }
    SUBCASE("k = 1 returns the raw scores") {
        const auto raw = uniform_mix(sv({0.9, 0.1}), 1.0);
        CHECK(raw.values[0] == doctest::Approx(0.9));
        CHECK(raw.values[1] == doctest::Approx(0.1));
    }
    SUBCASE("k = 1 with all-zero scores leaves no mass anywhere") {
        CHECK_THROWS_AS(uniform_mix(sv({0.0, 0.0}), 1.0), std::invalid_argument);
    }
    SUBCASE("k outside [0,1] rejected") {
        CHECK_THROWS_AS(uniform_mix(sv({0.1}), -0.01), std::invalid_argument);
        CHECK_THROWS_AS(uniform_mix(sv({0.1}), 1.01), std::invalid_argument);
    }
}

TEST_CASE("plan files round trip in both modes") {
    const auto stat = select_top_alpha(sv({0.3, 0.1, 0.2, 0.05}), 0.5);
    const auto online = online_distribution(sv({0.1, 0.3}), 0.1);
    const auto p1 = tmp_path("dris_plan_static.json");
    const auto p2 = tmp_path("dris_plan_online.json");
    save_plan(stat, p1);
    save_plan(online, p2);
    const auto s2 = load_plan(p1);
    CHECK(s2.mode == plan_mode::static_subset);
    CHECK(s2.kept_indices == stat.kept_indices);
    CHECK(s2.alpha == doctest::Approx(stat.alpha));
    const auto o2 = load_plan(p2);
    CHECK(o2.mode == plan_mode::online);
    CHECK(o2.probs == online.probs);
    CHECK(o2.weights == online.weights);
    CHECK(o2.xi == doctest::Approx(online.xi));
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
    CHECK_THROWS_AS(load_plan("/nonexistent/plan.json"), std::runtime_error);
}
