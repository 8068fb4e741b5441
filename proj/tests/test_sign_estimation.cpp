#include "checkpoint.hpp"
#include "rng.hpp"
#include "sign_estimation.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>

using namespace gradfix;

namespace {

ParamVector one_segment(const std::vector<double> & values) {
    ParamVector v;
    Segment s;
    s.name = "w";
    s.shape = {static_cast<int64_t>(values.size())};
    s.values = values;
    v.segments.push_back(std::move(s));
    return v;
}

// 1-d linear 2-class model with zero parameters: for label 1 the per-sample
// gradient of the class-0 weight is 0.5*x, so per-sample gradient signs are
// fully scripted by the features.
struct ScriptedGrads {
    ModelSpec spec;
    ParamVector theta;
    LabeledDataset data;

    explicit ScriptedGrads(const std::vector<double> & xs) {
        spec.input_dim = 1;
        spec.num_classes = 2;
        theta = param_layout(spec);
        data.input_dim = 1;
        data.split = "scripted";
        for (size_t i = 0; i < xs.size(); i++) {
            data.features.push_back(xs[i]);
            data.labels.push_back(1);
            data.ids.push_back(static_cast<int64_t>(i));
        }
    }
};

} // namespace

TEST_SUITE("sign_estimation") {

TEST_CASE("vote accumulator counts and margins") {
    const auto layout = one_segment({0.0, 0.0, 0.0});
    VoteAccumulator acc(layout, 0.0);
    acc.add(one_segment({1.0, -2.0, 0.5}));
    acc.add(one_segment({2.0, 1.0, -0.5}));
    acc.add(one_segment({-1.0, 3.0, 0.25}));
    const auto est = acc.finish();
    CHECK(est.n_samples == 3);
    CHECK(est.signs.segments[0].values == std::vector<int8_t>{1, 1, 1});
    CHECK(est.vote_margin[0] == std::vector<int32_t>{1, 1, 1});
}

TEST_CASE("tied votes give sign zero") {
    const auto layout = one_segment({0.0});
    VoteAccumulator acc(layout, 0.0);
    acc.add(one_segment({1.0}));
    acc.add(one_segment({-1.0}));
    const auto est = acc.finish();
    CHECK(est.signs.segments[0].values[0] == 0);
    CHECK(est.vote_margin[0][0] == 0);
}

TEST_CASE("zero gradients cast no vote") {
    const auto layout = one_segment({0.0, 0.0});
    VoteAccumulator acc(layout, 0.0);
    acc.add(one_segment({0.0, 1.0}));
    acc.add(one_segment({0.0, 1.0}));
    acc.add(one_segment({-3.0, 1.0}));
    const auto est = acc.finish();
    CHECK(est.signs.segments[0].values == std::vector<int8_t>{-1, 1});
    CHECK(est.vote_margin[0] == std::vector<int32_t>{1, 3});
}

TEST_CASE("N=1 majority equals the single sample's signs") {
    ScriptedGrads fx({0.7});
    const auto est = majority_vote_signs(fx.theta, fx.data, fx.spec, 0.0);
    const auto g = per_sample_grad(fx.theta, fx.data, 0, fx.spec);
    const auto expected = sign_of(g, 0.0);
    for (size_t s = 0; s < expected.segments.size(); s++) {
        CHECK(est.signs.segments[s].values == expected.segments[s].values);
    }
    // degenerate agreement between the two estimators
    const auto mean_est = mean_signs(fx.theta, fx.data, fx.spec, 0.0);
    for (size_t s = 0; s < expected.segments.size(); s++) {
        CHECK(mean_est.signs.segments[s].values == est.signs.segments[s].values);
    }
}

TEST_CASE("outliers flip the mean but not the majority") {
    // class-0 weight per-sample gradients: {+0.1, +0.1, -10}
    ScriptedGrads fx({0.2, 0.2, -20.0});
    const auto maj = majority_vote_signs(fx.theta, fx.data, fx.spec, 0.0);
    const auto mean = mean_signs(fx.theta, fx.data, fx.spec, 0.0);
    // segment layer0.w has shape (2,1): rows are class 0 and class 1
    CHECK(maj.signs.segments[0].values[0] == 1);
    CHECK(mean.signs.segments[0].values[0] == -1);
    CHECK(maj.vote_margin[0][0] == 1);
    CHECK(mean.vote_margin[0][0] == 0);  // undefined, stored zero
}

TEST_CASE("majority voting is invariant to sample order and duplication") {
    ScriptedGrads fx({0.3, -1.0, 0.8, 0.5, -0.2});
    const auto est = majority_vote_signs(fx.theta, fx.data, fx.spec, 0.0);

    // reversed order
    ScriptedGrads rev({-0.2, 0.5, 0.8, -1.0, 0.3});
    const auto est_rev = majority_vote_signs(rev.theta, rev.data, rev.spec, 0.0);
    for (size_t s = 0; s < est.signs.segments.size(); s++) {
        CHECK(est.signs.segments[s].values == est_rev.signs.segments[s].values);
        CHECK(est.vote_margin[s] == est_rev.vote_margin[s]);
    }

    // duplicated subset leaves the estimate unchanged
    ScriptedGrads dup({0.3, -1.0, 0.8, 0.5, -0.2, 0.3, -1.0, 0.8, 0.5, -0.2});
    const auto est_dup = majority_vote_signs(dup.theta, dup.data, dup.spec, 0.0);
    for (size_t s = 0; s < est.signs.segments.size(); s++) {
        CHECK(est.signs.segments[s].values == est_dup.signs.segments[s].values);
    }
}

TEST_CASE("all-identical samples make majority and mean agree for any N") {
    ScriptedGrads fx({0.4, 0.4, 0.4, 0.4});
    const auto maj = majority_vote_signs(fx.theta, fx.data, fx.spec, 0.0);
    const auto mean = mean_signs(fx.theta, fx.data, fx.spec, 0.0);
    for (size_t s = 0; s < maj.signs.segments.size(); s++) {
        CHECK(maj.signs.segments[s].values == mean.signs.segments[s].values);
    }
}

TEST_CASE("empty subset is rejected") {
    ScriptedGrads fx({0.1});
    LabeledDataset empty;
    empty.input_dim = 1;
    CHECK_THROWS_AS(majority_vote_signs(fx.theta, empty, fx.spec, 0.0), Error);
    CHECK_THROWS_AS(mean_signs(fx.theta, empty, fx.spec, 0.0), Error);
}

TEST_CASE("oracle signs") {
    const auto tau = one_segment({0.3, -0.1, 0.0});
    const auto s = oracle_signs(tau, 0.0);
    CHECK(s.segments[0].values == std::vector<int8_t>{1, -1, 0});

    const auto zeros = oracle_signs(one_segment({0.0, 0.0}), 0.0);
    CHECK(zeros.segments[0].values == std::vector<int8_t>{0, 0});
}

TEST_CASE("one-epoch tau_B signs oppose the gradient signs") {
    Rng rng(51);
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden_dims = {4};
    spec.num_classes = 2;
    LabeledDataset data;
    data.input_dim = 3;
    data.split = "d";
    for (int i = 0; i < 6; i++) {
        for (int k = 0; k < 3; k++) {
            data.features.push_back(rng.next_normal());
        }
        data.labels.push_back(i % 2);
        data.ids.push_back(i);
    }
    const auto theta = init_params(spec, 5);
    const auto [theta_ft, tau_b] = finetune_one_epoch_fullbatch(theta, data, 0.1, spec);
    const auto oracle = oracle_signs(tau_b, 0.0);
    const auto g_signs = sign_of(grad(theta, data, spec), 0.0);
    for (size_t s = 0; s < oracle.segments.size(); s++) {
        for (size_t i = 0; i < oracle.segments[s].values.size(); i++) {
            if (g_signs.segments[s].values[i] != 0) {
                CHECK(oracle.segments[s].values[i] == -g_signs.segments[s].values[i]);
            }
        }
    }
}

TEST_CASE("sign estimate serializes with a margin histogram sidecar") {
    ScriptedGrads fx({0.3, 0.3, -0.9});
    const auto est = majority_vote_signs(fx.theta, fx.data, fx.spec, 0.0);
    const auto dir = std::filesystem::temp_directory_path();
    const std::string sign_path = (dir / "est.gfxs").string();
    const std::string csv_path = (dir / "est_margins.csv").string();
    save_sign_estimate(est, sign_path, csv_path);

    const auto back = load_signs(sign_path);
    for (size_t s = 0; s < est.signs.segments.size(); s++) {
        CHECK(back.segments[s].values == est.signs.segments[s].values);
    }
    FILE * f = fopen(csv_path.c_str(), "rb");
    REQUIRE(f != nullptr);
    char header[32] = {};
    REQUIRE(fgets(header, sizeof(header), f) != nullptr);
    fclose(f);
    CHECK(std::string(header) == "segment,margin,count\n");
    remove(sign_path.c_str());
    remove(csv_path.c_str());
}

} // TEST_SUITE
