#include "masking.hpp"
#include "rng.hpp"

#include <doctest.h>

#include <cmath>

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

SignVector signs_of(const std::vector<double> & values) {
    return sign_of(one_segment(values), 0.0);
}

ParamVector random_vec(Rng & rng, int64_t n, double zero_prob = 0.1) {
    std::vector<double> vals(n);
    for (auto & x : vals) {
        x = rng.next_double() < zero_prob ? 0.0 : 2.0 * rng.next_double() - 1.0;
    }
    return one_segment(vals);
}

} // namespace

TEST_SUITE("masking_transport") {

TEST_CASE("agreement mask keeps matching nonzero signs") {
    const auto m = mask_agreement(signs_of({1.0, -1.0, 1.0}), signs_of({1.0, 1.0, 1.0}));
    CHECK(m.kind == MaskKind::Binary);
    CHECK(m.segments[0].values == std::vector<int8_t>{1, 0, 1});

    // full agreement on nonzero coordinates
    const auto all = mask_agreement(signs_of({0.5, -2.0}), signs_of({0.1, -0.1}));
    CHECK(all.segments[0].values == std::vector<int8_t>{1, 1});

    // a zero reference drops the coordinate regardless
    const auto z = mask_agreement(signs_of({1.0, -1.0}), signs_of({0.0, -1.0}));
    CHECK(z.segments[0].values == std::vector<int8_t>{0, 1});
}

TEST_CASE("force agreement flips disagreeing entries") {
    const auto m = mask_force_agreement(signs_of({1.0, -1.0}), signs_of({-1.0, -1.0}));
    CHECK(m.kind == MaskKind::Signed);
    CHECK(m.segments[0].values == std::vector<int8_t>{-1, 1});

    const auto tau = one_segment({0.4, -0.4});
    const auto delta = apply_mask(m, tau);
    CHECK(delta.segments[0].values == std::vector<double>{-0.4, -0.4});

    // zero reference still drops
    const auto z = mask_force_agreement(signs_of({1.0}), signs_of({0.0}));
    CHECK(z.segments[0].values == std::vector<int8_t>{0});

    // under full agreement it matches the binary mask on nonzero coords
    const auto sa = signs_of({0.7, -0.3, 0.0});
    const auto fa = mask_force_agreement(sa, sa);
    const auto ag = mask_agreement(sa, sa);
    CHECK(fa.segments[0].values == ag.segments[0].values);
}

TEST_CASE("force agreement points retained coordinates along the reference") {
    Rng rng(61);
    for (int trial = 0; trial < 20; trial++) {
        const auto tau = random_vec(rng, 40);
        const auto ref_vec = random_vec(rng, 40);
        const auto s_tau = sign_of(tau, 0.0);
        const auto ref = sign_of(ref_vec, 0.0);
        const auto delta = apply_mask(mask_force_agreement(s_tau, ref), tau);
        const auto d_signs = sign_of(delta, 0.0);
        for (size_t i = 0; i < 40; i++) {
            if (d_signs.segments[0].values[i] != 0) {
                CHECK(d_signs.segments[0].values[i] == ref.segments[0].values[i]);
            }
        }
    }
}

TEST_CASE("random masks are seed-deterministic") {
    const auto s_tau = signs_of({1.0, -1.0, 0.5, -0.2, 0.9, -0.9, 0.1, -0.1});
    const auto a = mask_random(s_tau, 123);
    const auto b = mask_random(s_tau, 123);
    CHECK(a.segments[0].values == b.segments[0].values);
    const auto c = mask_random(s_tau, 124);
    CHECK(a.segments[0].values != c.segments[0].values);

    // all-zero template keeps nothing
    const auto zeros = mask_random(signs_of({0.0, 0.0, 0.0}), 5);
    CHECK(zeros.segments[0].values == std::vector<int8_t>{0, 0, 0});
}

TEST_CASE("random mask retains about half the nonzero coordinates") {
    Rng rng(62);
    const int64_t n = 100000;
    const auto tau = random_vec(rng, n, 0.0);  // all nonzero
    const auto mask = mask_random(sign_of(tau, 0.0), 2024);
    int64_t kept = 0;
    for (int8_t v : mask.segments[0].values) {
        kept += v;
    }
    const double fraction = static_cast<double>(kept) / static_cast<double>(n);
    // binomial 3-sigma band around 1/2
    CHECK(fraction >= 0.494);
    CHECK(fraction <= 0.506);
}

TEST_CASE("build_delta scales the masked task vector") {
    const auto tau = one_segment({1.0, 1.0});
    MaskVector m;
    m.kind = MaskKind::Binary;
    m.segments = signs_of({1.0, 0.0}).segments;
    const auto delta = build_delta(m, tau, 0.3);
    CHECK(delta.segments[0].values[0] == doctest::Approx(0.3));
    CHECK(delta.segments[0].values[1] == 0.0);

    // alpha = 1 with an all-ones mask is the identity
    MaskVector ones;
    ones.kind = MaskKind::Binary;
    ones.segments = signs_of({1.0, 1.0}).segments;
    CHECK(build_delta(ones, tau, 1.0).segments[0].values == tau.segments[0].values);

    MaskVector zeros;
    zeros.kind = MaskKind::Binary;
    zeros.segments = signs_of({0.0, 0.0}).segments;
    const auto nothing = build_delta(zeros, tau, 0.5);
    for (double x : nothing.segments[0].values) {
        CHECK(x == 0.0);
    }

    CHECK_THROWS_AS(build_delta(ones, tau, 0.0), Error);
    CHECK_THROWS_AS(build_delta(ones, tau, 1.5), Error);
    CHECK_THROWS_AS(build_delta(ones, tau, -0.1), Error);
}

TEST_CASE("build_delta scaling equivariance (property)") {
    Rng rng(63);
    for (int trial = 0; trial < 20; trial++) {
        const auto tau = random_vec(rng, 30);
        const auto mask = mask_random(sign_of(tau, 0.0), trial);
        const double alpha = 0.05 + 0.9 * rng.next_double();
        const auto scaled = build_delta(mask, tau, alpha);
        const auto unit = build_delta(mask, tau, 1.0);
        for (size_t i = 0; i < 30; i++) {
            CHECK(scaled.segments[0].values[i] ==
                  doctest::Approx(alpha * unit.segments[0].values[i]).epsilon(1e-15));
        }
    }
}

TEST_CASE("transport applies the reference-specific sign convention") {
    const auto theta = one_segment({1.0, 1.0});
    const auto delta = one_segment({0.1, 0.0});
    const auto sub = transport(theta, delta, Reference::GradientSigns);
    CHECK(sub.segments[0].values[0] == doctest::Approx(0.9));
    CHECK(sub.segments[0].values[1] == doctest::Approx(1.0));
    const auto add = transport(theta, delta, Reference::OracleTauB);
    CHECK(add.segments[0].values[0] == doctest::Approx(1.1));

    const auto zero = one_segment({0.0, 0.0});
    CHECK(transport(theta, zero, Reference::GradientSigns).segments[0].values ==
          theta.segments[0].values);
    CHECK(transport(theta, zero, Reference::OracleTauB).segments[0].values ==
          theta.segments[0].values);
}

TEST_CASE("apply_transport bundles mask, delta, and application") {
    Rng rng(67);
    const auto theta = random_vec(rng, 12, 0.0);
    const auto tau = random_vec(rng, 12, 0.0);
    const auto ref = sign_of(random_vec(rng, 12, 0.0), 0.0);

    TransportConfig cfg;
    cfg.alpha = 0.25;
    cfg.strategy = MaskStrategy::Agreement;
    cfg.reference = Reference::GradientSigns;
    const auto out = apply_transport(theta, tau, ref, cfg);

    const auto mask = mask_agreement(sign_of(tau, 0.0), ref);
    const auto delta = build_delta(mask, tau, 0.25);
    CHECK(out.mask.segments[0].values == mask.segments[0].values);
    CHECK(out.delta.segments[0].values == delta.segments[0].values);
    CHECK(out.transported.segments[0].values ==
          transport(theta, delta, Reference::GradientSigns).segments[0].values);

    // the oracle convention adds instead
    cfg.reference = Reference::OracleTauB;
    const auto added = apply_transport(theta, tau, ref, cfg);
    CHECK(added.transported.segments[0].values ==
          transport(theta, delta, Reference::OracleTauB).segments[0].values);

    // random strategy consumes the seed and ignores the reference
    cfg.strategy = MaskStrategy::Random;
    cfg.seed = 99;
    const auto randomized = apply_transport(theta, tau, ref, cfg);
    CHECK(randomized.mask.segments[0].values ==
          mask_random(sign_of(tau, 0.0), 99).segments[0].values);
}

TEST_CASE("worked descent example") {
    const auto g = one_segment({1.0, -2.0});
    const auto tau = one_segment({0.5, -0.2});
    const auto m = mask_agreement(sign_of(tau, 0.0), sign_of(g, 0.0));
    CHECK(m.segments[0].values == std::vector<int8_t>{1, 1});
    const auto delta = build_delta(m, tau, 1.0);
    CHECK(descent_check(g, delta) == doctest::Approx(0.9));

    CHECK(descent_check(g, one_segment({0.0, 0.0})) == 0.0);
}

TEST_CASE("descent guarantee holds for randomized triples (property)") {
    Rng rng(64);
    int64_t nonzero_products = 0;
    for (int trial = 0; trial < 2000; trial++) {
        const int64_t n = 1 + static_cast<int64_t>(rng.next_below(64));
        const auto tau = random_vec(rng, n, 0.15);
        const auto g = random_vec(rng, n, 0.15);
        const double alpha = std::nextafter(rng.next_double(), 1.0);
        if (alpha <= 0.0) {
            continue;
        }
        const auto m = mask_agreement(sign_of(tau, 0.0), sign_of(g, 0.0));
        const double inner = descent_check(g, build_delta(m, tau, alpha));
        CHECK(inner >= 0.0);
        if (inner > 0.0) {
            nonzero_products++;
        }
    }
    CHECK(nonzero_products > 0);
}

TEST_CASE("oracle and gradient masks are complementary under the one-epoch identity") {
    Rng rng(65);
    ModelSpec spec;
    spec.input_dim = 4;
    spec.hidden_dims = {5};
    spec.num_classes = 3;
    LabeledDataset data;
    data.input_dim = 4;
    data.split = "d";
    for (int i = 0; i < 12; i++) {
        for (int k = 0; k < 4; k++) {
            data.features.push_back(rng.next_normal());
        }
        data.labels.push_back(i % 3);
        data.ids.push_back(i);
    }
    const auto theta_b = init_params(spec, 7);
    const auto g = grad(theta_b, data, spec);
    const auto [theta_b_ft, tau_b] = finetune_one_epoch_fullbatch(theta_b, data, 0.05, spec);

    // an arbitrary source task vector
    auto tau_a = param_layout(spec);
    for (auto & seg : tau_a.segments) {
        for (auto & x : seg.values) {
            x = rng.next_normal();
        }
    }
    const auto s_tau_a = sign_of(tau_a, 0.0);
    const auto m_grad = mask_agreement(s_tau_a, sign_of(g, 0.0));
    const auto m_oracle = mask_agreement(s_tau_a, oracle_signs(tau_b, 0.0));
    const auto g_signs = sign_of(g, 0.0);

    const auto delta_grad = build_delta(m_grad, tau_a, 1.0);
    const auto delta_oracle = build_delta(m_oracle, tau_a, 1.0);
    const auto moved_grad = diff(transport(theta_b, delta_grad, Reference::GradientSigns), theta_b);
    const auto moved_oracle = diff(transport(theta_b, delta_oracle, Reference::OracleTauB), theta_b);
    const auto moved_grad_signs = sign_of(moved_grad, 0.0);
    const auto moved_oracle_signs = sign_of(moved_oracle, 0.0);

    for (size_t s = 0; s < g.segments.size(); s++) {
        for (size_t i = 0; i < g.segments[s].values.size(); i++) {
            if (s_tau_a.segments[s].values[i] == 0 || g_signs.segments[s].values[i] == 0) {
                continue;
            }
            // the two references select complementary coordinate sets
            CHECK(m_grad.segments[s].values[i] + m_oracle.segments[s].values[i] == 1);
            // and every retained coordinate moves against the gradient
            if (moved_grad_signs.segments[s].values[i] != 0) {
                CHECK(moved_grad_signs.segments[s].values[i] == -g_signs.segments[s].values[i]);
            }
            if (moved_oracle_signs.segments[s].values[i] != 0) {
                CHECK(moved_oracle_signs.segments[s].values[i] == -g_signs.segments[s].values[i]);
            }
        }
    }
}

TEST_CASE("taylor probe: zero delta, descent, quadratic error trend") {
    Rng rng(66);
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden_dims = {6};
    spec.num_classes = 2;
    LabeledDataset data;
    data.input_dim = 3;
    data.split = "d";
    for (int i = 0; i < 24; i++) {
        for (int k = 0; k < 3; k++) {
            data.features.push_back(rng.next_normal());
        }
        data.labels.push_back(i % 2);
        data.ids.push_back(i);
    }
    const auto theta = init_params(spec, 9);
    const double base = loss(theta, data, spec);

    SUBCASE("zero delta reproduces the base loss everywhere") {
        const auto zero = param_layout(spec);
        const double alphas[] = {1e-4, 2e-4, 4e-4};
        const auto rows = taylor_probe(theta, zero, alphas, data, spec);
        for (const auto & r : rows) {
            CHECK(r.measured_loss == doctest::Approx(base).epsilon(1e-15));
            CHECK(r.predicted_loss == doctest::Approx(base).epsilon(1e-15));
        }
    }

    SUBCASE("agreement-masked delta descends and the error shrinks quadratically") {
        // source task vector with descent-aligned retained coordinates
        auto tau = param_layout(spec);
        for (auto & seg : tau.segments) {
            for (auto & x : seg.values) {
                x = rng.next_normal();
            }
        }
        const auto g = grad(theta, data, spec);
        const auto mask = mask_agreement(sign_of(tau, 0.0), sign_of(g, 0.0));
        const auto delta = build_delta(mask, tau, 1.0);
        REQUIRE(descent_check(g, delta) > 0.0);

        const double alphas[] = {1e-4, 2e-4, 4e-4};
        const auto rows = taylor_probe(theta, delta, alphas, data, spec);
        CHECK(rows[0].measured_loss < base);
        const double err1 = std::fabs(rows[0].measured_loss - rows[0].predicted_loss);
        const double err2 = std::fabs(rows[1].measured_loss - rows[1].predicted_loss);
        const double err4 = std::fabs(rows[2].measured_loss - rows[2].predicted_loss);
        CHECK(err2 / err1 == doctest::Approx(4.0).epsilon(0.3));
        CHECK(err4 / err2 == doctest::Approx(4.0).epsilon(0.3));
    }

    SUBCASE("alphas must be positive and ascending") {
        const auto zero = param_layout(spec);
        const double bad_order[] = {2e-4, 1e-4};
        CHECK_THROWS_AS(taylor_probe(theta, zero, bad_order, data, spec), Error);
        const double bad_sign[] = {-1e-4};
        CHECK_THROWS_AS(taylor_probe(theta, zero, bad_sign, data, spec), Error);
    }
}

} // TEST_SUITE
