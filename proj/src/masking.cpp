#include "masking.hpp"

#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace gradfix {

MaskVector mask_agreement(const SignVector & sign_tau_a, const SignVector & ref_signs) {
    check_congruent(sign_tau_a, ref_signs);
    MaskVector m;
    m.kind = MaskKind::Binary;
    m.segments = sign_tau_a.segments;
    for (size_t s = 0; s < m.segments.size(); s++) {
        const auto & a = sign_tau_a.segments[s].values;
        const auto & r = ref_signs.segments[s].values;
        auto & vals = m.segments[s].values;
        for (size_t i = 0; i < vals.size(); i++) {
            vals[i] = (a[i] != 0 && a[i] == r[i]) ? int8_t(1) : int8_t(0);
        }
    }
    return m;
}

MaskVector mask_force_agreement(const SignVector & sign_tau_a, const SignVector & ref_signs) {
    check_congruent(sign_tau_a, ref_signs);
    MaskVector m;
    m.kind = MaskKind::Signed;
    m.segments = sign_tau_a.segments;
    for (size_t s = 0; s < m.segments.size(); s++) {
        const auto & a = sign_tau_a.segments[s].values;
        const auto & r = ref_signs.segments[s].values;
        auto & vals = m.segments[s].values;
        for (size_t i = 0; i < vals.size(); i++) {
            vals[i] = static_cast<int8_t>(a[i] * r[i]);
        }
    }
    return m;
}

MaskVector mask_random(const SignVector & sign_tau_a, uint64_t seed) {
    SignVector ref = sign_layout_of(sign_tau_a);
    Rng rng(derive_seed(seed, "random_mask"));
    for (auto & seg : ref.segments) {
        for (auto & v : seg.values) {
            v = static_cast<int8_t>(rng.next_sign());
        }
    }
    return mask_agreement(sign_tau_a, ref);
}

MaskVector build_mask(MaskStrategy strategy, const SignVector & sign_tau_a,
                      const SignVector & ref_signs, uint64_t seed) {
    switch (strategy) {
        case MaskStrategy::Agreement:      return mask_agreement(sign_tau_a, ref_signs);
        case MaskStrategy::ForceAgreement: return mask_force_agreement(sign_tau_a, ref_signs);
        case MaskStrategy::Random:         return mask_random(sign_tau_a, seed);
    }
    throw_config("build_mask: unknown strategy");
}

TransportOutcome apply_transport(const ParamVector & theta_b, const TaskVector & tau_a,
                                 const SignVector & reference_signs, const TransportConfig & cfg) {
    TransportOutcome out;
    out.mask = build_mask(cfg.strategy, sign_of(tau_a, 0.0), reference_signs, cfg.seed);
    out.delta = build_delta(out.mask, tau_a, cfg.alpha);
    out.transported = transport(theta_b, out.delta, cfg.reference);
    return out;
}

TaskVector build_delta(const MaskVector & mask, const TaskVector & tau_a, double alpha) {
    if (!(alpha > 0.0) || !(alpha <= 1.0)) {
        throw_config("build_delta: alpha must lie in (0, 1]");
    }
    TaskVector delta = apply_mask(mask, tau_a);
    if (alpha != 1.0) {
        for (auto & seg : delta.segments) {
            for (auto & v : seg.values) {
                v *= alpha;
            }
        }
    }
    return delta;
}

ParamVector transport(const ParamVector & theta_b, const TaskVector & delta, Reference reference) {
    return add_scaled(theta_b, delta, reference == Reference::GradientSigns ? -1.0 : 1.0);
}

double descent_check(const ParamVector & g, const TaskVector & delta) {
    check_congruent(g, delta);
    double acc = 0.0;
    for (size_t s = 0; s < g.segments.size(); s++) {
        const auto & a = g.segments[s].values;
        const auto & b = delta.segments[s].values;
        for (size_t i = 0; i < a.size(); i++) {
            acc += a[i] * b[i];
        }
    }
    return acc;
}

std::vector<TaylorProbeRow> taylor_probe(const ParamVector & theta_b, const TaskVector & delta,
                                         std::span<const double> alphas, const LabeledDataset & data,
                                         const ModelSpec & spec) {
    if (alphas.empty()) {
        throw_config("taylor_probe: empty alpha list");
    }
    for (size_t i = 0; i < alphas.size(); i++) {
        if (!(alphas[i] > 0.0)) {
            throw_config("taylor_probe: alphas must be positive");
        }
        if (i > 0 && !(alphas[i] > alphas[i - 1])) {
            throw_config("taylor_probe: alphas must be sorted ascending");
        }
    }
    const double base_loss = loss(theta_b, data, spec);
    const double slope = descent_check(grad(theta_b, data, spec), delta);

    std::vector<TaylorProbeRow> rows;
    rows.reserve(alphas.size());
    for (double a : alphas) {
        TaylorProbeRow row;
        row.alpha = a;
        row.measured_loss = loss(add_scaled(theta_b, delta, -a), data, spec);
        row.predicted_loss = base_loss - a * slope;
        rows.push_back(row);
    }
    return rows;
}

void save_taylor_probe_csv(std::span<const TaylorProbeRow> rows, const std::string & path) {
    std::string buf = "alpha,measured,predicted\n";
    for (const auto & r : rows) {
        buf += format_double(r.alpha) + "," + format_double(r.measured_loss) + "," +
               format_double(r.predicted_loss) + "\n";
    }
    FILE * f = fopen(path.c_str(), "wb");
    if (!f) {
        throw_io("cannot open for writing: " + path);
    }
    const size_t written = fwrite(buf.data(), 1, buf.size(), f);
    fclose(f);
    if (written != buf.size()) {
        throw_io("short write: " + path);
    }
}

} // namespace gradfix
