#include "param_vector.hpp"

#include <cmath>

namespace gradfix {

namespace {

template <typename SegA, typename SegB>
void check_congruent_impl(const std::vector<SegA> & a, const std::vector<SegB> & b) {
    if (a.size() != b.size()) {
        throw_config("congruence error: segment counts differ (" +
                     std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
    for (size_t i = 0; i < a.size(); i++) {
        if (a[i].name != b[i].name) {
            throw_config("congruence error: segment " + std::to_string(i) + " name mismatch ('" +
                         a[i].name + "' vs '" + b[i].name + "')");
        }
        if (a[i].shape != b[i].shape) {
            throw_config("congruence error: segment '" + a[i].name + "' shape mismatch");
        }
        if (a[i].values.size() != b[i].values.size()) {
            throw_config("congruence error: segment '" + a[i].name + "' length mismatch");
        }
    }
}

} // namespace

void check_congruent(const ParamVector & a, const ParamVector & b) { check_congruent_impl(a.segments, b.segments); }
void check_congruent(const SignVector & a, const SignVector & b)   { check_congruent_impl(a.segments, b.segments); }
void check_congruent(const ParamVector & a, const SignVector & b)  { check_congruent_impl(a.segments, b.segments); }
void check_congruent(const MaskVector & m, const ParamVector & v)  { check_congruent_impl(m.segments, v.segments); }

void check_finite(const ParamVector & v, const std::string & what) {
    for (const auto & seg : v.segments) {
        for (double x : seg.values) {
            if (!std::isfinite(x)) {
                throw_numeric("numeric error: non-finite value in segment '" + seg.name + "' of " + what);
            }
        }
    }
}

TaskVector diff(const ParamVector & theta_ft, const ParamVector & theta_0) {
    check_congruent(theta_ft, theta_0);
    TaskVector tau = theta_ft;
    for (size_t s = 0; s < tau.segments.size(); s++) {
        const auto & base = theta_0.segments[s].values;
        auto & vals = tau.segments[s].values;
        for (size_t i = 0; i < vals.size(); i++) {
            vals[i] -= base[i];
        }
    }
    check_finite(tau, "diff result");
    return tau;
}

ParamVector add_scaled(const ParamVector & theta, const TaskVector & delta, double scale) {
    check_congruent(theta, delta);
    if (!std::isfinite(scale)) {
        throw_config("add_scaled: scale must be finite");
    }
    ParamVector out = theta;
    for (size_t s = 0; s < out.segments.size(); s++) {
        const auto & d = delta.segments[s].values;
        auto & vals = out.segments[s].values;
        for (size_t i = 0; i < vals.size(); i++) {
            vals[i] += scale * d[i];
        }
    }
    check_finite(out, "add_scaled result");
    return out;
}

SignVector sign_of(const ParamVector & v, double zero_tol) {
    if (!(zero_tol >= 0.0) || !std::isfinite(zero_tol)) {
        throw_config("sign_of: zero_tol must be finite and >= 0");
    }
    check_finite(v, "sign_of input");
    SignVector out;
    out.segments.reserve(v.segments.size());
    for (const auto & seg : v.segments) {
        SignSegment s;
        s.name = seg.name;
        s.shape = seg.shape;
        s.values.resize(seg.values.size());
        for (size_t i = 0; i < seg.values.size(); i++) {
            const double x = seg.values[i];
            s.values[i] = x > zero_tol ? int8_t(1) : (x < -zero_tol ? int8_t(-1) : int8_t(0));
        }
        out.segments.push_back(std::move(s));
    }
    return out;
}

TaskVector apply_mask(const MaskVector & mask, const TaskVector & tau) {
    check_congruent(mask, tau);
    TaskVector out = tau;
    for (size_t s = 0; s < out.segments.size(); s++) {
        const auto & m = mask.segments[s].values;
        auto & vals = out.segments[s].values;
        for (size_t i = 0; i < vals.size(); i++) {
            vals[i] *= static_cast<double>(m[i]);
        }
    }
    return out;
}

namespace {

AgreementRow agreement_for_range(const std::string & group,
                                 const SignVector & s1, const SignVector & s2,
                                 size_t seg_begin, size_t seg_end) {
    int64_t eligible = 0;
    int64_t agree = 0;
    for (size_t s = seg_begin; s < seg_end; s++) {
        const auto & a = s1.segments[s].values;
        const auto & b = s2.segments[s].values;
        for (size_t i = 0; i < a.size(); i++) {
            if (a[i] != 0 && b[i] != 0) {
                eligible++;
                if (a[i] == b[i]) {
                    agree++;
                }
            }
        }
    }
    AgreementRow row;
    row.group = group;
    row.n_nonzero_pairs = eligible;
    row.agree_fraction = eligible > 0 ? static_cast<double>(agree) / static_cast<double>(eligible) : 0.0;
    return row;
}

} // namespace

std::vector<AgreementRow> agreement_stats(const SignVector & s1, const SignVector & s2, Grouping grouping) {
    check_congruent(s1, s2);
    std::vector<AgreementRow> rows;
    if (grouping == Grouping::Whole) {
        rows.push_back(agreement_for_range("whole", s1, s2, 0, s1.segments.size()));
    } else {
        rows.reserve(s1.segments.size());
        for (size_t s = 0; s < s1.segments.size(); s++) {
            rows.push_back(agreement_for_range(s1.segments[s].name, s1, s2, s, s + 1));
        }
    }
    return rows;
}

SignVector sign_layout_of(const ParamVector & v) {
    SignVector out;
    out.segments.reserve(v.segments.size());
    for (const auto & seg : v.segments) {
        SignSegment s;
        s.name = seg.name;
        s.shape = seg.shape;
        s.values.assign(seg.values.size(), 0);
        out.segments.push_back(std::move(s));
    }
    return out;
}

SignVector sign_layout_of(const SignVector & v) {
    SignVector out;
    out.segments.reserve(v.segments.size());
    for (const auto & seg : v.segments) {
        SignSegment s;
        s.name = seg.name;
        s.shape = seg.shape;
        s.values.assign(seg.values.size(), 0);
        out.segments.push_back(std::move(s));
    }
    return out;
}

} // namespace gradfix
