#pragma once

#include "common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gradfix {

// Ordered, named, row-major float64 segments. The common currency for model
// parameters, gradients, and task vectors.
struct Segment {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<double> values;

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) {
            n *= d;
        }
        return n;
    }
};

struct ParamVector {
    std::vector<Segment> segments;

    int64_t numel() const {
        int64_t n = 0;
        for (const auto & s : segments) {
            n += static_cast<int64_t>(s.values.size());
        }
        return n;
    }
};

// A task vector is a parameter-space difference; structurally identical.
using TaskVector = ParamVector;

// Per-coordinate values in {-1, 0, +1}.
struct SignSegment {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<int8_t> values;
};

struct SignVector {
    std::vector<SignSegment> segments;

    int64_t numel() const {
        int64_t n = 0;
        for (const auto & s : segments) {
            n += static_cast<int64_t>(s.values.size());
        }
        return n;
    }
};

enum class MaskKind {
    Binary,  // values in {0, 1}: keep or drop
    Signed,  // values in {-1, 0, +1}: may flip retained entries
};

struct MaskVector {
    std::vector<SignSegment> segments;
    MaskKind kind = MaskKind::Binary;
};

enum class Grouping {
    Whole,
    PerSegment,
};

struct AgreementRow {
    std::string group;
    double agree_fraction = 0.0;
    int64_t n_nonzero_pairs = 0;
};

// Structure checks (same names, shapes, order). Throw errc::config on mismatch.
void check_congruent(const ParamVector & a, const ParamVector & b);
void check_congruent(const SignVector & a, const SignVector & b);
void check_congruent(const ParamVector & a, const SignVector & b);
void check_congruent(const MaskVector & m, const ParamVector & v);

// Throws errc::numeric if any value is NaN/Inf; `what` names the offender.
void check_finite(const ParamVector & v, const std::string & what);

// theta_ft - theta_0, elementwise.
TaskVector diff(const ParamVector & theta_ft, const ParamVector & theta_0);

// theta + scale * delta, elementwise. Non-finite results are rejected.
ParamVector add_scaled(const ParamVector & theta, const TaskVector & delta, double scale);

// Three-valued sign: +1 above zero_tol, -1 below -zero_tol, 0 inside the band.
SignVector sign_of(const ParamVector & v, double zero_tol = 0.0);

// Elementwise mask product. Binary masks drop entries, signed masks may flip.
TaskVector apply_mask(const MaskVector & mask, const TaskVector & tau);

// Fraction of coordinates where both signs are nonzero and equal, over
// coordinates where both are nonzero. Groups with no eligible coordinate
// report fraction 0 with n = 0.
std::vector<AgreementRow> agreement_stats(const SignVector & s1, const SignVector & s2, Grouping grouping);

// Structural views used when building congruent sign/mask vectors.
SignVector sign_layout_of(const ParamVector & v);
SignVector sign_layout_of(const SignVector & v);

} // namespace gradfix
