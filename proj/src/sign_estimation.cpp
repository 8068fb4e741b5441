#include "sign_estimation.hpp"

#include "checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <map>

namespace gradfix {

VoteAccumulator::VoteAccumulator(const ParamVector & layout, double zero_tol)
    : layout_(sign_layout_of(layout)), zero_tol_(zero_tol) {
    if (!(zero_tol >= 0.0) || !std::isfinite(zero_tol)) {
        throw_config("vote accumulator: zero_tol must be finite and >= 0");
    }
    counts_.resize(layout.segments.size());
    for (size_t s = 0; s < layout.segments.size(); s++) {
        counts_[s].assign(layout.segments[s].values.size(), 0);
    }
}

void VoteAccumulator::add(const ParamVector & per_sample_gradient) {
    check_congruent(per_sample_gradient, layout_);
    for (size_t s = 0; s < counts_.size(); s++) {
        const auto & vals = per_sample_gradient.segments[s].values;
        auto & c = counts_[s];
        for (size_t i = 0; i < vals.size(); i++) {
            if (vals[i] > zero_tol_) {
                c[i] += 1;
            } else if (vals[i] < -zero_tol_) {
                c[i] -= 1;
            }
        }
    }
    n_samples_++;
}

SignEstimate VoteAccumulator::finish() const {
    if (n_samples_ == 0) {
        throw_config("vote accumulator: no samples added");
    }
    SignEstimate est;
    est.signs = layout_;
    est.vote_margin.resize(counts_.size());
    est.n_samples = n_samples_;
    est.aggregation = Aggregation::Majority;
    for (size_t s = 0; s < counts_.size(); s++) {
        auto & sign_vals = est.signs.segments[s].values;
        est.vote_margin[s].resize(counts_[s].size());
        for (size_t i = 0; i < counts_[s].size(); i++) {
            const int32_t c = counts_[s][i];
            sign_vals[i] = c > 0 ? int8_t(1) : (c < 0 ? int8_t(-1) : int8_t(0));
            est.vote_margin[s][i] = c >= 0 ? c : -c;
        }
    }
    return est;
}

SignEstimate majority_vote_signs(const ParamVector & theta_b, const LabeledDataset & subset,
                                 const ModelSpec & spec, double zero_tol) {
    if (subset.size() == 0) {
        throw_config("majority_vote_signs: empty subset");
    }
    VoteAccumulator acc(theta_b, zero_tol);
    for (int64_t n = 0; n < subset.size(); n++) {
        acc.add(per_sample_grad(theta_b, subset, n, spec));
    }
    return acc.finish();
}

SignEstimate mean_signs(const ParamVector & theta_b, const LabeledDataset & subset,
                        const ModelSpec & spec, double zero_tol) {
    if (subset.size() == 0) {
        throw_config("mean_signs: empty subset");
    }
    SignEstimate est;
    est.signs = sign_of(grad(theta_b, subset, spec), zero_tol);
    est.vote_margin.resize(est.signs.segments.size());
    for (size_t s = 0; s < est.signs.segments.size(); s++) {
        est.vote_margin[s].assign(est.signs.segments[s].values.size(), 0);
    }
    est.n_samples = subset.size();
    est.aggregation = Aggregation::Mean;
    return est;
}

SignVector oracle_signs(const TaskVector & tau_b, double zero_tol) {
    return sign_of(tau_b, zero_tol);
}

void save_sign_estimate(const SignEstimate & est, const std::string & sign_path,
                        const std::string & margin_csv_path) {
    save_signs(est.signs, sign_path);
    if (!margin_csv_path.empty()) {
        save_vote_margin_csv(est, margin_csv_path);
    }
}

void save_vote_margin_csv(const SignEstimate & est, const std::string & margin_csv_path) {
    std::string buf = "segment,margin,count\n";
    for (size_t s = 0; s < est.signs.segments.size(); s++) {
        std::map<int32_t, int64_t> histogram;
        for (int32_t m : est.vote_margin[s]) {
            histogram[m]++;
        }
        for (const auto & [margin, count] : histogram) {
            buf += est.signs.segments[s].name + "," + std::to_string(margin) + "," +
                   std::to_string(count) + "\n";
        }
    }
    FILE * f = fopen(margin_csv_path.c_str(), "wb");
    if (!f) {
        throw_io("cannot open for writing: " + margin_csv_path);
    }
    const size_t written = fwrite(buf.data(), 1, buf.size(), f);
    fclose(f);
    if (written != buf.size()) {
        throw_io("short write: " + margin_csv_path);
    }
}

} // namespace gradfix
