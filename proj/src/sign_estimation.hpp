#pragma once

#include "dataset.hpp"
#include "model.hpp"
#include "param_vector.hpp"

#include <string>
#include <vector>

namespace gradfix {

enum class Aggregation {
    Majority,  // sign of the sum of per-sample gradient signs
    Mean,      // sign of the mean gradient
};

struct SignEstimate {
    SignVector signs;
    // |#positive - #negative| votes per coordinate, segment layout matching
    // `signs`. All zeros for the mean aggregation, where it is undefined.
    std::vector<std::vector<int32_t>> vote_margin;
    int64_t n_samples = 0;
    Aggregation aggregation = Aggregation::Majority;
};

// Streaming per-coordinate vote counters. Integer accumulation makes the
// result independent of sample order.
class VoteAccumulator {
public:
    VoteAccumulator(const ParamVector & layout, double zero_tol);

    void add(const ParamVector & per_sample_gradient);

    SignEstimate finish() const;

private:
    SignVector layout_;
    std::vector<std::vector<int32_t>> counts_;
    double zero_tol_ = 0.0;
    int64_t n_samples_ = 0;
};

// s_hat_i = sign( sum_n sign(per-sample gradient_i) ), ties -> 0.
SignEstimate majority_vote_signs(const ParamVector & theta_b, const LabeledDataset & subset,
                                 const ModelSpec & spec, double zero_tol = 0.0);

// s_hat = sign(mean per-sample gradient); the variance-sensitive baseline.
SignEstimate mean_signs(const ParamVector & theta_b, const LabeledDataset & subset,
                        const ModelSpec & spec, double zero_tol = 0.0);

// Reference signs from the fine-tuned target's task vector.
SignVector oracle_signs(const TaskVector & tau_b, double zero_tol = 0.0);

// "GFXS" sign file plus a sidecar CSV of per-segment vote-margin histograms
// (columns: segment, margin, count).
void save_sign_estimate(const SignEstimate & est, const std::string & sign_path,
                        const std::string & margin_csv_path);

void save_vote_margin_csv(const SignEstimate & est, const std::string & path);

} // namespace gradfix
