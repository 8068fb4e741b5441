#pragma once

#include "common.hpp"

#include <cstdint>
#include <string>

namespace gradfix {

enum class NoiseKind {
    Bernoulli,  // per-sample sign is correct with probability p
    Gaussian,   // per-sample value = signal + sigma * N(0,1)
    StudentT,   // per-sample value = signal + sigma * t_nu
};

struct NoiseChannel {
    NoiseKind kind = NoiseKind::Bernoulli;
    int true_sign = +1;    // Bernoulli only; parametric channels use sign(signal)
    double p = 0.0;        // in (1/2, 1] for Bernoulli
    double signal = 0.0;   // parametric: the true coordinate value, nonzero
    double sigma = 1.0;
    double nu = 3.0;       // Student-t degrees of freedom
};

// 1 - exp(-2 N (p - 1/2)^2), the majority-vote recovery lower bound.
double hoeffding_bound(double p, int64_t n);

// P[sign(signal + noise) = sign(signal)] for a symmetric parametric channel;
// always > 1/2 for nonzero signal.
double per_sample_alignment_p(double signal, const NoiseChannel & noise);

// Exact P[majority of N votes is correct] for per-sample accuracy p; a tied
// vote counts as failure.
double exact_binomial_majority(double p, int64_t n);

struct VoteSimResult {
    double empirical_rate = 0.0;
    double wilson_lo = 0.0;
    double wilson_hi = 0.0;
    int64_t trials = 0;
};

// Fraction of trials where the N-sample majority sign equals the true sign.
// Each trial draws from its own (seed, trial) substream.
VoteSimResult simulate_vote_success(const NoiseChannel & channel, int64_t n, int64_t trials,
                                    uint64_t seed);

struct PairedCompareResult {
    double rate_majority = 0.0;
    double rate_mean = 0.0;
    double diff = 0.0;      // rate_majority - rate_mean
    double diff_lo = 0.0;   // 95% interval on the paired difference
    double diff_hi = 0.0;
    int64_t trials = 0;
};

// Majority vs sign-of-mean aggregation on identical draws (paired design).
PairedCompareResult compare_mean_vs_majority(const NoiseChannel & channel, int64_t n,
                                             int64_t trials, uint64_t seed);

double normal_cdf(double x);
double student_t_cdf(double x, double nu);

struct WilsonInterval {
    double lo = 0.0;
    double hi = 0.0;
};

WilsonInterval wilson_interval(int64_t successes, int64_t trials);

} // namespace gradfix
