#include "bound_lab.hpp"

#include "rng.hpp"

#include <cmath>

namespace gradfix {

namespace {

constexpr double kZ95 = 1.959963984540054;
constexpr double kTwoPi = 6.283185307179586476925286766559;

// Regularized incomplete beta via the Lentz continued fraction.
double betacf(double a, double b, double x) {
    constexpr int max_iters = 300;
    constexpr double eps = 3e-16;
    constexpr double fpmin = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) {
        d = fpmin;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iters; m++) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) {
            d = fpmin;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) {
            c = fpmin;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) {
            d = fpmin;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) {
            c = fpmin;
        }
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) {
            break;
        }
    }
    return h;
}

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) {
        return 0.0;
    }
    if (x >= 1.0) {
        return 1.0;
    }
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

void check_parametric(const NoiseChannel & ch) {
    if (ch.kind == NoiseKind::Bernoulli) {
        throw_config("channel: operation requires a parametric (gaussian/student_t) channel");
    }
    if (!(ch.sigma > 0.0) || !std::isfinite(ch.sigma)) {
        throw_config("channel: sigma must be positive and finite");
    }
    if (ch.kind == NoiseKind::StudentT && (!(ch.nu > 0.0) || !std::isfinite(ch.nu))) {
        throw_config("channel: student_t nu must be positive and finite");
    }
}

int channel_true_sign(const NoiseChannel & ch) {
    if (ch.kind == NoiseKind::Bernoulli) {
        if (ch.true_sign != 1 && ch.true_sign != -1) {
            throw_config("channel: true_sign must be -1 or +1");
        }
        if (!(ch.p > 0.5) || !(ch.p <= 1.0)) {
            throw_config("channel: p must lie in (1/2, 1]");
        }
        return ch.true_sign;
    }
    check_parametric(ch);
    if (ch.signal == 0.0 || !std::isfinite(ch.signal)) {
        throw_config("channel: parametric signal must be nonzero and finite");
    }
    return ch.signal > 0.0 ? +1 : -1;
}

// Bailey's polar method: exact Student-t draw from two uniforms.
double draw_student_t(Rng & rng, double nu) {
    const double u = 1.0 - rng.next_double();  // (0, 1]
    const double v = rng.next_double();
    const double r = std::sqrt(nu * (std::pow(u, -2.0 / nu) - 1.0));
    return r * std::cos(kTwoPi * v);
}

double draw_value(const NoiseChannel & ch, Rng & rng) {
    switch (ch.kind) {
        case NoiseKind::Gaussian: return ch.signal + ch.sigma * rng.next_normal();
        case NoiseKind::StudentT: return ch.signal + ch.sigma * draw_student_t(rng, ch.nu);
        case NoiseKind::Bernoulli: break;
    }
    throw_config("channel: not a parametric channel");
}

int draw_sign(const NoiseChannel & ch, int true_sign, Rng & rng) {
    if (ch.kind == NoiseKind::Bernoulli) {
        return rng.next_double() < ch.p ? true_sign : -true_sign;
    }
    const double v = draw_value(ch, rng);
    return v > 0.0 ? +1 : (v < 0.0 ? -1 : 0);
}

} // namespace

double hoeffding_bound(double p, int64_t n) {
    if (!(p >= 0.5) || !(p <= 1.0)) {
        throw_config("hoeffding_bound: p must lie in [1/2, 1]");
    }
    if (n < 1) {
        throw_config("hoeffding_bound: N must be >= 1");
    }
    const double gap = p - 0.5;
    return 1.0 - std::exp(-2.0 * static_cast<double>(n) * gap * gap);
}

double per_sample_alignment_p(double signal, const NoiseChannel & noise) {
    check_parametric(noise);
    if (signal == 0.0 || !std::isfinite(signal)) {
        throw_config("per_sample_alignment_p: sign undefined for zero signal");
    }
    const double scaled = std::fabs(signal) / noise.sigma;
    switch (noise.kind) {
        case NoiseKind::Gaussian: return normal_cdf(scaled);
        case NoiseKind::StudentT: return student_t_cdf(scaled, noise.nu);
        case NoiseKind::Bernoulli: break;
    }
    throw_config("per_sample_alignment_p: not a parametric channel");
}

double exact_binomial_majority(double p, int64_t n) {
    if (!(p >= 0.0) || !(p <= 1.0)) {
        throw_config("exact_binomial_majority: p must lie in [0, 1]");
    }
    if (n < 1) {
        throw_config("exact_binomial_majority: N must be >= 1");
    }
    if (p == 1.0) {
        return 1.0;
    }
    if (p == 0.0) {
        return 0.0;
    }
    // success needs strictly more than N/2 correct votes; summing the failure
    // tail P[X <= floor(N/2)] keeps full precision when the success mass
    // approaches one
    const int64_t k_max = n / 2;
    const double log_p = std::log(p);
    const double log_q = std::log1p(-p);
    const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
    double failure = 0.0;
    for (int64_t k = 0; k <= k_max; k++) {
        const double log_term = lgn - std::lgamma(static_cast<double>(k) + 1.0) -
                                std::lgamma(static_cast<double>(n - k) + 1.0) +
                                static_cast<double>(k) * log_p + static_cast<double>(n - k) * log_q;
        failure += std::exp(log_term);
    }
    return failure < 1.0 ? 1.0 - failure : 0.0;
}

VoteSimResult simulate_vote_success(const NoiseChannel & channel, int64_t n, int64_t trials,
                                    uint64_t seed) {
    if (n < 1 || trials < 1) {
        throw_config("simulate_vote_success: N and trials must be >= 1");
    }
    const int true_sign = channel_true_sign(channel);
    int64_t successes = 0;
    for (int64_t t = 0; t < trials; t++) {
        Rng rng(derive_seed(seed, "vote_trial", static_cast<uint64_t>(t)));
        int64_t sum = 0;
        for (int64_t i = 0; i < n; i++) {
            sum += draw_sign(channel, true_sign, rng);
        }
        const int est = sum > 0 ? +1 : (sum < 0 ? -1 : 0);  // tie -> failure
        if (est == true_sign) {
            successes++;
        }
    }
    VoteSimResult out;
    out.trials = trials;
    out.empirical_rate = static_cast<double>(successes) / static_cast<double>(trials);
    const auto iv = wilson_interval(successes, trials);
    out.wilson_lo = iv.lo;
    out.wilson_hi = iv.hi;
    return out;
}

PairedCompareResult compare_mean_vs_majority(const NoiseChannel & channel, int64_t n,
                                             int64_t trials, uint64_t seed) {
    if (n < 1 || trials < 1) {
        throw_config("compare_mean_vs_majority: N and trials must be >= 1");
    }
    check_parametric(channel);
    const int true_sign = channel_true_sign(channel);

    int64_t wins_majority = 0;
    int64_t wins_mean = 0;
    double sum_d = 0.0;
    double sum_d2 = 0.0;
    for (int64_t t = 0; t < trials; t++) {
        Rng rng(derive_seed(seed, "vote_trial", static_cast<uint64_t>(t)));
        int64_t sign_sum = 0;
        double value_sum = 0.0;
        for (int64_t i = 0; i < n; i++) {
            const double v = draw_value(channel, rng);
            sign_sum += v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
            value_sum += v;
        }
        const int maj = sign_sum > 0 ? +1 : (sign_sum < 0 ? -1 : 0);
        const int mean = value_sum > 0.0 ? +1 : (value_sum < 0.0 ? -1 : 0);
        const int maj_ok = maj == true_sign ? 1 : 0;
        const int mean_ok = mean == true_sign ? 1 : 0;
        wins_majority += maj_ok;
        wins_mean += mean_ok;
        const double d = static_cast<double>(maj_ok - mean_ok);
        sum_d += d;
        sum_d2 += d * d;
    }

    PairedCompareResult out;
    out.trials = trials;
    out.rate_majority = static_cast<double>(wins_majority) / static_cast<double>(trials);
    out.rate_mean = static_cast<double>(wins_mean) / static_cast<double>(trials);
    out.diff = out.rate_majority - out.rate_mean;
    if (trials > 1) {
        const double tt = static_cast<double>(trials);
        const double var = (sum_d2 - sum_d * sum_d / tt) / (tt - 1.0);
        const double se = std::sqrt(var > 0.0 ? var / tt : 0.0);
        out.diff_lo = out.diff - kZ95 * se;
        out.diff_hi = out.diff + kZ95 * se;
    } else {
        out.diff_lo = out.diff_hi = out.diff;
    }
    return out;
}

double normal_cdf(double x) {
    // error-function route; |error| well under 1e-7 across the real line
    return 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
}

double student_t_cdf(double x, double nu) {
    if (!(nu > 0.0)) {
        throw_config("student_t_cdf: nu must be positive");
    }
    if (x == 0.0) {
        return 0.5;
    }
    const double t2 = x * x;
    const double z = nu / (nu + t2);
    const double tail = 0.5 * incomplete_beta(nu / 2.0, 0.5, z);
    return x > 0.0 ? 1.0 - tail : tail;
}

WilsonInterval wilson_interval(int64_t successes, int64_t trials) {
    if (trials < 1 || successes < 0 || successes > trials) {
        throw_config("wilson_interval: bad counts");
    }
    const double n = static_cast<double>(trials);
    const double phat = static_cast<double>(successes) / n;
    const double z2 = kZ95 * kZ95;
    const double denom = 1.0 + z2 / n;
    const double center = (phat + z2 / (2.0 * n)) / denom;
    const double half = kZ95 * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
    WilsonInterval iv;
    iv.lo = center - half;
    iv.hi = center + half;
    return iv;
}

} // namespace gradfix
