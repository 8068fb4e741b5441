#pragma once

#include "dataset.hpp"
#include "model.hpp"
#include "param_vector.hpp"
#include "sign_estimation.hpp"

#include <span>
#include <vector>

namespace gradfix {

enum class MaskStrategy {
    Agreement,       // keep coordinates whose signs match the reference
    ForceAgreement,  // flip disagreeing coordinates onto the reference sign
    Random,          // reference signs drawn uniformly from {-1, +1}
};

// Which quantity supplied the reference signs. It decides the application
// convention: gradient signs point uphill, so the masked update is
// subtracted; an oracle task vector already points downhill and is added.
enum class Reference {
    GradientSigns,  // theta_B - delta
    OracleTauB,     // theta_B + delta
};

struct TransportConfig {
    double alpha = 1.0;  // in (0, 1]
    MaskStrategy strategy = MaskStrategy::Agreement;
    Reference reference = Reference::GradientSigns;
    Aggregation aggregation = Aggregation::Majority;
    uint64_t seed = 0;   // random masks only
};

// m_i = 1 iff sign(tau_A)_i == ref_i and both nonzero.
MaskVector mask_agreement(const SignVector & sign_tau_a, const SignVector & ref_signs);

// m_i = sign(tau_A)_i * ref_i in {-1, 0, +1}; retained coordinates end up
// pointing along the reference.
MaskVector mask_force_agreement(const SignVector & sign_tau_a, const SignVector & ref_signs);

// Reference signs resampled uniformly from {-1, +1} per coordinate, then the
// agreement rule; expected retained fraction over nonzero coordinates is 1/2.
MaskVector mask_random(const SignVector & sign_tau_a, uint64_t seed);

MaskVector build_mask(MaskStrategy strategy, const SignVector & sign_tau_a,
                      const SignVector & ref_signs, uint64_t seed);

struct TransportOutcome {
    MaskVector mask;
    TaskVector delta;
    ParamVector transported;
};

// Mask, scale, apply: the whole transport in one call, with the application
// convention taken from cfg.reference.
TransportOutcome apply_transport(const ParamVector & theta_b, const TaskVector & tau_a,
                                 const SignVector & reference_signs, const TransportConfig & cfg);

// delta = alpha * (mask (.) tau_A); alpha must lie in (0, 1].
TaskVector build_delta(const MaskVector & mask, const TaskVector & tau_a, double alpha);

ParamVector transport(const ParamVector & theta_b, const TaskVector & delta, Reference reference);

// <g, delta>. Nonnegative by construction when the mask agrees with sign(g).
double descent_check(const ParamVector & g, const TaskVector & delta);

struct TaylorProbeRow {
    double alpha = 0.0;
    double measured_loss = 0.0;
    double predicted_loss = 0.0;  // L(theta_B) - alpha * <g, delta>
};

// Measures L(theta_B - alpha * delta) against the first-order prediction.
std::vector<TaylorProbeRow> taylor_probe(const ParamVector & theta_b, const TaskVector & delta,
                                         std::span<const double> alphas, const LabeledDataset & data,
                                         const ModelSpec & spec);

void save_taylor_probe_csv(std::span<const TaylorProbeRow> rows, const std::string & path);

} // namespace gradfix
