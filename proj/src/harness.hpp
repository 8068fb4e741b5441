#pragma once

#include "config.hpp"

#include <string>
#include <vector>

namespace gradfix {

struct ReportRow {
    std::string variant;      // zero_shot | fine_tune | naive_add | oracle | gradfix | fewshot
    std::string strategy;     // agreement | force_agreement | random | "-"
    std::string aggregation;  // majority | mean | "-"
    std::string heuristic;    // random | herding | kmedoids | coreset | "-"
    int b = 0;                // examples per class; 0 when not applicable
    double alpha = 0.0;       // selected scaling; 0 when not applicable
    uint64_t seed = 0;
    double accuracy = 0.0;
    double loss_value = 0.0;
    double descent_inner_product = 0.0;  // <g, delta>; 0 when no delta is involved
    // per-segment sign agreement between the row's reference signs and the
    // oracle reference; empty when the row has no estimate
    std::vector<AgreementRow> agreement_with_oracle;
};

struct ExperimentReport {
    std::string config_hash;
    std::vector<ReportRow> rows;
};

// The world, both pre-trains, both fine-tunes and everything derived from
// them. All of it keys off world.seed: the experiment seeds vary only the
// composition of the supervision subsets, matching the comparison protocol
// (fixed pre-trains, resampled supervision). Change world.seed to move the
// other axis.
struct BaseArtifacts {
    World world;
    ParamVector theta_a;
    ParamVector theta_b;
    ParamVector theta_a_ft;
    ParamVector theta_b_ft;
    TaskVector tau_a;
    TaskVector tau_b;
    SignVector sign_tau_a;     // sign(tau_A) at the configured zero_tol
    SignVector oracle_ref;     // sign(tau_B)
    ParamVector full_gradient; // grad of theta_B on the full downstream train set
    SignVector full_gradient_signs;
    FeatureSet features;       // frozen-encoder embeddings; empty when unused
};

BaseArtifacts prepare_base(const ExperimentConfig & cfg);

// All transport variants, baselines, and ablations for every configured
// (budget x heuristic x aggregation x strategy) cell, per seed. Rows come
// back sorted by a fixed key so reports are byte-stable.
ExperimentReport run_pipeline(const ExperimentConfig & cfg);

// run_pipeline plus per-seed checkpoints and report.csv/report.json under
// out_dir. Work happens inside out_dir/partial and is moved into place on
// success; on error the partial directory stays behind for inspection.
ExperimentReport run_pipeline_files(const ExperimentConfig & cfg, const std::string & out_dir);

struct AlphaSweepResult {
    std::vector<double> alphas;
    std::vector<double> val_accuracy;   // mean over seeds
    std::vector<double> test_accuracy;
    double selected_alpha = 0.0;        // argmax validation accuracy, ties -> smaller
};

// variant: zero_shot-free variants with a scaling knob: "oracle" (agreement
// mask against sign(tau_B)) or "gradfix" (first configured budget, heuristic
// and aggregation, agreement mask).
AlphaSweepResult sweep_alpha(const ExperimentConfig & cfg, const std::string & variant);

void save_alpha_sweep_csv(const AlphaSweepResult & sweep, const std::string & path);

// theta_B fine-tuned on the supervision subset with the configured few-shot
// recipe (a single optimizer step by default).
ParamVector fewshot_baseline(const ParamVector & theta_b, const LabeledDataset & subset,
                             const TrainConfig & recipe, const ModelSpec & spec);

// report.csv and report.json (rows plus config hash and version), written
// atomically with deterministic field order.
void report_emit(const ExperimentReport & report, const std::string & dir);

std::string report_to_csv(const ExperimentReport & report);
std::string report_to_json(const ExperimentReport & report);

} // namespace gradfix
