#pragma once

#include "dataset.hpp"
#include "masking.hpp"
#include "model.hpp"
#include "sign_estimation.hpp"
#include "subset_selection.hpp"

#include <string>
#include <vector>

namespace gradfix {

inline constexpr char kVersion[] = "0.1.0";

struct ExperimentConfig {
    WorldConfig world;
    ModelSpec model;       // input_dim / num_classes are derived from world
    TrainConfig pretrain;
    TrainConfig finetune;
    TrainConfig fewshot;   // the few-shot baseline recipe (one step by default)
    std::vector<int> budgets = {1, 2, 5, 10, 20, 50};
    std::vector<double> alpha_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<MaskStrategy> strategies = {MaskStrategy::Agreement, MaskStrategy::ForceAgreement,
                                            MaskStrategy::Random};
    std::vector<Aggregation> aggregations = {Aggregation::Majority, Aggregation::Mean};
    std::vector<Heuristic> heuristics = {Heuristic::Random, Heuristic::Herding,
                                         Heuristic::KMedoids, Heuristic::Coreset};
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    double zero_tol = 0.0;
    std::string output_dir = "out";
};

// The default desk-scale fixture; runs the whole pipeline in seconds.
ExperimentConfig canonical_config();

// Sectioned key=value text. Unknown sections or keys are rejected.
ExperimentConfig parse_config_text(const std::string & text, const std::string & origin);
ExperimentConfig load_config(const std::string & path);

// Applies "section.key=value"; same validation as the file path.
void apply_override(ExperimentConfig & cfg, const std::string & dotted_key, const std::string & value);

// Canonical serialization: every field, fixed order. parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig & cfg);

// Hex FNV-1a of the canonical serialization.
std::string config_hash(const ExperimentConfig & cfg);

const char * to_string(Activation a);
const char * to_string(Optimizer o);
const char * to_string(MaskStrategy s);
const char * to_string(Reference r);
const char * to_string(Aggregation a);
const char * to_string(Heuristic h);

Activation parse_activation(const std::string & s);
Optimizer parse_optimizer(const std::string & s);
MaskStrategy parse_strategy(const std::string & s);
Reference parse_reference(const std::string & s);
Aggregation parse_aggregation(const std::string & s);
Heuristic parse_heuristic(const std::string & s);

} // namespace gradfix
