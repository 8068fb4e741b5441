#pragma once

#include "dataset.hpp"
#include "param_vector.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace gradfix {

enum class Activation {
    Tanh,
    Relu,
};

enum class InitScheme {
    NormalScaled,  // weight ~ init_scale / sqrt(fan_in) * N(0,1), bias 0
};

// Linear model when hidden_dims is empty, MLP otherwise. Parameter layout is
// fixed: layer0.w (out x in, row-major), layer0.b, layer1.w, ...
struct ModelSpec {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int num_classes = 0;
    Activation activation = Activation::Tanh;
    double init_scale = 1.0;
    InitScheme init_scheme = InitScheme::NormalScaled;

    int num_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
};

enum class Optimizer {
    FullBatchGd,
    Sgd,
    AdamW,
};

struct TrainConfig {
    Optimizer optimizer = Optimizer::FullBatchGd;
    double learning_rate = 0.1;
    int64_t steps = 100;
    int64_t batch_size = 128;   // ignored by full-batch GD
    double weight_decay = 0.0;
    double momentum = 0.0;      // SGD only
    double beta1 = 0.9;         // AdamW
    double beta2 = 0.999;
    double eps = 1e-8;
    uint64_t seed = 0;
    int freeze_layers = 0;      // leading layers excluded from updates
};

// Zero-valued ParamVector with the layout implied by the spec.
ParamVector param_layout(const ModelSpec & spec);

ParamVector init_params(const ModelSpec & spec, uint64_t seed);

// Mean softmax cross-entropy over the dataset, log-sum-exp stabilized.
double loss(const ParamVector & theta, const LabeledDataset & data, const ModelSpec & spec);

// Exact reverse-mode gradient of `loss`. Per-sample contributions accumulate
// in sample order, then scale by 1/n.
ParamVector grad(const ParamVector & theta, const LabeledDataset & data, const ModelSpec & spec);

ParamVector per_sample_grad(const ParamVector & theta, const LabeledDataset & data, int64_t sample,
                            const ModelSpec & spec);

ParamVector train(const ParamVector & theta0, const LabeledDataset & data, const TrainConfig & cfg,
                  const ModelSpec & spec);

// One full-batch GD step. The returned task vector is computed directly as
// -lr * grad and the fine-tuned parameters as theta + tau, so the
// tau = -lr * g identity holds to the bit.
std::pair<ParamVector, TaskVector> finetune_one_epoch_fullbatch(const ParamVector & theta,
                                                                const LabeledDataset & data,
                                                                double lr, const ModelSpec & spec);

// Fraction of argmax-correct predictions; ties go to the lowest class index.
double evaluate(const ParamVector & theta, const LabeledDataset & data, const ModelSpec & spec);

// Penultimate activations, L2-normalized per row. Requires a hidden layer.
FeatureSet embed(const ParamVector & theta, const LabeledDataset & data, const ModelSpec & spec);

} // namespace gradfix
