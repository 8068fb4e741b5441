#include "model.hpp"

#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gradfix {

namespace {

void validate(const ModelSpec & spec) {
    if (spec.input_dim < 1) {
        throw_config("model: input_dim must be >= 1");
    }
    for (int h : spec.hidden_dims) {
        if (h < 1) {
            throw_config("model: hidden dims must be >= 1");
        }
    }
    if (spec.num_classes < 2) {
        throw_config("model: num_classes must be >= 2");
    }
    if (!(spec.init_scale > 0.0) || !std::isfinite(spec.init_scale)) {
        throw_config("model: init_scale must be positive and finite");
    }
}

std::vector<int> layer_dims(const ModelSpec & spec) {
    std::vector<int> dims;
    dims.push_back(spec.input_dim);
    dims.insert(dims.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
    dims.push_back(spec.num_classes);
    return dims;
}

void check_theta(const ParamVector & theta, const ModelSpec & spec) {
    const auto dims = layer_dims(spec);
    const size_t expected = 2 * (dims.size() - 1);
    if (theta.segments.size() != expected) {
        throw_config("congruence error: parameter vector has " + std::to_string(theta.segments.size()) +
                     " segments, spec expects " + std::to_string(expected));
    }
    for (size_t l = 0; l + 1 < dims.size(); l++) {
        const auto & w = theta.segments[2 * l];
        const auto & b = theta.segments[2 * l + 1];
        const std::string prefix = "layer" + std::to_string(l);
        if (w.name != prefix + ".w" || b.name != prefix + ".b" ||
            w.shape != std::vector<int64_t>{dims[l + 1], dims[l]} ||
            b.shape != std::vector<int64_t>{dims[l + 1]}) {
            throw_config("congruence error: parameter vector does not match spec at " + prefix);
        }
    }
}

void check_data(const LabeledDataset & data, const ModelSpec & spec) {
    if (data.size() == 0) {
        throw_config("empty dataset");
    }
    if (data.input_dim != spec.input_dim) {
        throw_config("dataset input_dim " + std::to_string(data.input_dim) +
                     " does not match model input_dim " + std::to_string(spec.input_dim));
    }
    for (int y : data.labels) {
        if (y < 0 || y >= spec.num_classes) {
            throw_config("label " + std::to_string(y) + " out of range for " +
                         std::to_string(spec.num_classes) + " classes");
        }
    }
}

double activate(double z, Activation a) {
    return a == Activation::Tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

// Derivative expressed through the activation value where possible.
double activate_grad(double z, double h, Activation a) {
    return a == Activation::Tanh ? 1.0 - h * h : (z > 0.0 ? 1.0 : 0.0);
}

struct Scratch {
    // pre-activations and activations per layer; probs reused for softmax
    std::vector<std::vector<double>> z;
    std::vector<std::vector<double>> h;
    std::vector<double> probs;
    std::vector<double> dz;
    std::vector<double> dz_prev;

    explicit Scratch(const std::vector<int> & dims) {
        const size_t layers = dims.size() - 1;
        z.resize(layers);
        h.resize(layers);
        for (size_t l = 0; l < layers; l++) {
            z[l].resize(dims[l + 1]);
            h[l].resize(dims[l + 1]);
        }
        probs.resize(dims.back());
        const int widest = *std::max_element(dims.begin(), dims.end());
        dz.resize(widest);
        dz_prev.resize(widest);
    }
};

// logits end up in scratch.z.back(); hidden activations in scratch.h[l]
void forward(const ParamVector & theta, std::span<const double> x, const ModelSpec & spec,
             const std::vector<int> & dims, Scratch & s) {
    const int layers = static_cast<int>(dims.size()) - 1;
    std::span<const double> input = x;
    for (int l = 0; l < layers; l++) {
        const auto & w = theta.segments[2 * l].values;
        const auto & b = theta.segments[2 * l + 1].values;
        const int in = dims[l];
        const int out = dims[l + 1];
        for (int o = 0; o < out; o++) {
            double acc = b[o];
            const double * row = w.data() + static_cast<size_t>(o) * in;
            for (int i = 0; i < in; i++) {
                acc += row[i] * input[i];
            }
            s.z[l][o] = acc;
        }
        if (l + 1 < layers) {
            for (int o = 0; o < out; o++) {
                s.h[l][o] = activate(s.z[l][o], spec.activation);
            }
            input = s.h[l];
        }
    }
}

// loss of one sample given logits already in scratch; fills probs
double sample_loss_and_probs(const std::vector<double> & logits, int label, std::vector<double> & probs) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (size_t c = 0; c < logits.size(); c++) {
        probs[c] = std::exp(logits[c] - m);
        sum += probs[c];
    }
    const double inv = 1.0 / sum;
    for (auto & p : probs) {
        p *= inv;
    }
    return m + std::log(sum) - logits[label];
}

// Adds scale * d(sample loss)/d(theta) into `out`; forward state in scratch.
void backward_into(const ParamVector & theta, std::span<const double> x, int label, const ModelSpec & spec,
                   const std::vector<int> & dims, Scratch & s, double scale, ParamVector & out) {
    const int layers = static_cast<int>(dims.size()) - 1;

    sample_loss_and_probs(s.z[layers - 1], label, s.probs);
    for (int c = 0; c < dims.back(); c++) {
        s.dz[c] = s.probs[c] - (c == label ? 1.0 : 0.0);
    }

    for (int l = layers - 1; l >= 0; l--) {
        const int in = dims[l];
        const int out_dim = dims[l + 1];
        const auto & w = theta.segments[2 * l].values;
        auto & dw = out.segments[2 * l].values;
        auto & db = out.segments[2 * l + 1].values;
        const std::span<const double> input = l == 0 ? x : std::span<const double>(s.h[l - 1]);

        for (int o = 0; o < out_dim; o++) {
            const double g = s.dz[o];
            double * drow = dw.data() + static_cast<size_t>(o) * in;
            const double gs = scale * g;
            for (int i = 0; i < in; i++) {
                drow[i] += gs * input[i];
            }
            db[o] += gs;
        }

        if (l > 0) {
            for (int i = 0; i < in; i++) {
                double acc = 0.0;
                for (int o = 0; o < out_dim; o++) {
                    acc += w[static_cast<size_t>(o) * in + i] * s.dz[o];
                }
                s.dz_prev[i] = acc * activate_grad(s.z[l - 1][i], s.h[l - 1][i], spec.activation);
            }
            std::swap(s.dz, s.dz_prev);
        }
    }
}

ParamVector grad_indices(const ParamVector & theta, const LabeledDataset & data,
                         std::span<const int64_t> indices, const ModelSpec & spec) {
    const auto dims = layer_dims(spec);
    Scratch s(dims);
    ParamVector g = param_layout(spec);
    for (int64_t idx : indices) {
        forward(theta, data.row(idx), spec, dims, s);
        backward_into(theta, data.row(idx), data.labels[idx], spec, dims, s, 1.0, g);
    }
    const double inv_n = 1.0 / static_cast<double>(indices.size());
    for (auto & seg : g.segments) {
        for (auto & v : seg.values) {
            v *= inv_n;
        }
    }
    check_finite(g, "gradient");
    return g;
}

void check_train_config(const TrainConfig & cfg) {
    if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
        throw_config("train: learning_rate must be positive and finite");
    }
    if (cfg.steps < 0) {
        throw_config("train: steps must be >= 0");
    }
    if (cfg.optimizer != Optimizer::FullBatchGd && cfg.batch_size < 1) {
        throw_config("train: batch_size must be >= 1");
    }
    if (cfg.weight_decay < 0.0 || !std::isfinite(cfg.weight_decay)) {
        throw_config("train: weight_decay must be >= 0");
    }
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
        throw_config("train: momentum must be in [0, 1)");
    }
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0 || !(cfg.eps > 0.0)) {
        throw_config("train: bad AdamW hyperparameters");
    }
    if (cfg.freeze_layers < 0) {
        throw_config("train: freeze_layers must be >= 0");
    }
}

// Deterministic minibatch order: shuffled index array, short tail ends the
// epoch, reshuffle on wrap.
class BatchCursor {
public:
    BatchCursor(int64_t n, int64_t batch_size, uint64_t seed)
        : batch_size_(batch_size), rng_(derive_seed(seed, "batch_order")) {
        indices_.resize(n);
        std::iota(indices_.begin(), indices_.end(), 0);
        shuffle();
    }

    std::span<const int64_t> next() {
        if (pos_ >= static_cast<int64_t>(indices_.size())) {
            shuffle();
            pos_ = 0;
        }
        const int64_t take = std::min<int64_t>(batch_size_, indices_.size() - pos_);
        std::span<const int64_t> out(indices_.data() + pos_, static_cast<size_t>(take));
        pos_ += take;
        return out;
    }

private:
    void shuffle() {
        for (int64_t i = static_cast<int64_t>(indices_.size()) - 1; i > 0; i--) {
            const int64_t j = static_cast<int64_t>(rng_.next_below(i + 1));
            std::swap(indices_[i], indices_[j]);
        }
    }

    std::vector<int64_t> indices_;
    int64_t batch_size_ = 0;
    int64_t pos_ = 0;
    Rng rng_;
};

void zero_frozen(ParamVector & g, int freeze_layers) {
    const size_t limit = std::min(g.segments.size(), 2 * static_cast<size_t>(freeze_layers));
    for (size_t s = 0; s < limit; s++) {
        std::fill(g.segments[s].values.begin(), g.segments[s].values.end(), 0.0);
    }
}

void check_step_finite(const ParamVector & theta, int64_t step) {
    for (const auto & seg : theta.segments) {
        for (double v : seg.values) {
            if (!std::isfinite(v)) {
                throw_numeric("divergence at step " + std::to_string(step) +
                              ": non-finite parameter in segment '" + seg.name + "'");
            }
        }
    }
}

} // namespace

ParamVector param_layout(const ModelSpec & spec) {
    validate(spec);
    const auto dims = layer_dims(spec);
    ParamVector v;
    for (size_t l = 0; l + 1 < dims.size(); l++) {
        const std::string prefix = "layer" + std::to_string(l);
        Segment w;
        w.name = prefix + ".w";
        w.shape = {dims[l + 1], dims[l]};
        w.values.assign(static_cast<size_t>(dims[l + 1]) * dims[l], 0.0);
        Segment b;
        b.name = prefix + ".b";
        b.shape = {dims[l + 1]};
        b.values.assign(static_cast<size_t>(dims[l + 1]), 0.0);
        v.segments.push_back(std::move(w));
        v.segments.push_back(std::move(b));
    }
    return v;
}

ParamVector init_params(const ModelSpec & spec, uint64_t seed) {
    ParamVector v = param_layout(spec);
    const auto dims = layer_dims(spec);
    Rng rng(derive_seed(seed, "init"));
    for (size_t l = 0; l + 1 < dims.size(); l++) {
        const double std_dev = spec.init_scale / std::sqrt(static_cast<double>(dims[l]));
        for (auto & w : v.segments[2 * l].values) {
            w = std_dev * rng.next_normal();
        }
        // biases stay zero
    }
    return v;
}

double loss(const ParamVector & theta, const LabeledDataset & data, const ModelSpec & spec) {
    check_theta(theta, spec);
    check_data(data, spec);
    const auto dims = layer_dims(spec);
    Scratch s(dims);
    double total = 0.0;
    for (int64_t i = 0; i < data.size(); i++) {
        forward(theta, data.row(i), spec, dims, s);
        total += sample_loss_and_probs(s.z.back(), data.labels[i], s.probs);
    }
    const double value = total / static_cast<double>(data.size());
    if (!std::isfinite(value)) {
        throw_numeric("numeric error: non-finite loss");
    }
    return value;
}

ParamVector grad(const ParamVector & theta, const LabeledDataset & data, const ModelSpec & spec) {
    check_theta(theta, spec);
    check_data(data, spec);
    std::vector<int64_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    return grad_indices(theta, data, all, spec);
}

ParamVector per_sample_grad(const ParamVector & theta, const LabeledDataset & data, int64_t sample,
                            const ModelSpec & spec) {
    check_theta(theta, spec);
    check_data(data, spec);
    if (sample < 0 || sample >= data.size()) {
        throw_config("per_sample_grad: sample index out of range");
    }
    const int64_t idx[1] = {sample};
    return grad_indices(theta, data, idx, spec);
}

ParamVector train(const ParamVector & theta0, const LabeledDataset & data, const TrainConfig & cfg,
                  const ModelSpec & spec) {
    check_theta(theta0, spec);
    check_data(data, spec);
    check_train_config(cfg);

    ParamVector theta = theta0;
    if (cfg.steps == 0) {
        return theta;
    }

    const double lr = cfg.learning_rate;

    auto step_grad = [&](int64_t step, std::span<const int64_t> indices) {
        try {
            return grad_indices(theta, data, indices, spec);
        } catch (const Error & e) {
            if (e.code() == errc::numeric) {
                throw_numeric("divergence at step " + std::to_string(step) + ": " + e.what());
            }
            throw;
        }
    };

    switch (cfg.optimizer) {
        case Optimizer::FullBatchGd: {
            std::vector<int64_t> all(data.size());
            std::iota(all.begin(), all.end(), 0);
            for (int64_t step = 1; step <= cfg.steps; step++) {
                ParamVector g = step_grad(step, all);
                zero_frozen(g, cfg.freeze_layers);
                for (size_t s = 0; s < theta.segments.size(); s++) {
                    auto & t = theta.segments[s].values;
                    const auto & gs = g.segments[s].values;
                    for (size_t i = 0; i < t.size(); i++) {
                        t[i] -= lr * gs[i];
                    }
                }
                check_step_finite(theta, step);
            }
            break;
        }
        case Optimizer::Sgd: {
            BatchCursor cursor(data.size(), cfg.batch_size, cfg.seed);
            ParamVector velocity = param_layout(spec);
            for (int64_t step = 1; step <= cfg.steps; step++) {
                ParamVector g = step_grad(step, cursor.next());
                zero_frozen(g, cfg.freeze_layers);
                for (size_t s = 0; s < theta.segments.size(); s++) {
                    auto & t = theta.segments[s].values;
                    auto & v = velocity.segments[s].values;
                    const auto & gs = g.segments[s].values;
                    for (size_t i = 0; i < t.size(); i++) {
                        v[i] = cfg.momentum * v[i] + gs[i];
                        t[i] -= lr * (v[i] + cfg.weight_decay * t[i]);
                    }
                }
                check_step_finite(theta, step);
            }
            break;
        }
        case Optimizer::AdamW: {
            BatchCursor cursor(data.size(), cfg.batch_size, cfg.seed);
            ParamVector m = param_layout(spec);
            ParamVector v = param_layout(spec);
            for (int64_t step = 1; step <= cfg.steps; step++) {
                ParamVector g = step_grad(step, cursor.next());
                zero_frozen(g, cfg.freeze_layers);
                const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
                const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
                for (size_t s = 0; s < theta.segments.size(); s++) {
                    auto & t = theta.segments[s].values;
                    auto & ms = m.segments[s].values;
                    auto & vs = v.segments[s].values;
                    const auto & gs = g.segments[s].values;
                    const bool frozen = s < 2 * static_cast<size_t>(cfg.freeze_layers);
                    for (size_t i = 0; i < t.size(); i++) {
                        ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * gs[i];
                        vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * gs[i] * gs[i];
                        if (frozen) {
                            continue;
                        }
                        const double m_hat = ms[i] / bc1;
                        const double v_hat = vs[i] / bc2;
                        t[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * t[i]);
                    }
                }
                check_step_finite(theta, step);
            }
            break;
        }
    }
    return theta;
}

std::pair<ParamVector, TaskVector> finetune_one_epoch_fullbatch(const ParamVector & theta,
                                                                const LabeledDataset & data,
                                                                double lr, const ModelSpec & spec) {
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw_config("finetune_one_epoch_fullbatch: lr must be positive and finite");
    }
    const ParamVector g = grad(theta, data, spec);
    TaskVector tau = g;
    for (auto & seg : tau.segments) {
        for (auto & v : seg.values) {
            v = -(lr * v);
        }
    }
    ParamVector theta_ft = add_scaled(theta, tau, 1.0);
    return {std::move(theta_ft), std::move(tau)};
}

double evaluate(const ParamVector & theta, const LabeledDataset & data, const ModelSpec & spec) {
    check_theta(theta, spec);
    check_data(data, spec);
    const auto dims = layer_dims(spec);
    Scratch s(dims);
    int64_t correct = 0;
    for (int64_t i = 0; i < data.size(); i++) {
        forward(theta, data.row(i), spec, dims, s);
        const auto & logits = s.z.back();
        int best = 0;
        for (int c = 1; c < spec.num_classes; c++) {
            if (logits[c] > logits[best]) {  // strict: ties keep the lowest index
                best = c;
            }
        }
        if (best == data.labels[i]) {
            correct++;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

FeatureSet embed(const ParamVector & theta, const LabeledDataset & data, const ModelSpec & spec) {
    check_theta(theta, spec);
    check_data(data, spec);
    if (spec.hidden_dims.empty()) {
        throw_config("embed: linear models have no penultimate layer");
    }
    const auto dims = layer_dims(spec);
    Scratch s(dims);
    const int e = spec.hidden_dims.back();

    FeatureSet fs;
    fs.dim = e;
    fs.rows.resize(static_cast<size_t>(data.size()) * e);
    fs.labels = data.labels;
    fs.source_ids.resize(data.size());
    fs.zero_row.assign(data.size(), 0);

    const int last_hidden = static_cast<int>(dims.size()) - 3;  // index into s.h
    for (int64_t i = 0; i < data.size(); i++) {
        forward(theta, data.row(i), spec, dims, s);
        double * out = fs.rows.data() + i * e;
        double norm_sq = 0.0;
        for (int d = 0; d < e; d++) {
            out[d] = s.h[last_hidden][d];
            norm_sq += out[d] * out[d];
        }
        if (norm_sq == 0.0) {
            fs.zero_row[i] = 1;
        } else {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (int d = 0; d < e; d++) {
                out[d] *= inv;
            }
        }
        fs.source_ids[i] = i;
    }
    return fs;
}

} // namespace gradfix
