#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace gradfix {

namespace {

std::string trim(const std::string & s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && isspace(static_cast<unsigned char>(s[b]))) {
        b++;
    }
    while (e > b && isspace(static_cast<unsigned char>(s[e - 1]))) {
        e--;
    }
    return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string & s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) {
            comma = s.size();
        }
        const std::string item = trim(s.substr(pos, comma - pos));
        if (!item.empty()) {
            out.push_back(item);
        }
        pos = comma + 1;
    }
    return out;
}

int64_t to_i64(const std::string & key, const std::string & v) {
    char * end = nullptr;
    const long long x = strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') {
        throw_config("config: " + key + ": cannot parse integer '" + v + "'");
    }
    return x;
}

uint64_t to_u64(const std::string & key, const std::string & v) {
    char * end = nullptr;
    const unsigned long long x = strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0' || v.find('-') != std::string::npos) {
        throw_config("config: " + key + ": cannot parse unsigned integer '" + v + "'");
    }
    return x;
}

double to_f64(const std::string & key, const std::string & v) {
    char * end = nullptr;
    const double x = strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0' || !std::isfinite(x)) {
        throw_config("config: " + key + ": cannot parse number '" + v + "'");
    }
    return x;
}

void set_train_key(TrainConfig & t, const std::string & full, const std::string & key,
                   const std::string & value) {
    if (key == "optimizer") {
        t.optimizer = parse_optimizer(value);
    } else if (key == "learning_rate") {
        t.learning_rate = to_f64(full, value);
    } else if (key == "steps") {
        t.steps = to_i64(full, value);
    } else if (key == "batch_size") {
        t.batch_size = to_i64(full, value);
    } else if (key == "weight_decay") {
        t.weight_decay = to_f64(full, value);
    } else if (key == "momentum") {
        t.momentum = to_f64(full, value);
    } else if (key == "beta1") {
        t.beta1 = to_f64(full, value);
    } else if (key == "beta2") {
        t.beta2 = to_f64(full, value);
    } else if (key == "eps") {
        t.eps = to_f64(full, value);
    } else if (key == "freeze_layers") {
        t.freeze_layers = static_cast<int>(to_i64(full, value));
    } else {
        throw_config("config: unknown key '" + full + "'");
    }
}

void set_key(ExperimentConfig & cfg, const std::string & section, const std::string & key,
             const std::string & value) {
    const std::string full = section + "." + key;
    if (section == "world") {
        auto & w = cfg.world;
        if (key == "input_dim") {
            w.input_dim = static_cast<int>(to_i64(full, value));
        } else if (key == "num_classes_pretrain") {
            w.num_classes_pretrain = static_cast<int>(to_i64(full, value));
        } else if (key == "num_classes_downstream") {
            w.num_classes_downstream = static_cast<int>(to_i64(full, value));
        } else if (key == "mean_dispersion") {
            w.mean_dispersion = to_f64(full, value);
        } else if (key == "within_class_sigma") {
            w.within_class_sigma = to_f64(full, value);
        } else if (key == "rotation_angle") {
            w.rotation_angle = to_f64(full, value);
        } else if (key == "pretrain_samples") {
            w.pretrain_samples = to_i64(full, value);
        } else if (key == "train_samples") {
            w.train_samples = to_i64(full, value);
        } else if (key == "val_samples") {
            w.val_samples = to_i64(full, value);
        } else if (key == "test_samples") {
            w.test_samples = to_i64(full, value);
        } else if (key == "seed") {
            w.seed = to_u64(full, value);
        } else {
            throw_config("config: unknown key '" + full + "'");
        }
    } else if (section == "model") {
        auto & m = cfg.model;
        if (key == "hidden_dims") {
            m.hidden_dims.clear();
            if (trim(value) != "none") {
                for (const auto & item : split_list(value)) {
                    m.hidden_dims.push_back(static_cast<int>(to_i64(full, item)));
                }
            }
        } else if (key == "activation") {
            m.activation = parse_activation(value);
        } else if (key == "init_scale") {
            m.init_scale = to_f64(full, value);
        } else {
            throw_config("config: unknown key '" + full + "'");
        }
    } else if (section == "pretrain") {
        set_train_key(cfg.pretrain, full, key, value);
    } else if (section == "finetune") {
        set_train_key(cfg.finetune, full, key, value);
    } else if (section == "fewshot") {
        set_train_key(cfg.fewshot, full, key, value);
    } else if (section == "experiment") {
        if (key == "budgets") {
            cfg.budgets.clear();
            for (const auto & item : split_list(value)) {
                cfg.budgets.push_back(static_cast<int>(to_i64(full, item)));
            }
        } else if (key == "alpha_grid") {
            cfg.alpha_grid.clear();
            for (const auto & item : split_list(value)) {
                cfg.alpha_grid.push_back(to_f64(full, item));
            }
        } else if (key == "strategies") {
            cfg.strategies.clear();
            for (const auto & item : split_list(value)) {
                cfg.strategies.push_back(parse_strategy(item));
            }
        } else if (key == "aggregations") {
            cfg.aggregations.clear();
            for (const auto & item : split_list(value)) {
                cfg.aggregations.push_back(parse_aggregation(item));
            }
        } else if (key == "heuristics") {
            cfg.heuristics.clear();
            for (const auto & item : split_list(value)) {
                cfg.heuristics.push_back(parse_heuristic(item));
            }
        } else if (key == "seeds") {
            cfg.seeds.clear();
            for (const auto & item : split_list(value)) {
                cfg.seeds.push_back(to_u64(full, item));
            }
        } else if (key == "zero_tol") {
            cfg.zero_tol = to_f64(full, value);
        } else if (key == "output_dir") {
            cfg.output_dir = trim(value);
        } else {
            throw_config("config: unknown key '" + full + "'");
        }
    } else {
        throw_config("config: unknown section '" + section + "'");
    }
}

void finalize(ExperimentConfig & cfg) {
    cfg.model.input_dim = cfg.world.input_dim;
    cfg.model.num_classes = std::max(cfg.world.num_classes_pretrain, cfg.world.num_classes_downstream);
    if (cfg.seeds.empty()) {
        throw_config("config: experiment.seeds must be non-empty");
    }
    if (cfg.budgets.empty()) {
        throw_config("config: experiment.budgets must be non-empty");
    }
    for (int b : cfg.budgets) {
        if (b < 1) {
            throw_config("config: budgets must be >= 1");
        }
    }
    if (cfg.alpha_grid.empty()) {
        throw_config("config: experiment.alpha_grid must be non-empty");
    }
    for (double a : cfg.alpha_grid) {
        if (!(a > 0.0) || !(a <= 1.0)) {
            throw_config("config: alpha_grid values must lie in (0, 1]");
        }
    }
    if (!(cfg.zero_tol >= 0.0)) {
        throw_config("config: zero_tol must be >= 0");
    }
}

template <typename T>
std::string join_list(const std::vector<T> & values, std::string (*fmt)(const T &)) {
    std::string out;
    for (size_t i = 0; i < values.size(); i++) {
        if (i > 0) {
            out += ",";
        }
        out += fmt(values[i]);
    }
    return out;
}

std::string train_section(const char * name, const TrainConfig & t) {
    std::string out;
    out += std::string("[") + name + "]\n";
    out += std::string("optimizer = ") + to_string(t.optimizer) + "\n";
    out += "learning_rate = " + format_double(t.learning_rate) + "\n";
    out += "steps = " + std::to_string(t.steps) + "\n";
    out += "batch_size = " + std::to_string(t.batch_size) + "\n";
    out += "weight_decay = " + format_double(t.weight_decay) + "\n";
    out += "momentum = " + format_double(t.momentum) + "\n";
    out += "beta1 = " + format_double(t.beta1) + "\n";
    out += "beta2 = " + format_double(t.beta2) + "\n";
    out += "eps = " + format_double(t.eps) + "\n";
    out += "freeze_layers = " + std::to_string(t.freeze_layers) + "\n";
    return out;
}

} // namespace

ExperimentConfig canonical_config() {
    ExperimentConfig cfg;

    cfg.world.input_dim = 16;
    cfg.world.num_classes_pretrain = 4;
    cfg.world.num_classes_downstream = 4;
    cfg.world.mean_dispersion = 1.0;
    cfg.world.within_class_sigma = 0.9;
    cfg.world.rotation_angle = 0.5235987755982988;  // pi/6
    cfg.world.pretrain_samples = 2000;
    cfg.world.train_samples = 400;
    cfg.world.val_samples = 100;
    cfg.world.test_samples = 400;
    cfg.world.seed = 0;

    cfg.model.hidden_dims = {32};
    cfg.model.activation = Activation::Tanh;
    cfg.model.init_scale = 1.0;

    cfg.pretrain.optimizer = Optimizer::AdamW;
    cfg.pretrain.learning_rate = 0.01;
    cfg.pretrain.steps = 400;
    cfg.pretrain.batch_size = 128;
    cfg.pretrain.weight_decay = 0.01;

    cfg.finetune.optimizer = Optimizer::AdamW;
    cfg.finetune.learning_rate = 0.005;
    cfg.finetune.steps = 300;
    cfg.finetune.batch_size = 128;
    cfg.finetune.weight_decay = 0.01;

    cfg.fewshot.optimizer = Optimizer::AdamW;
    cfg.fewshot.learning_rate = 0.05;
    cfg.fewshot.steps = 1;
    cfg.fewshot.batch_size = 512;
    cfg.fewshot.weight_decay = 0.0;

    ExperimentConfig out = cfg;
    finalize(out);
    return out;
}

ExperimentConfig parse_config_text(const std::string & text, const std::string & origin) {
    ExperimentConfig cfg = canonical_config();
    std::string section;
    size_t pos = 0;
    int64_t line_no = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) {
            end = text.size();
        }
        std::string line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        line_no++;

        if (line.empty() || line[0] == '#' || line[0] == ';') {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw_config(origin + ":" + std::to_string(line_no) + ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw_config(origin + ":" + std::to_string(line_no) + ": expected key = value");
        }
        if (section.empty()) {
            throw_config(origin + ":" + std::to_string(line_no) + ": key outside any section");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        set_key(cfg, section, key, value);
    }
    finalize(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string & path) {
    FILE * f = fopen(path.c_str(), "rb");
    if (!f) {
        throw_io("cannot open config: " + path);
    }
    std::string content;
    char buf[1 << 14];
    size_t got;
    while ((got = fread(buf, 1, sizeof(buf), f)) > 0) {
        content.append(buf, got);
    }
    fclose(f);
    return parse_config_text(content, path);
}

void apply_override(ExperimentConfig & cfg, const std::string & dotted_key, const std::string & value) {
    const size_t dot = dotted_key.find('.');
    if (dot == std::string::npos) {
        throw_config("override: expected section.key, got '" + dotted_key + "'");
    }
    set_key(cfg, dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value);
    finalize(cfg);
}

std::string serialize_config(const ExperimentConfig & cfg) {
    std::string out;
    out += "[world]\n";
    out += "input_dim = " + std::to_string(cfg.world.input_dim) + "\n";
    out += "num_classes_pretrain = " + std::to_string(cfg.world.num_classes_pretrain) + "\n";
    out += "num_classes_downstream = " + std::to_string(cfg.world.num_classes_downstream) + "\n";
    out += "mean_dispersion = " + format_double(cfg.world.mean_dispersion) + "\n";
    out += "within_class_sigma = " + format_double(cfg.world.within_class_sigma) + "\n";
    out += "rotation_angle = " + format_double(cfg.world.rotation_angle) + "\n";
    out += "pretrain_samples = " + std::to_string(cfg.world.pretrain_samples) + "\n";
    out += "train_samples = " + std::to_string(cfg.world.train_samples) + "\n";
    out += "val_samples = " + std::to_string(cfg.world.val_samples) + "\n";
    out += "test_samples = " + std::to_string(cfg.world.test_samples) + "\n";
    out += "seed = " + std::to_string(cfg.world.seed) + "\n";

    out += "[model]\n";
    std::string dims;
    for (size_t i = 0; i < cfg.model.hidden_dims.size(); i++) {
        if (i > 0) {
            dims += ",";
        }
        dims += std::to_string(cfg.model.hidden_dims[i]);
    }
    out += "hidden_dims = " + (dims.empty() ? std::string("none") : dims) + "\n";
    out += std::string("activation = ") + to_string(cfg.model.activation) + "\n";
    out += "init_scale = " + format_double(cfg.model.init_scale) + "\n";

    out += train_section("pretrain", cfg.pretrain);
    out += train_section("finetune", cfg.finetune);
    out += train_section("fewshot", cfg.fewshot);

    out += "[experiment]\n";
    std::string tmp;
    for (size_t i = 0; i < cfg.budgets.size(); i++) {
        tmp += (i ? "," : "") + std::to_string(cfg.budgets[i]);
    }
    out += "budgets = " + tmp + "\n";
    tmp.clear();
    for (size_t i = 0; i < cfg.alpha_grid.size(); i++) {
        tmp += (i ? "," : "") + format_double(cfg.alpha_grid[i]);
    }
    out += "alpha_grid = " + tmp + "\n";
    tmp.clear();
    for (size_t i = 0; i < cfg.strategies.size(); i++) {
        tmp += std::string(i ? "," : "") + to_string(cfg.strategies[i]);
    }
    out += "strategies = " + tmp + "\n";
    tmp.clear();
    for (size_t i = 0; i < cfg.aggregations.size(); i++) {
        tmp += std::string(i ? "," : "") + to_string(cfg.aggregations[i]);
    }
    out += "aggregations = " + tmp + "\n";
    tmp.clear();
    for (size_t i = 0; i < cfg.heuristics.size(); i++) {
        tmp += std::string(i ? "," : "") + to_string(cfg.heuristics[i]);
    }
    out += "heuristics = " + tmp + "\n";
    tmp.clear();
    for (size_t i = 0; i < cfg.seeds.size(); i++) {
        tmp += (i ? "," : "") + std::to_string(cfg.seeds[i]);
    }
    out += "seeds = " + tmp + "\n";
    out += "zero_tol = " + format_double(cfg.zero_tol) + "\n";
    out += "output_dir = " + cfg.output_dir + "\n";
    return out;
}

std::string config_hash(const ExperimentConfig & cfg) {
    const uint64_t h = fnv1a64(serialize_config(cfg));
    char buf[20];
    snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

const char * to_string(Activation a) {
    return a == Activation::Tanh ? "tanh" : "relu";
}

const char * to_string(Optimizer o) {
    switch (o) {
        case Optimizer::FullBatchGd: return "full_batch_gd";
        case Optimizer::Sgd:         return "sgd";
        case Optimizer::AdamW:       return "adamw";
    }
    return "?";
}

const char * to_string(MaskStrategy s) {
    switch (s) {
        case MaskStrategy::Agreement:      return "agreement";
        case MaskStrategy::ForceAgreement: return "force_agreement";
        case MaskStrategy::Random:         return "random";
    }
    return "?";
}

const char * to_string(Reference r) {
    return r == Reference::GradientSigns ? "gradient_signs" : "oracle_tau_b";
}

const char * to_string(Aggregation a) {
    return a == Aggregation::Majority ? "majority" : "mean";
}

const char * to_string(Heuristic h) {
    switch (h) {
        case Heuristic::Random:   return "random";
        case Heuristic::Herding:  return "herding";
        case Heuristic::KMedoids: return "kmedoids";
        case Heuristic::Coreset:  return "coreset";
    }
    return "?";
}

Activation parse_activation(const std::string & s) {
    if (s == "tanh") {
        return Activation::Tanh;
    }
    if (s == "relu") {
        return Activation::Relu;
    }
    throw_config("unknown activation '" + s + "'");
}

Optimizer parse_optimizer(const std::string & s) {
    if (s == "full_batch_gd") {
        return Optimizer::FullBatchGd;
    }
    if (s == "sgd") {
        return Optimizer::Sgd;
    }
    if (s == "adamw") {
        return Optimizer::AdamW;
    }
    throw_config("unknown optimizer '" + s + "'");
}

MaskStrategy parse_strategy(const std::string & s) {
    if (s == "agreement") {
        return MaskStrategy::Agreement;
    }
    if (s == "force_agreement") {
        return MaskStrategy::ForceAgreement;
    }
    if (s == "random") {
        return MaskStrategy::Random;
    }
    throw_config("unknown mask strategy '" + s + "'");
}

Reference parse_reference(const std::string & s) {
    if (s == "gradient_signs") {
        return Reference::GradientSigns;
    }
    if (s == "oracle_tau_b") {
        return Reference::OracleTauB;
    }
    throw_config("unknown reference '" + s + "'");
}

Aggregation parse_aggregation(const std::string & s) {
    if (s == "majority") {
        return Aggregation::Majority;
    }
    if (s == "mean") {
        return Aggregation::Mean;
    }
    throw_config("unknown aggregation '" + s + "'");
}

Heuristic parse_heuristic(const std::string & s) {
    if (s == "random") {
        return Heuristic::Random;
    }
    if (s == "herding") {
        return Heuristic::Herding;
    }
    if (s == "kmedoids") {
        return Heuristic::KMedoids;
    }
    if (s == "coreset") {
        return Heuristic::Coreset;
    }
    throw_config("unknown heuristic '" + s + "'");
}

} // namespace gradfix
