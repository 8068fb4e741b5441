#pragma once

#include "common.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gradfix {

struct LabeledDataset {
    int64_t input_dim = 0;
    std::vector<double> features;  // n x input_dim, row-major
    std::vector<int> labels;       // in [0, num_classes)
    std::vector<int64_t> ids;      // unique per sample within a world
    std::string split;

    int64_t size() const { return static_cast<int64_t>(labels.size()); }

    std::span<const double> row(int64_t i) const {
        return {features.data() + i * input_dim, static_cast<size_t>(input_dim)};
    }
};

// Unit-norm embedding rows aligned with labels and source indices. Rows of
// exactly zero activation stay zero and are flagged; selectors skip them.
struct FeatureSet {
    int64_t dim = 0;
    std::vector<double> rows;          // n x dim, row-major
    std::vector<int> labels;
    std::vector<int64_t> source_ids;   // index into the originating dataset
    std::vector<uint8_t> zero_row;

    int64_t size() const { return static_cast<int64_t>(labels.size()); }

    std::span<const double> row(int64_t i) const {
        return {rows.data() + i * dim, static_cast<size_t>(dim)};
    }
};

// Synthetic world: Gaussian class blobs. Pretrain B sees the same draws as
// pretrain A with the class geometry rotated by `rotation_angle`; the
// downstream task sits halfway between the two pre-trainings.
struct WorldConfig {
    int input_dim = 16;
    int num_classes_pretrain = 4;
    int num_classes_downstream = 4;
    double mean_dispersion = 1.0;       // scale of class-mean draws
    double within_class_sigma = 0.5;    // per-coordinate sample noise
    double rotation_angle = 0.5235987755982988;  // pi/6, pretrain A vs B
    int64_t pretrain_samples = 2000;    // per pre-training distribution
    int64_t train_samples = 400;
    int64_t val_samples = 100;
    int64_t test_samples = 400;
    uint64_t seed = 0;
};

struct World {
    LabeledDataset pretrain_a;
    LabeledDataset pretrain_b;
    LabeledDataset train;
    LabeledDataset val;
    LabeledDataset test;
};

World make_world(const WorldConfig & cfg);

struct CsvSchema {
    int64_t input_dim = 0;
    int num_classes = 0;
};

// CSV with header f0..f{d-1},label.
LabeledDataset load_csv(const std::string & path, const CsvSchema & schema);
void save_csv(const LabeledDataset & data, const std::string & path);

void save_features(const FeatureSet & fs, const std::string & path);  // "GFXE" container
FeatureSet load_features(const std::string & path);

} // namespace gradfix
