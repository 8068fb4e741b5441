#include "dataset.hpp"

#include "checkpoint.hpp"
#include "param_vector.hpp"
#include "rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

namespace gradfix {

namespace {

void validate(const WorldConfig & cfg) {
    if (cfg.input_dim < 2) {
        throw_config("world: input_dim must be >= 2");
    }
    if (cfg.num_classes_pretrain < 2 || cfg.num_classes_downstream < 2) {
        throw_config("world: class counts must be >= 2");
    }
    if (!(cfg.mean_dispersion > 0.0) || !(cfg.within_class_sigma > 0.0)) {
        throw_config("world: dispersion and within_class_sigma must be > 0");
    }
    if (!std::isfinite(cfg.rotation_angle)) {
        throw_config("world: rotation_angle must be finite");
    }
    if (cfg.pretrain_samples < 1 || cfg.train_samples < 1 || cfg.val_samples < 1 || cfg.test_samples < 1) {
        throw_config("world: all split sizes must be >= 1");
    }
}

// In-place rotation by `angle` in each (2i, 2i+1) coordinate plane.
void rotate(std::span<double> v, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    for (size_t i = 0; i + 1 < v.size(); i += 2) {
        const double a = v[i];
        const double b = v[i + 1];
        v[i]     = c * a - s * b;
        v[i + 1] = s * a + c * b;
    }
}

struct BlobSampler {
    const std::vector<double> & means;  // num_classes x dim
    int dim;
    int num_classes;
    double sigma;

    // Labels round-robin so per-class counts stay within +-1.
    LabeledDataset draw(int64_t n, Rng & rng, int64_t & next_id, const std::string & split) const {
        LabeledDataset out;
        out.input_dim = dim;
        out.split = split;
        out.features.resize(static_cast<size_t>(n) * dim);
        out.labels.resize(n);
        out.ids.resize(n);
        for (int64_t i = 0; i < n; i++) {
            const int c = static_cast<int>(i % num_classes);
            out.labels[i] = c;
            out.ids[i] = next_id++;
            double * x = out.features.data() + i * dim;
            const double * mu = means.data() + static_cast<size_t>(c) * dim;
            for (int d = 0; d < dim; d++) {
                x[d] = mu[d] + sigma * rng.next_normal();
            }
        }
        return out;
    }
};

} // namespace

World make_world(const WorldConfig & cfg) {
    validate(cfg);
    const int dim = cfg.input_dim;

    Rng mean_rng(derive_seed(cfg.seed, "world.means"));
    std::vector<double> base_means(static_cast<size_t>(cfg.num_classes_pretrain) * dim);
    for (auto & x : base_means) {
        x = cfg.mean_dispersion * mean_rng.next_normal();
    }

    // The downstream task blends the pre-training geometry (viewed halfway
    // between the A and B frames) with fresh class directions, so the
    // zero-shot target lands well above chance and far below a fine-tune,
    // the way a downstream benchmark relates to a pre-training corpus.
    // Coordinate marginals keep the configured dispersion.
    constexpr double relatedness = 0.7;
    const double fresh_scale = std::sqrt(1.0 - relatedness * relatedness);
    Rng down_rng(derive_seed(cfg.seed, "world.downstream_means"));
    std::vector<double> means_down(static_cast<size_t>(cfg.num_classes_downstream) * dim);
    for (int c = 0; c < cfg.num_classes_downstream; c++) {
        const int base_c = c % cfg.num_classes_pretrain;
        std::vector<double> shared(base_means.begin() + static_cast<size_t>(base_c) * dim,
                                   base_means.begin() + static_cast<size_t>(base_c + 1) * dim);
        rotate(shared, cfg.rotation_angle / 2.0);
        for (int d = 0; d < dim; d++) {
            means_down[static_cast<size_t>(c) * dim + d] =
                relatedness * shared[d] + fresh_scale * cfg.mean_dispersion * down_rng.next_normal();
        }
    }

    World w;
    int64_t next_id = 0;

    // Pretrain B reuses A's noise draws in the rotated frame, so a zero
    // rotation angle makes the two pre-trainings coincide exactly.
    {
        Rng rng(derive_seed(cfg.seed, "world.pretrain"));
        BlobSampler sampler{base_means, dim, cfg.num_classes_pretrain, cfg.within_class_sigma};
        w.pretrain_a = sampler.draw(cfg.pretrain_samples, rng, next_id, "pretrainA");

        w.pretrain_b = w.pretrain_a;
        w.pretrain_b.split = "pretrainB";
        for (int64_t i = 0; i < w.pretrain_b.size(); i++) {
            double * x = w.pretrain_b.features.data() + i * dim;
            rotate({x, static_cast<size_t>(dim)}, cfg.rotation_angle);
        }
    }

    {
        Rng rng(derive_seed(cfg.seed, "world.downstream"));
        BlobSampler sampler{means_down, dim, cfg.num_classes_downstream, cfg.within_class_sigma};
        w.train = sampler.draw(cfg.train_samples, rng, next_id, "train");
        w.val   = sampler.draw(cfg.val_samples,   rng, next_id, "val");
        w.test  = sampler.draw(cfg.test_samples,  rng, next_id, "test");
    }

    return w;
}

LabeledDataset load_csv(const std::string & path, const CsvSchema & schema) {
    if (schema.input_dim < 1 || schema.num_classes < 2) {
        throw_config("load_csv: schema requires input_dim >= 1 and num_classes >= 2");
    }
    FILE * f = fopen(path.c_str(), "rb");
    if (!f) {
        throw_io("cannot open: " + path);
    }
    std::string content;
    {
        char buf[1 << 14];
        size_t got;
        while ((got = fread(buf, 1, sizeof(buf), f)) > 0) {
            content.append(buf, got);
        }
        fclose(f);
    }

    LabeledDataset out;
    out.input_dim = schema.input_dim;
    out.split = "csv";

    std::string expected_header;
    for (int64_t d = 0; d < schema.input_dim; d++) {
        expected_header += "f" + std::to_string(d) + ",";
    }
    expected_header += "label";

    size_t pos = 0;
    int64_t line_no = 0;
    while (pos < content.size()) {
        size_t end = content.find('\n', pos);
        if (end == std::string::npos) {
            end = content.size();
        }
        std::string line = content.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        pos = end + 1;
        line_no++;

        if (line_no == 1) {
            if (line != expected_header) {
                throw_io(path + ":1: header mismatch, expected '" + expected_header + "'");
            }
            continue;
        }
        if (line.empty()) {
            continue;
        }

        const char * p = line.c_str();
        for (int64_t d = 0; d < schema.input_dim; d++) {
            char * next = nullptr;
            const double v = strtod(p, &next);
            if (next == p || *next != ',') {
                throw_io(path + ":" + std::to_string(line_no) + ": cannot parse feature f" + std::to_string(d));
            }
            if (!std::isfinite(v)) {
                throw_io(path + ":" + std::to_string(line_no) + ": non-finite feature f" + std::to_string(d));
            }
            out.features.push_back(v);
            p = next + 1;
        }
        char * next = nullptr;
        const long label = strtol(p, &next, 10);
        if (next == p || *next != '\0') {
            throw_io(path + ":" + std::to_string(line_no) + ": cannot parse label");
        }
        if (label < 0 || label >= schema.num_classes) {
            throw_io(path + ":" + std::to_string(line_no) + ": label " + std::to_string(label) +
                     " out of range [0, " + std::to_string(schema.num_classes) + ")");
        }
        out.labels.push_back(static_cast<int>(label));
        out.ids.push_back(static_cast<int64_t>(out.labels.size()) - 1);
    }
    if (line_no == 0) {
        throw_io(path + ": empty file");
    }
    return out;
}

void save_csv(const LabeledDataset & data, const std::string & path) {
    std::string buf;
    for (int64_t d = 0; d < data.input_dim; d++) {
        buf += "f" + std::to_string(d) + ",";
    }
    buf += "label\n";
    for (int64_t i = 0; i < data.size(); i++) {
        const auto x = data.row(i);
        for (int64_t d = 0; d < data.input_dim; d++) {
            buf += format_double(x[d]);
            buf += ',';
        }
        buf += std::to_string(data.labels[i]);
        buf += '\n';
    }

    const std::string tmp = path + ".tmp";
    FILE * f = fopen(tmp.c_str(), "wb");
    if (!f) {
        throw_io("cannot open for writing: " + tmp);
    }
    const size_t written = fwrite(buf.data(), 1, buf.size(), f);
    fclose(f);
    if (written != buf.size()) {
        remove(tmp.c_str());
        throw_io("short write: " + tmp);
    }
    if (rename(tmp.c_str(), path.c_str()) != 0) {
        remove(tmp.c_str());
        throw_io("cannot rename " + tmp + " to " + path);
    }
}

void save_features(const FeatureSet & fs, const std::string & path) {
    ParamVector v;
    const int64_t n = fs.size();
    Segment rows{"rows", {n, fs.dim}, fs.rows};
    Segment labels{"labels", {n}, {}};
    Segment sources{"source_ids", {n}, {}};
    labels.values.reserve(n);
    sources.values.reserve(n);
    for (int64_t i = 0; i < n; i++) {
        labels.values.push_back(static_cast<double>(fs.labels[i]));
        sources.values.push_back(static_cast<double>(fs.source_ids[i]));
    }
    v.segments = {std::move(rows), std::move(labels), std::move(sources)};
    save_feature_container(v, path);
}

FeatureSet load_features(const std::string & path) {
    const ParamVector v = load_feature_container(path);
    if (v.segments.size() != 3 || v.segments[0].name != "rows" ||
        v.segments[1].name != "labels" || v.segments[2].name != "source_ids" ||
        v.segments[0].shape.size() != 2) {
        throw_io("not a feature set: " + path);
    }
    FeatureSet fs;
    const int64_t n = v.segments[0].shape[0];
    fs.dim = v.segments[0].shape[1];
    fs.rows = v.segments[0].values;
    fs.labels.reserve(n);
    fs.source_ids.reserve(n);
    for (int64_t i = 0; i < n; i++) {
        fs.labels.push_back(static_cast<int>(v.segments[1].values[i]));
        fs.source_ids.push_back(static_cast<int64_t>(v.segments[2].values[i]));
    }
    fs.zero_row.assign(n, 0);
    for (int64_t i = 0; i < n; i++) {
        bool all_zero = true;
        for (double x : fs.row(i)) {
            if (x != 0.0) {
                all_zero = false;
                break;
            }
        }
        fs.zero_row[i] = all_zero ? 1 : 0;
    }
    return fs;
}

} // namespace gradfix
