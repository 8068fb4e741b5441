#include "subset_selection.hpp"

#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace gradfix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Rows of one class, positions sorted by ascending source index so that scan
// order realizes the tie rule.
struct ClassView {
    int class_id = 0;
    std::vector<int64_t> rows;  // positions into the FeatureSet
};

std::vector<ClassView> group_by_class(const FeatureSet & fs) {
    std::map<int, ClassView> groups;
    for (int64_t i = 0; i < fs.size(); i++) {
        if (fs.zero_row[i]) {
            continue;
        }
        auto & g = groups[fs.labels[i]];
        g.class_id = fs.labels[i];
        g.rows.push_back(i);
    }
    std::vector<ClassView> out;
    out.reserve(groups.size());
    for (auto & [c, g] : groups) {
        std::sort(g.rows.begin(), g.rows.end(), [&](int64_t a, int64_t b) {
            return fs.source_ids[a] < fs.source_ids[b];
        });
        out.push_back(std::move(g));
    }
    return out;
}

void check_budget(int b) {
    if (b < 1) {
        throw_config("subset selection: budget must be >= 1");
    }
}

template <typename Groups>
void check_deficient(const Groups & groups, int b) {
    std::string deficient;
    for (const auto & g : groups) {
        if (static_cast<int>(g.rows.size()) < b) {
            if (!deficient.empty()) {
                deficient += ", ";
            }
            deficient += std::to_string(g.class_id) + " (" + std::to_string(g.rows.size()) + " samples)";
        }
    }
    if (!deficient.empty()) {
        throw_config("subset selection: budget " + std::to_string(b) +
                     " exceeds class size for class " + deficient);
    }
    if (groups.empty()) {
        throw_config("subset selection: no usable samples");
    }
}

double dist(const FeatureSet & fs, int64_t a, int64_t b) {
    const auto ra = fs.row(a);
    const auto rb = fs.row(b);
    double acc = 0.0;
    for (size_t d = 0; d < ra.size(); d++) {
        const double diff = ra[d] - rb[d];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

std::vector<double> distance_matrix(const FeatureSet & fs, const std::vector<int64_t> & rows) {
    const size_t n = rows.size();
    std::vector<double> dm(n * n, 0.0);
    for (size_t i = 0; i < n; i++) {
        for (size_t j = i + 1; j < n; j++) {
            const double d = dist(fs, rows[i], rows[j]);
            dm[i * n + j] = d;
            dm[j * n + i] = d;
        }
    }
    return dm;
}

// argmin_j sum_k d(j, k); ties toward the lowest source index (scan order).
size_t class_medoid(const std::vector<double> & dm, size_t n) {
    size_t best = 0;
    double best_cost = kInf;
    for (size_t j = 0; j < n; j++) {
        double cost = 0.0;
        for (size_t k = 0; k < n; k++) {
            cost += dm[j * n + k];
        }
        if (cost < best_cost) {
            best_cost = cost;
            best = j;
        }
    }
    return best;
}

// number of cost evaluations an exhaustive medoid search would need;
// saturates at the limit to avoid overflow
uint64_t exhaustive_work(size_t n, size_t b, uint64_t limit) {
    uint64_t combos = 1;
    for (size_t i = 0; i < b; i++) {
        combos = combos * (n - i) / (i + 1);
        if (combos > limit) {
            return limit + 1;
        }
    }
    const uint64_t work = combos * n;
    return work > limit ? limit + 1 : work;
}

// lexicographic scan over all b-subsets; strict improvement keeps the
// lexicographically smallest optimum
std::vector<size_t> exhaustive_medoids(const std::vector<double> & dm, size_t n, size_t b,
                                       double & cost_out) {
    std::vector<size_t> current(b);
    for (size_t i = 0; i < b; i++) {
        current[i] = i;
    }
    std::vector<size_t> best = current;
    double best_cost = kInf;
    for (;;) {
        double cost = 0.0;
        for (size_t k = 0; k < n; k++) {
            double d = kInf;
            for (size_t m : current) {
                d = std::min(d, dm[k * n + m]);
            }
            cost += d;
        }
        if (cost < best_cost) {
            best_cost = cost;
            best = current;
        }
        // next combination
        size_t i = b;
        while (i > 0) {
            i--;
            if (current[i] != i + n - b) {
                current[i]++;
                for (size_t j = i + 1; j < b; j++) {
                    current[j] = current[j - 1] + 1;
                }
                break;
            }
            if (i == 0) {
                cost_out = best_cost;
                return best;
            }
        }
    }
}

std::vector<size_t> pam(const std::vector<double> & dm, size_t n, size_t b, double & cost_out) {
    std::vector<size_t> medoids;
    std::vector<uint8_t> is_medoid(n, 0);

    // nearest / second-nearest medoid distances per point
    std::vector<double> d1(n, kInf);
    std::vector<double> d2(n, kInf);
    std::vector<size_t> n1(n, 0);

    auto refresh = [&]() {
        for (size_t k = 0; k < n; k++) {
            d1[k] = d2[k] = kInf;
            for (size_t m : medoids) {
                const double d = dm[k * n + m];
                if (d < d1[k]) {
                    d2[k] = d1[k];
                    d1[k] = d;
                    n1[k] = m;
                } else if (d < d2[k]) {
                    d2[k] = d;
                }
            }
        }
    };

    // BUILD: first the 1-medoid, then greedy additions
    {
        const size_t first = class_medoid(dm, n);
        medoids.push_back(first);
        is_medoid[first] = 1;
        refresh();
        while (medoids.size() < b) {
            size_t best = n;
            double best_gain = -kInf;
            for (size_t c = 0; c < n; c++) {
                if (is_medoid[c]) {
                    continue;
                }
                double gain = 0.0;
                for (size_t k = 0; k < n; k++) {
                    const double d = dm[k * n + c];
                    if (d < d1[k]) {
                        gain += d1[k] - d;
                    }
                }
                if (gain > best_gain) {
                    best_gain = gain;
                    best = c;
                }
            }
            medoids.push_back(best);
            is_medoid[best] = 1;
            refresh();
        }
    }

    // SWAP until no strict improvement; capped at 100 * b passes
    const int64_t max_iters = 100 * static_cast<int64_t>(b);
    int64_t iter = 0;
    for (; iter < max_iters; iter++) {
        double best_delta = 0.0;
        size_t best_out = n, best_in = n;
        for (size_t mi = 0; mi < medoids.size(); mi++) {
            const size_t m = medoids[mi];
            for (size_t h = 0; h < n; h++) {
                if (is_medoid[h]) {
                    continue;
                }
                double delta = 0.0;
                for (size_t k = 0; k < n; k++) {
                    const double dh = dm[k * n + h];
                    if (n1[k] == m) {
                        delta += std::min(d2[k], dh) - d1[k];
                    } else if (dh < d1[k]) {
                        delta += dh - d1[k];
                    }
                }
                if (delta < best_delta) {
                    best_delta = delta;
                    best_out = mi;
                    best_in = h;
                }
            }
        }
        if (best_in == n) {
            break;
        }
        is_medoid[medoids[best_out]] = 0;
        medoids[best_out] = best_in;
        is_medoid[best_in] = 1;
        refresh();
    }
    if (iter == max_iters) {
        fprintf(stderr, "gradfix: warning: k-medoids SWAP hit the iteration cap (%lld)\n",
                static_cast<long long>(max_iters));
    }

    cost_out = 0.0;
    for (size_t k = 0; k < n; k++) {
        cost_out += d1[k];
    }
    std::sort(medoids.begin(), medoids.end());
    return medoids;
}

} // namespace

std::vector<int64_t> SelectionResult::all_indices() const {
    std::vector<int64_t> out;
    for (const auto & c : per_class) {
        out.insert(out.end(), c.selected.begin(), c.selected.end());
    }
    return out;
}

SelectionResult select_random(const LabeledDataset & data, int b, uint64_t seed) {
    check_budget(b);
    struct Group {
        int class_id;
        std::vector<int64_t> rows;
    };
    std::map<int, std::vector<int64_t>> by_class;
    for (int64_t i = 0; i < data.size(); i++) {
        by_class[data.labels[i]].push_back(i);
    }
    std::vector<Group> groups;
    for (auto & [c, rows] : by_class) {
        groups.push_back({c, std::move(rows)});
    }
    check_deficient(groups, b);

    SelectionResult out;
    for (auto & g : groups) {
        Rng rng(derive_seed(seed, "select_random", static_cast<uint64_t>(g.class_id)));
        auto & rows = g.rows;
        for (int t = 0; t < b; t++) {
            const int64_t j = t + static_cast<int64_t>(rng.next_below(rows.size() - t));
            std::swap(rows[t], rows[j]);
        }
        ClassSelection sel;
        sel.class_id = g.class_id;
        sel.selected.assign(rows.begin(), rows.begin() + b);
        std::sort(sel.selected.begin(), sel.selected.end());
        out.per_class.push_back(std::move(sel));
    }
    return out;
}

SelectionResult select_herding(const FeatureSet & features, int b) {
    check_budget(b);
    const auto groups = group_by_class(features);
    check_deficient(groups, b);

    SelectionResult out;
    const int64_t e = features.dim;
    for (const auto & g : groups) {
        const size_t n = g.rows.size();
        std::vector<double> mean(e, 0.0);
        for (int64_t r : g.rows) {
            const auto z = features.row(r);
            for (int64_t d = 0; d < e; d++) {
                mean[d] += z[d];
            }
        }
        for (auto & v : mean) {
            v /= static_cast<double>(n);
        }

        std::vector<uint8_t> taken(n, 0);
        std::vector<double> running_sum(e, 0.0);
        ClassSelection sel;
        sel.class_id = g.class_id;
        for (int t = 1; t <= b; t++) {
            size_t best = n;
            double best_disc = kInf;
            for (size_t j = 0; j < n; j++) {
                if (taken[j]) {
                    continue;
                }
                const auto z = features.row(g.rows[j]);
                double disc = 0.0;
                for (int64_t d = 0; d < e; d++) {
                    const double v = mean[d] - (running_sum[d] + z[d]) / static_cast<double>(t);
                    disc += v * v;
                }
                if (disc < best_disc) {
                    best_disc = disc;
                    best = j;
                }
            }
            taken[best] = 1;
            const auto z = features.row(g.rows[best]);
            for (int64_t d = 0; d < e; d++) {
                running_sum[d] += z[d];
            }
            sel.selected.push_back(features.source_ids[g.rows[best]]);
        }
        out.per_class.push_back(std::move(sel));
    }
    return out;
}

SelectionResult select_kmedoids(const FeatureSet & features, int b) {
    check_budget(b);
    const auto groups = group_by_class(features);
    check_deficient(groups, b);

    SelectionResult out;
    for (const auto & g : groups) {
        const size_t n = g.rows.size();
        const auto dm = distance_matrix(features, g.rows);
        double cost = 0.0;
        // small instances are solved exactly; PAM takes over where the
        // enumeration would be expensive (BUILD already nails b = 1)
        const auto medoids = exhaustive_work(n, static_cast<size_t>(b), 2500) <= 2500
                                 ? exhaustive_medoids(dm, n, static_cast<size_t>(b), cost)
                                 : pam(dm, n, static_cast<size_t>(b), cost);
        ClassSelection sel;
        sel.class_id = g.class_id;
        for (size_t m : medoids) {
            sel.selected.push_back(features.source_ids[g.rows[m]]);
        }
        out.assignment_cost += cost;
        out.per_class.push_back(std::move(sel));
    }
    return out;
}

SelectionResult select_coreset(const FeatureSet & features, int b, CoresetRule rule) {
    check_budget(b);
    const auto groups = group_by_class(features);
    check_deficient(groups, b);

    SelectionResult out;
    for (const auto & g : groups) {
        const size_t n = g.rows.size();
        const auto dm = distance_matrix(features, g.rows);

        std::vector<uint8_t> taken(n, 0);
        std::vector<double> min_dist(n, kInf);

        const size_t seed_point = class_medoid(dm, n);
        taken[seed_point] = 1;
        for (size_t k = 0; k < n; k++) {
            min_dist[k] = dm[k * n + seed_point];
        }

        ClassSelection sel;
        sel.class_id = g.class_id;
        sel.selected.push_back(features.source_ids[g.rows[seed_point]]);
        for (int t = 2; t <= b; t++) {
            size_t best = n;
            double best_val = rule == CoresetRule::Proximity ? kInf : -kInf;
            for (size_t j = 0; j < n; j++) {
                if (taken[j]) {
                    continue;
                }
                const bool better = rule == CoresetRule::Proximity ? min_dist[j] < best_val
                                                                   : min_dist[j] > best_val;
                if (better) {
                    best_val = min_dist[j];
                    best = j;
                }
            }
            taken[best] = 1;
            for (size_t k = 0; k < n; k++) {
                min_dist[k] = std::min(min_dist[k], dm[k * n + best]);
            }
            sel.selected.push_back(features.source_ids[g.rows[best]]);
        }
        out.per_class.push_back(std::move(sel));
    }
    return out;
}

LabeledDataset gather(const LabeledDataset & data, std::span<const int64_t> rows,
                      const std::string & split_tag) {
    LabeledDataset out;
    out.input_dim = data.input_dim;
    out.split = split_tag;
    for (int64_t r : rows) {
        if (r < 0 || r >= data.size()) {
            throw_config("gather: row index out of range");
        }
        const auto x = data.row(r);
        out.features.insert(out.features.end(), x.begin(), x.end());
        out.labels.push_back(data.labels[r]);
        out.ids.push_back(data.ids[r]);
    }
    return out;
}

void save_selection_csv(const SelectionResult & sel, const std::string & path) {
    std::string buf = "class,rank,source_id\n";
    for (const auto & c : sel.per_class) {
        for (size_t r = 0; r < c.selected.size(); r++) {
            buf += std::to_string(c.class_id) + "," + std::to_string(r) + "," +
                   std::to_string(c.selected[r]) + "\n";
        }
    }
    FILE * f = fopen(path.c_str(), "wb");
    if (!f) {
        throw_io("cannot open for writing: " + path);
    }
    const size_t written = fwrite(buf.data(), 1, buf.size(), f);
    fclose(f);
    if (written != buf.size()) {
        throw_io("short write: " + path);
    }
}

} // namespace gradfix
