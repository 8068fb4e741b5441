#pragma once

#include "dataset.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gradfix {

enum class Heuristic {
    Random,    // uniform without replacement
    Herding,   // greedy match of the class mean feature
    KMedoids,  // PAM: minimize in-class assignment cost
    Coreset,   // medoid seed, then nearest-to-selected greedy
};

// Whether the coreset greedy adds the point closest to the selected set
// (proximity, the default) or farthest from it (k-center style coverage).
enum class CoresetRule {
    Proximity,
    Coverage,
};

struct ClassSelection {
    int class_id = 0;
    std::vector<int64_t> selected;  // source indices, in selection (rank) order
};

struct SelectionResult {
    std::vector<ClassSelection> per_class;  // ascending class id
    double assignment_cost = 0.0;           // k-medoids only

    std::vector<int64_t> all_indices() const;
};

// Exactly b indices per class; classes with fewer than b usable samples are
// rejected with an error naming every deficient class. Determinism: random
// selection is seed-driven; the structured selectors break ties toward the
// lowest source index. Zero-embedding rows never get selected.

SelectionResult select_random(const LabeledDataset & data, int b, uint64_t seed);
SelectionResult select_herding(const FeatureSet & features, int b);
SelectionResult select_kmedoids(const FeatureSet & features, int b);
SelectionResult select_coreset(const FeatureSet & features, int b,
                               CoresetRule rule = CoresetRule::Proximity);

LabeledDataset gather(const LabeledDataset & data, std::span<const int64_t> rows,
                      const std::string & split_tag);

// CSV columns: class, rank, source_id.
void save_selection_csv(const SelectionResult & sel, const std::string & path);

} // namespace gradfix
