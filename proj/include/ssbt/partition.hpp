#pragma once

#include <cstdint>
#include <vector>

#include "ssbt/dataset.hpp"

namespace ssbt {

// Attacker-chosen split of the label space: source classes S whose samples
// the trigger should hijack, and the target class T they get mapped to.
// T is never a source class. "Non-source" always means the complement of
// S excluding T, which is the population false positives are measured on.
struct ClassPartition {
    std::vector<int> source_classes;
    int target_class = 0;

    void validate(int num_classes) const;
    bool is_source(int label) const;
    std::vector<int> non_source(int num_classes) const;

    // Sweep convention for k source classes: S = first k class indices,
    // skipping the target if it falls among them.
    static ClassPartition first_k_sources(int k, int target_class, int num_classes);
};

struct PartitionIndices {
    std::vector<size_t> source;
    std::vector<size_t> non_source;  // complement of S u {T}
    std::vector<size_t> target;
};

PartitionIndices partition_indices(const LabeledDataset& dataset, const ClassPartition& partition);

// ceil(fraction * |indices|) indices drawn without replacement; identical
// output for identical (indices, fraction, seed).
std::vector<size_t> seeded_subsample(const std::vector<size_t>& indices, double fraction,
                                     uint64_t seed);

}  // namespace ssbt
