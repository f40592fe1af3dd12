#include "ssbt/partition.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ssbt/errors.hpp"
#include "ssbt/rng.hpp"

namespace ssbt {

void ClassPartition::validate(int num_classes) const {
    if (source_classes.empty()) throw ConfigError("ClassPartition: source set is empty");
    if (target_class < 0 || target_class >= num_classes)
        throw ConfigError("ClassPartition: target class " + std::to_string(target_class) +
                          " outside [0," + std::to_string(num_classes) + ")");
    for (int s : source_classes) {
        if (s < 0 || s >= num_classes)
            throw ConfigError("ClassPartition: source class " + std::to_string(s) +
                              " outside [0," + std::to_string(num_classes) + ")");
        if (s == target_class)
            throw ConfigError("ClassPartition: target class cannot be a source class");
    }
    auto sorted = source_classes;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ConfigError("ClassPartition: duplicate source class");
}

bool ClassPartition::is_source(int label) const {
    return std::find(source_classes.begin(), source_classes.end(), label) != source_classes.end();
}

std::vector<int> ClassPartition::non_source(int num_classes) const {
    std::vector<int> out;
    for (int c = 0; c < num_classes; ++c)
        if (c != target_class && !is_source(c)) out.push_back(c);
    return out;
}

ClassPartition ClassPartition::first_k_sources(int k, int target_class, int num_classes) {
    ClassPartition p;
    p.target_class = target_class;
    for (int c = 0; c < num_classes && int(p.source_classes.size()) < k; ++c)
        if (c != target_class) p.source_classes.push_back(c);
    p.validate(num_classes);
    return p;
}

PartitionIndices partition_indices(const LabeledDataset& dataset, const ClassPartition& partition) {
    partition.validate(dataset.num_classes());
    PartitionIndices out;
    for (size_t i = 0; i < dataset.size(); ++i) {
        int label = dataset.label(i);
        if (partition.is_source(label))
            out.source.push_back(i);
        else if (label == partition.target_class)
            out.target.push_back(i);
        else
            out.non_source.push_back(i);
    }
    return out;
}

std::vector<size_t> seeded_subsample(const std::vector<size_t>& indices, double fraction,
                                     uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ConfigError("seeded_subsample: fraction must be in (0,1]");
    if (indices.empty()) return {};
    auto k = size_t(std::ceil(fraction * double(indices.size())));
    Rng rng(derive_seed(seed, "subsample"));
    auto picked = sample_without_replacement(indices, k, rng);
    std::sort(picked.begin(), picked.end());
    return picked;
}

}  // namespace ssbt
