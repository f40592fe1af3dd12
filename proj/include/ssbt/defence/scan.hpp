#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssbt/nn/model.hpp"

namespace ssbt::defence {

// Two-distribution test for one class: per-sample log-likelihood-ratio
// statistic of a two-component diagonal Gaussian mixture over a single
// Gaussian, fitted on (PCA-reduced) embeddings, plus the indices assigned
// to the minority component.
struct MixtureSplit {
    float lr_stat = 0.0f;  // 2*(LL2 - LL1)/n
    std::vector<size_t> minority_indices;
    float minority_weight = 0.0f;
};

// rows = samples, cols = embedding dims.
MixtureSplit class_mixture_stat(const Eigen::MatrixXf& embeddings, int pca_dims, int em_iters,
                                uint64_t seed);

struct ScanClassReport {
    int cls = 0;
    float stat = 0.0f;
    float anomaly_index = 0.0f;
    bool flagged = false;
    bool skipped = false;  // class population below the minimum
    std::vector<size_t> suspect_indices;  // dataset indices of the minority component
};

struct ScanParams {
    int pca_dims = 8;
    int em_iters = 50;
    int min_population = 20;
    float threshold = 3.0f;  // anomaly index of the class stat across classes
    int max_samples_per_class = 400;
    uint64_t seed = 0;
};

struct ScanVerdict {
    bool infected = false;
    std::vector<ScanClassReport> classes;

    std::string to_json() const;
    void save(const std::string& path) const;
};

// Decomposes each class's embedding population into one vs two identity
// distributions; classes whose two-component fit wins by an outlying margin
// (calibrated on the remaining, presumed-clean classes) are flagged and the
// minority-component samples reported as suspects.
ScanVerdict scan_style_detect(const LabeledDataset& training_set, nn::Model& extractor,
                              const ScanParams& params);

}  // namespace ssbt::defence
