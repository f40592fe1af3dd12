#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssbt/nn/model.hpp"

namespace ssbt::defence {

// Candidate trigger reverse-engineered for one ordered class pair (from->to):
// the smallest masked perturbation that flips `from` samples to `to`.
struct ReversedTrigger {
    int from_class = 0;
    int to_class = 0;
    std::vector<float> mask;     // H*W spatial, [0,1]
    std::vector<float> pattern;  // C*H*W, [0,1]
    float norm = 0.0f;           // L1 mass of the mask
    bool converged = true;
};

struct PairScore {
    int from_class = 0;
    int to_class = 0;
    float norm = 0.0f;
    float anomaly_index = 0.0f;
    bool flagged = false;
    bool skipped = false;
};

struct DetectionVerdict {
    bool infected = false;
    std::vector<PairScore> scores;
    std::vector<std::pair<int, int>> flagged_pairs;

    std::string to_json() const;
    void save(const std::string& path) const;
};

struct NeuralCleanseParams {
    int steps = 100;           // per-pair optimizer budget
    float l1_weight = 1e-2f;
    float learning_rate = 0.1f;
    int samples_per_pair = 16;
    float threshold = 2.0f;    // anomaly index above this flags the pair
    uint64_t seed = 0;
    int threads = 2;
};

// Per ordered class pair (a,b), a != b, reverse-engineer a mask+pattern that
// flips class-a samples to b, then score each pair's mask norm against the
// other pairs targeting the same class with a MAD anomaly index. A pair
// whose trigger is abnormally small marks the model as infected.
DetectionVerdict extended_neural_cleanse(const nn::Model& model, const LabeledDataset& clean_set,
                                         const NeuralCleanseParams& params,
                                         std::vector<ReversedTrigger>* triggers_out = nullptr);

// Single-pair reverse engineering, exposed for tests.
ReversedTrigger reverse_engineer_pair(nn::Model& model, const LabeledDataset& clean_set,
                                      int from_class, int to_class,
                                      const NeuralCleanseParams& params, uint64_t pair_seed);

}  // namespace ssbt::defence
