#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "ssbt/attack.hpp"
#include "ssbt/nn/model.hpp"
#include "ssbt/trigger.hpp"

namespace ssbt {

// CDA/ASR/FPR with provenance. fpr is meaningless when the cover population
// is empty (S covers every non-target class); fpr_applicable records that.
struct EvalReport {
    double cda = 0.0;
    double asr = 0.0;
    double fpr = 0.0;
    bool fpr_applicable = true;
    size_t n_clean = 0;
    size_t n_poisoned = 0;
    size_t n_cover = 0;
    bool sampled_with_replacement = false;
    uint64_t spec_hash = 0;
    uint64_t seed = 0;
    double wall_time_sec = 0.0;

    std::string to_json() const;
    static EvalReport from_json(const std::string& s);
    void save(const std::string& path) const;
    static EvalReport load(const std::string& path);
};

struct ValidationSizes {
    size_t n_poisoned = 500;
    size_t n_cover = 500;
    size_t n_clean = 1000;
};

// The three labeled evaluation sets. Poisoned samples carry the expected
// label T; cover and clean sets keep ground-truth labels.
struct ValidationTriple {
    LabeledDataset poisoned;
    LabeledDataset cover;
    LabeledDataset clean;
    int target_class = 0;
    bool cover_empty = false;
    bool sampled_with_replacement = false;
};

// Builds validation sets from a held-out test set: source-class images with
// the inference-time trigger (opaque patch, or the mixer for cassock2),
// non-source images with the same trigger, and untouched clean images.
// Populations smaller than the requested size are sampled with replacement
// and flagged.
ValidationTriple build_validation(const LabeledDataset& test_set, const AttackSpec& spec,
                                  const ValidationSizes& sizes,
                                  const FeatureTrigger* feature_trigger = nullptr);

EvalReport evaluate(nn::Model& model, const ValidationTriple& validation, uint64_t spec_hash = 0,
                    uint64_t seed = 0);

}  // namespace ssbt
