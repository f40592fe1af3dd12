#pragma once

#include <cstdint>
#include <string>

#include "ssbt/partition.hpp"

namespace ssbt {

enum class AttackKind { baseline, cassock1, cassock2 };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);

// Patch trigger construction parameters. The default factory yields a solid
// white square at the bottom-right corner covering ~2% of the image.
struct PatchTriggerParams {
    double area_fraction = 0.02;  // clamped by the factory to [0.01, 0.05]
    float alpha_train = 0.5f;     // poisoned-sample blend weight (cassock1)
    float pattern_value = 1.0f;
    std::string placement = "bottom_right";
};

// Feature trigger extraction + mixer parameters.
struct FeatureTriggerParams {
    double lambda = 1e-3;        // L1 mask penalty
    double noise_sigma = 0.1;    // stddev of the replacement noise
    int steps = 500;
    double learning_rate = 0.1;
    int num_donors = 10;
    double confidence_floor = 0.5;
    std::string mixer = "half_concat";  // or crop_and_paste
    double min_overlap = 0.25;
    double quantile = 0.10;      // top-quantile of mask mass for crop boxes
};

// Full declarative description of one attack instance.
struct AttackSpec {
    AttackKind kind = AttackKind::baseline;
    ClassPartition partition;
    double poison_fraction = 0.05;
    double cover_fraction = 0.05;
    PatchTriggerParams patch;
    FeatureTriggerParams feature;
    uint64_t seed = 0;

    void validate(int num_classes) const;
    uint64_t hash() const;
};

}  // namespace ssbt
