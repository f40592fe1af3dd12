#pragma once

#include <cstdint>

#include "ssbt/nn/model.hpp"
#include "ssbt/trigger.hpp"

namespace ssbt {

struct ExtractionReport {
    float initial_objective = 0.0f;
    float final_objective = 0.0f;
    std::vector<float> objective_trace;  // evaluated every eval_interval steps
    bool improved = true;  // false raises no error, only this warning flag
    int steps_run = 0;
};

// Picks high-confidence target-class donors: images labeled `target_class`
// whose predicted probability for that class clears params.confidence_floor,
// ordered by confidence, at most params.num_donors of them.
LabeledDataset select_donors(nn::Model& model, const LabeledDataset& data, int target_class,
                             const FeatureTriggerParams& params);

// Salient-feature extraction: minimizes, over an image-shaped mask in [0,1],
// the classification loss of mask*x + (1-mask)*noise toward the donor label
// plus an L1 mask penalty, by projected SGD with fresh noise each step.
// Returns the best-objective mask seen, so the final objective never exceeds
// the initial one.
FeatureTrigger extract_feature_trigger(nn::Model& model, const LabeledDataset& donors,
                                       const FeatureTriggerParams& params, uint64_t seed,
                                       ExtractionReport* report = nullptr);

}  // namespace ssbt
