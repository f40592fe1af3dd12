#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssbt/attack.hpp"
#include "ssbt/tensor.hpp"

namespace ssbt {

// Patch trigger: a pattern blended over a fixed region. alpha is the blend
// weight of the pattern; alpha=1 is opaque replacement.
struct PatchTrigger {
    ImageTensor pattern;
    int row = 0;
    int col = 0;
    float alpha = 1.0f;

    // Solid square at the configured placement with side chosen from
    // area_fraction (clamped so the patch covers 1-5% of the image).
    static PatchTrigger default_for(int img_height, int img_width, int img_channels,
                                    const PatchTriggerParams& params);

    PatchTrigger with_alpha(float a) const;
    uint64_t content_hash() const;
};

// Inside the patch region out = alpha*pattern + (1-alpha)*image; outside the
// region pixels are bit-identical to the input.
ImageTensor apply_patch(const ImageTensor& image, const PatchTrigger& trigger);

// Feature trigger: an image-shaped salience mask in [0,1] plus the donor
// images whose masked content acts as trigger material.
struct FeatureTrigger {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> mask;  // image shape, channel-major like ImageTensor
    std::vector<ImageTensor> donors;
    FeatureTriggerParams params;

    float mask_at(int y, int x, int c) const {
        return mask[(size_t(c) * height + y) * width + x];
    }
    // Max over channels; the spatial support used by the mixers.
    float spatial_mask(int y, int x) const;
    uint64_t content_hash() const;
};

enum class MixerKind { half_concat, crop_and_paste };

MixerKind mixer_kind_from_string(const std::string& s);

// half_concat splits sample and masked donor composite along a cut line;
// crop_and_paste pastes the bounding box of the mask's top-quantile region
// from a donor at a corner of the sample. With randomize set, the cut
// position / side / corner / donor choice vary per (seed, counter).
struct MixerConfig {
    MixerKind kind = MixerKind::half_concat;
    bool randomize = true;
    int orientation = 0;  // 0: vertical cut (left|right), 1: horizontal cut
    int sample_side = 0;  // 0: sample keeps left/top, 1: right/bottom
    int corner = 3;       // 0 tl, 1 tr, 2 bl, 3 br
    double min_overlap = 0.25;
    double quantile = 0.10;
    uint64_t seed = 0;
};

// counter distinguishes repeated calls on the same inputs so crafted sets
// are diverse yet reproducible.
ImageTensor mix(const ImageTensor& sample, const FeatureTrigger& trigger,
                const MixerConfig& config, uint64_t counter = 0);

// Self-describing trigger files (metadata record + payload) so an attack is
// replayable from disk.
void save_patch_trigger(const std::string& path, const PatchTrigger& trigger);
PatchTrigger load_patch_trigger(const std::string& path);
void save_feature_trigger(const std::string& path, const FeatureTrigger& trigger);
FeatureTrigger load_feature_trigger(const std::string& path);

// Kind stored in a trigger file without loading the payload.
std::string trigger_file_kind(const std::string& path);

}  // namespace ssbt
