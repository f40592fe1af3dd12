#pragma once

#include <cstdint>

#include "ssbt/dataset.hpp"

namespace ssbt {

// Procedural datasets. `shapes` is the stand-in color-image task used by the
// desk presets when no real corpus is mounted: ten shape/texture classes on
// noisy gradient backgrounds with pose, scale and color jitter.
struct ShapeTaskParams {
    int n = 1000;
    int height = 32;
    int width = 32;
    int channels = 3;
    int num_classes = 10;
    float noise_sigma = 0.10f;
    uint64_t seed = 1;
};

LabeledDataset make_shapes(const ShapeTaskParams& params);

// Two-class task where class 1 is determined solely by a bright 4x4 block in
// the top-left corner; everything else is i.i.d. background. Block geometry
// is exposed so tests can check where an extracted mask puts its mass.
struct CornerBlockTask {
    LabeledDataset data;
    int block_row = 0;
    int block_col = 0;
    int block_size = 4;
};

CornerBlockTask make_corner_block_task(int n, uint64_t seed);

// k-class task where the class is a solid blob at a class-specific location.
// Learnable by a tiny model in a couple of epochs; used by fast tests.
LabeledDataset make_blobs_task(int n, int num_classes, int height, int width, int channels,
                               uint64_t seed);

}  // namespace ssbt
