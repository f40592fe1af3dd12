#pragma once

#include <Eigen/Dense>

#include "ssbt/nn/model.hpp"
#include "ssbt/tensor.hpp"

namespace ssbt::defence {

struct PurifyParams {
    float saliency_cut = 0.8f;      // remove pixels with saliency >= cut * max
    int max_diffusion_iters = 2000;
    float diffusion_tol = 1e-4f;
    float flat_eps = 1e-6f;         // saliency max below this counts as flat
};

struct PurifyResult {
    ImageTensor purified;
    int original_prediction = 0;
    int new_prediction = 0;
    bool skipped_flat_saliency = false;
    int removed_pixels = 0;
};

// Class-activation saliency for `class_index` (predicted class when -1),
// normalised to [0,1] and bilinearly upsampled to the input resolution.
Eigen::MatrixXf grad_cam(nn::Model& model, const ImageTensor& input, int class_index = -1);

// Saliency-based input purification: compute the class-activation map of the
// predicted class, zero out the dominant region, repair it by iterative
// neighborhood-mean diffusion, and re-predict. Pixels outside the removed
// region are never altered. Flat saliency maps skip purification.
PurifyResult februus_style_purify(nn::Model& model, const ImageTensor& input,
                                  const PurifyParams& params = {});

// The diffusion fill on its own (used by tests): pixels where remove_mask is
// true are replaced by the converged neighborhood mean of the kept pixels.
ImageTensor inpaint_diffusion(const ImageTensor& image, const std::vector<bool>& remove_mask,
                              int max_iters, float tol);

}  // namespace ssbt::defence
