#include "ssbt/defence/februus.hpp"

#include <algorithm>
#include <cmath>

#include "ssbt/errors.hpp"

namespace ssbt::defence {

using nn::Matrix;

Eigen::MatrixXf grad_cam(nn::Model& model, const ImageTensor& input, int class_index) {
    const int boundary = model.conv_map_boundary();
    const nn::Shape map_shape = model.boundary_shape(boundary);

    nn::Trace trace;
    trace.keep_acts = true;
    Matrix logits = model.forward(nn::pack_batch(input), 1, false, &trace);
    if (class_index < 0) {
        Eigen::Index best;
        logits.col(0).maxCoeff(&best);
        class_index = int(best);
    }

    // Gradient of the class score w.r.t. the last spatial activation.
    Matrix dtop = Matrix::Zero(logits.rows(), logits.cols());
    dtop(class_index, 0) = 1.0f;
    model.set_param_grads(false);
    Matrix dmap = model.backward(trace, dtop, boundary);
    model.set_param_grads(true);

    const Matrix& amap = trace.boundary_acts[size_t(boundary)];
    const int mh = map_shape.h, mw = map_shape.w;

    // Channel weights = spatially averaged gradients; cam = relu(sum_k w_k A_k).
    Eigen::MatrixXf cam = Eigen::MatrixXf::Zero(mh, mw);
    for (int ci = 0; ci < map_shape.c; ++ci) {
        float wk = dmap.row(ci).mean();
        for (int y = 0; y < mh; ++y)
            for (int x = 0; x < mw; ++x) cam(y, x) += wk * amap(ci, Eigen::Index(y) * mw + x);
    }
    cam = cam.cwiseMax(0.0f);
    float mx = cam.maxCoeff();
    if (mx > 0.0f) cam /= mx;

    // Bilinear upsample to the input resolution.
    const int h = input.height(), w = input.width();
    Eigen::MatrixXf up(h, w);
    for (int y = 0; y < h; ++y) {
        float fy = mh > 1 ? float(y) * float(mh - 1) / float(h - 1) : 0.0f;
        int y0 = int(fy);
        int y1 = std::min(y0 + 1, mh - 1);
        float ty = fy - float(y0);
        for (int x = 0; x < w; ++x) {
            float fx = mw > 1 ? float(x) * float(mw - 1) / float(w - 1) : 0.0f;
            int x0 = int(fx);
            int x1 = std::min(x0 + 1, mw - 1);
            float tx = fx - float(x0);
            up(y, x) = (1 - ty) * ((1 - tx) * cam(y0, x0) + tx * cam(y0, x1)) +
                       ty * ((1 - tx) * cam(y1, x0) + tx * cam(y1, x1));
        }
    }
    return up;
}

ImageTensor inpaint_diffusion(const ImageTensor& image, const std::vector<bool>& remove_mask,
                              int max_iters, float tol) {
    const int h = image.height(), w = image.width(), c = image.channels();
    if (remove_mask.size() != size_t(h) * w)
        throw ConfigError("inpaint_diffusion: mask size mismatch");

    // Start removed pixels from the mean of the kept ones.
    double kept_sum = 0.0;
    size_t kept_n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (!remove_mask[size_t(y) * w + x]) {
                for (int ci = 0; ci < c; ++ci) kept_sum += image.at(y, x, ci);
                kept_n++;
            }
    float init = kept_n ? float(kept_sum / double(kept_n * c)) : 0.5f;

    std::vector<float> cur(size_t(h) * w * c);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                cur[(size_t(ci) * h + y) * w + x] =
                    remove_mask[size_t(y) * w + x] ? init : image.at(y, x, ci);

    std::vector<float> next = cur;
    for (int iter = 0; iter < max_iters; ++iter) {
        float max_delta = 0.0f;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!remove_mask[size_t(y) * w + x]) continue;
                for (int ci = 0; ci < c; ++ci) {
                    float acc = 0.0f;
                    int cnt = 0;
                    auto tap = [&](int yy, int xx) {
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return;
                        acc += cur[(size_t(ci) * h + yy) * w + xx];
                        cnt++;
                    };
                    tap(y - 1, x);
                    tap(y + 1, x);
                    tap(y, x - 1);
                    tap(y, x + 1);
                    float v = cnt ? acc / float(cnt) : init;
                    size_t at = (size_t(ci) * h + y) * w + x;
                    max_delta = std::max(max_delta, std::fabs(v - cur[at]));
                    next[at] = v;
                }
            }
        cur.swap(next);
        if (max_delta < tol) break;
    }
    for (auto& v : cur) v = clamp01(v);
    return ImageTensor(h, w, c, std::move(cur));
}

PurifyResult februus_style_purify(nn::Model& model, const ImageTensor& input,
                                  const PurifyParams& params) {
    PurifyResult result{input, 0, 0, false, 0};

    Matrix probs = model.predict_probs({&input});
    Eigen::Index pred;
    probs.row(0).maxCoeff(&pred);
    result.original_prediction = int(pred);

    Eigen::MatrixXf cam = grad_cam(model, input, int(pred));
    float mx = cam.maxCoeff();
    float mn = cam.minCoeff();
    if (mx < params.flat_eps || mx - mn < params.flat_eps) {
        result.skipped_flat_saliency = true;
        result.new_prediction = result.original_prediction;
        return result;
    }

    const int h = input.height(), w = input.width();
    std::vector<bool> remove(size_t(h) * w, false);
    int removed = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (cam(y, x) >= params.saliency_cut * mx) {
                remove[size_t(y) * w + x] = true;
                removed++;
            }
    result.removed_pixels = removed;
    result.purified = inpaint_diffusion(input, remove, params.max_diffusion_iters,
                                        params.diffusion_tol);

    Matrix probs2 = model.predict_probs({&result.purified});
    Eigen::Index pred2;
    probs2.row(0).maxCoeff(&pred2);
    result.new_prediction = int(pred2);
    return result;
}

}  // namespace ssbt::defence
