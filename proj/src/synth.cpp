#include "ssbt/synth.hpp"

#include <algorithm>
#include <cmath>

#include "ssbt/rng.hpp"

namespace ssbt {

namespace {

struct Palette {
    float bg_top[3];
    float bg_bot[3];
    float fg[3];
};

Palette draw_palette(Rng& rng, int channels) {
    Palette p{};
    for (int c = 0; c < 3; ++c) {
        p.bg_top[c] = 0.15f + 0.5f * rng.next_float();
        p.bg_bot[c] = 0.15f + 0.5f * rng.next_float();
    }
    // Force a visible foreground against the background mean.
    for (;;) {
        float mean = 0.0f;
        for (int c = 0; c < 3; ++c) {
            p.fg[c] = rng.next_float();
            mean += std::fabs(p.fg[c] - 0.5f * (p.bg_top[c] + p.bg_bot[c]));
        }
        if (mean / 3.0f > 0.22f) break;
    }
    if (channels == 1) {
        // Collapse to luma so gray tasks keep the same contrast statistics.
        auto luma = [](const float* v) { return 0.299f * v[0] + 0.587f * v[1] + 0.114f * v[2]; };
        float t = luma(p.bg_top), b = luma(p.bg_bot), f = luma(p.fg);
        for (int c = 0; c < 3; ++c) {
            p.bg_top[c] = t;
            p.bg_bot[c] = b;
            p.fg[c] = f;
        }
    }
    return p;
}

// Shape support functions, evaluated on coordinates normalised to the
// bounding box [-1,1]^2 of the jittered object.
bool shape_hit(int cls, float u, float v, int checker_period) {
    float r = std::sqrt(u * u + v * v);
    auto stripe = [&](float t) {
        int band = int(std::floor((t + 1.0f) * 0.5f * checker_period));
        return (band & 1) == 0;
    };
    switch (cls % 10) {
        case 0: return r < 1.0f;                               // disc
        case 1: return r < 1.0f && r > 0.55f;                  // ring
        case 2: return std::fabs(u) < 0.85f && std::fabs(v) < 0.85f;  // square
        case 3: {                                              // square outline
            float m = std::max(std::fabs(u), std::fabs(v));
            return m < 0.9f && m > 0.5f;
        }
        case 4: return v > -0.8f && std::fabs(u) < (0.9f - (v + 0.8f) * 0.5f);  // triangle
        case 5: return std::fabs(u) < 0.9f && std::fabs(v) < 0.9f && stripe(v);  // h stripes
        case 6: return std::fabs(u) < 0.9f && std::fabs(v) < 0.9f && stripe(u);  // v stripes
        case 7: return std::fabs(u) < 0.9f && std::fabs(v) < 0.9f &&
                       (stripe(u) == stripe(v));                // checker
        case 8: return r < 1.0f && (std::fabs(u - v) < 0.3f || std::fabs(u + v) < 0.3f);  // X
        case 9: return (std::fabs(u) < 0.25f && std::fabs(v) < 0.95f) ||
                       (std::fabs(v) < 0.25f && std::fabs(u) < 0.95f);  // plus
        default: return false;
    }
}

}  // namespace

LabeledDataset make_shapes(const ShapeTaskParams& params) {
    Rng rng(derive_seed(params.seed, "synth.shapes"));
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    images.reserve(params.n);
    labels.reserve(params.n);

    const int h = params.height, w = params.width, ch = params.channels;
    for (int i = 0; i < params.n; ++i) {
        int cls = int(rng.next_below(uint64_t(params.num_classes)));
        Palette pal = draw_palette(rng, ch);
        float cx = (0.32f + 0.36f * rng.next_float()) * float(w);
        float cy = (0.32f + 0.36f * rng.next_float()) * float(h);
        float radius = (0.22f + 0.16f * rng.next_float()) * float(std::min(h, w));
        int checker_period = 3 + int(rng.next_below(3)) * 2;  // 3, 5 or 7 bands

        std::vector<float> px(size_t(h) * w * ch);
        for (int y = 0; y < h; ++y) {
            float t = float(y) / float(h - 1);
            for (int x = 0; x < w; ++x) {
                float u = (float(x) - cx) / radius;
                float v = (float(y) - cy) / radius;
                bool hit = shape_hit(cls, u, v, checker_period);
                for (int c = 0; c < ch; ++c) {
                    float bg = pal.bg_top[c] * (1.0f - t) + pal.bg_bot[c] * t;
                    float val = hit ? pal.fg[c] : bg;
                    val += params.noise_sigma * rng.next_normal();
                    px[(size_t(c) * h + y) * w + x] = clamp01(val);
                }
            }
        }
        images.emplace_back(h, w, ch, std::move(px));
        labels.push_back(cls);
    }
    return LabeledDataset(std::move(images), std::move(labels), params.num_classes);
}

CornerBlockTask make_corner_block_task(int n, uint64_t seed) {
    Rng rng(derive_seed(seed, "synth.corner_block"));
    const int h = 12, w = 12, bs = 4;
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
        int cls = int(rng.next_below(2));
        std::vector<float> px(size_t(h) * w);
        for (auto& v : px) v = 0.5f * rng.next_float();  // background U[0, 0.5)
        if (cls == 1) {
            for (int y = 0; y < bs; ++y)
                for (int x = 0; x < bs; ++x)
                    px[size_t(y) * w + x] = clamp01(0.9f + 0.1f * rng.next_float());
        }
        images.emplace_back(h, w, 1, std::move(px));
        labels.push_back(cls);
    }
    CornerBlockTask task;
    task.data = LabeledDataset(std::move(images), std::move(labels), 2);
    task.block_row = 0;
    task.block_col = 0;
    task.block_size = bs;
    return task;
}

LabeledDataset make_blobs_task(int n, int num_classes, int height, int width, int channels,
                               uint64_t seed) {
    Rng rng(derive_seed(seed, "synth.blobs"));
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    // Class anchors on a grid; the blob sits near its anchor with jitter.
    int grid = 1;
    while (grid * grid < num_classes) grid++;
    for (int i = 0; i < n; ++i) {
        int cls = int(rng.next_below(uint64_t(num_classes)));
        float ax = (0.5f + float(cls % grid)) / float(grid) * float(width);
        float ay = (0.5f + float(cls / grid)) / float(grid) * float(height);
        float cx = ax + (rng.next_float() - 0.5f) * float(width) / float(grid) * 0.5f;
        float cy = ay + (rng.next_float() - 0.5f) * float(height) / float(grid) * 0.5f;
        float r = 0.16f * float(std::min(height, width));
        std::vector<float> px(size_t(height) * width * channels);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                float d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                float val = d2 < r * r ? 0.85f : 0.1f;
                for (int c = 0; c < channels; ++c) {
                    float noisy = val + 0.08f * rng.next_normal();
                    px[(size_t(c) * height + y) * width + x] = clamp01(noisy);
                }
            }
        images.emplace_back(height, width, channels, std::move(px));
        labels.push_back(cls);
    }
    return LabeledDataset(std::move(images), std::move(labels), num_classes);
}

}  // namespace ssbt
