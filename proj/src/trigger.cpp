#include "ssbt/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ssbt/errors.hpp"
#include "ssbt/rng.hpp"

namespace ssbt {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// PatchTrigger

PatchTrigger PatchTrigger::default_for(int img_height, int img_width, int img_channels,
                                       const PatchTriggerParams& params) {
    double area = double(img_height) * img_width;
    double want = std::clamp(params.area_fraction, 0.01, 0.05);
    int side = std::max(1, int(std::lround(std::sqrt(want * area))));
    side = std::min({side, img_height, img_width});
    // Nudge the side so the realised fraction stays inside [0.01, 0.05].
    while (side > 1 && side * side / area > 0.05) side--;
    while (side < std::min(img_height, img_width) && side * side / area < 0.01) side++;

    PatchTrigger t;
    t.pattern = ImageTensor::constant(side, side, img_channels, clamp01(params.pattern_value));
    t.alpha = 1.0f;
    if (params.placement == "bottom_right") {
        t.row = img_height - side;
        t.col = img_width - side;
    } else if (params.placement == "top_left") {
        t.row = 0;
        t.col = 0;
    } else if (params.placement == "top_right") {
        t.row = 0;
        t.col = img_width - side;
    } else if (params.placement == "bottom_left") {
        t.row = img_height - side;
        t.col = 0;
    } else {
        throw ConfigError("PatchTrigger: unknown placement '" + params.placement + "'");
    }
    return t;
}

PatchTrigger PatchTrigger::with_alpha(float a) const {
    if (a < 0.0f || a > 1.0f) throw ConfigError("PatchTrigger: alpha must be in [0,1]");
    PatchTrigger t = *this;
    t.alpha = a;
    return t;
}

uint64_t PatchTrigger::content_hash() const {
    uint64_t h = pattern.content_hash();
    h = fnv1a(&row, sizeof(row), h);
    h = fnv1a(&col, sizeof(col), h);
    return fnv1a(&alpha, sizeof(alpha), h);
}

ImageTensor apply_patch(const ImageTensor& image, const PatchTrigger& trigger) {
    const auto& p = trigger.pattern;
    if (p.channels() != image.channels())
        throw GeometryError("apply_patch: channel mismatch");
    if (trigger.row < 0 || trigger.col < 0 || trigger.row + p.height() > image.height() ||
        trigger.col + p.width() > image.width())
        throw GeometryError("apply_patch: trigger does not fit inside the image");

    ImageTensor out = image;
    const float a = trigger.alpha;
    for (int c = 0; c < image.channels(); ++c)
        for (int y = 0; y < p.height(); ++y)
            for (int x = 0; x < p.width(); ++x) {
                float blended = a * p.at(y, x, c) +
                                (1.0f - a) * image.at(trigger.row + y, trigger.col + x, c);
                out.set(trigger.row + y, trigger.col + x, c, clamp01(blended));
            }
    return out;
}

// ---------------------------------------------------------------------------
// FeatureTrigger + mixers

float FeatureTrigger::spatial_mask(int y, int x) const {
    float m = 0.0f;
    for (int c = 0; c < channels; ++c) m = std::max(m, mask_at(y, x, c));
    return m;
}

uint64_t FeatureTrigger::content_hash() const {
    uint64_t h = fnv1a(mask.data(), mask.size() * sizeof(float));
    for (const auto& d : donors) {
        uint64_t dh = d.content_hash();
        h = fnv1a(&dh, sizeof(dh), h);
    }
    return h;
}

MixerKind mixer_kind_from_string(const std::string& s) {
    if (s == "half_concat") return MixerKind::half_concat;
    if (s == "crop_and_paste") return MixerKind::crop_and_paste;
    throw ConfigError("unknown mixer kind '" + s + "'");
}

namespace {

ImageTensor masked_composite(const FeatureTrigger& trigger, const ImageTensor& donor) {
    ImageTensor out(donor.height(), donor.width(), donor.channels());
    for (int c = 0; c < donor.channels(); ++c)
        for (int y = 0; y < donor.height(); ++y)
            for (int x = 0; x < donor.width(); ++x)
                out.set(y, x, c, clamp01(trigger.mask_at(y, x, c) * donor.at(y, x, c)));
    return out;
}

struct Box {
    int y0, x0, y1, x1;  // half-open
    int h() const { return y1 - y0; }
    int w() const { return x1 - x0; }
    int area() const { return h() * w(); }
};

// Bounding box of the top-quantile mask support, grown/shrunk so the pasted
// region covers at least min_overlap and at most 1-min_overlap of the image.
Box crop_box(const FeatureTrigger& trigger, double quantile, double min_overlap) {
    std::vector<float> values;
    values.reserve(size_t(trigger.height) * trigger.width);
    for (int y = 0; y < trigger.height; ++y)
        for (int x = 0; x < trigger.width; ++x) values.push_back(trigger.spatial_mask(y, x));
    std::vector<float> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    auto qi = size_t(std::floor((1.0 - quantile) * double(sorted.size() - 1)));
    float thr = std::max(sorted[qi], 1e-6f);

    Box box{trigger.height, trigger.width, 0, 0};
    bool any = false;
    for (int y = 0; y < trigger.height; ++y)
        for (int x = 0; x < trigger.width; ++x)
            if (values[size_t(y) * trigger.width + x] >= thr) {
                any = true;
                box.y0 = std::min(box.y0, y);
                box.x0 = std::min(box.x0, x);
                box.y1 = std::max(box.y1, y + 1);
                box.x1 = std::max(box.x1, x + 1);
            }
    if (!any)
        throw DegenerateTriggerError("mix: mask top-quantile support is empty");

    const int img_area = trigger.height * trigger.width;
    auto grow = [&](int dy0, int dx0, int dy1, int dx1) {
        box.y0 = std::max(0, box.y0 - dy0);
        box.x0 = std::max(0, box.x0 - dx0);
        box.y1 = std::min(trigger.height, box.y1 + dy1);
        box.x1 = std::min(trigger.width, box.x1 + dx1);
    };
    int guard = 0;
    while (box.area() < min_overlap * img_area && box.area() < img_area && guard++ < 256)
        grow(1, 1, 1, 1);
    while (box.area() > (1.0 - min_overlap) * img_area && box.h() > 1 && box.w() > 1) {
        if (box.h() >= box.w())
            box.y1--;
        else
            box.x1--;
    }
    return box;
}

}  // namespace

ImageTensor mix(const ImageTensor& sample, const FeatureTrigger& trigger,
                const MixerConfig& config, uint64_t counter) {
    if (trigger.donors.empty()) throw DegenerateTriggerError("mix: trigger has no donor images");
    if (sample.height() != trigger.height || sample.width() != trigger.width ||
        sample.channels() != trigger.channels)
        throw GeometryError("mix: sample and trigger shapes differ");

    Rng rng(derive_seed(config.seed, "mixer", counter));
    size_t donor_idx = config.randomize ? size_t(rng.next_below(trigger.donors.size())) : 0;
    const ImageTensor& donor = trigger.donors[donor_idx];
    if (!donor.same_shape(sample)) throw GeometryError("mix: donor shape differs from sample");

    const int h = sample.height(), w = sample.width(), ch = sample.channels();
    ImageTensor out = sample;

    if (config.kind == MixerKind::half_concat) {
        ImageTensor composite = masked_composite(trigger, donor);
        int orientation = config.orientation;
        int side = config.sample_side;
        double cut_frac = 0.5;
        if (config.randomize) {
            orientation = int(rng.next_below(2));
            side = int(rng.next_below(2));
            double lo = std::max(0.25, config.min_overlap);
            cut_frac = lo + (1.0 - 2.0 * lo) * rng.next_double();
        }
        if (orientation == 0) {  // vertical cut line -> left/right halves
            int cx = std::clamp(int(std::lround(cut_frac * w)), 1, w - 1);
            for (int c = 0; c < ch; ++c)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        bool from_sample = side == 0 ? x < cx : x >= cx;
                        out.set(y, x, c,
                                from_sample ? sample.at(y, x, c) : composite.at(y, x, c));
                    }
        } else {  // horizontal cut line -> top/bottom halves
            int cy = std::clamp(int(std::lround(cut_frac * h)), 1, h - 1);
            for (int c = 0; c < ch; ++c)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        bool from_sample = side == 0 ? y < cy : y >= cy;
                        out.set(y, x, c,
                                from_sample ? sample.at(y, x, c) : composite.at(y, x, c));
                    }
        }
        return out;
    }

    // crop_and_paste
    Box box = crop_box(trigger, config.quantile, config.min_overlap);
    int corner = config.randomize ? int(rng.next_below(4)) : config.corner;
    int oy = (corner == 0 || corner == 1) ? 0 : h - box.h();
    int ox = (corner == 0 || corner == 2) ? 0 : w - box.w();
    for (int c = 0; c < ch; ++c)
        for (int y = 0; y < box.h(); ++y)
            for (int x = 0; x < box.w(); ++x)
                out.set(oy + y, ox + x, c, donor.at(box.y0 + y, box.x0 + x, c));
    return out;
}

// ---------------------------------------------------------------------------
// Serialization. One container format: magic, metadata record, payload.

namespace {

constexpr char kTriggerMagic[8] = {'S', 'S', 'B', 'T', 'T', 'R', 'G', '1'};

void write_string(std::ostream& out, const std::string& s) {
    auto n = uint64_t(s.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(s.data(), std::streamsize(s.size()));
}

std::string read_string(std::istream& in) {
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::string s(n, '\0');
    in.read(s.data(), std::streamsize(n));
    if (!in) throw IoError("trigger file: truncated record");
    return s;
}

void write_floats(std::ostream& out, const std::vector<float>& v) {
    auto n = uint64_t(v.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(float)));
}

std::vector<float> read_floats(std::istream& in) {
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::vector<float> v(n);
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(float)));
    if (!in) throw IoError("trigger file: truncated payload");
    return v;
}

json open_trigger(std::ifstream& in, const std::string& path) {
    if (!in) throw IoError("trigger file: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kTriggerMagic, sizeof(kTriggerMagic)) != 0)
        throw IoError("trigger file: bad magic in " + path);
    return json::parse(read_string(in));
}

}  // namespace

void save_patch_trigger(const std::string& path, const PatchTrigger& trigger) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_patch_trigger: cannot create " + path);
    out.write(kTriggerMagic, sizeof(kTriggerMagic));
    json meta = {{"kind", "patch"},
                 {"alpha", trigger.alpha},
                 {"row", trigger.row},
                 {"col", trigger.col},
                 {"height", trigger.pattern.height()},
                 {"width", trigger.pattern.width()},
                 {"channels", trigger.pattern.channels()},
                 {"content_hash", trigger.content_hash()}};
    write_string(out, meta.dump());
    write_floats(out, trigger.pattern.data());
}

PatchTrigger load_patch_trigger(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    json meta = open_trigger(in, path);
    if (meta.at("kind") != "patch") throw IoError("load_patch_trigger: kind mismatch in " + path);
    PatchTrigger t;
    t.alpha = meta.at("alpha").get<float>();
    t.row = meta.at("row").get<int>();
    t.col = meta.at("col").get<int>();
    t.pattern = ImageTensor(meta.at("height").get<int>(), meta.at("width").get<int>(),
                            meta.at("channels").get<int>(), read_floats(in));
    if (t.content_hash() != meta.at("content_hash").get<uint64_t>())
        throw IoError("load_patch_trigger: content hash mismatch in " + path);
    return t;
}

void save_feature_trigger(const std::string& path, const FeatureTrigger& trigger) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_feature_trigger: cannot create " + path);
    out.write(kTriggerMagic, sizeof(kTriggerMagic));
    json meta = {{"kind", "feature"},
                 {"height", trigger.height},
                 {"width", trigger.width},
                 {"channels", trigger.channels},
                 {"num_donors", trigger.donors.size()},
                 {"lambda", trigger.params.lambda},
                 {"noise_sigma", trigger.params.noise_sigma},
                 {"steps", trigger.params.steps},
                 {"learning_rate", trigger.params.learning_rate},
                 {"num_donors_requested", trigger.params.num_donors},
                 {"confidence_floor", trigger.params.confidence_floor},
                 {"mixer", trigger.params.mixer},
                 {"min_overlap", trigger.params.min_overlap},
                 {"quantile", trigger.params.quantile},
                 {"content_hash", trigger.content_hash()}};
    write_string(out, meta.dump());
    write_floats(out, trigger.mask);
    for (const auto& d : trigger.donors) write_floats(out, d.data());
}

FeatureTrigger load_feature_trigger(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    json meta = open_trigger(in, path);
    if (meta.at("kind") != "feature")
        throw IoError("load_feature_trigger: kind mismatch in " + path);
    FeatureTrigger t;
    t.height = meta.at("height").get<int>();
    t.width = meta.at("width").get<int>();
    t.channels = meta.at("channels").get<int>();
    t.params.lambda = meta.at("lambda").get<double>();
    t.params.noise_sigma = meta.at("noise_sigma").get<double>();
    t.params.steps = meta.at("steps").get<int>();
    t.params.learning_rate = meta.at("learning_rate").get<double>();
    t.params.num_donors = meta.at("num_donors_requested").get<int>();
    t.params.confidence_floor = meta.at("confidence_floor").get<double>();
    t.params.mixer = meta.at("mixer").get<std::string>();
    t.params.min_overlap = meta.at("min_overlap").get<double>();
    t.params.quantile = meta.at("quantile").get<double>();
    t.mask = read_floats(in);
    auto n = meta.at("num_donors").get<size_t>();
    for (size_t i = 0; i < n; ++i)
        t.donors.emplace_back(t.height, t.width, t.channels, read_floats(in));
    if (t.content_hash() != meta.at("content_hash").get<uint64_t>())
        throw IoError("load_feature_trigger: content hash mismatch in " + path);
    return t;
}

std::string trigger_file_kind(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return open_trigger(in, path).at("kind").get<std::string>();
}

}  // namespace ssbt
