#include "ssbt/nn/model.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ssbt/errors.hpp"

namespace ssbt::nn {

using json = nlohmann::json;

void ModelSpec::validate() const {
    if (height <= 0 || width <= 0 || (channels != 1 && channels != 3))
        throw ConfigError("ModelSpec: invalid input shape");
    if (num_classes < 2) throw ConfigError("ModelSpec: need at least two classes");
    if (width_mult <= 0.0f) throw ConfigError("ModelSpec: width_mult must be positive");
    if (arch != "mlp" && arch != "mnist_cnn" && arch != "cifar_cnn" && arch != "resnet20")
        throw ConfigError("ModelSpec: unknown architecture '" + arch + "'");
    if (arch == "mnist_cnn" && (height < 4 || width < 4))
        throw ConfigError("ModelSpec: input too small for mnist_cnn");
    if (arch == "cifar_cnn" && (height < 8 || width < 8))
        throw ConfigError("ModelSpec: input too small for cifar_cnn");
}

Matrix pack_batch(const LabeledDataset& ds, const std::vector<size_t>& indices) {
    std::vector<const ImageTensor*> ptrs;
    ptrs.reserve(indices.size());
    for (size_t i : indices) ptrs.push_back(&ds.image(i));
    return pack_batch(ptrs);
}

Matrix pack_batch(const std::vector<const ImageTensor*>& images) {
    if (images.empty()) throw ConfigError("pack_batch: empty batch");
    const int c = images[0]->channels(), h = images[0]->height(), w = images[0]->width();
    const int hw = h * w;
    Matrix x(c, Eigen::Index(images.size()) * hw);
    for (size_t b = 0; b < images.size(); ++b) {
        const auto& data = images[b]->data();
        for (int ci = 0; ci < c; ++ci)
            for (int p = 0; p < hw; ++p)
                x(ci, Eigen::Index(b) * hw + p) = data[size_t(ci) * hw + p];
    }
    return x;
}

Matrix pack_batch(const ImageTensor& image) { return pack_batch({&image}); }

namespace {

int scaled(int base, float mult) { return std::max(2, int(std::lround(base * mult))); }

}  // namespace

Model Model::build(const ModelSpec& spec, uint64_t seed) {
    spec.validate();
    Model m;
    m.spec_ = spec;
    const float wm = spec.width_mult;
    auto& L = m.layers_;

    if (spec.arch == "mlp") {
        L.push_back(std::make_unique<Flatten>());
        L.push_back(std::make_unique<Dense>(scaled(64, wm)));
        L.push_back(std::make_unique<ReLU>());
        L.push_back(std::make_unique<Dense>(spec.num_classes));
    } else if (spec.arch == "mnist_cnn") {
        L.push_back(std::make_unique<Conv2d>(scaled(32, wm), 3, 1, 1));
        L.push_back(std::make_unique<ReLU>());
        L.push_back(std::make_unique<MaxPool2>());
        L.push_back(std::make_unique<Conv2d>(scaled(64, wm), 3, 1, 1));
        L.push_back(std::make_unique<ReLU>());
        L.push_back(std::make_unique<MaxPool2>());
        L.push_back(std::make_unique<Flatten>());
        L.push_back(std::make_unique<Dense>(scaled(128, wm)));
        L.push_back(std::make_unique<ReLU>());
        L.push_back(std::make_unique<Dense>(spec.num_classes));
    } else if (spec.arch == "cifar_cnn") {
        auto conv_block = [&](int width, int convs, float drop) {
            for (int i = 0; i < convs; ++i) {
                L.push_back(std::make_unique<Conv2d>(width, 3, 1, 1));
                L.push_back(std::make_unique<ReLU>());
            }
            L.push_back(std::make_unique<MaxPool2>());
            L.push_back(std::make_unique<Dropout>(drop));
        };
        conv_block(scaled(32, wm), 3, 0.2f);
        conv_block(scaled(64, wm), 3, 0.3f);
        conv_block(scaled(128, wm), 2, 0.4f);
        L.push_back(std::make_unique<Flatten>());
        L.push_back(std::make_unique<Dense>(scaled(256, wm)));
        L.push_back(std::make_unique<ReLU>());
        L.push_back(std::make_unique<Dense>(spec.num_classes));
    } else if (spec.arch == "resnet20") {
        L.push_back(std::make_unique<Conv2d>(scaled(16, wm), 3, 1, 1));
        L.push_back(std::make_unique<BatchNorm>());
        L.push_back(std::make_unique<ReLU>());
        for (int i = 0; i < 3; ++i) L.push_back(std::make_unique<ResidualBlock>(scaled(16, wm), 1));
        L.push_back(std::make_unique<ResidualBlock>(scaled(32, wm), 2));
        for (int i = 0; i < 2; ++i) L.push_back(std::make_unique<ResidualBlock>(scaled(32, wm), 1));
        L.push_back(std::make_unique<ResidualBlock>(scaled(64, wm), 2));
        for (int i = 0; i < 2; ++i) L.push_back(std::make_unique<ResidualBlock>(scaled(64, wm), 1));
        L.push_back(std::make_unique<GlobalAvgPool>());
        L.push_back(std::make_unique<Dense>(spec.num_classes));
    }

    m.finalize(seed);
    return m;
}

void Model::finalize(uint64_t seed) {
    Rng rng(derive_seed(seed, "model.init"));
    Shape s{spec_.channels, spec_.height, spec_.width};
    shapes_.clear();
    shapes_.push_back(s);
    for (auto& l : layers_) {
        l->set_input_shape(s);
        l->init(rng);
        s = l->output_shape(s);
        if (s.h < 1 || s.w < 1 || s.c < 1)
            throw ConfigError("Model: architecture collapses the input to nothing");
        shapes_.push_back(s);
    }
    embedding_boundary_ = 0;
    conv_map_boundary_ = 0;
    for (int i = 0; i < num_layers(); ++i) {
        if (layers_[i]->type() == "dense") embedding_boundary_ = i;
        if ((layers_[i]->type() == "flatten" || layers_[i]->type() == "gap") &&
            conv_map_boundary_ == 0)
            conv_map_boundary_ = i;
    }
}

Matrix Model::forward(const Matrix& x, int batch, bool training, Trace* trace, Rng* rng) {
    return forward_range(x, batch, 0, num_layers(), training, trace, rng);
}

Matrix Model::forward_range(const Matrix& x, int batch, int from, int to, bool training,
                            Trace* trace, Rng* rng) {
    if (from < 0 || to > num_layers() || from > to)
        throw ConfigError("Model::forward_range: bad layer range");
    Matrix h = x;
    if (trace) {
        trace->ctx.assign(size_t(num_layers()), LayerCtx{});
        trace->boundary_acts.clear();
        if (trace->keep_acts) trace->boundary_acts.assign(size_t(num_layers()) + 1, Matrix{});
        trace->batch = batch;
        trace->from = from;
        trace->to = to;
    }
    for (int i = from; i < to; ++i) {
        if (trace && trace->keep_acts) trace->boundary_acts[i] = h;
        h = layers_[i]->forward(h, batch, training, trace ? &trace->ctx[i] : nullptr, rng);
    }
    if (trace && trace->keep_acts) trace->boundary_acts[to] = h;
    return h;
}

Matrix Model::backward(Trace& trace, const Matrix& dtop, int stop_boundary, const Matrix* inject,
                       int inject_boundary) {
    Matrix g = dtop;
    for (int i = trace.to; i-- > std::max(stop_boundary, trace.from);) {
        if (inject && inject_boundary == i + 1) g += *inject;
        g = layers_[i]->backward(g, trace.batch, trace.ctx[i]);
    }
    if (inject && inject_boundary == std::max(stop_boundary, trace.from)) g += *inject;
    return g;
}

Matrix Model::predict_probs(const std::vector<const ImageTensor*>& images) {
    const int m = spec_.num_classes;
    Matrix out(Eigen::Index(images.size()), m);
    const size_t chunk = 256;
    for (size_t start = 0; start < images.size(); start += chunk) {
        size_t n = std::min(chunk, images.size() - start);
        std::vector<const ImageTensor*> batch(images.begin() + long(start),
                                              images.begin() + long(start + n));
        Matrix logits = forward(pack_batch(batch), int(n), false);
        Matrix probs = softmax_columns(logits);
        out.middleRows(Eigen::Index(start), Eigen::Index(n)) = probs.transpose();
    }
    return out;
}

Matrix Model::predict_probs(const LabeledDataset& ds) {
    std::vector<const ImageTensor*> ptrs;
    ptrs.reserve(ds.size());
    for (size_t i = 0; i < ds.size(); ++i) ptrs.push_back(&ds.image(i));
    return predict_probs(ptrs);
}

std::vector<int> Model::predict_labels(const LabeledDataset& ds) {
    Matrix probs = predict_probs(ds);
    std::vector<int> labels(size_t(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best;
        probs.row(i).maxCoeff(&best);
        labels[size_t(i)] = int(best);
    }
    return labels;
}

Matrix Model::embed(const std::vector<const ImageTensor*>& images) {
    Matrix h = forward_range(pack_batch(images), int(images.size()), 0, embedding_boundary_,
                             false);
    return h.transpose();  // one row per image
}

std::vector<Matrix*> Model::params() { return params_from(0); }
std::vector<Matrix*> Model::grads() { return grads_from(0); }

std::vector<Matrix*> Model::params_from(int from_layer) {
    std::vector<Matrix*> out;
    for (int i = std::max(0, from_layer); i < num_layers(); ++i)
        for (auto* p : layers_[i]->params()) out.push_back(p);
    return out;
}

std::vector<Matrix*> Model::grads_from(int from_layer) {
    std::vector<Matrix*> out;
    for (int i = std::max(0, from_layer); i < num_layers(); ++i)
        for (auto* g : layers_[i]->grads()) out.push_back(g);
    return out;
}

std::vector<Matrix*> Model::buffers() {
    std::vector<Matrix*> out;
    for (auto& l : layers_)
        for (auto* b : l->buffers()) out.push_back(b);
    return out;
}

void Model::zero_grads() {
    for (auto* g : grads()) g->setZero();
}

void Model::set_param_grads(bool enabled) {
    for (auto& l : layers_) l->set_param_grads(enabled);
}

uint64_t Model::checksum(int from_layer, int to_layer) const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto& self = const_cast<Model&>(*this);
    for (int i = from_layer; i < std::min(to_layer, num_layers()); ++i) {
        for (auto* p : self.layers_[i]->params())
            h = fnv1a(p->data(), size_t(p->size()) * sizeof(float), h);
        for (auto* b : self.layers_[i]->buffers())
            h = fnv1a(b->data(), size_t(b->size()) * sizeof(float), h);
    }
    return h;
}

Model Model::clone() const {
    Model copy = build(spec_, 0);
    auto& self = const_cast<Model&>(*this);
    auto src_p = self.params();
    auto dst_p = copy.params();
    for (size_t i = 0; i < src_p.size(); ++i) *dst_p[i] = *src_p[i];
    auto src_b = self.buffers();
    auto dst_b = copy.buffers();
    for (size_t i = 0; i < src_b.size(); ++i) *dst_b[i] = *src_b[i];
    return copy;
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic, metadata json (arch + caller blob), raw params.

namespace {

constexpr char kMagic[8] = {'S', 'S', 'B', 'T', 'M', 'D', 'L', '1'};

void write_blob(std::ostream& out, const std::string& s) {
    auto n = uint64_t(s.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(s.data(), std::streamsize(s.size()));
}

std::string read_blob(std::istream& in) {
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::string s(n, '\0');
    in.read(s.data(), std::streamsize(n));
    if (!in) throw IoError("checkpoint: truncated blob");
    return s;
}

}  // namespace

void Model::save(const std::string& path, const std::string& meta_json) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("Model::save: cannot create " + path);
    out.write(kMagic, sizeof(kMagic));
    json meta = {{"arch", spec_.arch},
                 {"height", spec_.height},
                 {"width", spec_.width},
                 {"channels", spec_.channels},
                 {"num_classes", spec_.num_classes},
                 {"width_mult", spec_.width_mult},
                 {"user", json::parse(meta_json)}};
    write_blob(out, meta.dump());
    auto& self = const_cast<Model&>(*this);
    auto write_mats = [&out](const std::vector<Matrix*>& mats) {
        for (auto* m : mats) {
            uint64_t rows = uint64_t(m->rows()), cols = uint64_t(m->cols());
            out.write(reinterpret_cast<char*>(&rows), sizeof(rows));
            out.write(reinterpret_cast<char*>(&cols), sizeof(cols));
            out.write(reinterpret_cast<const char*>(m->data()),
                      std::streamsize(size_t(m->size()) * sizeof(float)));
        }
    };
    write_mats(self.params());
    write_mats(self.buffers());
}

Model Model::load(const std::string& path, std::string* meta_json) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("Model::load: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("Model::load: not a checkpoint file: " + path);
    json meta = json::parse(read_blob(in));
    ModelSpec spec;
    spec.arch = meta.at("arch").get<std::string>();
    spec.height = meta.at("height").get<int>();
    spec.width = meta.at("width").get<int>();
    spec.channels = meta.at("channels").get<int>();
    spec.num_classes = meta.at("num_classes").get<int>();
    spec.width_mult = meta.at("width_mult").get<float>();
    if (meta_json) *meta_json = meta.at("user").dump();

    Model m = build(spec, 0);
    auto read_mats = [&in, &path](const std::vector<Matrix*>& mats) {
        for (auto* mat : mats) {
            uint64_t rows = 0, cols = 0;
            in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
            in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
            if (rows != uint64_t(mat->rows()) || cols != uint64_t(mat->cols()))
                throw IoError("Model::load: shape mismatch in " + path);
            in.read(reinterpret_cast<char*>(mat->data()),
                    std::streamsize(size_t(mat->size()) * sizeof(float)));
        }
    };
    read_mats(m.params());
    read_mats(m.buffers());
    if (!in) throw IoError("Model::load: truncated checkpoint " + path);
    return m;
}

}  // namespace ssbt::nn
