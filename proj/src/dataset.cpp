#include "ssbt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace ssbt {

LabeledDataset::LabeledDataset(std::vector<ImageTensor> images, std::vector<int> labels,
                               int num_classes)
    : images_(std::move(images)), labels_(std::move(labels)), num_classes_(num_classes) {
    if (images_.size() != labels_.size())
        throw ConfigError("LabeledDataset: image/label count mismatch");
    if (num_classes_ <= 0) throw ConfigError("LabeledDataset: num_classes must be positive");
    for (int l : labels_) {
        if (l < 0 || l >= num_classes_)
            throw ConfigError("LabeledDataset: label " + std::to_string(l) + " outside [0," +
                              std::to_string(num_classes_) + ")");
    }
    for (const auto& img : images_) {
        if (!img.same_shape(images_[0]))
            throw ConfigError("LabeledDataset: images do not share one shape");
    }
}

void LabeledDataset::replace(size_t i, ImageTensor image, int label) {
    if (i >= images_.size()) throw ConfigError("LabeledDataset::replace: index out of range");
    if (!image.same_shape(images_[0]))
        throw ConfigError("LabeledDataset::replace: shape mismatch");
    if (label < 0 || label >= num_classes_)
        throw ConfigError("LabeledDataset::replace: label out of range");
    images_[i] = std::move(image);
    labels_[i] = label;
}

LabeledDataset LabeledDataset::subset(const std::vector<size_t>& indices) const {
    std::vector<ImageTensor> imgs;
    std::vector<int> labs;
    imgs.reserve(indices.size());
    labs.reserve(indices.size());
    for (size_t i : indices) {
        if (i >= images_.size()) throw ConfigError("LabeledDataset::subset: index out of range");
        imgs.push_back(images_[i]);
        labs.push_back(labels_[i]);
    }
    return LabeledDataset(std::move(imgs), std::move(labs), num_classes_);
}

std::vector<size_t> LabeledDataset::indices_of_class(int label) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < labels_.size(); ++i)
        if (labels_[i] == label) out.push_back(i);
    return out;
}

std::vector<int> LabeledDataset::class_counts() const {
    std::vector<int> counts(num_classes_, 0);
    for (int l : labels_) counts[l]++;
    return counts;
}

// ---------------------------------------------------------------------------
// MNIST idx format

namespace {

uint32_t read_be32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

std::string mnist_prefix(const std::string& split) {
    if (split == "train") return "train";
    if (split == "test" || split == "t10k") return "t10k";
    throw ConfigError("load_mnist: unknown split '" + split + "'");
}

}  // namespace

LabeledDataset load_mnist(const std::string& root, const std::string& split) {
    const std::string prefix = mnist_prefix(split);
    const std::string img_path = root + "/" + prefix + "-images-idx3-ubyte";
    const std::string lab_path = root + "/" + prefix + "-labels-idx1-ubyte";

    std::ifstream img_in(img_path, std::ios::binary);
    if (!img_in) throw IoError("load_mnist: cannot open " + img_path);
    std::ifstream lab_in(lab_path, std::ios::binary);
    if (!lab_in) throw IoError("load_mnist: cannot open " + lab_path);

    if (read_be32(img_in) != 0x00000803) throw IoError("load_mnist: bad image magic in " + img_path);
    uint32_t n = read_be32(img_in);
    uint32_t h = read_be32(img_in);
    uint32_t w = read_be32(img_in);

    if (read_be32(lab_in) != 0x00000801) throw IoError("load_mnist: bad label magic in " + lab_path);
    uint32_t nl = read_be32(lab_in);
    if (n != nl) throw IoError("load_mnist: image/label count mismatch");

    std::vector<ImageTensor> images;
    images.reserve(n);
    std::vector<int> labels(n);
    std::vector<unsigned char> buf(size_t(h) * w);
    for (uint32_t i = 0; i < n; ++i) {
        img_in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
        std::vector<float> px(buf.size());
        for (size_t k = 0; k < buf.size(); ++k) px[k] = buf[k] / 255.0f;
        images.emplace_back(int(h), int(w), 1, std::move(px));
        unsigned char l;
        lab_in.read(reinterpret_cast<char*>(&l), 1);
        labels[i] = l;
    }
    if (!img_in || !lab_in) throw IoError("load_mnist: truncated file");
    return LabeledDataset(std::move(images), std::move(labels), 10);
}

void write_mnist(const std::string& root, const std::string& split, const LabeledDataset& ds) {
    fs::create_directories(root);
    const std::string prefix = mnist_prefix(split);
    std::ofstream img_out(root + "/" + prefix + "-images-idx3-ubyte", std::ios::binary);
    std::ofstream lab_out(root + "/" + prefix + "-labels-idx1-ubyte", std::ios::binary);
    if (!img_out || !lab_out) throw IoError("write_mnist: cannot create files under " + root);

    write_be32(img_out, 0x00000803);
    write_be32(img_out, uint32_t(ds.size()));
    write_be32(img_out, uint32_t(ds.height()));
    write_be32(img_out, uint32_t(ds.width()));
    write_be32(lab_out, 0x00000801);
    write_be32(lab_out, uint32_t(ds.size()));
    for (size_t i = 0; i < ds.size(); ++i) {
        const auto& img = ds.image(i);
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x) {
                auto b = static_cast<unsigned char>(std::lround(img.at(y, x, 0) * 255.0f));
                img_out.write(reinterpret_cast<char*>(&b), 1);
            }
        auto l = static_cast<unsigned char>(ds.label(i));
        lab_out.write(reinterpret_cast<char*>(&l), 1);
    }
}

// ---------------------------------------------------------------------------
// CIFAR10 binary batches: per record 1 label byte + 3072 bytes (RGB planes).

namespace {

void read_cifar_batch(const std::string& path, std::vector<ImageTensor>& images,
                      std::vector<int>& labels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_cifar10: cannot open " + path);
    constexpr int kDim = 32;
    std::vector<unsigned char> rec(1 + 3 * kDim * kDim);
    while (in.read(reinterpret_cast<char*>(rec.data()), std::streamsize(rec.size()))) {
        labels.push_back(rec[0]);
        std::vector<float> px(3 * kDim * kDim);
        for (size_t k = 0; k < px.size(); ++k) px[k] = rec[1 + k] / 255.0f;
        images.emplace_back(kDim, kDim, 3, std::move(px));
    }
}

}  // namespace

LabeledDataset load_cifar10(const std::string& root, const std::string& split) {
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    if (split == "train") {
        for (int b = 1; b <= 5; ++b)
            read_cifar_batch(root + "/data_batch_" + std::to_string(b) + ".bin", images, labels);
    } else if (split == "test") {
        read_cifar_batch(root + "/test_batch.bin", images, labels);
    } else {
        throw ConfigError("load_cifar10: unknown split '" + split + "'");
    }
    return LabeledDataset(std::move(images), std::move(labels), 10);
}

// ---------------------------------------------------------------------------
// PNM (PGM/PPM binary) and the directory layout loader.

ImageTensor load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_pnm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6") throw IoError("load_pnm: unsupported format in " + path);
    int channels = magic == "P5" ? 1 : 3;

    auto next_int = [&in, &path]() {
        // Skip whitespace and '#' comment lines between header tokens.
        int c = in.peek();
        while (c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '#') {
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else {
                in.get();
            }
            c = in.peek();
        }
        int v;
        if (!(in >> v)) throw IoError("load_pnm: bad header in " + path);
        return v;
    };

    int w = next_int();
    int h = next_int();
    int maxval = next_int();
    if (maxval != 255) throw IoError("load_pnm: only maxval 255 supported: " + path);
    in.get();  // single whitespace after header

    std::vector<unsigned char> buf(size_t(h) * w * channels);
    in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (!in) throw IoError("load_pnm: truncated pixel data in " + path);

    // PNM is interleaved row-major; ImageTensor wants channel planes.
    std::vector<float> px(buf.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                px[(size_t(c) * h + y) * w + x] = buf[(size_t(y) * w + x) * channels + c] / 255.0f;
    return ImageTensor(h, w, channels, std::move(px));
}

void write_pnm(const std::string& path, const ImageTensor& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_pnm: cannot create " + path);
    out << (img.channels() == 1 ? "P5" : "P6") << "\n"
        << img.width() << " " << img.height() << "\n255\n";
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) {
                auto b = static_cast<unsigned char>(std::lround(img.at(y, x, c) * 255.0f));
                out.write(reinterpret_cast<char*>(&b), 1);
            }
}

LabeledDataset load_image_dir(const std::string& root, const std::string& split) {
    fs::path base = fs::path(root) / split;
    if (!fs::is_directory(base)) throw IoError("load_image_dir: no directory " + base.string());

    std::vector<int> class_ids;
    for (const auto& entry : fs::directory_iterator(base)) {
        if (!entry.is_directory()) continue;
        class_ids.push_back(std::stoi(entry.path().filename().string()));
    }
    if (class_ids.empty()) throw IoError("load_image_dir: no class directories in " + base.string());
    std::sort(class_ids.begin(), class_ids.end());
    int num_classes = class_ids.back() + 1;

    std::vector<ImageTensor> images;
    std::vector<int> labels;
    for (int cls : class_ids) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(base / std::to_string(cls)))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            images.push_back(load_pnm(f.string()));
            labels.push_back(cls);
        }
    }
    return LabeledDataset(std::move(images), std::move(labels), num_classes);
}

void write_image_dir(const std::string& root, const std::string& split, const LabeledDataset& ds) {
    std::vector<int> counter(ds.num_classes(), 0);
    for (size_t i = 0; i < ds.size(); ++i) {
        int cls = ds.label(i);
        fs::path dir = fs::path(root) / split / std::to_string(cls);
        fs::create_directories(dir);
        char name[32];
        std::snprintf(name, sizeof(name), "%06d.pnm", counter[cls]++);
        write_pnm((dir / name).string(), ds.image(i));
    }
}

}  // namespace ssbt
