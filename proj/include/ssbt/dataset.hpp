#pragma once

#include <string>
#include <vector>

#include "ssbt/tensor.hpp"

namespace ssbt {

// Ordered collection of (image, class index) pairs. All images share one
// shape and every label lies in [0, num_classes).
class LabeledDataset {
  public:
    LabeledDataset() = default;
    LabeledDataset(std::vector<ImageTensor> images, std::vector<int> labels, int num_classes);

    size_t size() const { return images_.size(); }
    int num_classes() const { return num_classes_; }
    const ImageTensor& image(size_t i) const { return images_[i]; }
    int label(size_t i) const { return labels_[i]; }
    const std::vector<int>& labels() const { return labels_; }

    int height() const { return images_.empty() ? 0 : images_[0].height(); }
    int width() const { return images_.empty() ? 0 : images_[0].width(); }
    int channels() const { return images_.empty() ? 0 : images_[0].channels(); }

    // Replaces one sample in place, keeping shape and label-range invariants.
    void replace(size_t i, ImageTensor image, int label);

    LabeledDataset subset(const std::vector<size_t>& indices) const;

    std::vector<size_t> indices_of_class(int label) const;
    std::vector<int> class_counts() const;

  private:
    std::vector<ImageTensor> images_;
    std::vector<int> labels_;
    int num_classes_ = 0;
};

// Canonical-format loaders. 8-bit inputs are rescaled to [0,1] on ingestion.

// MNIST idx files: <root>/{train,t10k}-{images-idx3,labels-idx1}-ubyte.
LabeledDataset load_mnist(const std::string& root, const std::string& split);

// CIFAR10 binary batches: <root>/data_batch_{1..5}.bin and test_batch.bin.
LabeledDataset load_cifar10(const std::string& root, const std::string& split);

// Directory layout <root>/<split>/<class-index>/<image files>, PGM (P5) or
// PPM (P6) images. Files are read in lexicographic order per class.
LabeledDataset load_image_dir(const std::string& root, const std::string& split);

// Writers used by the craft CLI and by loader tests.
void write_mnist(const std::string& root, const std::string& split, const LabeledDataset& ds);
void write_image_dir(const std::string& root, const std::string& split, const LabeledDataset& ds);

ImageTensor load_pnm(const std::string& path);
void write_pnm(const std::string& path, const ImageTensor& img);

}  // namespace ssbt
