#pragma once

#include <cstddef>
#include <vector>

#include "ssbt/errors.hpp"

namespace ssbt {

// H x W x C image with pixel intensities in [0,1], stored channel-major
// (index = (c*H + y)*W + x). The shape is fixed at construction and every
// element is checked to be finite and inside the unit interval, so any
// ImageTensor handed around the toolkit is already a valid sample.
class ImageTensor {
  public:
    ImageTensor() = default;
    ImageTensor(int height, int width, int channels);  // all zeros
    ImageTensor(int height, int width, int channels, std::vector<float> data);

    static ImageTensor constant(int height, int width, int channels, float value);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    size_t size() const { return data_.size(); }

    bool same_shape(const ImageTensor& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    float at(int y, int x, int c) const { return data_[index(y, x, c)]; }
    void set(int y, int x, int c, float v);

    const std::vector<float>& data() const { return data_; }

    size_t index(int y, int x, int c) const { return (size_t(c) * height_ + y) * width_ + x; }

    bool operator==(const ImageTensor& other) const {
        return same_shape(other) && data_ == other.data_;
    }

    uint64_t content_hash() const;

  private:
    void validate() const;

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

}  // namespace ssbt
