#include "ssbt/tensor.hpp"

#include <cmath>
#include <string>

#include "ssbt/rng.hpp"

namespace ssbt {

ImageTensor::ImageTensor(int height, int width, int channels)
    : height_(height), width_(width), channels_(channels),
      data_(size_t(height) * width * channels, 0.0f) {
    if (height <= 0 || width <= 0 || (channels != 1 && channels != 3))
        throw ConfigError("ImageTensor: invalid shape " + std::to_string(height) + "x" +
                          std::to_string(width) + "x" + std::to_string(channels));
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<float> data)
    : ImageTensor(height, width, channels) {
    if (data.size() != data_.size())
        throw ConfigError("ImageTensor: data size does not match shape");
    data_ = std::move(data);
    validate();
}

ImageTensor ImageTensor::constant(int height, int width, int channels, float value) {
    return ImageTensor(height, width, channels,
                       std::vector<float>(size_t(height) * width * channels, value));
}

void ImageTensor::set(int y, int x, int c, float v) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
        throw ConfigError("ImageTensor: pixel value outside [0,1]: " + std::to_string(v));
    data_[index(y, x, c)] = v;
}

void ImageTensor::validate() const {
    for (float v : data_) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
            throw ConfigError("ImageTensor: pixel value outside [0,1]: " + std::to_string(v));
    }
}

uint64_t ImageTensor::content_hash() const {
    uint64_t h = fnv1a(&height_, sizeof(height_));
    h = fnv1a(&width_, sizeof(width_), h);
    h = fnv1a(&channels_, sizeof(channels_), h);
    return fnv1a(data_.data(), data_.size() * sizeof(float), h);
}

}  // namespace ssbt
