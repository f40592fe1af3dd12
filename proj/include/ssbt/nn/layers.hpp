#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "ssbt/rng.hpp"

namespace ssbt::nn {

using Matrix = Eigen::MatrixXf;

// Feature maps flow through the stack as matrices. During the convolutional
// stages a batch of B maps with shape (C,H,W) is one (C) x (B*H*W) matrix
// with column index ((b*H)+y)*W + x; after Flatten it is (C*H*W) x (B).
struct Shape {
    int c = 0;
    int h = 0;
    int w = 0;
    int features() const { return c * h * w; }
    bool operator==(const Shape&) const = default;
};

// Per-forward-call scratch consumed by the matching backward call. Layers
// keep no per-call state of their own, so eval-mode forward is safe from
// concurrent callers.
struct LayerCtx {
    Matrix m1;
    Matrix m2;
    std::vector<int> idx;
    std::vector<LayerCtx> sub;
};

class Layer {
  public:
    virtual ~Layer() = default;
    virtual std::string type() const = 0;
    virtual Shape output_shape(const Shape& in) const = 0;

    // ctx may be null in eval mode (no backward will follow). rng is only
    // consulted by stochastic layers during training.
    virtual Matrix forward(const Matrix& x, int batch, bool training, LayerCtx* ctx,
                           Rng* rng) = 0;

    // Returns dL/dx and accumulates parameter gradients.
    virtual Matrix backward(const Matrix& dy, int batch, const LayerCtx& ctx) = 0;

    virtual void init(Rng& /*rng*/) {}
    virtual std::vector<Matrix*> params() { return {}; }
    virtual std::vector<Matrix*> grads() { return {}; }
    // Persistent non-trainable state (batch-norm running stats).
    virtual std::vector<Matrix*> buffers() { return {}; }

    // Input-space optimizations (mask reverse engineering, saliency) only
    // need gradients w.r.t. activations; skipping the parameter-gradient
    // GEMMs roughly halves their backward cost.
    virtual void set_param_grads(bool enabled) { param_grads_ = enabled; }

    void set_input_shape(const Shape& s) { in_shape_ = s; }
    const Shape& input_shape() const { return in_shape_; }

  protected:
    Shape in_shape_;
    bool param_grads_ = true;
};

class Conv2d : public Layer {
  public:
    // pad = k/2 gives "same" spatial dims at stride 1.
    Conv2d(int out_channels, int kernel, int stride, int pad);

    std::string type() const override { return "conv"; }
    Shape output_shape(const Shape& in) const override;
    Matrix forward(const Matrix& x, int batch, bool training, LayerCtx* ctx, Rng* rng) override;
    Matrix backward(const Matrix& dy, int batch, const LayerCtx& ctx) override;
    void init(Rng& rng) override;
    std::vector<Matrix*> params() override { return {&weight_, &bias_}; }
    std::vector<Matrix*> grads() override { return {&dweight_, &dbias_}; }

    Matrix& weight() { return weight_; }

  private:
    Matrix im2col(const Matrix& x, int batch) const;

    int out_channels_, kernel_, stride_, pad_;
    Matrix weight_, bias_;    // (Cout, Cin*k*k), (Cout, 1)
    Matrix dweight_, dbias_;
};

class Dense : public Layer {
  public:
    explicit Dense(int out_features) : out_features_(out_features) {}

    std::string type() const override { return "dense"; }
    Shape output_shape(const Shape&) const override { return {out_features_, 1, 1}; }
    Matrix forward(const Matrix& x, int batch, bool training, LayerCtx* ctx, Rng* rng) override;
    Matrix backward(const Matrix& dy, int batch, const LayerCtx& ctx) override;
    void init(Rng& rng) override;
    std::vector<Matrix*> params() override { return {&weight_, &bias_}; }
    std::vector<Matrix*> grads() override { return {&dweight_, &dbias_}; }

  private:
    int out_features_;
    Matrix weight_, bias_, dweight_, dbias_;
};

class ReLU : public Layer {
  public:
    std::string type() const override { return "relu"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Matrix forward(const Matrix& x, int batch, bool training, LayerCtx* ctx, Rng* rng) override;
    Matrix backward(const Matrix& dy, int batch, const LayerCtx& ctx) override;
};

class MaxPool2 : public Layer {
  public:
    std::string type() const override { return "maxpool"; }
    Shape output_shape(const Shape& in) const override { return {in.c, in.h / 2, in.w / 2}; }
    Matrix forward(const Matrix& x, int batch, bool training, LayerCtx* ctx, Rng* rng) override;
    Matrix backward(const Matrix& dy, int batch, const LayerCtx& ctx) override;
};

class Dropout : public Layer {
  public:
    explicit Dropout(float rate) : rate_(rate) {}

    std::string type() const override { return "dropout"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Matrix forward(const Matrix& x, int batch, bool training, LayerCtx* ctx, Rng* rng) override;
    Matrix backward(const Matrix& dy, int batch, const LayerCtx& ctx) override;

  private:
    float rate_;
};

class Flatten : public Layer {
  public:
    std::string type() const override { return "flatten"; }
    Shape output_shape(const Shape& in) const override { return {in.features(), 1, 1}; }
    Matrix forward(const Matrix& x, int batch, bool training, LayerCtx* ctx, Rng* rng) override;
    Matrix backward(const Matrix& dy, int batch, const LayerCtx& ctx) override;
};

class GlobalAvgPool : public Layer {
  public:
    std::string type() const override { return "gap"; }
    Shape output_shape(const Shape& in) const override { return {in.c, 1, 1}; }
    Matrix forward(const Matrix& x, int batch, bool training, LayerCtx* ctx, Rng* rng) override;
    Matrix backward(const Matrix& dy, int batch, const LayerCtx& ctx) override;
};

// Spatial batch norm over the (B*H*W) columns of each channel row.
class BatchNorm : public Layer {
  public:
    explicit BatchNorm(float momentum = 0.9f, float eps = 1e-5f)
        : momentum_(momentum), eps_(eps) {}

    std::string type() const override { return "batchnorm"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Matrix forward(const Matrix& x, int batch, bool training, LayerCtx* ctx, Rng* rng) override;
    Matrix backward(const Matrix& dy, int batch, const LayerCtx& ctx) override;
    void init(Rng& rng) override;
    std::vector<Matrix*> params() override { return {&gamma_, &beta_}; }
    std::vector<Matrix*> grads() override { return {&dgamma_, &dbeta_}; }
    std::vector<Matrix*> buffers() override { return {&running_mean_, &running_var_}; }

  private:
    float momentum_, eps_;
    Matrix gamma_, beta_, dgamma_, dbeta_;
    Matrix running_mean_, running_var_;
};

// Pre-activation residual unit in the classic basic-block form:
// relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x)). A strided block
// projects the shortcut with a 1x1 convolution.
class ResidualBlock : public Layer {
  public:
    ResidualBlock(int out_channels, int stride);

    std::string type() const override { return "residual"; }
    Shape output_shape(const Shape& in) const override;
    Matrix forward(const Matrix& x, int batch, bool training, LayerCtx* ctx, Rng* rng) override;
    Matrix backward(const Matrix& dy, int batch, const LayerCtx& ctx) override;
    void init(Rng& rng) override;
    std::vector<Matrix*> params() override;
    std::vector<Matrix*> grads() override;
    std::vector<Matrix*> buffers() override;
    void set_param_grads(bool enabled) override;

  private:
    int out_channels_, stride_;
    std::vector<std::unique_ptr<Layer>> body_;
    std::vector<std::unique_ptr<Layer>> shortcut_;
};

// Softmax + cross-entropy on logits (D x B). Returns mean loss and writes
// dL/dlogits (already averaged over the batch) when dlogits != nullptr.
float softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                            Matrix* dlogits, Matrix* probs_out = nullptr);

Matrix softmax_columns(const Matrix& logits);

}  // namespace ssbt::nn
