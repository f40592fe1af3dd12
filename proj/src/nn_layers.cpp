#include "ssbt/nn/layers.hpp"

#include <cmath>

#include "ssbt/errors.hpp"

namespace ssbt::nn {

namespace {

Matrix he_normal(int rows, int cols, float fan_in, Rng& rng) {
    Matrix m(rows, cols);
    float scale = std::sqrt(2.0f / fan_in);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = scale * rng.next_normal();
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int out_channels, int kernel, int stride, int pad)
    : out_channels_(out_channels), kernel_(kernel), stride_(stride), pad_(pad) {}

Shape Conv2d::output_shape(const Shape& in) const {
    int ho = (in.h + 2 * pad_ - kernel_) / stride_ + 1;
    int wo = (in.w + 2 * pad_ - kernel_) / stride_ + 1;
    return {out_channels_, ho, wo};
}

void Conv2d::init(Rng& rng) {
    int fan_in = in_shape_.c * kernel_ * kernel_;
    weight_ = he_normal(out_channels_, fan_in, float(fan_in), rng);
    bias_ = Matrix::Zero(out_channels_, 1);
    dweight_ = Matrix::Zero(weight_.rows(), weight_.cols());
    dbias_ = Matrix::Zero(out_channels_, 1);
}

Matrix Conv2d::im2col(const Matrix& x, int batch) const {
    const int ci = in_shape_.c, h = in_shape_.h, w = in_shape_.w, k = kernel_;
    const Shape out = output_shape(in_shape_);
    Matrix col = Matrix::Zero(ci * k * k, size_t(batch) * out.h * out.w);
    for (int b = 0; b < batch; ++b) {
        for (int oy = 0; oy < out.h; ++oy) {
            int iy0 = oy * stride_ - pad_;
            for (int ox = 0; ox < out.w; ++ox) {
                int ix0 = ox * stride_ - pad_;
                Eigen::Index j = (Eigen::Index(b) * out.h + oy) * out.w + ox;
                for (int ky = 0; ky < k; ++ky) {
                    int iy = iy0 + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        int ix = ix0 + kx;
                        if (ix < 0 || ix >= w) continue;
                        Eigen::Index src = (Eigen::Index(b) * h + iy) * w + ix;
                        for (int c = 0; c < ci; ++c)
                            col((c * k + ky) * k + kx, j) = x(c, src);
                    }
                }
            }
        }
    }
    return col;
}

Matrix Conv2d::forward(const Matrix& x, int batch, bool /*training*/, LayerCtx* ctx, Rng*) {
    Matrix col = im2col(x, batch);
    Matrix y = weight_ * col;
    y.colwise() += bias_.col(0);
    if (ctx) ctx->m1 = std::move(col);
    return y;
}

Matrix Conv2d::backward(const Matrix& dy, int batch, const LayerCtx& ctx) {
    if (param_grads_) {
        dweight_.noalias() += dy * ctx.m1.transpose();
        dbias_.col(0).noalias() += dy.rowwise().sum();
    }

    Matrix dcol = weight_.transpose() * dy;

    // col2im: scatter-add the column gradients back onto the input map.
    const int ci = in_shape_.c, h = in_shape_.h, w = in_shape_.w, k = kernel_;
    const Shape out = output_shape(in_shape_);
    Matrix dx = Matrix::Zero(ci, size_t(batch) * h * w);
    for (int b = 0; b < batch; ++b) {
        for (int oy = 0; oy < out.h; ++oy) {
            int iy0 = oy * stride_ - pad_;
            for (int ox = 0; ox < out.w; ++ox) {
                int ix0 = ox * stride_ - pad_;
                Eigen::Index j = (Eigen::Index(b) * out.h + oy) * out.w + ox;
                for (int ky = 0; ky < k; ++ky) {
                    int iy = iy0 + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        int ix = ix0 + kx;
                        if (ix < 0 || ix >= w) continue;
                        Eigen::Index dst = (Eigen::Index(b) * h + iy) * w + ix;
                        for (int c = 0; c < ci; ++c)
                            dx(c, dst) += dcol((c * k + ky) * k + kx, j);
                    }
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Dense

void Dense::init(Rng& rng) {
    int fan_in = in_shape_.features();
    weight_ = he_normal(out_features_, fan_in, float(fan_in), rng);
    bias_ = Matrix::Zero(out_features_, 1);
    dweight_ = Matrix::Zero(weight_.rows(), weight_.cols());
    dbias_ = Matrix::Zero(out_features_, 1);
}

Matrix Dense::forward(const Matrix& x, int /*batch*/, bool, LayerCtx* ctx, Rng*) {
    Matrix y = weight_ * x;
    y.colwise() += bias_.col(0);
    if (ctx) ctx->m1 = x;
    return y;
}

Matrix Dense::backward(const Matrix& dy, int, const LayerCtx& ctx) {
    if (param_grads_) {
        dweight_.noalias() += dy * ctx.m1.transpose();
        dbias_.col(0).noalias() += dy.rowwise().sum();
    }
    return weight_.transpose() * dy;
}

// ---------------------------------------------------------------------------
// ReLU / MaxPool / Dropout

Matrix ReLU::forward(const Matrix& x, int, bool, LayerCtx* ctx, Rng*) {
    if (ctx) ctx->m1 = x;
    return x.cwiseMax(0.0f);
}

Matrix ReLU::backward(const Matrix& dy, int, const LayerCtx& ctx) {
    return (ctx.m1.array() > 0.0f).cast<float>().matrix().cwiseProduct(dy);
}

Matrix MaxPool2::forward(const Matrix& x, int batch, bool, LayerCtx* ctx, Rng*) {
    const int c = in_shape_.c, h = in_shape_.h, w = in_shape_.w;
    const int ho = h / 2, wo = w / 2;
    Matrix y(c, size_t(batch) * ho * wo);
    std::vector<int> argmax(size_t(c) * batch * ho * wo);
    for (int b = 0; b < batch; ++b)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                Eigen::Index j = (Eigen::Index(b) * ho + oy) * wo + ox;
                for (int ci = 0; ci < c; ++ci) {
                    float best = -1e30f;
                    int best_src = 0;
                    for (int dy2 = 0; dy2 < 2; ++dy2)
                        for (int dx2 = 0; dx2 < 2; ++dx2) {
                            int iy = oy * 2 + dy2, ix = ox * 2 + dx2;
                            Eigen::Index src = (Eigen::Index(b) * h + iy) * w + ix;
                            float v = x(ci, src);
                            if (v > best) {
                                best = v;
                                best_src = int(src);
                            }
                        }
                    y(ci, j) = best;
                    argmax[size_t(ci) * (size_t(batch) * ho * wo) + j] = best_src;
                }
            }
    if (ctx) {
        ctx->idx = std::move(argmax);
    }
    return y;
}

Matrix MaxPool2::backward(const Matrix& dy, int batch, const LayerCtx& ctx) {
    const int c = in_shape_.c, h = in_shape_.h, w = in_shape_.w;
    const int ho = h / 2, wo = w / 2;
    Matrix dx = Matrix::Zero(c, size_t(batch) * h * w);
    size_t cols = size_t(batch) * ho * wo;
    for (int ci = 0; ci < c; ++ci)
        for (size_t j = 0; j < cols; ++j)
            dx(ci, ctx.idx[size_t(ci) * cols + j]) += dy(ci, Eigen::Index(j));
    return dx;
}

Matrix Dropout::forward(const Matrix& x, int, bool training, LayerCtx* ctx, Rng* rng) {
    if (!training || rate_ <= 0.0f) {
        if (ctx) ctx->m1 = Matrix();
        return x;
    }
    if (!rng) throw TrainingError("Dropout: training forward requires an RNG");
    float keep = 1.0f - rate_;
    Matrix mask(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            mask(i, j) = rng->next_float() < keep ? 1.0f / keep : 0.0f;
    if (ctx) ctx->m1 = mask;
    return x.cwiseProduct(mask);
}

Matrix Dropout::backward(const Matrix& dy, int, const LayerCtx& ctx) {
    if (ctx.m1.size() == 0) return dy;
    return dy.cwiseProduct(ctx.m1);
}

// ---------------------------------------------------------------------------
// Flatten / GlobalAvgPool

Matrix Flatten::forward(const Matrix& x, int batch, bool, LayerCtx*, Rng*) {
    const int c = in_shape_.c, hw = in_shape_.h * in_shape_.w;
    Matrix y(c * hw, batch);
    for (int b = 0; b < batch; ++b)
        for (int ci = 0; ci < c; ++ci)
            for (int p = 0; p < hw; ++p) y(ci * hw + p, b) = x(ci, Eigen::Index(b) * hw + p);
    return y;
}

Matrix Flatten::backward(const Matrix& dy, int batch, const LayerCtx&) {
    const int c = in_shape_.c, hw = in_shape_.h * in_shape_.w;
    Matrix dx(c, Eigen::Index(batch) * hw);
    for (int b = 0; b < batch; ++b)
        for (int ci = 0; ci < c; ++ci)
            for (int p = 0; p < hw; ++p) dx(ci, Eigen::Index(b) * hw + p) = dy(ci * hw + p, b);
    return dx;
}

Matrix GlobalAvgPool::forward(const Matrix& x, int batch, bool, LayerCtx*, Rng*) {
    const int hw = in_shape_.h * in_shape_.w;
    Matrix y(in_shape_.c, batch);
    for (int b = 0; b < batch; ++b)
        y.col(b) = x.middleCols(Eigen::Index(b) * hw, hw).rowwise().mean();
    return y;
}

Matrix GlobalAvgPool::backward(const Matrix& dy, int batch, const LayerCtx&) {
    const int hw = in_shape_.h * in_shape_.w;
    Matrix dx(in_shape_.c, Eigen::Index(batch) * hw);
    for (int b = 0; b < batch; ++b)
        for (int p = 0; p < hw; ++p) dx.col(Eigen::Index(b) * hw + p) = dy.col(b) / float(hw);
    return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm

void BatchNorm::init(Rng&) {
    int c = in_shape_.c;
    gamma_ = Matrix::Ones(c, 1);
    beta_ = Matrix::Zero(c, 1);
    dgamma_ = Matrix::Zero(c, 1);
    dbeta_ = Matrix::Zero(c, 1);
    running_mean_ = Matrix::Zero(c, 1);
    running_var_ = Matrix::Ones(c, 1);
}

Matrix BatchNorm::forward(const Matrix& x, int, bool training, LayerCtx* ctx, Rng*) {
    const int c = in_shape_.c;
    const auto n = float(x.cols());
    Matrix y(x.rows(), x.cols());
    if (training) {
        Matrix mean = x.rowwise().mean();
        Matrix var(c, 1);
        for (int i = 0; i < c; ++i) {
            float m = mean(i, 0);
            var(i, 0) = (x.row(i).array() - m).square().sum() / n;
        }
        Matrix xhat(x.rows(), x.cols());
        for (int i = 0; i < c; ++i) {
            float inv = 1.0f / std::sqrt(var(i, 0) + eps_);
            xhat.row(i) = (x.row(i).array() - mean(i, 0)) * inv;
            y.row(i) = xhat.row(i).array() * gamma_(i, 0) + beta_(i, 0);
        }
        running_mean_ = momentum_ * running_mean_ + (1.0f - momentum_) * mean;
        running_var_ = momentum_ * running_var_ + (1.0f - momentum_) * var;
        if (ctx) {
            ctx->m1 = std::move(xhat);
            ctx->m2 = std::move(var);
        }
    } else {
        for (int i = 0; i < c; ++i) {
            float inv = 1.0f / std::sqrt(running_var_(i, 0) + eps_);
            y.row(i) = ((x.row(i).array() - running_mean_(i, 0)) * inv) * gamma_(i, 0) +
                       beta_(i, 0);
        }
        if (ctx) ctx->m2 = x;  // m1 left empty marks an eval-mode trace
    }
    return y;
}

Matrix BatchNorm::backward(const Matrix& dy, int, const LayerCtx& ctx) {
    const int c = in_shape_.c;
    const auto n = float(dy.cols());
    if (ctx.m1.size() == 0) {
        // Eval-mode trace: running statistics are constants, so the map is
        // a fixed affine transform per channel.
        Matrix dx(dy.rows(), dy.cols());
        for (int i = 0; i < c; ++i) {
            float inv = 1.0f / std::sqrt(running_var_(i, 0) + eps_);
            dx.row(i) = dy.row(i) * (gamma_(i, 0) * inv);
            if (param_grads_ && ctx.m2.size() > 0) {
                dgamma_(i, 0) +=
                    dy.row(i)
                        .cwiseProduct(((ctx.m2.row(i).array() - running_mean_(i, 0)) * inv)
                                          .matrix())
                        .sum();
                dbeta_(i, 0) += dy.row(i).sum();
            }
        }
        return dx;
    }
    const Matrix& xhat = ctx.m1;
    Matrix dx(dy.rows(), dy.cols());
    for (int i = 0; i < c; ++i) {
        float sum_dy = dy.row(i).sum();
        float sum_dy_xhat = dy.row(i).cwiseProduct(xhat.row(i)).sum();
        if (param_grads_) {
            dgamma_(i, 0) += sum_dy_xhat;
            dbeta_(i, 0) += sum_dy;
        }
        float inv = 1.0f / std::sqrt(ctx.m2(i, 0) + eps_);
        dx.row(i) = (gamma_(i, 0) * inv) *
                    (dy.row(i).array() - sum_dy / n - xhat.row(i).array() * (sum_dy_xhat / n));
    }
    return dx;
}

// ---------------------------------------------------------------------------
// ResidualBlock

ResidualBlock::ResidualBlock(int out_channels, int stride)
    : out_channels_(out_channels), stride_(stride) {
    body_.push_back(std::make_unique<Conv2d>(out_channels, 3, stride, 1));
    body_.push_back(std::make_unique<BatchNorm>());
    body_.push_back(std::make_unique<ReLU>());
    body_.push_back(std::make_unique<Conv2d>(out_channels, 3, 1, 1));
    body_.push_back(std::make_unique<BatchNorm>());
}

Shape ResidualBlock::output_shape(const Shape& in) const {
    // Matches the first (possibly strided) 3x3 same-padded convolution.
    int ho = (in.h + 2 - 3) / stride_ + 1;
    int wo = (in.w + 2 - 3) / stride_ + 1;
    return {out_channels_, ho, wo};
}

void ResidualBlock::init(Rng& rng) {
    Shape s = in_shape_;
    for (auto& l : body_) {
        l->set_input_shape(s);
        l->init(rng);
        s = l->output_shape(s);
    }
    if (stride_ != 1 || in_shape_.c != out_channels_) {
        shortcut_.push_back(std::make_unique<Conv2d>(out_channels_, 1, stride_, 0));
        shortcut_.push_back(std::make_unique<BatchNorm>());
        Shape sc = in_shape_;
        for (auto& l : shortcut_) {
            l->set_input_shape(sc);
            l->init(rng);
            sc = l->output_shape(sc);
        }
    }
}

Matrix ResidualBlock::forward(const Matrix& x, int batch, bool training, LayerCtx* ctx, Rng* rng) {
    if (ctx) ctx->sub.resize(body_.size() + shortcut_.size());
    Matrix h = x;
    for (size_t i = 0; i < body_.size(); ++i)
        h = body_[i]->forward(h, batch, training, ctx ? &ctx->sub[i] : nullptr, rng);
    Matrix s;
    if (shortcut_.empty()) {
        s = x;
    } else {
        s = x;
        for (size_t i = 0; i < shortcut_.size(); ++i)
            s = shortcut_[i]->forward(s, batch, training,
                                      ctx ? &ctx->sub[body_.size() + i] : nullptr, rng);
    }
    Matrix sum = h + s;
    if (ctx) ctx->m1 = sum;
    return sum.cwiseMax(0.0f);
}

Matrix ResidualBlock::backward(const Matrix& dy, int batch, const LayerCtx& ctx) {
    Matrix dsum = (ctx.m1.array() > 0.0f).cast<float>().matrix().cwiseProduct(dy);
    Matrix dh = dsum;
    for (size_t i = body_.size(); i-- > 0;) dh = body_[i]->backward(dh, batch, ctx.sub[i]);
    Matrix ds = dsum;
    if (!shortcut_.empty()) {
        for (size_t i = shortcut_.size(); i-- > 0;)
            ds = shortcut_[i]->backward(ds, batch, ctx.sub[body_.size() + i]);
    }
    return dh + ds;
}

std::vector<Matrix*> ResidualBlock::params() {
    std::vector<Matrix*> out;
    for (auto& l : body_)
        for (auto* p : l->params()) out.push_back(p);
    for (auto& l : shortcut_)
        for (auto* p : l->params()) out.push_back(p);
    return out;
}

std::vector<Matrix*> ResidualBlock::grads() {
    std::vector<Matrix*> out;
    for (auto& l : body_)
        for (auto* g : l->grads()) out.push_back(g);
    for (auto& l : shortcut_)
        for (auto* g : l->grads()) out.push_back(g);
    return out;
}

void ResidualBlock::set_param_grads(bool enabled) {
    param_grads_ = enabled;
    for (auto& l : body_) l->set_param_grads(enabled);
    for (auto& l : shortcut_) l->set_param_grads(enabled);
}

std::vector<Matrix*> ResidualBlock::buffers() {
    std::vector<Matrix*> out;
    for (auto& l : body_)
        for (auto* b : l->buffers()) out.push_back(b);
    for (auto& l : shortcut_)
        for (auto* b : l->buffers()) out.push_back(b);
    return out;
}

// ---------------------------------------------------------------------------
// Loss

Matrix softmax_columns(const Matrix& logits) {
    Matrix probs(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        float mx = logits.col(j).maxCoeff();
        Eigen::ArrayXf e = (logits.col(j).array() - mx).exp();
        probs.col(j) = (e / e.sum()).matrix();
    }
    return probs;
}

float softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* dlogits,
                            Matrix* probs_out) {
    if (labels.size() != size_t(logits.cols()))
        throw TrainingError("softmax_cross_entropy: label/batch mismatch");
    Matrix probs = softmax_columns(logits);
    const auto n = float(logits.cols());
    float loss = 0.0f;
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
        loss -= std::log(std::max(probs(labels[j], j), 1e-12f));
    loss /= n;
    if (dlogits) {
        *dlogits = probs;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) (*dlogits)(labels[j], j) -= 1.0f;
        *dlogits /= n;
    }
    if (probs_out) *probs_out = std::move(probs);
    return loss;
}

}  // namespace ssbt::nn
