#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ssbt/dataset.hpp"
#include "ssbt/nn/layers.hpp"

namespace ssbt::nn {

// Architecture ids:
//   mlp        flatten + dense(64) + relu + dense(M); tiny tasks and tests
//   mnist_cnn  2 conv + 2 dense with two 2x2 max-pools
//   cifar_cnn  8 conv + 3 pool + 3 dropout + 1 flatten + 2 dense (VGG-style)
//   resnet20   3 stages x 3 residual blocks (16/32/64) + global avg pool
// width_mult scales every channel/feature count; 1.0 is the full-size model.
struct ModelSpec {
    std::string arch = "mlp";
    int height = 0;
    int width = 0;
    int channels = 0;
    int num_classes = 0;
    float width_mult = 1.0f;

    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

struct Trace {
    std::vector<LayerCtx> ctx;
    std::vector<Matrix> boundary_acts;  // filled when keep_acts is set
    bool keep_acts = false;
    int batch = 0;
    int from = 0;
    int to = 0;
};

// Packs dataset samples into the (C) x (B*H*W) input layout.
Matrix pack_batch(const LabeledDataset& ds, const std::vector<size_t>& indices);
Matrix pack_batch(const std::vector<const ImageTensor*>& images);
Matrix pack_batch(const ImageTensor& image);

class Model {
  public:
    static Model build(const ModelSpec& spec, uint64_t seed);

    const ModelSpec& spec() const { return spec_; }
    int num_layers() const { return int(layers_.size()); }
    const Layer& layer(int i) const { return *layers_[i]; }
    Layer& layer(int i) { return *layers_[i]; }
    Shape boundary_shape(int boundary) const { return shapes_[boundary]; }

    // Boundary b is the tensor between layer b-1 and layer b; boundary 0 is
    // the model input and boundary num_layers() the logits.
    Matrix forward(const Matrix& x, int batch, bool training, Trace* trace = nullptr,
                   Rng* rng = nullptr);
    Matrix forward_range(const Matrix& x, int batch, int from, int to, bool training,
                         Trace* trace = nullptr, Rng* rng = nullptr);

    // Walks gradients from the top of `trace` down to `stop_boundary` and
    // returns the gradient there. Parameter gradients accumulate on the way.
    // When inject_boundary >= 0, `inject` is added to the gradient crossing
    // that boundary (used for auxiliary losses on embeddings).
    Matrix backward(Trace& trace, const Matrix& dtop, int stop_boundary = 0,
                    const Matrix* inject = nullptr, int inject_boundary = -1);

    // Class probabilities, one row per image, rows sum to 1.
    Matrix predict_probs(const std::vector<const ImageTensor*>& images);
    Matrix predict_probs(const LabeledDataset& ds);
    std::vector<int> predict_labels(const LabeledDataset& ds);

    // Penultimate representation (input of the final dense layer), one row
    // per image.
    Matrix embed(const std::vector<const ImageTensor*>& images);
    int embedding_boundary() const { return embedding_boundary_; }
    // Last spatial activation (input of the first flatten/gap layer).
    int conv_map_boundary() const { return conv_map_boundary_; }

    std::vector<Matrix*> params();
    std::vector<Matrix*> grads();
    std::vector<Matrix*> buffers();
    void zero_grads();
    void set_param_grads(bool enabled);

    // Params/grads of layers with index >= from_layer only.
    std::vector<Matrix*> params_from(int from_layer);
    std::vector<Matrix*> grads_from(int from_layer);

    uint64_t checksum(int from_layer, int to_layer) const;  // params + buffers
    Model clone() const;

    void save(const std::string& path, const std::string& meta_json = "{}") const;
    static Model load(const std::string& path, std::string* meta_json = nullptr);

  private:
    ModelSpec spec_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<Shape> shapes_;  // boundary shapes, size num_layers()+1
    int embedding_boundary_ = 0;
    int conv_map_boundary_ = 0;

    void finalize(uint64_t seed);
};

}  // namespace ssbt::nn
