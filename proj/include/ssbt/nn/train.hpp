#pragma once

#include <cstdint>
#include <vector>

#include "ssbt/nn/model.hpp"
#include "ssbt/poison.hpp"

namespace ssbt::nn {

struct TrainConfig {
    int epochs = 5;
    int batch_size = 64;
    float learning_rate = 0.05f;
    float momentum = 0.9f;
    bool lr_step_decay = true;  // x0.1 at 50% and 75% of the epochs
    float contrastive_weight = 0.1f;  // gamma; 0 reduces Lc to Lp
    float contrastive_margin = 1.0f;
    uint64_t seed = 0;

    void validate() const;
};

enum class Objective { Lp, Lc };

struct TrainedModel {
    Model model;
    std::vector<float> epoch_losses;
};

// Plain supervised training: cross-entropy over all records.
TrainedModel train_clean(const LabeledDataset& train, const ModelSpec& model_spec,
                         const TrainConfig& config);

// Backdoor training over a crafted merged set. Lp is cross-entropy over all
// records with their assigned labels. Lc adds, per batch, a margin-based
// pairwise contrastive penalty on the penultimate embeddings of the records
// whose labels fall in the manifest's S u {T} population.
TrainedModel train_backdoor(const LabeledDataset& merged, const PoisonManifest& manifest,
                            const ModelSpec& model_spec, const TrainConfig& config,
                            Objective objective);

// Tunes the trailing `layers_to_tune` layers on a clean holdout; every other
// layer's parameters and buffers stay bit-identical. The frozen prefix runs
// in eval mode and its activations are computed once.
Model fine_tune(const Model& model, const LabeledDataset& holdout, int layers_to_tune,
                int epochs, const TrainConfig& config);

// Margin-based pairwise contrastive loss over embeddings (one column per
// sample): same-label pairs pulled together (squared distance), different
// labels pushed beyond the margin. Returns the mean pair loss; fills dembed
// when non-null.
float contrastive_loss(const Matrix& embeddings, const std::vector<int>& labels, float margin,
                       Matrix* dembed);

float accuracy(Model& model, const LabeledDataset& ds);

class Sgd {
  public:
    Sgd(std::vector<Matrix*> params, std::vector<Matrix*> grads, float learning_rate,
        float momentum);
    void set_learning_rate(float lr) { lr_ = lr; }
    void step();

  private:
    std::vector<Matrix*> params_, grads_;
    std::vector<Matrix> velocity_;
    float lr_, momentum_;
};

}  // namespace ssbt::nn
