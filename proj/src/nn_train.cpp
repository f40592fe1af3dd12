#include "ssbt/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssbt/errors.hpp"

namespace ssbt::nn {

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (learning_rate <= 0.0f) throw ConfigError("TrainConfig: learning_rate must be > 0");
    if (momentum < 0.0f || momentum >= 1.0f) throw ConfigError("TrainConfig: momentum in [0,1)");
    if (contrastive_weight < 0.0f) throw ConfigError("TrainConfig: contrastive weight must be >= 0");
    if (contrastive_margin <= 0.0f) throw ConfigError("TrainConfig: margin must be > 0");
}

Sgd::Sgd(std::vector<Matrix*> params, std::vector<Matrix*> grads, float learning_rate,
         float momentum)
    : params_(std::move(params)), grads_(std::move(grads)), lr_(learning_rate),
      momentum_(momentum) {
    if (params_.size() != grads_.size()) throw TrainingError("Sgd: param/grad arity mismatch");
    velocity_.reserve(params_.size());
    for (auto* p : params_) velocity_.emplace_back(Matrix::Zero(p->rows(), p->cols()));
}

void Sgd::step() {
    for (size_t i = 0; i < params_.size(); ++i) {
        velocity_[i] = momentum_ * velocity_[i] - lr_ * (*grads_[i]);
        *params_[i] += velocity_[i];
    }
}

float contrastive_loss(const Matrix& embeddings, const std::vector<int>& labels, float margin,
                       Matrix* dembed) {
    const auto n = Eigen::Index(labels.size());
    if (embeddings.cols() != n) throw TrainingError("contrastive_loss: label/column mismatch");
    if (n < 2) {
        if (dembed) *dembed = Matrix::Zero(embeddings.rows(), embeddings.cols());
        return 0.0f;
    }
    const float pairs = float(n) * float(n - 1) / 2.0f;
    float loss = 0.0f;
    if (dembed) *dembed = Matrix::Zero(embeddings.rows(), embeddings.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            Eigen::VectorXf diff = embeddings.col(i) - embeddings.col(j);
            float d2 = diff.squaredNorm();
            float d = std::sqrt(d2);
            if (labels[size_t(i)] == labels[size_t(j)]) {
                loss += d2;
                if (dembed) {
                    dembed->col(i) += (2.0f / pairs) * diff;
                    dembed->col(j) -= (2.0f / pairs) * diff;
                }
            } else if (d < margin) {
                float gap = margin - d;
                loss += gap * gap;
                if (dembed && d > 1e-8f) {
                    Eigen::VectorXf g = (-2.0f * gap / d / pairs) * diff;
                    dembed->col(i) += g;
                    dembed->col(j) -= g;
                }
            }
        }
    }
    return loss / pairs;
}

float accuracy(Model& model, const LabeledDataset& ds) {
    auto predicted = model.predict_labels(ds);
    size_t hits = 0;
    for (size_t i = 0; i < ds.size(); ++i)
        if (predicted[i] == ds.label(i)) hits++;
    return ds.size() ? float(hits) / float(ds.size()) : 0.0f;
}

namespace {

// Core minibatch SGD loop shared by every training entry point.
// contrast_classes non-empty selects the Lc objective.
TrainedModel train_loop(const LabeledDataset& data, Model model, const TrainConfig& config,
                        const std::vector<int>& contrast_classes) {
    config.validate();
    TrainedModel result{std::move(model), {}};
    Model& net = result.model;

    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), size_t(0));

    Sgd opt(net.params(), net.grads(), config.learning_rate, config.momentum);
    Rng dropout_rng(derive_seed(config.seed, "train.dropout"));

    const bool contrastive = !contrast_classes.empty() && config.contrastive_weight > 0.0f;
    bool saw_contrast_pair = false;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        float lr = config.learning_rate;
        if (config.lr_step_decay) {
            if (epoch >= config.epochs * 3 / 4)
                lr *= 0.01f;
            else if (epoch >= config.epochs / 2)
                lr *= 0.1f;
        }
        opt.set_learning_rate(lr);

        Rng shuffle_rng(derive_seed(config.seed, "train.shuffle", uint64_t(epoch)));
        shuffle(order, shuffle_rng);

        double epoch_loss = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += size_t(config.batch_size)) {
            size_t bn = std::min(size_t(config.batch_size), order.size() - start);
            std::vector<size_t> batch(order.begin() + long(start),
                                      order.begin() + long(start + bn));
            std::vector<int> labels(bn);
            for (size_t k = 0; k < bn; ++k) labels[k] = data.label(batch[k]);

            Trace trace;
            Matrix logits =
                net.forward(pack_batch(data, batch), int(bn), true, &trace, &dropout_rng);
            Matrix dlogits;
            float loss = softmax_cross_entropy(logits, labels, &dlogits);

            Matrix dembed;
            const Matrix* inject = nullptr;
            if (contrastive) {
                std::vector<Eigen::Index> sel;
                for (size_t k = 0; k < bn; ++k)
                    if (std::find(contrast_classes.begin(), contrast_classes.end(), labels[k]) !=
                        contrast_classes.end())
                        sel.push_back(Eigen::Index(k));
                if (sel.size() >= 2) {
                    saw_contrast_pair = true;
                    // Embeddings of the S u {T} sub-batch, re-read from the
                    // forward trace at the embedding boundary.
                    const int eb = net.embedding_boundary();
                    // Recompute boundary activation from the trace-free path:
                    // layer eb's ctx holds its input (dense keeps m1 = x).
                    const Matrix& embed_all = trace.ctx[size_t(eb)].m1;
                    Matrix sub(embed_all.rows(), Eigen::Index(sel.size()));
                    std::vector<int> sub_labels(sel.size());
                    for (size_t k = 0; k < sel.size(); ++k) {
                        sub.col(Eigen::Index(k)) = embed_all.col(sel[k]);
                        sub_labels[k] = labels[size_t(sel[k])];
                    }
                    Matrix dsub;
                    float sim = contrastive_loss(sub, sub_labels, config.contrastive_margin,
                                                 &dsub);
                    loss += config.contrastive_weight * sim;
                    dembed = Matrix::Zero(embed_all.rows(), embed_all.cols());
                    for (size_t k = 0; k < sel.size(); ++k)
                        dembed.col(sel[k]) = config.contrastive_weight * dsub.col(Eigen::Index(k));
                    inject = &dembed;
                }
            }

            if (!std::isfinite(loss))
                throw TrainingError("training diverged (non-finite loss) at epoch " +
                                    std::to_string(epoch));

            net.zero_grads();
            net.backward(trace, dlogits, 0, inject, inject ? net.embedding_boundary() : -1);
            opt.step();
            epoch_loss += loss;
            batches++;
        }
        result.epoch_losses.push_back(batches ? float(epoch_loss / double(batches)) : 0.0f);
    }

    if (contrastive && config.epochs > 0 && !saw_contrast_pair)
        throw ConfigError("train_backdoor: no batch ever contained two S u {T} samples");
    return result;
}

}  // namespace

TrainedModel train_clean(const LabeledDataset& train, const ModelSpec& model_spec,
                         const TrainConfig& config) {
    if (train.height() != model_spec.height || train.width() != model_spec.width ||
        train.channels() != model_spec.channels)
        throw ConfigError("train_clean: dataset shape does not match model spec");
    Model model = Model::build(model_spec, derive_seed(config.seed, "model"));
    return train_loop(train, std::move(model), config, {});
}

TrainedModel train_backdoor(const LabeledDataset& merged, const PoisonManifest& manifest,
                            const ModelSpec& model_spec, const TrainConfig& config,
                            Objective objective) {
    if (manifest.records.size() != merged.size())
        throw ConfigError("train_backdoor: manifest does not align with the merged dataset");
    Model model = Model::build(model_spec, derive_seed(config.seed, "model"));
    std::vector<int> contrast;
    if (objective == Objective::Lc) {
        contrast = manifest.contrast_classes;
        if (contrast.empty())
            throw ConfigError("train_backdoor: Lc objective with an empty S u {T} set");
    }
    return train_loop(merged, std::move(model), config, contrast);
}

Model fine_tune(const Model& model, const LabeledDataset& holdout, int layers_to_tune,
                int epochs, const TrainConfig& config) {
    auto& self = const_cast<Model&>(model);
    if (layers_to_tune < 1 || layers_to_tune > self.num_layers())
        throw ConfigError("fine_tune: layers_to_tune exceeds model depth");
    Model tuned = model.clone();
    if (epochs == 0) return tuned;

    const int from = tuned.num_layers() - layers_to_tune;

    // Frozen prefix runs once in eval mode; the tail trains on cached
    // activations.
    const Shape cut = tuned.boundary_shape(from);
    const int hw = cut.h * cut.w;
    std::vector<Matrix> cached(holdout.size());
    {
        const size_t chunk = 256;
        std::vector<size_t> idx;
        for (size_t start = 0; start < holdout.size(); start += chunk) {
            size_t n = std::min(chunk, holdout.size() - start);
            idx.resize(n);
            std::iota(idx.begin(), idx.end(), start);
            Matrix acts = tuned.forward_range(pack_batch(holdout, idx), int(n), 0, from, false);
            for (size_t k = 0; k < n; ++k)
                cached[start + k] = acts.middleCols(Eigen::Index(k) * hw, hw);
        }
    }

    TrainConfig cfg = config;
    cfg.epochs = epochs;
    cfg.validate();
    Sgd opt(tuned.params_from(from), tuned.grads_from(from), cfg.learning_rate, cfg.momentum);
    Rng dropout_rng(derive_seed(cfg.seed, "finetune.dropout"));

    std::vector<size_t> order(holdout.size());
    std::iota(order.begin(), order.end(), size_t(0));

    for (int epoch = 0; epoch < epochs; ++epoch) {
        float lr = cfg.learning_rate;
        if (cfg.lr_step_decay) {
            if (epoch >= epochs * 3 / 4)
                lr *= 0.01f;
            else if (epoch >= epochs / 2)
                lr *= 0.1f;
        }
        opt.set_learning_rate(lr);
        Rng shuffle_rng(derive_seed(cfg.seed, "finetune.shuffle", uint64_t(epoch)));
        shuffle(order, shuffle_rng);

        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            size_t bn = std::min(size_t(cfg.batch_size), order.size() - start);
            Matrix x(cut.c, Eigen::Index(bn) * hw);
            std::vector<int> labels(bn);
            for (size_t k = 0; k < bn; ++k) {
                x.middleCols(Eigen::Index(k) * hw, hw) = cached[order[start + k]];
                labels[k] = holdout.label(order[start + k]);
            }
            Trace trace;
            Matrix logits = tuned.forward_range(x, int(bn), from, tuned.num_layers(), true,
                                                &trace, &dropout_rng);
            Matrix dlogits;
            float loss = softmax_cross_entropy(logits, labels, &dlogits);
            if (!std::isfinite(loss))
                throw TrainingError("fine_tune diverged at epoch " + std::to_string(epoch));
            for (auto* g : tuned.grads_from(from)) g->setZero();
            tuned.backward(trace, dlogits, from);
            opt.step();
        }
    }
    return tuned;
}

}  // namespace ssbt::nn
