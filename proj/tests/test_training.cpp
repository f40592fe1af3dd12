#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "ssbt/nn/train.hpp"
#include "ssbt/poison.hpp"
#include "ssbt/synth.hpp"

using namespace ssbt;
using nn::Matrix;

namespace {

// Central-difference gradient check of dL/dinput and sampled dL/dparam
// entries for one architecture.
void gradcheck_model(const nn::ModelSpec& spec, bool training_mode, uint64_t seed) {
    auto ds = make_blobs_task(5, spec.num_classes, spec.height, spec.width, spec.channels, seed);
    std::vector<size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), size_t(0));
    Matrix x0 = nn::pack_batch(ds, idx);
    std::vector<int> labels(ds.size());
    for (size_t i = 0; i < ds.size(); ++i) labels[i] = ds.label(i);

    nn::Model model = nn::Model::build(spec, seed);
    const int batch = int(ds.size());

    auto loss_at = [&](const Matrix& x) {
        Matrix logits = model.forward(x, batch, training_mode);
        return nn::softmax_cross_entropy(logits, labels, nullptr);
    };

    nn::Trace trace;
    Matrix logits = model.forward(x0, batch, training_mode, &trace);
    Matrix dlogits;
    nn::softmax_cross_entropy(logits, labels, &dlogits);
    model.zero_grads();
    Matrix dinput = model.backward(trace, dlogits);

    const float h = 5e-3f;
    Rng pick(seed ^ 0x5555);
    int checked = 0;
    while (checked < 25) {
        Eigen::Index r = Eigen::Index(pick.next_below(uint64_t(x0.rows())));
        Eigen::Index c = Eigen::Index(pick.next_below(uint64_t(x0.cols())));
        Matrix xp = x0, xm = x0;
        xp(r, c) += h;
        xm(r, c) -= h;
        float numeric = (loss_at(xp) - loss_at(xm)) / (2.0f * h);
        float analytic = dinput(r, c);
        CHECK(std::fabs(numeric - analytic) <
              5e-3f + 2e-2f * std::max(std::fabs(numeric), std::fabs(analytic)));
        checked++;
    }

    // Sampled parameter gradients.
    auto params = model.params();
    auto grads = model.grads();
    for (size_t p = 0; p < params.size(); p += std::max<size_t>(1, params.size() / 6)) {
        Matrix* w = params[p];
        if (w->size() == 0) continue;
        Eigen::Index r = Eigen::Index(pick.next_below(uint64_t(w->rows())));
        Eigen::Index c = Eigen::Index(pick.next_below(uint64_t(w->cols())));
        float orig = (*w)(r, c);
        (*w)(r, c) = orig + h;
        float lp = loss_at(x0);
        (*w)(r, c) = orig - h;
        float lm = loss_at(x0);
        (*w)(r, c) = orig;
        float numeric = (lp - lm) / (2.0f * h);
        float analytic = (*grads[p])(r, c);
        CHECK(std::fabs(numeric - analytic) <
              5e-3f + 2e-2f * std::max(std::fabs(numeric), std::fabs(analytic)));
    }
}

}  // namespace

TEST_CASE("gradient check: mlp") { gradcheck_model({"mlp", 8, 8, 1, 3, 1.0f}, false, 11); }

TEST_CASE("gradient check: mnist_cnn") {
    gradcheck_model({"mnist_cnn", 12, 12, 1, 4, 0.25f}, false, 12);
}

TEST_CASE("gradient check: cifar_cnn") {
    gradcheck_model({"cifar_cnn", 16, 16, 3, 4, 0.125f}, false, 13);
}

TEST_CASE("gradient check: resnet20 (batch-norm training mode)") {
    gradcheck_model({"resnet20", 16, 16, 3, 4, 0.25f}, true, 14);
}

TEST_CASE("gradient check: resnet20 eval-mode trace (running stats)") {
    gradcheck_model({"resnet20", 16, 16, 3, 4, 0.25f}, false, 15);
}

TEST_CASE("predict rows are probability distributions") {
    auto ds = make_blobs_task(50, 4, 10, 10, 1, 3);
    nn::Model model = nn::Model::build({"mnist_cnn", 10, 10, 1, 4, 0.25f}, 5);
    Matrix probs = model.predict_probs(ds);
    REQUIRE(probs.rows() == 50);
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        CHECK(probs.row(i).minCoeff() >= 0.0f);
        CHECK(std::fabs(probs.row(i).sum() - 1.0f) < 1e-6f);
    }
}

TEST_CASE("zero-epoch training returns an untrained near-uniform model") {
    auto train = make_blobs_task(200, 4, 10, 10, 1, 21);
    auto test = make_blobs_task(400, 4, 10, 10, 1, 22);
    nn::TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 9;
    auto result = nn::train_clean(train, {"mlp", 10, 10, 1, 4, 1.0f}, cfg);
    CHECK(result.epoch_losses.empty());
    float acc = nn::accuracy(result.model, test);
    CHECK(acc > 0.05f);
    CHECK(acc < 0.60f);  // far from a trained model on a 4-class task
}

TEST_CASE("training loss decreases and the blobs task is learned") {
    auto train = make_blobs_task(600, 4, 10, 10, 1, 31);
    auto test = make_blobs_task(300, 4, 10, 10, 1, 32);
    nn::TrainConfig cfg;
    cfg.epochs = 4;
    cfg.learning_rate = 0.05f;
    cfg.seed = 1;
    auto result = nn::train_clean(train, {"mnist_cnn", 10, 10, 1, 4, 0.25f}, cfg);
    REQUIRE(result.epoch_losses.size() == 4);
    CHECK(result.epoch_losses.back() < result.epoch_losses.front());
    CHECK(nn::accuracy(result.model, test) > 0.9f);
}

TEST_CASE("training is deterministic: same seed, same metrics") {
    auto train = make_blobs_task(300, 3, 10, 10, 1, 41);
    auto test = make_blobs_task(200, 3, 10, 10, 1, 42);
    nn::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 77;
    auto a = nn::train_clean(train, {"mnist_cnn", 10, 10, 1, 3, 0.25f}, cfg);
    auto b = nn::train_clean(train, {"mnist_cnn", 10, 10, 1, 3, 0.25f}, cfg);
    CHECK(a.epoch_losses == b.epoch_losses);
    float acc_a = nn::accuracy(a.model, test);
    float acc_b = nn::accuracy(b.model, test);
    CHECK(std::round(acc_a * 10000.0f) == std::round(acc_b * 10000.0f));
}

TEST_CASE("divergent training reports the epoch") {
    auto train = make_blobs_task(200, 3, 10, 10, 1, 51);
    nn::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 1e6f;
    cfg.momentum = 0.95f;
    cfg.seed = 2;
    CHECK_THROWS_AS(nn::train_clean(train, {"mlp", 10, 10, 1, 3, 1.0f}, cfg), TrainingError);
}

TEST_CASE("gamma=0 makes the Lc loss trace identical to Lp") {
    auto data = make_blobs_task(400, 4, 10, 10, 1, 61);
    AttackSpec spec;
    spec.kind = AttackKind::baseline;
    spec.partition = {{0}, 3};
    spec.seed = 5;
    auto crafted = craft(data, spec);

    nn::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 3;
    cfg.contrastive_weight = 0.0f;
    auto lc = nn::train_backdoor(crafted.merged, crafted.manifest,
                                 {"mnist_cnn", 10, 10, 1, 4, 0.25f}, cfg, nn::Objective::Lc);
    auto lp = nn::train_backdoor(crafted.merged, crafted.manifest,
                                 {"mnist_cnn", 10, 10, 1, 4, 0.25f}, cfg, nn::Objective::Lp);
    CHECK(lc.epoch_losses == lp.epoch_losses);
}

TEST_CASE("contrastive gradient matches central finite differences") {
    // 4-sample toy batch, 3-dim embeddings.
    Matrix e(3, 4);
    e << 0.2f, 1.1f, -0.4f, 0.9f,
         -0.7f, 0.3f, 0.8f, -0.2f,
         0.5f, -0.6f, 0.1f, 1.3f;
    std::vector<int> labels = {0, 1, 0, 1};
    const float margin = 1.0f;

    Matrix grad;
    nn::contrastive_loss(e, labels, margin, &grad);

    const float h = 1e-3f;
    float max_rel = 0.0f;
    for (Eigen::Index r = 0; r < e.rows(); ++r)
        for (Eigen::Index c = 0; c < e.cols(); ++c) {
            Matrix ep = e, em = e;
            ep(r, c) += h;
            em(r, c) -= h;
            float numeric = (nn::contrastive_loss(ep, labels, margin, nullptr) -
                             nn::contrastive_loss(em, labels, margin, nullptr)) /
                            (2.0f * h);
            float denom = std::max({1e-6f, std::fabs(numeric), std::fabs(grad(r, c))});
            max_rel = std::max(max_rel, std::fabs(numeric - grad(r, c)) / denom);
        }
    CHECK(max_rel < 1e-3f);
}

TEST_CASE("contrastive loss pulls same labels and pushes different ones") {
    Matrix close(2, 2);
    close << 0.0f, 0.05f, 0.0f, 0.05f;
    CHECK(nn::contrastive_loss(close, {0, 1}, 1.0f, nullptr) >
          nn::contrastive_loss(close, {0, 0}, 1.0f, nullptr));
    // Far-apart different-label pair is beyond the margin: no penalty.
    Matrix far(2, 2);
    far << 0.0f, 3.0f, 0.0f, 3.0f;
    CHECK(nn::contrastive_loss(far, {0, 1}, 1.0f, nullptr) == doctest::Approx(0.0f));
}

TEST_CASE("fine_tune freezes everything outside the tuned tail") {
    auto train = make_blobs_task(300, 4, 12, 12, 1, 71);
    auto holdout = make_blobs_task(150, 4, 12, 12, 1, 72);
    nn::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 4;
    auto base = nn::train_clean(train, {"mnist_cnn", 12, 12, 1, 4, 0.25f}, cfg);
    const int depth = base.model.num_layers();

    SUBCASE("epochs=0 is a parameter-identical no-op") {
        auto same = nn::fine_tune(base.model, holdout, 4, 0, cfg);
        CHECK(same.checksum(0, depth) == base.model.checksum(0, depth));
    }
    SUBCASE("frozen prefix checksum is unchanged, tail changes") {
        auto tuned = nn::fine_tune(base.model, holdout, 4, 3, cfg);
        CHECK(tuned.checksum(0, depth - 4) == base.model.checksum(0, depth - 4));
        CHECK(tuned.checksum(depth - 4, depth) != base.model.checksum(depth - 4, depth));
    }
    SUBCASE("layers_to_tune beyond depth is a configuration error") {
        CHECK_THROWS_AS(nn::fine_tune(base.model, holdout, depth + 1, 1, cfg), ConfigError);
    }
}

TEST_CASE("checkpoint round trip preserves predictions and metadata") {
    auto train = make_blobs_task(200, 3, 10, 10, 1, 81);
    nn::TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 6;
    auto trained = nn::train_clean(train, {"mnist_cnn", 10, 10, 1, 3, 0.25f}, cfg);

    auto path = (std::filesystem::temp_directory_path() / "ssbt_ckpt_test.bin").string();
    trained.model.save(path, R"({"config_hash":"abc123","metric":0.5})");
    std::string meta;
    auto loaded = nn::Model::load(path, &meta);
    CHECK(meta.find("abc123") != std::string::npos);

    auto probe = make_blobs_task(40, 3, 10, 10, 1, 82);
    Matrix before = trained.model.predict_probs(probe);
    Matrix after = loaded.predict_probs(probe);
    CHECK((before - after).cwiseAbs().maxCoeff() == 0.0f);
    std::filesystem::remove(path);
}
