#include "ssbt/extract.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssbt/errors.hpp"

namespace ssbt {

using nn::Matrix;

LabeledDataset select_donors(nn::Model& model, const LabeledDataset& data, int target_class,
                             const FeatureTriggerParams& params) {
    if (target_class < 0 || target_class >= data.num_classes())
        throw ConfigError("select_donors: target class out of range");
    auto pool = data.indices_of_class(target_class);
    if (pool.empty()) throw ConfigError("select_donors: no samples of the target class");

    std::vector<const ImageTensor*> imgs;
    imgs.reserve(pool.size());
    for (size_t i : pool) imgs.push_back(&data.image(i));
    Matrix probs = model.predict_probs(imgs);

    std::vector<std::pair<float, size_t>> ranked;
    for (size_t k = 0; k < pool.size(); ++k) {
        float conf = probs(Eigen::Index(k), target_class);
        if (conf >= float(params.confidence_floor)) ranked.emplace_back(conf, pool[k]);
    }
    if (ranked.empty())
        throw ConfigError("select_donors: no target-class sample clears the confidence floor");
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    if (int(ranked.size()) > params.num_donors) ranked.resize(size_t(params.num_donors));

    std::vector<size_t> picked;
    for (auto& [conf, idx] : ranked) picked.push_back(idx);
    return data.subset(picked);
}

namespace {

struct ParamGradGuard {
    nn::Model& model;
    explicit ParamGradGuard(nn::Model& m) : model(m) { model.set_param_grads(false); }
    ~ParamGradGuard() { model.set_param_grads(true); }
};

// Composite = mask*x + (1-mask)*noise, packed for the model.
Matrix composite_batch(const std::vector<Matrix>& donors, const Matrix& mask,
                       const std::vector<Matrix>& noise) {
    const auto hw = mask.cols();
    Matrix x(mask.rows(), Eigen::Index(donors.size()) * hw);
    for (size_t b = 0; b < donors.size(); ++b)
        x.middleCols(Eigen::Index(b) * hw, hw) =
            mask.cwiseProduct(donors[b]) + (Matrix::Ones(mask.rows(), hw) - mask).cwiseProduct(noise[b]);
    return x;
}

}  // namespace

FeatureTrigger extract_feature_trigger(nn::Model& model, const LabeledDataset& donors,
                                       const FeatureTriggerParams& params, uint64_t seed,
                                       ExtractionReport* report) {
    if (donors.size() == 0) throw ConfigError("extract_feature_trigger: no donor images");
    const int target = donors.label(0);
    for (size_t i = 0; i < donors.size(); ++i)
        if (donors.label(i) != target)
            throw ConfigError("extract_feature_trigger: donors carry mixed labels");
    if (donors.height() != model.spec().height || donors.width() != model.spec().width ||
        donors.channels() != model.spec().channels)
        throw ConfigError("extract_feature_trigger: donor shape does not match the model");

    const int c = donors.channels(), h = donors.height(), w = donors.width();
    const Eigen::Index hw = Eigen::Index(h) * w;
    const int nb = int(donors.size());
    const std::vector<int> labels(size_t(nb), target);

    // Donor planes in model layout, one (C)x(HW) matrix per donor.
    std::vector<Matrix> donor_planes(static_cast<size_t>(nb));
    for (int b = 0; b < nb; ++b)
        donor_planes[size_t(b)] = nn::pack_batch(donors.image(size_t(b)));

    Matrix mask = Matrix::Zero(c, hw);

    Rng step_rng(derive_seed(seed, "extract.noise"));
    Rng eval_rng_proto(derive_seed(seed, "extract.eval_noise"));

    auto draw_noise = [&](Rng& rng) {
        std::vector<Matrix> noise(static_cast<size_t>(nb));
        for (int b = 0; b < nb; ++b) {
            Matrix n(c, hw);
            for (Eigen::Index j = 0; j < hw; ++j)
                for (int ci = 0; ci < c; ++ci)
                    n(ci, j) = float(params.noise_sigma) * rng.next_normal();
            noise[size_t(b)] = std::move(n);
        }
        return noise;
    };

    // Deterministic objective evaluation with its own fixed noise draws, so
    // "did we improve" does not depend on the per-step noise.
    auto eval_objective = [&](const Matrix& m) {
        Rng rng = eval_rng_proto;
        float total = 0.0f;
        const int reps = 4;
        for (int r = 0; r < reps; ++r) {
            auto noise = draw_noise(rng);
            Matrix logits = model.forward(composite_batch(donor_planes, m, noise), nb, false);
            total += nn::softmax_cross_entropy(logits, labels, nullptr) * float(nb);
        }
        return total / float(reps) + float(params.lambda) * m.array().abs().sum();
    };

    ParamGradGuard guard(model);
    ExtractionReport rep;
    rep.initial_objective = eval_objective(mask);
    rep.objective_trace.push_back(rep.initial_objective);
    Matrix best_mask = mask;
    float best_obj = rep.initial_objective;

    const int eval_interval = 25;
    const int patience_evals = 8;
    int evals_since_best = 0;
    const float lr = float(params.learning_rate);

    for (int step = 0; step < params.steps; ++step) {
        auto noise = draw_noise(step_rng);
        nn::Trace trace;
        Matrix logits = model.forward(composite_batch(donor_planes, mask, noise), nb, false,
                                      &trace);
        Matrix dlogits;
        float ce = nn::softmax_cross_entropy(logits, labels, &dlogits);
        if (!std::isfinite(ce))
            throw TrainingError("extract_feature_trigger: non-finite objective");
        Matrix dinput = model.backward(trace, dlogits);

        // d(sum CE)/dmask = sum_b dinput_b * (x_b - noise_b); mean->sum scale nb.
        Matrix grad = Matrix::Constant(c, hw, float(params.lambda));  // L1 on a mask >= 0
        for (int b = 0; b < nb; ++b)
            grad += float(nb) *
                    dinput.middleCols(Eigen::Index(b) * hw, hw)
                        .cwiseProduct(donor_planes[size_t(b)] - noise[size_t(b)]);

        mask = (mask - lr * grad).cwiseMax(0.0f).cwiseMin(1.0f);  // box projection
        rep.steps_run = step + 1;

        if ((step + 1) % eval_interval == 0 || step + 1 == params.steps) {
            float obj = eval_objective(mask);
            rep.objective_trace.push_back(obj);
            if (obj < best_obj - 1e-6f) {
                best_obj = obj;
                best_mask = mask;
                evals_since_best = 0;
            } else if (++evals_since_best >= patience_evals) {
                break;  // budget exhausted without progress
            }
        }
    }

    rep.final_objective = best_obj;
    rep.improved = best_obj < rep.initial_objective - 1e-6f;
    if (report) *report = rep;

    FeatureTrigger trigger;
    trigger.height = h;
    trigger.width = w;
    trigger.channels = c;
    trigger.params = params;
    trigger.mask.resize(size_t(c) * h * w);
    for (int ci = 0; ci < c; ++ci)
        for (Eigen::Index j = 0; j < hw; ++j) trigger.mask[size_t(ci) * hw + j] = best_mask(ci, j);
    std::vector<ImageTensor> donor_imgs;
    for (size_t i = 0; i < donors.size(); ++i) donor_imgs.push_back(donors.image(i));
    trigger.donors = std::move(donor_imgs);
    return trigger;
}

}  // namespace ssbt
