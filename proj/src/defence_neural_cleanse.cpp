#include "ssbt/defence/neural_cleanse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "ssbt/defence/mad.hpp"
#include "ssbt/errors.hpp"
#include "ssbt/partition.hpp"

namespace ssbt::defence {

using nn::Matrix;

namespace {

struct Adam {
    Matrix m, v;
    int t = 0;
    float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;

    explicit Adam(const Matrix& like)
        : m(Matrix::Zero(like.rows(), like.cols())), v(Matrix::Zero(like.rows(), like.cols())) {}

    void step(Matrix& param, const Matrix& grad, float lr) {
        t++;
        m = beta1 * m + (1.0f - beta1) * grad;
        v = beta2 * v + (1.0f - beta2) * grad.cwiseProduct(grad);
        float bc1 = 1.0f - std::pow(beta1, float(t));
        float bc2 = 1.0f - std::pow(beta2, float(t));
        param -= (lr / bc1) * m.cwiseQuotient(((v / bc2).cwiseSqrt().array() + eps).matrix());
    }
};

}  // namespace

ReversedTrigger reverse_engineer_pair(nn::Model& model, const LabeledDataset& clean_set,
                                      int from_class, int to_class,
                                      const NeuralCleanseParams& params, uint64_t pair_seed) {
    const int c = clean_set.channels(), h = clean_set.height(), w = clean_set.width();
    const Eigen::Index hw = Eigen::Index(h) * w;

    auto pool = clean_set.indices_of_class(from_class);
    if (pool.empty()) throw ConfigError("neural_cleanse: no clean samples of class " +
                                        std::to_string(from_class));
    double frac = std::min(1.0, double(params.samples_per_pair) / double(pool.size()));
    auto picked = seeded_subsample(pool, frac, derive_seed(pair_seed, "nc.samples"));
    const int nb = int(picked.size());
    std::vector<Matrix> planes(static_cast<size_t>(nb));
    for (int b = 0; b < nb; ++b) planes[size_t(b)] = nn::pack_batch(clean_set.image(picked[size_t(b)]));
    const std::vector<int> labels(size_t(nb), to_class);

    Rng init_rng(derive_seed(pair_seed, "nc.init"));
    Matrix mask(1, hw), pattern(c, hw);
    for (Eigen::Index j = 0; j < hw; ++j) mask(0, j) = 0.1f * init_rng.next_float();
    for (Eigen::Index j = 0; j < hw; ++j)
        for (int ci = 0; ci < c; ++ci) pattern(ci, j) = init_rng.next_float();

    Adam mask_opt(mask), pattern_opt(pattern);

    model.set_param_grads(false);
    ReversedTrigger result;
    result.from_class = from_class;
    result.to_class = to_class;
    result.converged = true;

    Matrix x(c, Eigen::Index(nb) * hw);
    for (int step = 0; step < params.steps; ++step) {
        // composite = (1-m)*x + m*p, mask broadcast across channels
        for (int b = 0; b < nb; ++b)
            for (int ci = 0; ci < c; ++ci)
                x.block(ci, Eigen::Index(b) * hw, 1, hw) =
                    planes[size_t(b)].row(ci).cwiseProduct(
                        (Matrix::Ones(1, hw) - mask).row(0)) +
                    pattern.row(ci).cwiseProduct(mask.row(0));

        nn::Trace trace;
        Matrix logits = model.forward(x, nb, false, &trace);
        Matrix dlogits;
        float ce = nn::softmax_cross_entropy(logits, labels, &dlogits);
        if (!std::isfinite(ce)) {
            result.converged = false;
            break;
        }
        Matrix dinput = model.backward(trace, dlogits);

        Matrix dmask = Matrix::Constant(1, hw, params.l1_weight);
        Matrix dpattern = Matrix::Zero(c, hw);
        for (int b = 0; b < nb; ++b) {
            for (int ci = 0; ci < c; ++ci) {
                auto di = dinput.block(ci, Eigen::Index(b) * hw, 1, hw);
                dmask.row(0) += di.cwiseProduct(pattern.row(ci) - planes[size_t(b)].row(ci));
                dpattern.row(ci) += di.cwiseProduct(mask.row(0));
            }
        }
        mask_opt.step(mask, dmask, params.learning_rate);
        pattern_opt.step(pattern, dpattern, params.learning_rate);
        // Box constraints hold after every step.
        mask = mask.cwiseMax(0.0f).cwiseMin(1.0f);
        pattern = pattern.cwiseMax(0.0f).cwiseMin(1.0f);
    }
    model.set_param_grads(true);

    result.norm = mask.array().abs().sum();
    result.mask.assign(mask.data(), mask.data() + mask.size());
    result.pattern.resize(size_t(pattern.size()));
    for (int ci = 0; ci < c; ++ci)
        for (Eigen::Index j = 0; j < hw; ++j)
            result.pattern[size_t(ci) * hw + j] = pattern(ci, j);
    return result;
}

DetectionVerdict extended_neural_cleanse(const nn::Model& model, const LabeledDataset& clean_set,
                                         const NeuralCleanseParams& params,
                                         std::vector<ReversedTrigger>* triggers_out) {
    const int m = clean_set.num_classes();
    for (int cls = 0; cls < m; ++cls)
        if (clean_set.indices_of_class(cls).empty())
            throw ConfigError("neural_cleanse: clean set lacks samples of class " +
                              std::to_string(cls));

    std::vector<std::pair<int, int>> pairs;
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            if (a != b) pairs.emplace_back(a, b);

    std::vector<ReversedTrigger> triggers(pairs.size());
    const int threads = std::max(1, params.threads);
#pragma omp parallel for num_threads(threads) schedule(dynamic)
    for (long k = 0; k < long(pairs.size()); ++k) {
        nn::Model local = model.clone();
        triggers[size_t(k)] = reverse_engineer_pair(local, clean_set, pairs[size_t(k)].first,
                                                    pairs[size_t(k)].second, params,
                                                    derive_seed(params.seed, "nc.pair",
                                                                uint64_t(k)));
    }

    // Norms grouped by the targeted class; each pair is scored within its
    // group only.
    std::map<int, std::vector<float>> groups;
    for (const auto& t : triggers)
        if (t.converged) groups[t.to_class].push_back(t.norm);

    DetectionVerdict verdict;
    for (const auto& t : triggers) {
        PairScore score;
        score.from_class = t.from_class;
        score.to_class = t.to_class;
        score.norm = t.norm;
        score.skipped = !t.converged;
        if (!score.skipped) {
            score.anomaly_index = small_side_anomaly_index(t.norm, groups[t.to_class]);
            score.flagged = score.anomaly_index > params.threshold;
        }
        if (score.flagged) {
            verdict.infected = true;
            verdict.flagged_pairs.emplace_back(score.from_class, score.to_class);
        }
        verdict.scores.push_back(score);
    }
    if (triggers_out) *triggers_out = std::move(triggers);
    return verdict;
}

std::string DetectionVerdict::to_json() const {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& s : scores)
        pairs.push_back({{"from", s.from_class},
                         {"to", s.to_class},
                         {"norm", s.norm},
                         {"anomaly_index", s.anomaly_index},
                         {"flagged", s.flagged},
                         {"skipped", s.skipped}});
    nlohmann::json j = {{"schema", "ssbt-nc-verdict-v1"}, {"infected", infected}, {"pairs", pairs}};
    return j.dump(2);
}

void DetectionVerdict::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("DetectionVerdict::save: cannot create " + path);
    out << to_json() << "\n";
}

}  // namespace ssbt::defence
