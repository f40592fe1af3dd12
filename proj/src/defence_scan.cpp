#include "ssbt/defence/scan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "ssbt/defence/mad.hpp"
#include "ssbt/errors.hpp"
#include "ssbt/partition.hpp"

namespace ssbt::defence {

namespace {

using Eigen::MatrixXf;
using Eigen::VectorXf;

// Diagonal-Gaussian log-likelihood of one row.
float diag_loglik(const VectorXf& x, const VectorXf& mean, const VectorXf& var) {
    constexpr float kLog2Pi = 1.8378770664093453f;
    float ll = 0.0f;
    for (Eigen::Index d = 0; d < x.size(); ++d) {
        float v = var(d);
        float diff = x(d) - mean(d);
        ll -= 0.5f * (kLog2Pi + std::log(v) + diff * diff / v);
    }
    return ll;
}

VectorXf column_variance(const MatrixXf& rows, const VectorXf& mean, float floor_val) {
    VectorXf var = VectorXf::Zero(rows.cols());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        VectorXf d = rows.row(i).transpose() - mean;
        var += d.cwiseProduct(d);
    }
    var /= float(rows.rows());
    return var.cwiseMax(floor_val);
}

}  // namespace

MixtureSplit class_mixture_stat(const MatrixXf& embeddings, int pca_dims, int em_iters,
                                uint64_t seed) {
    const auto n = embeddings.rows();
    if (n < 4) throw ConfigError("class_mixture_stat: too few samples");

    // Center and project onto the top principal components; keeps EM stable
    // in high-dimensional embedding spaces.
    VectorXf mean = embeddings.colwise().mean();
    MatrixXf centered = embeddings.rowwise() - mean.transpose();
    int d = int(std::min<Eigen::Index>({Eigen::Index(pca_dims), embeddings.cols(), n - 1}));
    MatrixXf x;
    if (d < embeddings.cols()) {
        MatrixXf cov = (centered.transpose() * centered) / float(n - 1);
        Eigen::SelfAdjointEigenSolver<MatrixXf> eig(cov);
        // Columns of eigenvectors() are sorted ascending; take the last d.
        MatrixXf basis = eig.eigenvectors().rightCols(d);
        x = centered * basis;
    } else {
        x = centered;
        d = int(x.cols());
    }

    const float var_floor = 1e-4f;

    // Single Gaussian.
    VectorXf mu1 = x.colwise().mean();
    VectorXf var1 = column_variance(x, mu1, var_floor);
    float ll1 = 0.0f;
    for (Eigen::Index i = 0; i < n; ++i) ll1 += diag_loglik(x.row(i).transpose(), mu1, var1);

    // Two-component mixture, EM. Initialized by splitting along the first
    // projected coordinate with a seed-dependent quantile cut so repeated
    // runs explore different starts.
    Rng rng(derive_seed(seed, "scan.em_init"));
    float cut_q = 0.35f + 0.3f * rng.next_float();
    std::vector<float> first(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) first[size_t(i)] = x(i, 0);
    std::vector<float> sorted = first;
    std::sort(sorted.begin(), sorted.end());
    float cut = sorted[size_t(cut_q * float(n - 1))];

    VectorXf mu[2];
    VectorXf var[2];
    float w[2] = {0.5f, 0.5f};
    {
        std::vector<Eigen::Index> lo, hi;
        for (Eigen::Index i = 0; i < n; ++i) (first[size_t(i)] <= cut ? lo : hi).push_back(i);
        if (lo.empty() || hi.empty()) {
            lo.clear();
            hi.clear();
            for (Eigen::Index i = 0; i < n; ++i) (i % 2 ? lo : hi).push_back(i);
        }
        for (int k = 0; k < 2; ++k) {
            const auto& idx = k == 0 ? lo : hi;
            MatrixXf part(Eigen::Index(idx.size()), d);
            for (size_t r = 0; r < idx.size(); ++r) part.row(Eigen::Index(r)) = x.row(idx[r]);
            mu[k] = part.colwise().mean();
            var[k] = column_variance(part, mu[k], var_floor);
            w[k] = float(idx.size()) / float(n);
        }
    }

    MatrixXf resp(n, 2);
    float ll2 = 0.0f;
    for (int iter = 0; iter < em_iters; ++iter) {
        // E step
        ll2 = 0.0f;
        for (Eigen::Index i = 0; i < n; ++i) {
            float l0 = std::log(std::max(w[0], 1e-8f)) + diag_loglik(x.row(i).transpose(), mu[0], var[0]);
            float l1 = std::log(std::max(w[1], 1e-8f)) + diag_loglik(x.row(i).transpose(), mu[1], var[1]);
            float mx = std::max(l0, l1);
            float z = std::exp(l0 - mx) + std::exp(l1 - mx);
            resp(i, 0) = std::exp(l0 - mx) / z;
            resp(i, 1) = std::exp(l1 - mx) / z;
            ll2 += mx + std::log(z);
        }
        // M step
        for (int k = 0; k < 2; ++k) {
            float nk = resp.col(k).sum();
            if (nk < 1e-3f) {
                nk = 1e-3f;
            }
            VectorXf m = VectorXf::Zero(d);
            for (Eigen::Index i = 0; i < n; ++i) m += resp(i, k) * x.row(i).transpose();
            m /= nk;
            VectorXf v = VectorXf::Zero(d);
            for (Eigen::Index i = 0; i < n; ++i) {
                VectorXf diff = x.row(i).transpose() - m;
                v += resp(i, k) * diff.cwiseProduct(diff);
            }
            v = (v / nk).cwiseMax(var_floor);
            mu[k] = m;
            var[k] = v;
            w[k] = nk / float(n);
        }
    }

    MixtureSplit split;
    split.lr_stat = 2.0f * (ll2 - ll1) / float(n);
    int minor = w[0] <= w[1] ? 0 : 1;
    split.minority_weight = w[minor];
    for (Eigen::Index i = 0; i < n; ++i)
        if (resp(i, minor) > 0.5f) split.minority_indices.push_back(size_t(i));
    return split;
}

ScanVerdict scan_style_detect(const LabeledDataset& training_set, nn::Model& extractor,
                              const ScanParams& params) {
    const int m = training_set.num_classes();
    ScanVerdict verdict;
    verdict.classes.resize(size_t(m));

    std::vector<float> stats;
    std::vector<int> scored_classes;

    for (int cls = 0; cls < m; ++cls) {
        auto& report = verdict.classes[size_t(cls)];
        report.cls = cls;
        auto idx = training_set.indices_of_class(cls);
        if (int(idx.size()) < params.min_population) {
            report.skipped = true;
            continue;
        }
        if (int(idx.size()) > params.max_samples_per_class) {
            idx = seeded_subsample(idx, double(params.max_samples_per_class) / double(idx.size()),
                                   derive_seed(params.seed, "scan.sample", uint64_t(cls)));
        }
        // Embeddings in chunks to bound the packed batch size.
        Eigen::MatrixXf embeds;
        const size_t chunk = 256;
        for (size_t start = 0; start < idx.size(); start += chunk) {
            size_t n = std::min(chunk, idx.size() - start);
            std::vector<const ImageTensor*> ptrs;
            for (size_t k = 0; k < n; ++k) ptrs.push_back(&training_set.image(idx[start + k]));
            Eigen::MatrixXf part = extractor.embed(ptrs);
            if (embeds.size() == 0)
                embeds = part;
            else {
                Eigen::MatrixXf merged(embeds.rows() + part.rows(), part.cols());
                merged << embeds, part;
                embeds = std::move(merged);
            }
        }
        auto split = class_mixture_stat(embeds, params.pca_dims, params.em_iters,
                                        derive_seed(params.seed, "scan.em", uint64_t(cls)));
        report.stat = split.lr_stat;
        for (size_t local : split.minority_indices) report.suspect_indices.push_back(idx[local]);
        stats.push_back(split.lr_stat);
        scored_classes.push_back(cls);
    }

    // Calibrate on the other classes: a class is flagged when its statistic
    // is an outlier against the rest, which are presumed clean.
    for (size_t k = 0; k < scored_classes.size(); ++k) {
        auto& report = verdict.classes[size_t(scored_classes[k])];
        std::vector<float> others;
        for (size_t j = 0; j < stats.size(); ++j)
            if (j != k) others.push_back(stats[j]);
        if (others.size() < 3) continue;
        float med = median_upper(others);
        float spread = 1.4826f * mad(others);
        report.anomaly_index = (report.stat - med) / std::max(spread, 1e-6f);
        report.flagged = report.anomaly_index > params.threshold;
        if (report.flagged) verdict.infected = true;
    }
    return verdict;
}

std::string ScanVerdict::to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& c : classes)
        out.push_back({{"class", c.cls},
                       {"stat", c.stat},
                       {"anomaly_index", c.anomaly_index},
                       {"flagged", c.flagged},
                       {"skipped", c.skipped},
                       {"num_suspects", c.suspect_indices.size()}});
    nlohmann::json j = {{"schema", "ssbt-scan-verdict-v1"},
                        {"infected", infected},
                        {"classes", out}};
    return j.dump(2);
}

void ScanVerdict::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("ScanVerdict::save: cannot create " + path);
    out << to_json() << "\n";
}

}  // namespace ssbt::defence
