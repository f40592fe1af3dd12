#include "ssbt/eval.hpp"

#include <chrono>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ssbt/errors.hpp"
#include "ssbt/rng.hpp"

namespace ssbt {

using json = nlohmann::json;

std::string EvalReport::to_json() const {
    json j = {{"schema", "ssbt-eval-v1"},
              {"cda", cda},
              {"asr", asr},
              {"fpr", fpr},
              {"fpr_applicable", fpr_applicable},
              {"n_clean", n_clean},
              {"n_poisoned", n_poisoned},
              {"n_cover", n_cover},
              {"sampled_with_replacement", sampled_with_replacement},
              {"spec_hash", spec_hash},
              {"seed", seed},
              {"wall_time_sec", wall_time_sec}};
    return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& s) {
    json j = json::parse(s);
    if (j.value("schema", "") != "ssbt-eval-v1")
        throw IoError("EvalReport: unknown schema in report");
    EvalReport r;
    r.cda = j.at("cda").get<double>();
    r.asr = j.at("asr").get<double>();
    r.fpr = j.at("fpr").get<double>();
    r.fpr_applicable = j.at("fpr_applicable").get<bool>();
    r.n_clean = j.at("n_clean").get<size_t>();
    r.n_poisoned = j.at("n_poisoned").get<size_t>();
    r.n_cover = j.at("n_cover").get<size_t>();
    r.sampled_with_replacement = j.at("sampled_with_replacement").get<bool>();
    r.spec_hash = j.at("spec_hash").get<uint64_t>();
    r.seed = j.at("seed").get<uint64_t>();
    r.wall_time_sec = j.at("wall_time_sec").get<double>();
    return r;
}

void EvalReport::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("EvalReport::save: cannot create " + path);
    out << to_json() << "\n";
}

EvalReport EvalReport::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("EvalReport::load: cannot open " + path);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(s);
}

namespace {

// Draws `want` indices from pool; falls back to replacement when the pool is
// too small and reports that through `with_replacement`.
std::vector<size_t> draw(const std::vector<size_t>& pool, size_t want, uint64_t seed,
                         const char* stage, bool* with_replacement) {
    if (pool.empty()) return {};
    if (want <= pool.size()) return seeded_subsample(pool, double(want) / double(pool.size()), seed);
    *with_replacement = true;
    Rng rng(derive_seed(seed, stage));
    std::vector<size_t> out(want);
    for (size_t i = 0; i < want; ++i) out[i] = pool[size_t(rng.next_below(pool.size()))];
    return out;
}

}  // namespace

ValidationTriple build_validation(const LabeledDataset& test_set, const AttackSpec& spec,
                                  const ValidationSizes& sizes,
                                  const FeatureTrigger* feature_trigger) {
    spec.validate(test_set.num_classes());
    if (spec.kind == AttackKind::cassock2 && feature_trigger == nullptr)
        throw DependencyError("build_validation: cassock2 requires the extracted feature trigger");

    auto parts = partition_indices(test_set, spec.partition);
    ValidationTriple triple;
    triple.target_class = spec.partition.target_class;

    const uint64_t seed = derive_seed(spec.seed, "validation");
    bool with_replacement = false;

    // Inference-time trigger: opaque patch for the patch attacks, mixer
    // composite for cassock2.
    PatchTrigger patch;
    MixerConfig mixer;
    if (spec.kind == AttackKind::cassock2) {
        mixer.kind = mixer_kind_from_string(spec.feature.mixer);
        mixer.min_overlap = spec.feature.min_overlap;
        mixer.quantile = spec.feature.quantile;
        mixer.seed = derive_seed(seed, "validation.mixer");
    } else {
        patch = PatchTrigger::default_for(test_set.height(), test_set.width(),
                                          test_set.channels(), spec.patch);  // alpha = 1
    }
    auto with_trigger = [&](size_t idx, uint64_t counter) {
        const ImageTensor& img = test_set.image(idx);
        return spec.kind == AttackKind::cassock2 ? mix(img, *feature_trigger, mixer, counter)
                                                 : apply_patch(img, patch);
    };

    {
        auto picked = draw(parts.source, sizes.n_poisoned, derive_seed(seed, "val.poisoned"),
                           "val.poisoned.repl", &with_replacement);
        std::vector<ImageTensor> imgs;
        std::vector<int> labels;
        for (size_t k = 0; k < picked.size(); ++k) {
            imgs.push_back(with_trigger(picked[k], k));
            labels.push_back(spec.partition.target_class);
        }
        triple.poisoned = LabeledDataset(std::move(imgs), std::move(labels),
                                         test_set.num_classes());
    }
    if (parts.non_source.empty()) {
        triple.cover_empty = true;
    } else {
        auto picked = draw(parts.non_source, sizes.n_cover, derive_seed(seed, "val.cover"),
                           "val.cover.repl", &with_replacement);
        std::vector<ImageTensor> imgs;
        std::vector<int> labels;
        for (size_t k = 0; k < picked.size(); ++k) {
            imgs.push_back(with_trigger(picked[k], 1u << 20 | k));
            labels.push_back(test_set.label(picked[k]));
        }
        triple.cover = LabeledDataset(std::move(imgs), std::move(labels), test_set.num_classes());
    }
    {
        std::vector<size_t> all(test_set.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = i;
        auto picked = draw(all, sizes.n_clean, derive_seed(seed, "val.clean"), "val.clean.repl",
                           &with_replacement);
        std::vector<ImageTensor> imgs;
        std::vector<int> labels;
        for (size_t i : picked) {
            imgs.push_back(test_set.image(i));
            labels.push_back(test_set.label(i));
        }
        triple.clean = LabeledDataset(std::move(imgs), std::move(labels), test_set.num_classes());
    }
    triple.sampled_with_replacement = with_replacement;
    return triple;
}

EvalReport evaluate(nn::Model& model, const ValidationTriple& validation, uint64_t spec_hash,
                    uint64_t seed) {
    auto t0 = std::chrono::steady_clock::now();
    EvalReport report;
    report.spec_hash = spec_hash;
    report.seed = seed;
    report.sampled_with_replacement = validation.sampled_with_replacement;

    if (validation.clean.size() == 0 || validation.poisoned.size() == 0)
        throw ConfigError("evaluate: clean and poisoned populations must be non-empty");

    {
        auto pred = model.predict_labels(validation.clean);
        size_t hits = 0;
        for (size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == validation.clean.label(i)) hits++;
        report.n_clean = pred.size();
        report.cda = double(hits) / double(pred.size());
    }
    {
        auto pred = model.predict_labels(validation.poisoned);
        size_t hits = 0;
        for (int p : pred)
            if (p == validation.target_class) hits++;
        report.n_poisoned = pred.size();
        report.asr = double(hits) / double(pred.size());
    }
    if (validation.cover_empty || validation.cover.size() == 0) {
        report.fpr_applicable = false;
        report.n_cover = 0;
    } else {
        auto pred = model.predict_labels(validation.cover);
        size_t hits = 0;
        for (int p : pred)
            if (p == validation.target_class) hits++;
        report.n_cover = pred.size();
        report.fpr = double(hits) / double(pred.size());
    }
    report.wall_time_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace ssbt
