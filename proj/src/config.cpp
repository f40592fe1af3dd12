#include "ssbt/config.hpp"

#include <cstdio>
#include <fstream>

#include "ssbt/errors.hpp"
#include "ssbt/rng.hpp"

namespace ssbt {

using json = nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json attack_to_json(const AttackSpec& a) {
    return {{"kind", to_string(a.kind)},
            {"source_classes", a.partition.source_classes},
            {"target_class", a.partition.target_class},
            {"poison_fraction", a.poison_fraction},
            {"cover_fraction", a.cover_fraction},
            {"patch",
             {{"area_fraction", a.patch.area_fraction},
              {"alpha_train", a.patch.alpha_train},
              {"pattern_value", a.patch.pattern_value},
              {"placement", a.patch.placement}}},
            {"feature",
             {{"lambda", a.feature.lambda},
              {"noise_sigma", a.feature.noise_sigma},
              {"steps", a.feature.steps},
              {"learning_rate", a.feature.learning_rate},
              {"num_donors", a.feature.num_donors},
              {"confidence_floor", a.feature.confidence_floor},
              {"mixer", a.feature.mixer},
              {"min_overlap", a.feature.min_overlap},
              {"quantile", a.feature.quantile}}}};
}

AttackSpec attack_from_json(const json& j) {
    AttackSpec a;
    a.kind = attack_kind_from_string(j.at("kind").get<std::string>());
    a.partition.source_classes = j.at("source_classes").get<std::vector<int>>();
    a.partition.target_class = j.at("target_class").get<int>();
    maybe(j, "poison_fraction", a.poison_fraction);
    maybe(j, "cover_fraction", a.cover_fraction);
    if (j.contains("patch")) {
        const auto& p = j.at("patch");
        maybe(p, "area_fraction", a.patch.area_fraction);
        maybe(p, "alpha_train", a.patch.alpha_train);
        maybe(p, "pattern_value", a.patch.pattern_value);
        maybe(p, "placement", a.patch.placement);
    }
    if (j.contains("feature")) {
        const auto& f = j.at("feature");
        maybe(f, "lambda", a.feature.lambda);
        maybe(f, "noise_sigma", a.feature.noise_sigma);
        maybe(f, "steps", a.feature.steps);
        maybe(f, "learning_rate", a.feature.learning_rate);
        maybe(f, "num_donors", a.feature.num_donors);
        maybe(f, "confidence_floor", a.feature.confidence_floor);
        maybe(f, "mixer", a.feature.mixer);
        maybe(f, "min_overlap", a.feature.min_overlap);
        maybe(f, "quantile", a.feature.quantile);
    }
    return a;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (dataset.id != "mnist" && dataset.id != "cifar10" && dataset.id != "image_dir" &&
        dataset.id != "shapes" && dataset.id != "blobs")
        throw ConfigError("config: unknown dataset id '" + dataset.id + "'");
    if (dataset.id == "image_dir" && dataset.root.empty())
        throw ConfigError("config: image_dir dataset requires dataset.root");
    train.validate();
    if (objective != "auto" && objective != "Lp" && objective != "Lc")
        throw ConfigError("config: objective must be auto, Lp or Lc");
    if (attack) {
        int m = dataset.id == "shapes" || dataset.id == "blobs" ? dataset.num_classes : 10;
        if (dataset.id == "image_dir") m = 1000;  // checked against real data at load
        attack->validate(m);
    }
    if (sweep) {
        if (sweep->grid.empty()) throw ConfigError("config: sweep grid is empty");
        if (sweep->axis != "poison_fraction" && sweep->axis != "cover_fraction" &&
            sweep->axis != "num_source_classes" && sweep->axis != "num_backdoors")
            throw ConfigError("config: unknown sweep axis '" + sweep->axis + "'");
        if (!attack) throw ConfigError("config: sweep requires an attack block");
        for (const auto& k : sweep->kinds) attack_kind_from_string(k);
    }
    if (defences.repetitions < 1) throw ConfigError("config: defences.repetitions must be >= 1");
    nn::ModelSpec probe{model_arch, 8, 8, 1, 2, width_mult};
    if (dataset.channels == 3) probe.channels = 3;
    probe.validate();  // arch name and width_mult
}

json ExperimentConfig::to_json() const {
    json j;
    j["dataset"] = {{"id", dataset.id},          {"root", dataset.root},
                    {"train_limit", dataset.train_limit}, {"test_limit", dataset.test_limit},
                    {"synth_train", dataset.synth_train}, {"synth_test", dataset.synth_test},
                    {"noise", dataset.noise},    {"height", dataset.height},
                    {"width", dataset.width},    {"channels", dataset.channels},
                    {"num_classes", dataset.num_classes}};
    j["model"] = {{"arch", model_arch}, {"width_mult", width_mult}};
    j["train"] = {{"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"learning_rate", train.learning_rate},
                  {"momentum", train.momentum},
                  {"lr_step_decay", train.lr_step_decay},
                  {"gamma", train.contrastive_weight},
                  {"margin", train.contrastive_margin},
                  {"objective", objective}};
    if (attack) j["attack"] = attack_to_json(*attack);
    j["eval"] = {{"n_poisoned", eval_sizes.n_poisoned},
                 {"n_cover", eval_sizes.n_cover},
                 {"n_clean", eval_sizes.n_clean}};
    j["defences"] = {{"neural_cleanse", defences.neural_cleanse},
                     {"scan", defences.scan},
                     {"februus", defences.februus},
                     {"repetitions", defences.repetitions},
                     {"nc_steps", defences.nc_steps},
                     {"nc_l1_weight", defences.nc_l1_weight},
                     {"nc_threshold", defences.nc_threshold},
                     {"nc_samples_per_pair", defences.nc_samples_per_pair},
                     {"scan_pca_dims", defences.scan_pca_dims},
                     {"scan_threshold", defences.scan_threshold},
                     {"februus_inputs", defences.februus_inputs},
                     {"februus_saliency_cut", defences.februus_saliency_cut}};
    if (sweep)
        j["sweep"] = {{"axis", sweep->axis}, {"grid", sweep->grid}, {"kinds", sweep->kinds}};
    j["output"] = output;
    j["seed"] = seed;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        maybe(d, "id", c.dataset.id);
        maybe(d, "root", c.dataset.root);
        maybe(d, "train_limit", c.dataset.train_limit);
        maybe(d, "test_limit", c.dataset.test_limit);
        maybe(d, "synth_train", c.dataset.synth_train);
        maybe(d, "synth_test", c.dataset.synth_test);
        maybe(d, "noise", c.dataset.noise);
        maybe(d, "height", c.dataset.height);
        maybe(d, "width", c.dataset.width);
        maybe(d, "channels", c.dataset.channels);
        maybe(d, "num_classes", c.dataset.num_classes);
    }
    if (j.contains("model")) {
        maybe(j.at("model"), "arch", c.model_arch);
        maybe(j.at("model"), "width_mult", c.width_mult);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        maybe(t, "epochs", c.train.epochs);
        maybe(t, "batch_size", c.train.batch_size);
        maybe(t, "learning_rate", c.train.learning_rate);
        maybe(t, "momentum", c.train.momentum);
        maybe(t, "lr_step_decay", c.train.lr_step_decay);
        maybe(t, "gamma", c.train.contrastive_weight);
        maybe(t, "margin", c.train.contrastive_margin);
        maybe(t, "objective", c.objective);
    }
    if (j.contains("attack") && !j.at("attack").is_null())
        c.attack = attack_from_json(j.at("attack"));
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        maybe(e, "n_poisoned", c.eval_sizes.n_poisoned);
        maybe(e, "n_cover", c.eval_sizes.n_cover);
        maybe(e, "n_clean", c.eval_sizes.n_clean);
    }
    if (j.contains("defences")) {
        const auto& d = j.at("defences");
        maybe(d, "neural_cleanse", c.defences.neural_cleanse);
        maybe(d, "scan", c.defences.scan);
        maybe(d, "februus", c.defences.februus);
        maybe(d, "repetitions", c.defences.repetitions);
        maybe(d, "nc_steps", c.defences.nc_steps);
        maybe(d, "nc_l1_weight", c.defences.nc_l1_weight);
        maybe(d, "nc_threshold", c.defences.nc_threshold);
        maybe(d, "nc_samples_per_pair", c.defences.nc_samples_per_pair);
        maybe(d, "scan_pca_dims", c.defences.scan_pca_dims);
        maybe(d, "scan_threshold", c.defences.scan_threshold);
        maybe(d, "februus_inputs", c.defences.februus_inputs);
        maybe(d, "februus_saliency_cut", c.defences.februus_saliency_cut);
    }
    if (j.contains("sweep") && !j.at("sweep").is_null()) {
        SweepConfig s;
        s.axis = j.at("sweep").at("axis").get<std::string>();
        s.grid = j.at("sweep").at("grid").get<std::vector<double>>();
        maybe(j.at("sweep"), "kinds", s.kinds);
        c.sweep = s;
    }
    maybe(j, "output", c.output);
    maybe(j, "seed", c.seed);

    if (c.attack) c.attack->seed = derive_seed(c.seed, "attack");
    c.validate();
    return c;
}

uint64_t ExperimentConfig::hash() const {
    json j = to_json();
    j["output"] = "";  // where artifacts land does not change the experiment
    return fnv1a(j.dump());
}

std::string ExperimentConfig::run_id() const {
    char buf[13];
    std::snprintf(buf, sizeof(buf), "%012llx", static_cast<unsigned long long>(hash() >> 16));
    return buf;
}

ExperimentConfig ExperimentConfig::load(const std::string& path,
                                        const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw ConfigError("config: parse error in " + path + ": " + e.what());
    }
    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config override must look like key.path=value: " + ov);
        std::string keypath = ov.substr(0, eq), value = ov.substr(eq + 1);
        json* cur = &j;
        size_t start = 0;
        for (;;) {
            auto dot = keypath.find('.', start);
            std::string key = keypath.substr(start, dot - start);
            if (dot == std::string::npos) {
                json parsed;
                try {
                    parsed = json::parse(value);
                } catch (const json::exception&) {
                    parsed = value;  // bare string
                }
                (*cur)[key] = parsed;
                break;
            }
            cur = &(*cur)[key];
            start = dot + 1;
        }
    }
    return from_json(j);
}

}  // namespace ssbt
