#include "ssbt/runner.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "ssbt/defence/februus.hpp"
#include "ssbt/defence/neural_cleanse.hpp"
#include "ssbt/defence/scan.hpp"
#include "ssbt/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ssbt {

// ---------------------------------------------------------------------------
// Dataset resolution

namespace {

std::string data_root(const DatasetConfig& cfg) {
    if (!cfg.root.empty()) return cfg.root;
    if (const char* env = std::getenv("SSBT_DATA_ROOT")) return env;
    return "data";
}

LabeledDataset limited(LabeledDataset ds, int limit, uint64_t seed, const char* stage) {
    if (limit <= 0 || size_t(limit) >= ds.size()) return ds;
    std::vector<size_t> all(ds.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto picked = seeded_subsample(all, double(limit) / double(ds.size()),
                                   derive_seed(seed, stage));
    return ds.subset(picked);
}

}  // namespace

DataSplits load_dataset(const DatasetConfig& cfg, uint64_t seed) {
    DataSplits out;
    if (cfg.id == "mnist") {
        std::string root = data_root(cfg) + "/mnist";
        out.train = load_mnist(root, "train");
        out.test = load_mnist(root, "test");
    } else if (cfg.id == "cifar10") {
        std::string root = data_root(cfg) + "/cifar10";
        out.train = load_cifar10(root, "train");
        out.test = load_cifar10(root, "test");
    } else if (cfg.id == "image_dir") {
        out.train = load_image_dir(cfg.root, "train");
        out.test = load_image_dir(cfg.root, "test");
    } else if (cfg.id == "shapes") {
        ShapeTaskParams p;
        p.height = cfg.height;
        p.width = cfg.width;
        p.channels = cfg.channels;
        p.num_classes = cfg.num_classes;
        p.noise_sigma = cfg.noise;
        p.n = cfg.synth_train;
        p.seed = derive_seed(seed, "data.train");
        out.train = make_shapes(p);
        p.n = cfg.synth_test;
        p.seed = derive_seed(seed, "data.test");
        out.test = make_shapes(p);
    } else if (cfg.id == "blobs") {
        out.train = make_blobs_task(cfg.synth_train, cfg.num_classes, cfg.height, cfg.width,
                                    cfg.channels, derive_seed(seed, "data.train"));
        out.test = make_blobs_task(cfg.synth_test, cfg.num_classes, cfg.height, cfg.width,
                                   cfg.channels, derive_seed(seed, "data.test"));
    } else {
        throw ConfigError("load_dataset: unknown dataset id '" + cfg.id + "'");
    }
    out.train = limited(std::move(out.train), cfg.train_limit, seed, "data.train_limit");
    out.test = limited(std::move(out.test), cfg.test_limit, seed, "data.test_limit");
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline building blocks

nn::Objective objective_for(const std::string& objective, AttackKind kind) {
    if (objective == "Lp") return nn::Objective::Lp;
    if (objective == "Lc") return nn::Objective::Lc;
    return kind == AttackKind::cassock2 ? nn::Objective::Lc : nn::Objective::Lp;
}

namespace {

nn::ModelSpec model_spec_for(const ExperimentConfig& cfg, const LabeledDataset& train) {
    return nn::ModelSpec{cfg.model_arch, train.height(), train.width(), train.channels(),
                         train.num_classes(), cfg.width_mult};
}

}  // namespace

nn::TrainedModel train_reference_model(const ExperimentConfig& cfg, const DataSplits& data) {
    nn::TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "train.clean");
    return nn::train_clean(data.train, model_spec_for(cfg, data.train), tc);
}

FeatureTrigger make_feature_trigger(nn::Model& clean_model, const LabeledDataset& train,
                                    const AttackSpec& spec) {
    auto donors = select_donors(clean_model, train, spec.partition.target_class, spec.feature);
    return extract_feature_trigger(clean_model, donors, spec.feature,
                                   derive_seed(spec.seed, "extract"));
}

PipelineOutcome run_attack_pipeline(const ExperimentConfig& cfg, const DataSplits& data,
                                    const AttackSpec& spec, nn::Model* clean_model) {
    PipelineOutcome out;
    if (spec.kind == AttackKind::cassock2) {
        if (!clean_model)
            throw DependencyError("cassock2 pipeline needs a clean model for extraction");
        out.trigger = make_feature_trigger(*clean_model, data.train, spec);
    }
    out.crafted = craft(data.train, spec, out.trigger ? &*out.trigger : nullptr);

    nn::TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "train.attack", spec.hash());
    out.trained = nn::train_backdoor(out.crafted.merged, out.crafted.manifest,
                                     model_spec_for(cfg, data.train), tc,
                                     objective_for(cfg.objective, spec.kind));

    auto validation = build_validation(data.test, spec, cfg.eval_sizes,
                                       out.trigger ? &*out.trigger : nullptr);
    out.report = evaluate(out.trained.model, validation, spec.hash(), cfg.seed);
    return out;
}

BackdoorBundle make_patch_bundle(int n, const LabeledDataset& shape_of, const AttackSpec& base) {
    if (n < 1) throw ConfigError("make_patch_bundle: n must be >= 1");
    if (base.kind == AttackKind::cassock2)
        throw ConfigError("num_backdoors sweep supports the patch-trigger kinds only");
    const int m = shape_of.num_classes();
    if (n > m - 1) throw ConfigError("make_patch_bundle: more backdoors than usable classes");

    static const char* corners[4] = {"bottom_right", "top_left", "top_right", "bottom_left"};
    BackdoorBundle bundle;
    const int target = base.partition.target_class;
    int source = 0;
    for (int i = 0; i < n; ++i, ++source) {
        if (source == target) source++;
        BackdoorEntry e;
        e.kind = base.kind;
        e.partition.target_class = target;
        e.partition.source_classes = {source};
        e.alpha_train = base.patch.alpha_train;
        PatchTriggerParams p = base.patch;
        p.placement = corners[i % 4];
        // Distinct pattern value per corner reuse round.
        p.pattern_value = std::max(0.2f, base.patch.pattern_value - 0.25f * float(i / 4));
        e.patch = PatchTrigger::default_for(shape_of.height(), shape_of.width(),
                                            shape_of.channels(), p);
        bundle.entries.push_back(std::move(e));
    }
    return bundle;
}

std::vector<SweepRowOutcome> run_sweep(const ExperimentConfig& cfg, const DataSplits& data,
                                       const std::function<void(const std::string&)>& log) {
    if (!cfg.sweep || !cfg.attack) throw ConfigError("run_sweep: config lacks a sweep block");
    const auto& sw = *cfg.sweep;
    std::vector<std::string> kinds = sw.kinds;
    if (kinds.empty()) kinds.push_back(to_string(cfg.attack->kind));

    // The clean model is shared by every cassock2 grid point.
    std::optional<nn::TrainedModel> clean;
    for (const auto& k : kinds)
        if (attack_kind_from_string(k) == AttackKind::cassock2 && !clean) {
            if (log) log("sweep: training the clean extraction model");
            clean = train_reference_model(cfg, data);
        }

    std::vector<SweepRowOutcome> rows;
    for (const auto& kind_name : kinds) {
        for (double value : sw.grid) {
            SweepRowOutcome row;
            row.axis_value = value;
            row.kind = kind_name;
            try {
                AttackSpec spec = *cfg.attack;
                spec.kind = attack_kind_from_string(kind_name);
                ExperimentConfig point_cfg = cfg;

                if (sw.axis == "poison_fraction") {
                    spec.poison_fraction = value;
                } else if (sw.axis == "cover_fraction") {
                    spec.cover_fraction = value;
                } else if (sw.axis == "num_source_classes") {
                    spec.partition = ClassPartition::first_k_sources(
                        int(std::lround(value)), spec.partition.target_class,
                        data.train.num_classes());
                } else if (sw.axis == "num_backdoors") {
                    int n = int(std::lround(value));
                    auto bundle = make_patch_bundle(n, data.train, spec);
                    auto crafted = craft_multi(data.train, bundle, spec.poison_fraction,
                                               spec.cover_fraction,
                                               derive_seed(spec.seed, "sweep.multi",
                                                           uint64_t(n)));
                    nn::TrainConfig tc = cfg.train;
                    tc.seed = derive_seed(cfg.seed, "train.attack", crafted.manifest.spec_hash);
                    auto trained = nn::train_backdoor(crafted.merged, crafted.manifest,
                                                      model_spec_for(cfg, data.train), tc,
                                                      objective_for(cfg.objective, spec.kind));
                    // Average ASR/FPR over the n backdoors.
                    double asr = 0.0, fpr = 0.0, cda = 0.0;
                    int fpr_n = 0;
                    for (const auto& entry : bundle.entries) {
                        AttackSpec per = spec;
                        per.partition = entry.partition;
                        auto validation = build_validation(data.test, per, cfg.eval_sizes);
                        auto rep = evaluate(trained.model, validation, per.hash(), cfg.seed);
                        asr += rep.asr;
                        cda = rep.cda;
                        if (rep.fpr_applicable) {
                            fpr += rep.fpr;
                            fpr_n++;
                        }
                    }
                    row.report.asr = asr / double(n);
                    row.report.fpr = fpr_n ? fpr / double(fpr_n) : 0.0;
                    row.report.fpr_applicable = fpr_n > 0;
                    row.report.cda = cda;
                    row.report.seed = cfg.seed;
                    rows.push_back(std::move(row));
                    if (log)
                        log("sweep " + sw.axis + "=" + std::to_string(value) + " kind=" +
                            kind_name + " done");
                    continue;
                } else {
                    throw ConfigError("run_sweep: unknown axis " + sw.axis);
                }

                auto outcome = run_attack_pipeline(point_cfg, data, spec,
                                                   clean ? &clean->model : nullptr);
                row.report = outcome.report;
            } catch (const Error& e) {
                row.failed = true;
                row.error = e.what();
            }
            rows.push_back(std::move(row));
            if (log)
                log("sweep " + sw.axis + "=" + std::to_string(value) + " kind=" + kind_name +
                    (rows.back().failed ? " FAILED: " + rows.back().error : " done"));
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Binary dataset container

void write_dataset_bin(const std::string& path, const LabeledDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_dataset_bin: cannot create " + path);
    const char magic[8] = {'S', 'S', 'B', 'T', 'D', 'S', 'B', '1'};
    out.write(magic, 8);
    int32_t header[5] = {int32_t(ds.size()), int32_t(ds.height()), int32_t(ds.width()),
                         int32_t(ds.channels()), int32_t(ds.num_classes())};
    out.write(reinterpret_cast<char*>(header), sizeof(header));
    for (size_t i = 0; i < ds.size(); ++i) {
        auto label = int32_t(ds.label(i));
        out.write(reinterpret_cast<char*>(&label), sizeof(label));
        for (float v : ds.image(i).data()) {
            auto b = static_cast<unsigned char>(std::lround(v * 255.0f));
            out.write(reinterpret_cast<char*>(&b), 1);
        }
    }
}

LabeledDataset load_dataset_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_dataset_bin: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "SSBTDSB1", 8) != 0)
        throw IoError("load_dataset_bin: bad magic in " + path);
    int32_t header[5];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    auto [n, h, w, c, m] = std::tuple{header[0], header[1], header[2], header[3], header[4]};
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    std::vector<unsigned char> buf(size_t(h) * w * c);
    for (int32_t i = 0; i < n; ++i) {
        int32_t label;
        in.read(reinterpret_cast<char*>(&label), sizeof(label));
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
        std::vector<float> px(buf.size());
        for (size_t k = 0; k < buf.size(); ++k) px[k] = buf[k] / 255.0f;
        images.emplace_back(h, w, c, std::move(px));
        labels.push_back(label);
    }
    if (!in) throw IoError("load_dataset_bin: truncated " + path);
    return LabeledDataset(std::move(images), std::move(labels), m);
}

// ---------------------------------------------------------------------------
// Runner stages

namespace {

// Exclusive per-run-directory lock; concurrent writers are rejected.
struct DirLock {
    fs::path path;
    int fd = -1;

    explicit DirLock(const fs::path& dir) : path(dir / ".lock") {
        fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0)
            throw ConfigError("run directory is locked by another invocation: " + path.string());
    }
    ~DirLock() {
        if (fd >= 0) {
            ::close(fd);
            fs::remove(path);
        }
    }
};

std::string now_iso8601() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

Runner::Runner(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    dir_ = fs::path(cfg_.output) / cfg_.run_id();
    fs::create_directories(dir_ / "reports");
    fs::create_directories(dir_ / "plots");
    write_run_meta();
}

void Runner::write_run_meta() const {
    fs::path meta = dir_ / "meta.json";
    if (fs::exists(meta)) return;
    json j = {{"schema", "ssbt-run-meta-v1"},
              {"version", kToolkitVersion},
              {"config_hash", hex64(cfg_.hash())},
              {"seed", cfg_.seed},
              {"created_at", now_iso8601()},
              {"config", cfg_.to_json()}};
    std::ofstream out(meta);
    out << j.dump(2) << "\n";
}

DataSplits Runner::data() {
    if (!cached_data_) cached_data_ = load_dataset(cfg_.dataset, cfg_.seed);
    return *cached_data_;
}

bool Runner::craft_stage(bool force) {
    if (!cfg_.attack) throw ConfigError("craft: config has no attack block");
    if (!force && fs::exists(manifest_path())) return false;
    DirLock lock(dir_);
    auto splits = data();

    std::optional<FeatureTrigger> trigger;
    if (cfg_.attack->kind == AttackKind::cassock2) {
        nn::Model clean = [&] {
            if (fs::exists(clean_model_path()) && !force)
                return nn::Model::load(clean_model_path().string());
            auto trained = train_reference_model(cfg_, splits);
            json meta = {{"config_hash", hex64(cfg_.hash())},
                         {"seed", cfg_.seed},
                         {"version", kToolkitVersion},
                         {"role", "clean_reference"}};
            trained.model.save(clean_model_path().string(), meta.dump());
            return std::move(trained.model);
        }();
        trigger = make_feature_trigger(clean, splits.train, *cfg_.attack);
        save_feature_trigger(trigger_path().string(), *trigger);
    }

    auto crafted = craft(splits.train, *cfg_.attack, trigger ? &*trigger : nullptr);
    write_dataset_bin(merged_path().string(), crafted.merged);
    crafted.manifest.save(manifest_path().string());
    return true;
}

bool Runner::train_stage(bool force) {
    if (!force && fs::exists(model_path())) return false;
    DirLock lock(dir_);
    auto splits = data();

    json meta = {{"config_hash", hex64(cfg_.hash())},
                 {"seed", cfg_.seed},
                 {"version", kToolkitVersion}};

    if (!cfg_.attack) {
        auto trained = train_reference_model(cfg_, splits);
        meta["objective"] = "clean";
        meta["epoch_losses"] = trained.epoch_losses;
        trained.model.save(model_path().string(), meta.dump());
        return true;
    }

    if (!fs::exists(manifest_path()) || !fs::exists(merged_path()))
        throw DependencyError("train: missing artifact " + manifest_path().string() +
                              " (run craft first)");
    auto merged = load_dataset_bin(merged_path().string());
    auto manifest = PoisonManifest::load(manifest_path().string());
    nn::TrainConfig tc = cfg_.train;
    tc.seed = derive_seed(cfg_.seed, "train.attack", cfg_.attack->hash());
    auto objective = objective_for(cfg_.objective, cfg_.attack->kind);
    auto trained = nn::train_backdoor(merged, manifest, model_spec_for(cfg_, merged), tc,
                                      objective);
    meta["objective"] = objective == nn::Objective::Lc ? "Lc" : "Lp";
    meta["epoch_losses"] = trained.epoch_losses;
    trained.model.save(model_path().string(), meta.dump());
    return true;
}

bool Runner::evaluate_stage(bool force) {
    if (!force && fs::exists(eval_report_path())) return false;
    DirLock lock(dir_);
    if (!fs::exists(model_path()))
        throw DependencyError("evaluate: missing artifact " + model_path().string() +
                              " (run train first)");
    auto splits = data();
    auto model = nn::Model::load(model_path().string());

    EvalReport report;
    if (cfg_.attack) {
        std::optional<FeatureTrigger> trigger;
        if (cfg_.attack->kind == AttackKind::cassock2) {
            if (!fs::exists(trigger_path()))
                throw DependencyError("evaluate: missing artifact " + trigger_path().string() +
                                      " (run craft first)");
            trigger = load_feature_trigger(trigger_path().string());
        }
        auto validation = build_validation(splits.test, *cfg_.attack, cfg_.eval_sizes,
                                           trigger ? &*trigger : nullptr);
        report = evaluate(model, validation, cfg_.attack->hash(), cfg_.seed);
    } else {
        report.cda = nn::accuracy(model, splits.test);
        report.n_clean = splits.test.size();
        report.fpr_applicable = false;
        report.seed = cfg_.seed;
    }
    report.save(eval_report_path().string());
    return true;
}

bool Runner::defend_stage(bool force) {
    if (!force && fs::exists(defence_report_path())) return false;
    DirLock lock(dir_);
    if (!fs::exists(model_path()))
        throw DependencyError("defend: missing artifact " + model_path().string() +
                              " (run train first)");
    auto splits = data();
    auto model = nn::Model::load(model_path().string());
    const auto& d = cfg_.defences;
    json out = {{"schema", "ssbt-defence-report-v1"},
                {"config_hash", hex64(cfg_.hash())},
                {"repetitions", d.repetitions}};

    if (d.neural_cleanse) {
        defence::NeuralCleanseParams p;
        p.steps = d.nc_steps;
        p.l1_weight = d.nc_l1_weight;
        p.threshold = d.nc_threshold;
        p.samples_per_pair = d.nc_samples_per_pair;
        std::vector<bool> detections;
        for (int r = 0; r < d.repetitions; ++r) {
            p.seed = derive_seed(cfg_.seed, "defend.nc", uint64_t(r));
            auto verdict = defence::extended_neural_cleanse(model, splits.test, p);
            detections.push_back(verdict.infected);
            if (r == 0) verdict.save((dir_ / "reports/nc_verdict.json").string());
        }
        int hits = int(std::count(detections.begin(), detections.end(), true));
        out["neural_cleanse"] = {{"detection_rate", double(hits) / double(d.repetitions)},
                                 {"detections", detections}};
    }

    if (d.scan) {
        if (!fs::exists(merged_path()))
            throw DependencyError("defend: scan needs artifact " + merged_path().string() +
                                  " (run craft first)");
        auto merged = load_dataset_bin(merged_path().string());
        defence::ScanParams p;
        p.pca_dims = d.scan_pca_dims;
        p.threshold = d.scan_threshold;
        std::vector<bool> detections;
        for (int r = 0; r < d.repetitions; ++r) {
            p.seed = derive_seed(cfg_.seed, "defend.scan", uint64_t(r));
            auto verdict = defence::scan_style_detect(merged, model, p);
            detections.push_back(verdict.infected);
            if (r == 0) verdict.save((dir_ / "reports/scan_verdict.json").string());
        }
        int hits = int(std::count(detections.begin(), detections.end(), true));
        out["scan"] = {{"detection_rate", double(hits) / double(d.repetitions)},
                       {"detections", detections}};
    }

    if (d.februus) {
        if (!cfg_.attack) throw ConfigError("defend: februus needs an attack block");
        std::optional<FeatureTrigger> trigger;
        if (cfg_.attack->kind == AttackKind::cassock2) {
            if (!fs::exists(trigger_path()))
                throw DependencyError("defend: missing artifact " + trigger_path().string());
            trigger = load_feature_trigger(trigger_path().string());
        }
        defence::PurifyParams p;
        p.saliency_cut = d.februus_saliency_cut;
        std::vector<double> rates;
        for (int r = 0; r < d.repetitions; ++r) {
            uint64_t rep_seed = derive_seed(cfg_.seed, "defend.feb", uint64_t(r));
            auto parts = partition_indices(splits.test, cfg_.attack->partition);
            Rng rng(rep_seed);
            auto picked = sample_without_replacement(
                parts.source, size_t(d.februus_inputs), rng);
            size_t repaired = 0;
            PatchTrigger patch;
            MixerConfig mixer;
            if (cfg_.attack->kind == AttackKind::cassock2) {
                mixer.kind = mixer_kind_from_string(cfg_.attack->feature.mixer);
                mixer.min_overlap = cfg_.attack->feature.min_overlap;
                mixer.quantile = cfg_.attack->feature.quantile;
                mixer.seed = derive_seed(rep_seed, "feb.mixer");
            } else {
                patch = PatchTrigger::default_for(splits.test.height(), splits.test.width(),
                                                  splits.test.channels(), cfg_.attack->patch);
            }
            for (size_t k = 0; k < picked.size(); ++k) {
                const auto& img = splits.test.image(picked[k]);
                ImageTensor poisoned = cfg_.attack->kind == AttackKind::cassock2
                                           ? mix(img, *trigger, mixer, k)
                                           : apply_patch(img, patch);
                auto result = defence::februus_style_purify(model, poisoned, p);
                if (result.new_prediction == splits.test.label(picked[k])) repaired++;
            }
            rates.push_back(picked.empty() ? 0.0 : double(repaired) / double(picked.size()));
        }
        double mean = 0.0;
        for (double v : rates) mean += v;
        out["februus"] = {{"repair_rate", rates.empty() ? 0.0 : mean / double(rates.size())},
                          {"per_repetition", rates}};
    }

    std::ofstream f(defence_report_path());
    f << out.dump(2) << "\n";
    return true;
}

bool Runner::sweep_stage(bool force) {
    if (!cfg_.sweep) throw ConfigError("sweep: config has no sweep block");
    if (!force && fs::exists(sweep_csv_path())) return false;
    DirLock lock(dir_);
    auto splits = data();
    auto rows = run_sweep(cfg_, splits, [](const std::string& msg) {
        std::fprintf(stderr, "[ssbt] %s\n", msg.c_str());
    });

    std::vector<ResultRow> table;
    json errors = json::array();
    for (const auto& r : rows) {
        if (r.failed) {
            errors.push_back({{"axis_value", r.axis_value}, {"kind", r.kind}, {"error", r.error}});
            continue;
        }
        ResultRow row;
        row.run_id = cfg_.run_id();
        row.dataset = cfg_.dataset.id;
        row.attack_kind = r.kind;
        row.axis = cfg_.sweep->axis;
        row.axis_value = r.axis_value;
        row.cda = r.report.cda;
        row.asr = r.report.asr;
        row.fpr = r.report.fpr;
        row.seed = cfg_.seed;
        table.push_back(row);
    }
    write_results_csv(sweep_csv_path().string(), table);
    if (!errors.empty()) {
        std::ofstream ef(dir_ / "reports/sweep_errors.json");
        ef << errors.dump(2) << "\n";
    }

    for (const char* metric : {"cda", "asr", "fpr"}) {
        std::map<std::string, std::vector<std::pair<double, double>>> series;
        for (const auto& r : table) {
            double v = std::string(metric) == "cda" ? r.cda
                       : std::string(metric) == "asr" ? r.asr
                                                      : r.fpr;
            series[r.attack_kind].emplace_back(r.axis_value, v);
        }
        write_metric_svg((dir_ / "plots" / (std::string(metric) + ".svg")).string(),
                         std::string(metric) + " vs " + cfg_.sweep->axis, cfg_.sweep->axis,
                         metric, series);
    }
    return true;
}

// ---------------------------------------------------------------------------

std::vector<ResultRow> aggregate_results(const std::string& output_root) {
    if (!fs::is_directory(output_root))
        throw IoError("report: no such output directory " + output_root);
    std::vector<ResultRow> rows;
    for (const auto& entry : fs::directory_iterator(output_root)) {
        if (!entry.is_directory()) continue;
        fs::path meta_path = entry.path() / "meta.json";
        if (!fs::exists(meta_path)) continue;
        std::ifstream mf(meta_path);
        json meta = json::parse(mf);
        if (meta.value("schema", "") != "ssbt-run-meta-v1")
            throw IoError("report: run " + entry.path().filename().string() +
                          " has a mismatched meta schema");
        std::string run_id = entry.path().filename().string();
        std::string dataset = meta.at("config").at("dataset").at("id").get<std::string>();
        uint64_t seed = meta.at("config").at("seed").get<uint64_t>();
        std::string kind = "none";
        if (meta.at("config").contains("attack"))
            kind = meta.at("config").at("attack").at("kind").get<std::string>();

        fs::path eval_path = entry.path() / "reports/eval_report.json";
        if (fs::exists(eval_path)) {
            auto rep = EvalReport::load(eval_path.string());
            ResultRow r;
            r.run_id = run_id;
            r.dataset = dataset;
            r.attack_kind = kind;
            r.cda = rep.cda;
            r.asr = rep.asr;
            r.fpr = rep.fpr;
            r.seed = seed;
            rows.push_back(r);
        }
        fs::path sweep_path = entry.path() / "reports/sweep.csv";
        if (fs::exists(sweep_path)) {
            auto sweep_rows = read_results_csv(sweep_path.string());
            rows.insert(rows.end(), sweep_rows.begin(), sweep_rows.end());
        }
    }
    return rows;
}

}  // namespace ssbt
