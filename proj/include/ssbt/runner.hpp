#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "ssbt/config.hpp"
#include "ssbt/eval.hpp"
#include "ssbt/extract.hpp"
#include "ssbt/poison.hpp"
#include "ssbt/report.hpp"

namespace ssbt {

inline constexpr const char* kToolkitVersion = "0.1.0";

struct DataSplits {
    LabeledDataset train;
    LabeledDataset test;
};

DataSplits load_dataset(const DatasetConfig& cfg, uint64_t seed);

// Pipeline building blocks shared by the CLI stages, the sweep runner and
// the acceptance suite.

nn::Objective objective_for(const std::string& objective, AttackKind kind);

// Clean model on the untouched training split (also the cassock2 extractor).
nn::TrainedModel train_reference_model(const ExperimentConfig& cfg, const DataSplits& data);

FeatureTrigger make_feature_trigger(nn::Model& clean_model, const LabeledDataset& train,
                                    const AttackSpec& spec);

// craft -> train -> evaluate for one attack spec, in memory.
struct PipelineOutcome {
    nn::TrainedModel trained;
    EvalReport report;
    std::optional<FeatureTrigger> trigger;
    CraftResult crafted;
};

PipelineOutcome run_attack_pipeline(const ExperimentConfig& cfg, const DataSplits& data,
                                    const AttackSpec& spec, nn::Model* clean_model);

struct SweepRowOutcome {
    double axis_value = 0.0;
    std::string kind;
    bool failed = false;
    std::string error;
    EvalReport report;
};

std::vector<SweepRowOutcome> run_sweep(const ExperimentConfig& cfg, const DataSplits& data,
                                       const std::function<void(const std::string&)>& log);

// Builds the n-backdoor bundle used by the num_backdoors sweep axis:
// distinct patch triggers (corner/value combinations), source class i per
// backdoor, shared target class.
BackdoorBundle make_patch_bundle(int n, const LabeledDataset& shape_of, const AttackSpec& base);

// CLI stage driver. Each stage is restartable: when its artifact already
// matches the config hash the stage is a no-op unless forced.
class Runner {
  public:
    explicit Runner(ExperimentConfig cfg);

    const std::filesystem::path& dir() const { return dir_; }
    const ExperimentConfig& config() const { return cfg_; }

    bool craft_stage(bool force);
    bool train_stage(bool force);
    bool evaluate_stage(bool force);
    bool defend_stage(bool force);
    bool sweep_stage(bool force);

    std::filesystem::path manifest_path() const { return dir_ / "manifest.tsv"; }
    std::filesystem::path merged_path() const { return dir_ / "merged.bin"; }
    std::filesystem::path trigger_path() const { return dir_ / "trigger.bin"; }
    std::filesystem::path clean_model_path() const { return dir_ / "clean_model.ckpt"; }
    std::filesystem::path model_path() const { return dir_ / "model.ckpt"; }
    std::filesystem::path eval_report_path() const { return dir_ / "reports/eval_report.json"; }
    std::filesystem::path defence_report_path() const {
        return dir_ / "reports/defence_report.json";
    }
    std::filesystem::path sweep_csv_path() const { return dir_ / "reports/sweep.csv"; }

  private:
    ExperimentConfig cfg_;
    std::filesystem::path dir_;

    void write_run_meta() const;
    DataSplits data();
    std::optional<DataSplits> cached_data_;
};

// Order-preserving binary dataset container used for the merged training
// set artifact (8-bit quantized pixels).
void write_dataset_bin(const std::string& path, const LabeledDataset& ds);
LabeledDataset load_dataset_bin(const std::string& path);

// `report`: collects eval reports and sweep tables under an output root.
std::vector<ResultRow> aggregate_results(const std::string& output_root);

}  // namespace ssbt
