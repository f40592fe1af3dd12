#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssbt/attack.hpp"
#include "ssbt/eval.hpp"
#include "ssbt/nn/model.hpp"
#include "ssbt/nn/train.hpp"

namespace ssbt {

struct DatasetConfig {
    std::string id = "shapes";  // mnist | cifar10 | image_dir | shapes | blobs
    std::string root;           // file-backed datasets; empty = $SSBT_DATA_ROOT or ./data
    int train_limit = 0;        // 0 = use everything
    int test_limit = 0;
    // synthetic-task parameters
    int synth_train = 2000;
    int synth_test = 500;
    float noise = 0.10f;
    int height = 32;
    int width = 32;
    int channels = 3;
    int num_classes = 10;
};

struct DefenceConfig {
    bool neural_cleanse = false;
    bool scan = false;
    bool februus = false;
    int repetitions = 10;
    int nc_steps = 100;
    float nc_l1_weight = 1e-2f;
    float nc_threshold = 2.0f;
    int nc_samples_per_pair = 16;
    int scan_pca_dims = 8;
    float scan_threshold = 3.0f;
    int februus_inputs = 200;
    float februus_saliency_cut = 0.8f;
};

struct SweepConfig {
    std::string axis;  // poison_fraction | cover_fraction | num_source_classes | num_backdoors
    std::vector<double> grid;
    std::vector<std::string> kinds;  // attack kinds to sweep; empty = the configured one
};

// Declarative description of one experiment. Fully validated before any
// compute; its hash names the run directory and is embedded in artifacts.
struct ExperimentConfig {
    DatasetConfig dataset;
    std::string model_arch = "mnist_cnn";
    float width_mult = 1.0f;
    nn::TrainConfig train;
    std::string objective = "auto";  // Lp | Lc | auto (Lc for cassock2)
    std::optional<AttackSpec> attack;
    ValidationSizes eval_sizes;
    DefenceConfig defences;
    std::optional<SweepConfig> sweep;
    std::string output = "runs";
    uint64_t seed = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);

    // Canonical-serialization hash; run id is its first 12 hex digits.
    uint64_t hash() const;
    std::string run_id() const;

    // Reads a config file and applies dotted-key overrides ("train.epochs=3").
    static ExperimentConfig load(const std::string& path,
                                 const std::vector<std::string>& overrides = {});
};

}  // namespace ssbt
