#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssbt/attack.hpp"
#include "ssbt/trigger.hpp"

namespace ssbt {

enum class SampleRole { clean, poisoned, cover };

std::string to_string(SampleRole role);
SampleRole sample_role_from_string(const std::string& s);

struct ManifestRecord {
    size_t original_index = 0;
    SampleRole role = SampleRole::clean;
    int original_label = 0;
    int assigned_label = 0;
    uint64_t trigger_id = 0;  // 0 for clean records

    bool operator==(const ManifestRecord&) const = default;
};

// One record per sample of the merged dataset, ordered by original index.
// Poisoned records: original label in S, assigned label = T. Cover records:
// original label outside S u {T}, label untouched.
struct PoisonManifest {
    std::vector<ManifestRecord> records;
    uint64_t spec_hash = 0;
    uint64_t seed = 0;
    // Labels of the S u {T} population across all backdoors; consumed by the
    // contrastive training objective.
    std::vector<int> contrast_classes;

    size_t count(SampleRole role) const;
    std::vector<size_t> indices_with_role(SampleRole role) const;

    void save(const std::string& path) const;
    static PoisonManifest load(const std::string& path);
    bool operator==(const PoisonManifest&) const = default;
};

struct CraftResult {
    LabeledDataset merged;
    PoisonManifest manifest;
};

// Builds the merged training set for one attack: poisoned/cover samples
// replace their originals in place, clean samples pass through untouched.
// cassock2 requires an already-extracted feature trigger.
CraftResult craft(const LabeledDataset& dataset, const AttackSpec& spec,
                  const FeatureTrigger* feature_trigger = nullptr);

// One backdoor of a multi-backdoor bundle.
struct BackdoorEntry {
    AttackKind kind = AttackKind::baseline;
    ClassPartition partition;
    PatchTrigger patch;                    // baseline / cassock1
    std::optional<FeatureTrigger> feature; // cassock2
    float alpha_train = 0.5f;
    MixerConfig mixer;

    uint64_t trigger_id() const;
};

struct BackdoorBundle {
    std::vector<BackdoorEntry> entries;
    void validate(int num_classes) const;  // triggers pairwise distinct
};

// Disjoint per-backdoor draws: a sample claimed by one backdoor is excluded
// from every later draw, so no source image ever serves two backdoors.
CraftResult craft_multi(const LabeledDataset& dataset, const BackdoorBundle& bundle,
                        double poison_fraction, double cover_fraction, uint64_t seed);

}  // namespace ssbt
