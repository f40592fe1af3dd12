#include "ssbt/attack.hpp"

#include <sstream>

#include "ssbt/errors.hpp"
#include "ssbt/rng.hpp"

namespace ssbt {

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::baseline: return "baseline";
        case AttackKind::cassock1: return "cassock1";
        case AttackKind::cassock2: return "cassock2";
    }
    return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "baseline") return AttackKind::baseline;
    if (s == "cassock1") return AttackKind::cassock1;
    if (s == "cassock2") return AttackKind::cassock2;
    throw ConfigError("unknown attack kind '" + s + "'");
}

void AttackSpec::validate(int num_classes) const {
    partition.validate(num_classes);
    if (!(poison_fraction > 0.0) || poison_fraction > 1.0)
        throw ConfigError("AttackSpec: poison_fraction must be in (0,1]");
    if (!(cover_fraction > 0.0) || cover_fraction > 1.0)
        throw ConfigError("AttackSpec: cover_fraction must be in (0,1]");
    if (patch.alpha_train < 0.0f || patch.alpha_train > 1.0f)
        throw ConfigError("AttackSpec: alpha_train must be in [0,1]");
    if (patch.area_fraction <= 0.0 || patch.area_fraction > 0.25)
        throw ConfigError("AttackSpec: patch area_fraction out of range");
    if (feature.mixer != "half_concat" && feature.mixer != "crop_and_paste")
        throw ConfigError("AttackSpec: unknown mixer '" + feature.mixer + "'");
    if (feature.min_overlap <= 0.0 || feature.min_overlap > 0.5)
        throw ConfigError("AttackSpec: min_overlap must be in (0, 0.5]");
}

uint64_t AttackSpec::hash() const {
    std::ostringstream os;
    os << to_string(kind) << '|';
    for (int s : partition.source_classes) os << s << ',';
    os << '|' << partition.target_class << '|' << poison_fraction << '|' << cover_fraction << '|'
       << patch.area_fraction << '|' << patch.alpha_train << '|' << patch.pattern_value << '|'
       << patch.placement << '|' << feature.lambda << '|' << feature.noise_sigma << '|'
       << feature.steps << '|' << feature.learning_rate << '|' << feature.num_donors << '|'
       << feature.confidence_floor << '|' << feature.mixer << '|' << feature.min_overlap << '|'
       << feature.quantile << '|' << seed;
    return fnv1a(os.str());
}

}  // namespace ssbt
