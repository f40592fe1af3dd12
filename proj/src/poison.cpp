#include "ssbt/poison.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "ssbt/errors.hpp"
#include "ssbt/rng.hpp"

namespace ssbt {

std::string to_string(SampleRole role) {
    switch (role) {
        case SampleRole::clean: return "clean";
        case SampleRole::poisoned: return "poisoned";
        case SampleRole::cover: return "cover";
    }
    return "?";
}

SampleRole sample_role_from_string(const std::string& s) {
    if (s == "clean") return SampleRole::clean;
    if (s == "poisoned") return SampleRole::poisoned;
    if (s == "cover") return SampleRole::cover;
    throw ConfigError("unknown sample role '" + s + "'");
}

size_t PoisonManifest::count(SampleRole role) const {
    size_t n = 0;
    for (const auto& r : records)
        if (r.role == role) n++;
    return n;
}

std::vector<size_t> PoisonManifest::indices_with_role(SampleRole role) const {
    std::vector<size_t> out;
    for (const auto& r : records)
        if (r.role == role) out.push_back(r.original_index);
    return out;
}

void PoisonManifest::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("PoisonManifest::save: cannot create " + path);
    out << "#ssbt-manifest v1 spec_hash=" << std::hex << spec_hash << std::dec
        << " seed=" << seed << " contrast=";
    for (size_t i = 0; i < contrast_classes.size(); ++i)
        out << (i ? "," : "") << contrast_classes[i];
    out << "\n";
    for (const auto& r : records)
        out << r.original_index << '\t' << to_string(r.role) << '\t' << r.original_label << '\t'
            << r.assigned_label << '\t' << std::hex << r.trigger_id << std::dec << '\n';
}

PoisonManifest PoisonManifest::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("PoisonManifest::load: cannot open " + path);
    std::string header;
    std::getline(in, header);
    if (header.rfind("#ssbt-manifest v1 ", 0) != 0)
        throw IoError("PoisonManifest::load: bad header in " + path);
    PoisonManifest m;
    std::istringstream hs(header.substr(18));
    std::string tok;
    while (hs >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "spec_hash")
            m.spec_hash = std::stoull(val, nullptr, 16);
        else if (key == "seed")
            m.seed = std::stoull(val);
        else if (key == "contrast" && !val.empty()) {
            std::istringstream cs(val);
            std::string c;
            while (std::getline(cs, c, ',')) m.contrast_classes.push_back(std::stoi(c));
        }
    }
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestRecord r;
        std::string role, trig;
        ls >> r.original_index >> role >> r.original_label >> r.assigned_label >> trig;
        if (!ls) throw IoError("PoisonManifest::load: bad record in " + path);
        r.role = sample_role_from_string(role);
        r.trigger_id = std::stoull(trig, nullptr, 16);
        m.records.push_back(r);
    }
    return m;
}

// ---------------------------------------------------------------------------

uint64_t BackdoorEntry::trigger_id() const {
    if (kind == AttackKind::cassock2) {
        if (!feature) throw DependencyError("BackdoorEntry: cassock2 without a feature trigger");
        return feature->content_hash();
    }
    // Identity of a patch trigger is its opaque form; training-time alpha is
    // a crafting detail, not a different trigger.
    return patch.with_alpha(1.0f).content_hash();
}

void BackdoorBundle::validate(int num_classes) const {
    if (entries.empty()) throw ConfigError("BackdoorBundle: empty bundle");
    std::set<uint64_t> ids;
    for (const auto& e : entries) {
        e.partition.validate(num_classes);
        if (!ids.insert(e.trigger_id()).second)
            throw ConfigError("BackdoorBundle: triggers must be pairwise distinct");
    }
}

namespace {

ImageTensor apply_backdoor(const BackdoorEntry& entry, const ImageTensor& image,
                           SampleRole role, uint64_t counter) {
    switch (entry.kind) {
        case AttackKind::baseline:
            return apply_patch(image, entry.patch.with_alpha(1.0f));
        case AttackKind::cassock1:
            return apply_patch(image, entry.patch.with_alpha(
                                          role == SampleRole::poisoned ? entry.alpha_train : 1.0f));
        case AttackKind::cassock2:
            if (!entry.feature)
                throw DependencyError("craft: cassock2 requires an extracted feature trigger");
            return mix(image, *entry.feature, entry.mixer, counter);
    }
    throw ConfigError("apply_backdoor: bad kind");
}

CraftResult craft_bundle(const LabeledDataset& dataset, const BackdoorBundle& bundle,
                         double poison_fraction, double cover_fraction, uint64_t seed,
                         uint64_t spec_hash) {
    bundle.validate(dataset.num_classes());
    if (!(poison_fraction > 0.0) || poison_fraction > 1.0 || !(cover_fraction > 0.0) ||
        cover_fraction > 1.0)
        throw ConfigError("craft: fractions must be in (0,1]");

    LabeledDataset merged = dataset;
    PoisonManifest manifest;
    manifest.spec_hash = spec_hash;
    manifest.seed = seed;
    manifest.records.resize(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i)
        manifest.records[i] = {i, SampleRole::clean, dataset.label(i), dataset.label(i), 0};

    std::set<int> contrast;
    std::vector<bool> used(dataset.size(), false);

    for (size_t b = 0; b < bundle.entries.size(); ++b) {
        const auto& entry = bundle.entries[b];
        const uint64_t trig_id = entry.trigger_id();
        const int target = entry.partition.target_class;
        contrast.insert(target);
        for (int s : entry.partition.source_classes) contrast.insert(s);

        auto draw = [&](int cls, double fraction, const char* stage) {
            std::vector<size_t> pool;
            for (size_t i : dataset.indices_of_class(cls))
                if (!used[i]) pool.push_back(i);
            auto picked = seeded_subsample(pool, fraction,
                                           derive_seed(seed, stage, (b << 16) | uint64_t(cls)));
            for (size_t i : picked) used[i] = true;
            return picked;
        };

        for (int s : entry.partition.source_classes) {
            for (size_t i : draw(s, poison_fraction, "craft.poison")) {
                merged.replace(i, apply_backdoor(entry, dataset.image(i), SampleRole::poisoned, i),
                               target);
                manifest.records[i] = {i, SampleRole::poisoned, dataset.label(i), target, trig_id};
            }
        }
        for (int c : entry.partition.non_source(dataset.num_classes())) {
            for (size_t i : draw(c, cover_fraction, "craft.cover")) {
                merged.replace(i, apply_backdoor(entry, dataset.image(i), SampleRole::cover, i),
                               dataset.label(i));
                manifest.records[i] = {i, SampleRole::cover, dataset.label(i), dataset.label(i),
                                       trig_id};
            }
        }
    }

    manifest.contrast_classes.assign(contrast.begin(), contrast.end());
    return {std::move(merged), std::move(manifest)};
}

}  // namespace

CraftResult craft(const LabeledDataset& dataset, const AttackSpec& spec,
                  const FeatureTrigger* feature_trigger) {
    spec.validate(dataset.num_classes());
    if (spec.kind == AttackKind::cassock2 && feature_trigger == nullptr)
        throw DependencyError("craft: cassock2 requires an extracted feature trigger");

    BackdoorEntry entry;
    entry.kind = spec.kind;
    entry.partition = spec.partition;
    entry.alpha_train = spec.patch.alpha_train;
    if (spec.kind == AttackKind::cassock2) {
        entry.feature = *feature_trigger;
        entry.mixer.kind = mixer_kind_from_string(spec.feature.mixer);
        entry.mixer.min_overlap = spec.feature.min_overlap;
        entry.mixer.quantile = spec.feature.quantile;
        entry.mixer.seed = derive_seed(spec.seed, "craft.mixer");
    } else {
        entry.patch = PatchTrigger::default_for(dataset.height(), dataset.width(),
                                                dataset.channels(), spec.patch);
    }
    BackdoorBundle bundle;
    bundle.entries.push_back(std::move(entry));
    return craft_bundle(dataset, bundle, spec.poison_fraction, spec.cover_fraction, spec.seed,
                        spec.hash());
}

CraftResult craft_multi(const LabeledDataset& dataset, const BackdoorBundle& bundle,
                        double poison_fraction, double cover_fraction, uint64_t seed) {
    uint64_t h = fnv1a("bundle");
    for (const auto& e : bundle.entries) {
        uint64_t id = e.trigger_id();
        h = fnv1a(&id, sizeof(id), h);
    }
    return craft_bundle(dataset, bundle, poison_fraction, cover_fraction, seed, h);
}

}  // namespace ssbt
