#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "ssbt/poison.hpp"
#include "ssbt/rng.hpp"
#include "ssbt/synth.hpp"

using namespace ssbt;

namespace {

// Balanced 10-class set: n_per_class samples each.
LabeledDataset balanced_dataset(int n_per_class, uint64_t seed) {
    Rng rng(seed);
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    for (int c = 0; c < 10; ++c)
        for (int i = 0; i < n_per_class; ++i) {
            ImageTensor img(10, 10, 1);
            for (int y = 0; y < 10; ++y)
                for (int x = 0; x < 10; ++x) img.set(y, x, 0, 0.9f * rng.next_float());
            images.push_back(std::move(img));
            labels.push_back(c);
        }
    return LabeledDataset(std::move(images), labels, 10);
}

AttackSpec base_spec(AttackKind kind) {
    AttackSpec spec;
    spec.kind = kind;
    spec.partition = {{0}, 9};
    spec.poison_fraction = 0.05;
    spec.cover_fraction = 0.05;
    spec.seed = 17;
    return spec;
}

FeatureTrigger toy_trigger(int h, int w, int c) {
    FeatureTrigger t;
    t.height = h;
    t.width = w;
    t.channels = c;
    t.mask.assign(size_t(h) * w * c, 0.0f);
    for (int y = 0; y < h / 2; ++y)
        for (int x = 0; x < w / 2; ++x) t.mask[size_t(y) * w + x] = 1.0f;
    t.donors.push_back(ImageTensor::constant(h, w, c, 0.7f));
    return t;
}

}  // namespace

TEST_CASE("craft counts: 5%/5% on a balanced 10k set with one source class") {
    auto data = balanced_dataset(1000, 1);  // 10 classes x 1000
    auto spec = base_spec(AttackKind::baseline);
    auto [merged, manifest] = craft(data, spec);

    CHECK(merged.size() == data.size());  // in-place replacement
    CHECK(manifest.records.size() == data.size());
    CHECK(manifest.count(SampleRole::poisoned) == 50);   // ceil(0.05*1000)
    CHECK(manifest.count(SampleRole::cover) == 400);     // 8 non-source classes x 50
    CHECK(manifest.count(SampleRole::clean) == data.size() - 450);
}

TEST_CASE("manifest invariants: labels per role") {
    auto data = balanced_dataset(200, 2);
    auto spec = base_spec(AttackKind::cassock1);
    spec.partition = {{0, 3}, 9};
    auto [merged, manifest] = craft(data, spec);

    for (const auto& r : manifest.records) {
        switch (r.role) {
            case SampleRole::poisoned:
                CHECK((r.original_label == 0 || r.original_label == 3));
                CHECK(r.assigned_label == 9);
                CHECK(r.trigger_id != 0);
                break;
            case SampleRole::cover:
                CHECK(r.original_label != 0);
                CHECK(r.original_label != 3);
                CHECK(r.original_label != 9);  // target class is never cover
                CHECK(r.assigned_label == r.original_label);
                CHECK(r.trigger_id != 0);
                break;
            case SampleRole::clean:
                CHECK(r.assigned_label == r.original_label);
                CHECK(r.trigger_id == 0);
                break;
        }
        CHECK(merged.label(r.original_index) == r.assigned_label);
    }
    CHECK(manifest.contrast_classes == std::vector<int>{0, 3, 9});
}

TEST_CASE("baseline: poisoned and cover images carry the identical opaque patch") {
    auto data = balanced_dataset(100, 3);
    auto spec = base_spec(AttackKind::baseline);
    auto [merged, manifest] = craft(data, spec);

    auto patch = PatchTrigger::default_for(10, 10, 1, spec.patch);
    for (const auto& r : manifest.records) {
        if (r.role == SampleRole::clean) continue;
        auto expected = apply_patch(data.image(r.original_index), patch);  // alpha = 1
        CHECK(merged.image(r.original_index) == expected);
    }
}

TEST_CASE("cassock1: poisoned pixel deviation bounded by the blend formula") {
    auto data = balanced_dataset(100, 4);
    auto spec = base_spec(AttackKind::cassock1);
    spec.patch.alpha_train = 0.5f;
    auto [merged, manifest] = craft(data, spec);

    auto patch = PatchTrigger::default_for(10, 10, 1, spec.patch);
    for (const auto& r : manifest.records) {
        if (r.role != SampleRole::poisoned) continue;
        const auto& orig = data.image(r.original_index);
        const auto& out = merged.image(r.original_index);
        for (int y = 0; y < 10; ++y)
            for (int x = 0; x < 10; ++x) {
                float diff = std::fabs(out.at(y, x, 0) - orig.at(y, x, 0));
                bool inside = y >= patch.row && y < patch.row + patch.pattern.height() &&
                              x >= patch.col && x < patch.col + patch.pattern.width();
                if (!inside) {
                    CHECK(diff == 0.0f);
                } else {
                    // |out - orig| = alpha * |pattern - orig| <= alpha * max gap
                    float bound = spec.patch.alpha_train *
                                  std::fabs(patch.pattern.at(y - patch.row, x - patch.col, 0) -
                                            orig.at(y, x, 0));
                    CHECK(diff <= bound + 1e-6f);
                }
            }
    }
    // Cover samples use the opaque patch.
    for (const auto& r : manifest.records) {
        if (r.role != SampleRole::cover) continue;
        const auto& out = merged.image(r.original_index);
        CHECK(out.at(9, 9, 0) == 1.0f);
    }
}

TEST_CASE("cassock2 requires an extracted feature trigger") {
    auto data = balanced_dataset(50, 5);
    auto spec = base_spec(AttackKind::cassock2);
    CHECK_THROWS_AS(craft(data, spec), DependencyError);

    auto trigger = toy_trigger(10, 10, 1);
    auto [merged, manifest] = craft(data, spec, &trigger);
    CHECK(manifest.count(SampleRole::poisoned) > 0);
    // Poisoned images are mixer composites, labels moved to T.
    for (const auto& r : manifest.records)
        if (r.role == SampleRole::poisoned) CHECK(merged.label(r.original_index) == 9);
}

TEST_CASE("craft determinism: same seed reproduces a bit-identical merged set") {
    auto data = balanced_dataset(120, 6);
    auto spec = base_spec(AttackKind::cassock1);
    auto a = craft(data, spec);
    auto b = craft(data, spec);
    CHECK(a.manifest == b.manifest);
    REQUIRE(a.merged.size() == b.merged.size());
    for (size_t i = 0; i < a.merged.size(); ++i) {
        CHECK(a.merged.image(i) == b.merged.image(i));
        CHECK(a.merged.label(i) == b.merged.label(i));
    }
    spec.seed = 18;
    auto c = craft(data, spec);
    CHECK(!(a.manifest == c.manifest));
}

TEST_CASE("clean records are pixelwise equal to their originals") {
    auto data = balanced_dataset(80, 7);
    auto spec = base_spec(AttackKind::baseline);
    auto [merged, manifest] = craft(data, spec);
    for (const auto& r : manifest.records)
        if (r.role == SampleRole::clean)
            CHECK(merged.image(r.original_index) == data.image(r.original_index));
}

TEST_CASE("manifest file round trip") {
    auto data = balanced_dataset(60, 8);
    auto spec = base_spec(AttackKind::baseline);
    auto [merged, manifest] = craft(data, spec);
    auto path = (std::filesystem::temp_directory_path() / "ssbt_manifest.tsv").string();
    manifest.save(path);
    auto back = PoisonManifest::load(path);
    CHECK(back == manifest);
    std::filesystem::remove(path);
}

TEST_CASE("craft_multi: n=1 bundle matches craft output") {
    auto data = balanced_dataset(150, 9);
    auto spec = base_spec(AttackKind::baseline);

    BackdoorEntry entry;
    entry.kind = spec.kind;
    entry.partition = spec.partition;
    entry.patch = PatchTrigger::default_for(10, 10, 1, spec.patch);
    entry.alpha_train = spec.patch.alpha_train;
    BackdoorBundle bundle;
    bundle.entries.push_back(entry);

    auto single = craft(data, spec);
    auto multi = craft_multi(data, bundle, spec.poison_fraction, spec.cover_fraction, spec.seed);
    CHECK(single.manifest.records == multi.manifest.records);
    for (size_t i = 0; i < data.size(); ++i)
        CHECK(single.merged.image(i) == multi.merged.image(i));
}

TEST_CASE("craft_multi: two backdoors, distinct trigger ids, disjoint draws") {
    auto data = balanced_dataset(200, 10);
    auto spec = base_spec(AttackKind::baseline);

    BackdoorBundle bundle;
    for (int i = 0; i < 2; ++i) {
        BackdoorEntry e;
        e.kind = AttackKind::baseline;
        e.partition = ClassPartition{{i}, 9};
        PatchTriggerParams p;
        p.placement = i == 0 ? "bottom_right" : "top_left";
        e.patch = PatchTrigger::default_for(10, 10, 1, p);
        bundle.entries.push_back(e);
    }

    auto [merged, manifest] = craft_multi(data, bundle, 0.1, 0.05, 33);
    std::set<uint64_t> ids;
    for (const auto& r : manifest.records)
        if (r.role != SampleRole::clean) ids.insert(r.trigger_id);
    CHECK(ids.size() == 2);

    // No sample serves two backdoors: record count equals distinct indices.
    std::set<size_t> touched;
    for (const auto& r : manifest.records)
        if (r.role != SampleRole::clean) CHECK(touched.insert(r.original_index).second);
}

TEST_CASE("craft_multi rejects duplicate triggers") {
    auto data = balanced_dataset(50, 11);
    BackdoorBundle bundle;
    for (int i = 0; i < 2; ++i) {
        BackdoorEntry e;
        e.kind = AttackKind::baseline;
        e.partition = ClassPartition{{i}, 9};
        e.patch = PatchTrigger::default_for(10, 10, 1, PatchTriggerParams{});
        bundle.entries.push_back(e);
    }
    CHECK_THROWS_AS(craft_multi(data, bundle, 0.05, 0.05, 1), ConfigError);
}

TEST_CASE("craft_multi bundle arity is reflected in the manifest") {
    auto data = balanced_dataset(100, 12);
    BackdoorBundle bundle;
    static const char* corners[3] = {"bottom_right", "top_left", "top_right"};
    for (int i = 0; i < 3; ++i) {
        BackdoorEntry e;
        e.kind = AttackKind::cassock1;
        e.partition = ClassPartition{{i}, 9};
        PatchTriggerParams p;
        p.placement = corners[i];
        e.patch = PatchTrigger::default_for(10, 10, 1, p);
        bundle.entries.push_back(e);
    }
    auto [merged, manifest] = craft_multi(data, bundle, 0.1, 0.05, 44);
    std::set<uint64_t> ids;
    for (const auto& r : manifest.records)
        if (r.trigger_id != 0) ids.insert(r.trigger_id);
    CHECK(ids.size() == 3);
    CHECK(manifest.contrast_classes == std::vector<int>{0, 1, 2, 9});
}
