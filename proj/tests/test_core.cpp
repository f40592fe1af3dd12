#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ssbt/dataset.hpp"
#include "ssbt/partition.hpp"
#include "ssbt/rng.hpp"
#include "ssbt/synth.hpp"

using namespace ssbt;
namespace fs = std::filesystem;

namespace {

LabeledDataset tiny_dataset(const std::vector<int>& labels, int num_classes) {
    std::vector<ImageTensor> images;
    for (size_t i = 0; i < labels.size(); ++i)
        images.push_back(ImageTensor::constant(4, 4, 1, float(i % 5) / 8.0f));
    return LabeledDataset(std::move(images), labels, num_classes);
}

}  // namespace

TEST_CASE("ImageTensor rejects out-of-range and non-finite values") {
    CHECK_THROWS_AS(ImageTensor(2, 2, 1, {0.0f, 0.5f, 1.2f, 0.1f}), ConfigError);
    CHECK_THROWS_AS(ImageTensor(2, 2, 1, {0.0f, -0.1f, 0.2f, 0.1f}), ConfigError);
    CHECK_THROWS_AS(ImageTensor(2, 2, 1, {0.0f, std::nanf(""), 0.2f, 0.1f}), ConfigError);
    CHECK_THROWS_AS(ImageTensor(2, 2, 2), ConfigError);  // channels must be 1 or 3

    ImageTensor ok(2, 3, 1, {0.0f, 0.25f, 0.5f, 0.75f, 1.0f, 0.1f});
    CHECK(ok.at(0, 1, 0) == doctest::Approx(0.25f));
    CHECK(ok.at(1, 2, 0) == doctest::Approx(0.1f));
    CHECK_THROWS_AS(ok.set(0, 0, 0, 1.5f), ConfigError);
}

TEST_CASE("LabeledDataset validates labels and shapes") {
    CHECK_THROWS_AS(tiny_dataset({0, 1, 7}, 3), ConfigError);
    auto ds = tiny_dataset({0, 1, 2, 0}, 3);
    CHECK(ds.size() == 4);
    CHECK(ds.indices_of_class(0) == std::vector<size_t>{0, 3});
}

TEST_CASE("partition_indices splits by label with deterministic order") {
    // 10-class dataset, S={0}, T=9, labels [0,1,9,0].
    auto ds = tiny_dataset({0, 1, 9, 0}, 10);
    ClassPartition part{{0}, 9};
    auto idx = partition_indices(ds, part);
    CHECK(idx.source == std::vector<size_t>{0, 3});
    CHECK(idx.non_source == std::vector<size_t>{1});
    CHECK(idx.target == std::vector<size_t>{2});
}

TEST_CASE("partition_indices with S = all classes except T has empty non-source") {
    auto ds = tiny_dataset({0, 1, 2, 3}, 4);
    ClassPartition part{{0, 1, 2}, 3};
    auto idx = partition_indices(ds, part);
    CHECK(idx.non_source.empty());
    CHECK(idx.source.size() == 3);
    CHECK(idx.target.size() == 1);
}

TEST_CASE("partition_indices lists are disjoint and cover the dataset") {
    auto ds = make_blobs_task(300, 6, 8, 8, 1, 42);
    ClassPartition part{{1, 4}, 0};
    auto idx = partition_indices(ds, part);
    std::set<size_t> seen;
    for (auto v : {idx.source, idx.non_source, idx.target})
        for (size_t i : v) CHECK(seen.insert(i).second);
    CHECK(seen.size() == ds.size());
}

TEST_CASE("partition validation rejects bad class sets") {
    auto ds = tiny_dataset({0, 1, 2}, 3);
    CHECK_THROWS_AS(partition_indices(ds, ClassPartition{{5}, 1}), ConfigError);
    CHECK_THROWS_AS(partition_indices(ds, ClassPartition{{1}, 1}), ConfigError);
    CHECK_THROWS_AS(partition_indices(ds, ClassPartition{{}, 1}), ConfigError);
    CHECK_THROWS_AS(partition_indices(ds, ClassPartition{{0}, 9}), ConfigError);
}

TEST_CASE("partition_indices source count equals an independent label count") {
    // Oracle: plain label pass, no partition machinery.
    auto ds = make_blobs_task(500, 10, 8, 8, 1, 7);
    ClassPartition part{{0}, 1};
    size_t oracle = 0;
    for (size_t i = 0; i < ds.size(); ++i)
        if (ds.label(i) == 0) oracle++;
    auto idx = partition_indices(ds, part);
    CHECK(idx.source.size() == oracle);
}

TEST_CASE("seeded_subsample sizes, determinism and subset property") {
    std::vector<size_t> pool(100);
    for (size_t i = 0; i < 100; ++i) pool[i] = i * 3;

    auto s1 = seeded_subsample(pool, 0.05, 7);
    CHECK(s1.size() == 5);  // ceil(0.05 * 100)

    auto s2 = seeded_subsample(pool, 0.05, 7);
    CHECK(s1 == s2);

    auto s3 = seeded_subsample(pool, 0.05, 8);
    CHECK(s1 != s3);  // different seed, overwhelmingly different draw

    // fraction 1.0 returns the whole set.
    auto all = seeded_subsample(pool, 1.0, 3);
    CHECK(std::set<size_t>(all.begin(), all.end()) == std::set<size_t>(pool.begin(), pool.end()));

    // subset property over many draws
    for (uint64_t seed = 0; seed < 20; ++seed) {
        auto s = seeded_subsample(pool, 0.31, seed);
        CHECK(s.size() == 31);
        std::set<size_t> uniq(s.begin(), s.end());
        CHECK(uniq.size() == s.size());
        for (size_t v : s) CHECK(std::find(pool.begin(), pool.end(), v) != pool.end());
    }

    CHECK(seeded_subsample({}, 0.5, 1).empty());
    CHECK_THROWS_AS(seeded_subsample(pool, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(seeded_subsample(pool, 1.5, 1), ConfigError);
}

TEST_CASE("derive_seed separates stages and counters") {
    uint64_t master = 99;
    CHECK(derive_seed(master, "a") != derive_seed(master, "b"));
    CHECK(derive_seed(master, "a", 0) != derive_seed(master, "a", 1));
    CHECK(derive_seed(master, "a", 3) == derive_seed(master, "a", 3));
}

TEST_CASE("mnist idx round trip") {
    auto ds = make_blobs_task(40, 10, 28, 28, 1, 5);
    fs::path dir = fs::temp_directory_path() / "ssbt_idx_test";
    fs::remove_all(dir);
    write_mnist(dir.string(), "train", ds);
    auto back = load_mnist(dir.string(), "train");
    REQUIRE(back.size() == ds.size());
    CHECK(back.height() == 28);
    CHECK(back.num_classes() == 10);
    for (size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.label(i) == ds.label(i));
        // 8-bit quantization bound
        CHECK(std::fabs(back.image(i).at(14, 14, 0) - ds.image(i).at(14, 14, 0)) <= 0.5f / 255.0f + 1e-6f);
    }
    fs::remove_all(dir);
}

TEST_CASE("cifar10 binary loader reads the canonical record layout") {
    fs::path dir = fs::temp_directory_path() / "ssbt_cifar_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    // Two records, hand-built.
    std::ofstream out(dir / "test_batch.bin", std::ios::binary);
    for (int rec = 0; rec < 2; ++rec) {
        unsigned char label = rec == 0 ? 3 : 8;
        out.write(reinterpret_cast<char*>(&label), 1);
        for (int i = 0; i < 3072; ++i) {
            unsigned char v = static_cast<unsigned char>((i + rec) % 256);
            out.write(reinterpret_cast<char*>(&v), 1);
        }
    }
    out.close();
    auto ds = load_cifar10(dir.string(), "test");
    REQUIRE(ds.size() == 2);
    CHECK(ds.label(0) == 3);
    CHECK(ds.label(1) == 8);
    CHECK(ds.image(0).channels() == 3);
    // Record 0, red plane, first pixel = 0/255; green plane starts at 1024.
    CHECK(ds.image(0).at(0, 0, 0) == doctest::Approx(0.0f));
    CHECK(ds.image(0).at(0, 0, 1) == doctest::Approx(0.0f));  // 1024 % 256 == 0
    CHECK(ds.image(0).at(0, 1, 0) == doctest::Approx(1.0f / 255.0f));
    fs::remove_all(dir);
}

TEST_CASE("image directory round trip") {
    auto ds = make_blobs_task(30, 4, 10, 12, 3, 11);
    fs::path dir = fs::temp_directory_path() / "ssbt_dir_test";
    fs::remove_all(dir);
    write_image_dir(dir.string(), "train", ds);
    auto back = load_image_dir(dir.string(), "train");
    REQUIRE(back.size() == ds.size());
    CHECK(back.num_classes() == 4);
    CHECK(back.channels() == 3);
    auto counts = back.class_counts();
    CHECK(counts == ds.class_counts());
    fs::remove_all(dir);
}

TEST_CASE("shapes task is balanced-ish and share one shape") {
    ShapeTaskParams p;
    p.n = 400;
    p.seed = 3;
    auto ds = make_shapes(p);
    CHECK(ds.size() == 400);
    CHECK(ds.num_classes() == 10);
    auto counts = ds.class_counts();
    for (int c : counts) CHECK(c > 10);
    // Deterministic generation
    auto ds2 = make_shapes(p);
    CHECK(ds2.image(17) == ds.image(17));
}
