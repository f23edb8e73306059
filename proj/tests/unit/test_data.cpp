#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "fairfed/data.hpp"
#include "fairfed/errors.hpp"
#include "fairfed/rng.hpp"

using namespace fairfed;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("synthetic generation") {
    SyntheticSpec spec;
    SUBCASE("zero rotation is the identity; 45 degrees rotates every sample") {
        SyntheticSpec unrotated = spec;
        unrotated.rotation_degrees = {0.0, 0.0, 0.0};
        auto rotated = gen_synthetic(spec, 123);
        auto plain = gen_synthetic(unrotated, 123);
        // Same substreams, so client 2's features differ only by the rotation.
        const double c = std::cos(M_PI / 4.0), s = std::sin(M_PI / 4.0);
        const auto& a = plain[2].train.features;
        const auto& b = rotated[2].train.features;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            CHECK(b(i, 0) == doctest::Approx(c * a(i, 0) - s * a(i, 1)).epsilon(1e-12));
            CHECK(b(i, 1) == doctest::Approx(s * a(i, 0) + c * a(i, 1)).epsilon(1e-12));
        }
        // Clients 0 and 1 are untouched by the rotation flag.
        CHECK((plain[0].train.features - rotated[0].train.features).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("rotation preserves Euclidean norms") {
        SyntheticSpec unrotated = spec;
        unrotated.rotation_degrees = {0.0, 0.0, 0.0};
        auto rotated = gen_synthetic(spec, 7);
        auto plain = gen_synthetic(unrotated, 7);
        for (Eigen::Index i = 0; i < plain[2].train.features.rows(); ++i)
            CHECK(std::abs(plain[2].train.features.row(i).norm() -
                           rotated[2].train.features.row(i).norm()) < 1e-12);
    }
    SUBCASE("client 0 empirical class-conditional means concentrate near [2,2]") {
        // sigma = 1, n = 50 per class: allow 3/sqrt(50) per coordinate.
        auto ds = gen_synthetic(spec, 2024);
        Eigen::Vector2d sum = Eigen::Vector2d::Zero();
        int n = 0;
        for (const Batch* b : {&ds[0].train, &ds[0].validation, &ds[0].test}) {
            for (int i = 0; i < b->size(); ++i) {
                if (b->labels[static_cast<std::size_t>(i)] == 1) {
                    sum += b->features.row(i).transpose();
                    n++;
                }
            }
        }
        CHECK(n == 50);
        const Eigen::Vector2d mean = sum / n;
        CHECK(std::abs(mean[0] - 2.0) < 3.0 / std::sqrt(50.0));
        CHECK(std::abs(mean[1] - 2.0) < 3.0 / std::sqrt(50.0));
    }
    SUBCASE("balanced classes and deterministic replay") {
        auto a = gen_synthetic(spec, 5);
        auto b = gen_synthetic(spec, 5);
        for (int k = 0; k < 3; ++k) {
            CHECK((a[k].train.features - b[k].train.features).cwiseAbs().maxCoeff() == 0.0);
            CHECK(a[k].train.labels == b[k].train.labels);
            int pos = 0, total = 0;
            for (const Batch* batch : {&a[k].train, &a[k].validation, &a[k].test}) {
                for (int y : batch->labels) pos += y;
                total += batch->size();
            }
            CHECK(total == 100);
            CHECK(pos == 50);
        }
    }
}

TEST_CASE("IDX loader") {
    SUBCASE("hand-crafted 2x2 image decodes to [0,1,0,1]") {
        const std::string img = temp_path("idx_img_test");
        const std::string lab = temp_path("idx_lab_test");
        write_idx_images(img, {0, 255, 0, 255}, 1, 2, 2);
        write_idx_labels(lab, {3});
        IdxData data = load_idx(img, lab);
        CHECK(data.rows == 2);
        CHECK(data.cols == 2);
        REQUIRE(data.labels.size() == 1);
        CHECK(data.labels[0] == 3);
        CHECK(data.features(0, 0) == 0.0);
        CHECK(data.features(0, 1) == 1.0);
        CHECK(data.features(0, 2) == 0.0);
        CHECK(data.features(0, 3) == 1.0);
    }
    SUBCASE("gzip round-trip reproduces byte-derived features exactly") {
        const std::string img = temp_path("idx_img_rt.gz");
        const std::string lab = temp_path("idx_lab_rt.gz");
        std::mt19937_64 rng(1);
        std::uniform_int_distribution<int> byte(0, 255);
        std::vector<std::uint8_t> pixels(4 * 9);
        for (auto& p : pixels) p = static_cast<std::uint8_t>(byte(rng));
        write_idx_images(img, pixels, 4, 3, 3);
        write_idx_labels(lab, {0, 1, 2, 1});
        IdxData data = load_idx(img, lab);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 9; ++j)
                CHECK(data.features(i, j) == pixels[static_cast<std::size_t>(i * 9 + j)] / 255.0);
    }
    SUBCASE("count mismatch is an ingestion error") {
        const std::string img = temp_path("idx_img_mm");
        const std::string lab = temp_path("idx_lab_mm");
        write_idx_images(img, {0, 0, 0, 0}, 1, 2, 2);
        write_idx_labels(lab, {0, 1});
        CHECK_THROWS_AS(load_idx(img, lab), IngestError);
    }
    SUBCASE("empty file is an ingestion error") {
        const std::string img = temp_path("idx_img_empty");
        std::ofstream(img).close();
        const std::string lab = temp_path("idx_lab_empty2");
        write_idx_labels(lab, {0});
        CHECK_THROWS_AS(load_idx(img, lab), IngestError);
    }
    SUBCASE("bad magic is an ingestion error") {
        const std::string img = temp_path("idx_img_badmagic");
        std::ofstream out(img, std::ios::binary);
        const char bytes[8] = {0, 0, 8, 2, 0, 0, 0, 1};
        out.write(bytes, 8);
        out.close();
        const std::string lab = temp_path("idx_lab_badmagic");
        write_idx_labels(lab, {0});
        CHECK_THROWS_AS(load_idx(img, lab), IngestError);
    }
    SUBCASE("truncated pixel data is an ingestion error") {
        const std::string img = temp_path("idx_img_trunc");
        write_idx_images(img, std::vector<std::uint8_t>(8, 7), 2, 2, 2);
        // Chop the last 3 bytes off.
        std::filesystem::resize_file(img, std::filesystem::file_size(img) - 3);
        const std::string lab = temp_path("idx_lab_trunc");
        write_idx_labels(lab, {0, 1});
        CHECK_THROWS_AS(load_idx(img, lab), IngestError);
    }
}

TEST_CASE("dirichlet_split") {
    SUBCASE("partition is exhaustive and disjoint for random draws") {
        std::mt19937_64 rng(9);
        std::uniform_int_distribution<int> kd(2, 12);
        std::uniform_real_distribution<double> ad(0.05, 100.0);
        std::uniform_int_distribution<int> cd(2, 10);
        for (int trial = 0; trial < 50; ++trial) {
            const int k = kd(rng), classes = cd(rng);
            std::vector<int> labels;
            std::uniform_int_distribution<int> lab(0, classes - 1);
            for (int i = 0; i < 200 + trial; ++i) labels.push_back(lab(rng));
            for (int c = 0; c < classes; ++c) labels.push_back(c);  // every class non-empty
            auto part = dirichlet_split(labels, k, ad(rng), trial);
            REQUIRE(part.assignment.size() == labels.size());
            for (int a : part.assignment) {
                CHECK(a >= 0);
                CHECK(a < k);
            }
        }
    }
    SUBCASE("alpha = 2000 is near-uniform across 10 clients and 62 classes") {
        std::vector<int> labels;
        for (int c = 0; c < 62; ++c)
            for (int i = 0; i < 400; ++i) labels.push_back(c);
        auto part = dirichlet_split(labels, 10, 2000.0, 0);
        std::vector<std::vector<int>> counts(62, std::vector<int>(10, 0));
        for (std::size_t i = 0; i < labels.size(); ++i)
            counts[static_cast<std::size_t>(labels[i])]
                  [static_cast<std::size_t>(part.assignment[i])]++;
        for (int c = 0; c < 62; ++c)
            for (int k = 0; k < 10; ++k)
                CHECK(std::abs(counts[c][k] / 400.0 - 0.1) < 0.05);
    }
    SUBCASE("alpha = 0.1 concentrates at least one class on one client") {
        std::vector<int> labels;
        for (int c = 0; c < 5; ++c)
            for (int i = 0; i < 100; ++i) labels.push_back(c);
        auto part = dirichlet_split(labels, 5, 0.1, 3);
        bool concentrated = false;
        for (int c = 0; c < 5; ++c) {
            std::vector<int> counts(5, 0);
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (labels[i] == c) counts[static_cast<std::size_t>(part.assignment[i])]++;
            for (int k = 0; k < 5; ++k)
                if (counts[static_cast<std::size_t>(k)] > 50) concentrated = true;
        }
        CHECK(concentrated);
    }
    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(dirichlet_split({0, 1}, 1, 1.0, 0), ConfigError);
        CHECK_THROWS_AS(dirichlet_split({0, 1}, 3, 0.0, 0), ConfigError);
    }
}

TEST_CASE("split_train_val_test") {
    Batch raw;
    raw.features = Eigen::MatrixXd::Random(9, 2);
    raw.labels = {0, 1, 0, 1, 0, 1, 0, 1, 0};
    SUBCASE("thirds of 9 give sizes 3/3/3") {
        auto ds = split_train_val_test(0, raw, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 0);
        CHECK(ds.train.size() == 3);
        CHECK(ds.validation.size() == 3);
        CHECK(ds.test.size() == 3);
    }
    SUBCASE("same seed gives identical splits; sizes always sum to n") {
        auto a = split_train_val_test(1, raw, {0.7, 0.15, 0.15}, 42);
        auto b = split_train_val_test(1, raw, {0.7, 0.15, 0.15}, 42);
        CHECK((a.train.features - b.train.features).cwiseAbs().maxCoeff() == 0.0);
        CHECK(a.validation.labels == b.validation.labels);
        CHECK(a.train.size() + a.validation.size() + a.test.size() == 9);
    }
    SUBCASE("splits are disjoint as a multiset decomposition") {
        auto ds = split_train_val_test(0, raw, {0.5, 0.25, 0.25}, 7);
        std::multiset<double> original, recombined;
        for (Eigen::Index i = 0; i < raw.features.rows(); ++i) original.insert(raw.features(i, 0));
        for (const Batch* b : {&ds.train, &ds.validation, &ds.test})
            for (Eigen::Index i = 0; i < b->features.rows(); ++i)
                recombined.insert(b->features(i, 0));
        CHECK(original == recombined);
    }
    SUBCASE("too-small allocation is a configuration error") {
        Batch tiny;
        tiny.features = Eigen::MatrixXd::Random(2, 2);
        tiny.labels = {0, 1};
        CHECK_THROWS_AS(split_train_val_test(0, tiny, {0.7, 0.15, 0.15}, 0), ConfigError);
    }
    SUBCASE("fractions must be positive and sum to one") {
        CHECK_THROWS_AS(split_train_val_test(0, raw, {0.5, 0.5, 0.5}, 0), ConfigError);
        CHECK_THROWS_AS(split_train_val_test(0, raw, {1.0, -0.1, 0.1}, 0), ConfigError);
    }
}
