#include <doctest.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <sstream>

#include "fairfed/errors.hpp"
#include "fairfed/federation.hpp"
#include "fairfed/metrics.hpp"

using namespace fairfed;

TEST_CASE("balanced_accuracy") {
    SUBCASE("perfect predictions") {
        CHECK(balanced_accuracy({0, 1, 2, 0}, {0, 1, 2, 0}, 3) == doctest::Approx(1.0));
    }
    SUBCASE("all-zero predictor on a balanced binary set scores 0.5") {
        CHECK(balanced_accuracy({0, 0, 0, 0}, {0, 0, 1, 1}, 2) == doctest::Approx(0.5));
    }
    SUBCASE("per-class recalls averaged: [1.0, 0.5] -> 0.75") {
        // class 0: both right; class 1: one of two right.
        CHECK(balanced_accuracy({0, 0, 1, 0}, {0, 0, 1, 1}, 2) == doctest::Approx(0.75));
    }
    SUBCASE("absent classes are skipped, not counted as zero recall") {
        CHECK(balanced_accuracy({1, 1}, {1, 1}, 5) == doctest::Approx(1.0));
    }
    SUBCASE("invariant to duplicating the evaluation set") {
        std::vector<int> preds = {0, 1, 1, 0, 1};
        std::vector<int> labels = {0, 1, 0, 0, 1};
        double once = balanced_accuracy(preds, labels, 2);
        std::vector<int> preds2 = preds, labels2 = labels;
        preds2.insert(preds2.end(), preds.begin(), preds.end());
        labels2.insert(labels2.end(), labels.begin(), labels.end());
        CHECK(balanced_accuracy(preds2, labels2, 2) == doctest::Approx(once));
    }
    SUBCASE("size mismatch rejected") {
        CHECK_THROWS_AS(balanced_accuracy({0}, {0, 1}, 2), UsageError);
    }
}

TEST_CASE("summarize_round") {
    std::vector<double> losses = {0.5, 0.8, 0.2};
    std::vector<double> gaps = {0.1, 0.4, 0.0};
    std::vector<double> weights = {1.0, 1.2, 0.8};
    auto rec = summarize_round(7, losses, gaps, weights, 0.9, 2.0, 0.4);
    CHECK(rec.round == 7);
    CHECK(rec.gap_max == doctest::Approx(0.4));
    CHECK(rec.gap_min == doctest::Approx(0.0));
    // Sample variance of [0.1, 0.4, 0.0]: mean 1/6, ss = 0.13/3... computed directly:
    const double mean = (0.1 + 0.4 + 0.0) / 3.0;
    double ss = 0.0;
    for (double g : gaps) ss += (g - mean) * (g - mean);
    CHECK(rec.gap_variance == doctest::Approx(ss / 2.0));
    CHECK(rec.balanced_accuracy == doctest::Approx(0.9));
    // objective = mean loss + lambda/(K(K-1)) * sum of squared pairwise diffs.
    const double pen = 2.0 / 6.0 * 2.0 * (0.09 + 0.01 + 0.16);
    CHECK(rec.objective_f == doctest::Approx(0.5 + pen));
    CHECK(rec.gamma_estimate == doctest::Approx(0.4));
    CHECK_FALSE(rec.grad_f_norm_sq.has_value());
    CHECK_THROWS_AS(summarize_round(0, {0.5}, gaps, weights, 0.9, 2.0, 0.4), UsageError);
}

namespace {

TrainingTrace tiny_trace(int rounds, int clients) {
    TrainingTrace trace;
    for (int t = 0; t < rounds; ++t) {
        std::vector<double> losses, gaps, weights;
        for (int k = 0; k < clients; ++k) {
            losses.push_back(0.5 + 0.1 * k + 0.01 * t);
            gaps.push_back(0.1 * k);
            weights.push_back(1.0);
        }
        trace.records.push_back(summarize_round(t, losses, gaps, weights, 0.8, 1.0, 0.2));
    }
    trace.final_params = ParamVector::Zero(4);
    trace.gamma = {0.2, rounds * clients};
    trace.optimal_losses = Eigen::VectorXd::Constant(clients, 0.05);
    return trace;
}

}  // namespace

TEST_CASE("emit_csv") {
    SUBCASE("one round emits a header plus one row") {
        auto csv = emit_csv(tiny_trace(1, 3));
        std::istringstream in(csv);
        std::string line;
        int lines = 0;
        while (std::getline(in, line))
            if (!line.empty()) ++lines;
        CHECK(lines == 2);
    }
    SUBCASE("column count is 8 fixed + 3 per client, header matches rows") {
        auto csv = emit_csv(tiny_trace(4, 5));
        std::istringstream in(csv);
        std::string line;
        std::size_t expected_cols = 8 + 3 * 5;
        int rows = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::size_t cols = 1 + static_cast<std::size_t>(
                                       std::count(line.begin(), line.end(), ','));
            CHECK(cols == expected_cols);
            ++rows;
        }
        CHECK(rows == 5);
    }
    SUBCASE("header names the per-client columns") {
        auto csv = emit_csv(tiny_trace(1, 2));
        CHECK(csv.find("round,gap_max,gap_min,gap_variance,balanced_accuracy,objective_f") == 0);
        CHECK(csv.find("val_loss_0") != std::string::npos);
        CHECK(csv.find("gap_1") != std::string::npos);
        CHECK(csv.find("weight_1") != std::string::npos);
    }
    SUBCASE("emitters are pure: same trace, same bytes") {
        auto trace = tiny_trace(3, 2);
        CHECK(emit_csv(trace) == emit_csv(trace));
        CHECK(emit_json(trace, "{}") == emit_json(trace, "{}"));
    }
}

TEST_CASE("emit_json round-trips through a JSON parser") {
    auto trace = tiny_trace(2, 3);
    auto text = emit_json(trace, R"({"algorithm":"fedavg"})");
    auto doc = nlohmann::json::parse(text);
    CHECK(doc["config"]["algorithm"] == "fedavg");
    REQUIRE(doc["records"].size() == 2);
    CHECK(doc["records"][0]["round"] == 0);
    CHECK(doc["records"][1]["gap"].size() == 3);
    CHECK(doc["records"][0]["gap_variance"].get<double>() ==
          doctest::Approx(trace.records[0].gap_variance));
    CHECK(doc["optimal_losses"].size() == 3);
    CHECK(doc["gamma_estimate"].get<double>() == doctest::Approx(0.2));
}
