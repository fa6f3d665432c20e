#include <catch2/catch.hpp>

#include <cmath>
#include <random>

#include "semfood/detection.hpp"
#include "test_util.hpp"

using namespace semfood;

TEST_CASE("logistic") {
    CHECK(logistic(0.0) == 0.5);
    CHECK(logistic(std::log(3.0)) == Approx(0.75).margin(1e-12));
    CHECK(logistic(-std::log(3.0)) == Approx(0.25).margin(1e-12));
    CHECK(logistic(-745.0) > 0.0);  // stays finite and positive deep in the tail
    CHECK(logistic(30.0) < 1.0);
    CHECK(logistic(745.0) == 1.0);  // saturates cleanly instead of overflowing
}

TEST_CASE("confidence_score") {
    SECTION("logit objectness") {
        RawDetection r{{0, 0, 4, 4}, 0.0, true, {0.2, 0.8}};
        const Detection d = confidence_score(r);
        CHECK(d.class_id == 1);
        CHECK(d.score == Approx(0.4).margin(1e-12));
    }
    SECTION("probability objectness, upper bound") {
        RawDetection r{{0, 0, 4, 4}, 1.0, false, {1.0, 0.0}};
        const Detection d = confidence_score(r);
        CHECK(d.class_id == 0);
        CHECK(d.score == 1.0);
    }
    SECTION("argmax ties break toward the lowest index") {
        RawDetection r{{0, 0, 4, 4}, 0.6, false, {0.5, 0.5}};
        const Detection d = confidence_score(r);
        CHECK(d.class_id == 0);
        CHECK(d.score == Approx(0.3).margin(1e-12));
    }
}

TEST_CASE("confidence score is bounded by both factors") {
    std::mt19937 rng(7201);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::uniform_int_distribution<int> count(1, 8);
    for (int i = 0; i < 500; ++i) {
        RawDetection r;
        r.bbox = {0, 0, 2, 2};
        r.objectness = uniform(rng);
        r.class_probs.resize(static_cast<std::size_t>(count(rng)));
        double max_prob = 0.0;
        for (double& p : r.class_probs) {
            p = uniform(rng);
            max_prob = std::max(max_prob, p);
        }
        const Detection d = confidence_score(r);
        CHECK(d.score <= r.objectness + 1e-15);
        CHECK(d.score <= max_prob + 1e-15);

        // argmax is invariant to positive scaling of the class probabilities
        RawDetection scaled = r;
        for (double& p : scaled.class_probs) p *= 0.37;
        CHECK(confidence_score(scaled).class_id == d.class_id);
    }
}

TEST_CASE("filter_by_threshold") {
    const std::vector<Detection> dets{{{0, 0, 2, 2}, 0, 0.9}, {{0, 0, 2, 2}, 1, 0.01}};
    SECTION("minimum sweep threshold keeps only the confident box") {
        const auto kept = filter_by_threshold(dets, 1.0 / 65.0);
        REQUIRE(kept.size() == 1);
        CHECK(kept[0].score == 0.9);
    }
    SECTION("threshold 0 is the identity") { CHECK(filter_by_threshold(dets, 0.0) == dets); }
    SECTION("comparison is inclusive") {
        const std::vector<Detection> pair{{{0, 0, 2, 2}, 0, 0.5}, {{0, 0, 2, 2}, 0, 0.49}};
        const auto kept = filter_by_threshold(pair, 0.5);
        REQUIRE(kept.size() == 1);
        CHECK(kept[0].score == 0.5);
    }
}

TEST_CASE("filtering twice equals filtering at the larger threshold") {
    std::mt19937 rng(7202);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const auto dets = testutil::random_detections(rng, 20, 32, 4);
        const double t1 = uniform(rng), t2 = uniform(rng);
        CHECK(filter_by_threshold(filter_by_threshold(dets, t1), t2) ==
              filter_by_threshold(dets, std::max(t1, t2)));
    }
}
