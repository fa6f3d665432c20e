#include <catch2/catch.hpp>

#include <random>

#include "semfood/fusion.hpp"
#include "test_util.hpp"

using namespace semfood;

namespace {

SegmentationEvidence evidence_from_mask(const BinaryMask& m, double frac = 0.0) {
    return evidence_from_regions(extract_regions(m, frac));
}

// A random mask plus detections with one-hot raw records, for end-to-end runs.
struct RandomScene {
    BinaryMask mask;
    std::vector<RawDetection> raw;
};

RandomScene random_scene(std::mt19937& rng) {
    RandomScene s;
    s.mask = testutil::random_mask(rng, 32, 0.3);
    std::uniform_int_distribution<int> n(0, 12);
    std::uniform_int_distribution<int> cls(0, 3);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const int count = n(rng);
    for (int i = 0; i < count; ++i) {
        RawDetection d;
        d.bbox = testutil::random_box(rng, std::max(2, s.mask.width));
        d.objectness = uniform(rng);
        d.class_probs.assign(4, 0.0);
        d.class_probs[static_cast<std::size_t>(cls(rng))] = uniform(rng);
        s.raw.push_back(std::move(d));
    }
    return s;
}

}  // namespace

TEST_CASE("prob_false_by_boxes") {
    const BBox b{0, 0, 10, 10};
    CHECK(prob_false_by_boxes(b, {b}) == 0.0);
    CHECK(prob_false_by_boxes(b, {{20, 20, 30, 30}}) == 1.0);
    CHECK(prob_false_by_boxes(b, {{0, 0, 5, 10}, {0, 0, 10, 5}}) == 0.5);
    CHECK(prob_false_by_boxes(b, {}) == 1.0);
}

TEST_CASE("prob_false_by_contours") {
    const BBox b{0, 0, 10, 10};
    const Contour inside{{5, 5}};
    const Contour outside{{15, 15}};
    CHECK(prob_false_by_contours(b, {inside}) == 0.0);
    CHECK(prob_false_by_contours(b, {outside}) == 1.0);
    CHECK(prob_false_by_contours(b, {outside, inside, outside}) == 0.0);
    CHECK(prob_false_by_contours(b, {}) == 1.0);
}

TEST_CASE("prob_background") {
    SegmentationEvidence empty;
    SECTION("high score caps the probability") {
        const Detection d{{0, 0, 10, 10}, 0, 0.9};
        CHECK(prob_background(d, empty) == Approx(0.1).margin(1e-12));
    }
    SECTION("unsupported low-score box") {
        const Detection d{{0, 0, 10, 10}, 0, 0.02};
        CHECK(prob_background(d, empty) == Approx(0.98).margin(1e-12));
    }
    SECTION("a contour hit annihilates the evidence term") {
        SegmentationEvidence ev;
        ev.boxes.push_back({50, 50, 60, 60});
        ev.contours.push_back(Contour{{5, 5}});
        const Detection d{{0, 0, 10, 10}, 0, 0.02};
        CHECK(prob_background(d, ev, BkgMode::product) == 0.0);
    }
}

TEST_CASE("background_removal") {
    BinaryMask m(40, 40);
    for (int y = 2; y < 12; ++y)
        for (int x = 2; x < 12; ++x) m.set(x, y, true);
    const SegmentationEvidence ev = evidence_from_mask(m);

    SECTION("score >= 0.5 is always kept at T = 0.5") {
        const std::vector<Detection> dets{{{30, 30, 38, 38}, 0, 0.5}, {{30, 30, 38, 38}, 1, 0.9}};
        CHECK(background_removal(dets, ev, 0.5) == dets);
    }
    SECTION("empty input") { CHECK(background_removal({}, ev, 0.5).empty()); }
    SECTION("low-score pure-background box is removed") {
        const std::vector<Detection> dets{{{30, 30, 38, 38}, 0, 0.02}};
        CHECK(background_removal(dets, ev, 0.5).empty());
    }
    SECTION("low-score box on the region is kept") {
        const std::vector<Detection> dets{{{2, 2, 12, 12}, 0, 0.02}};
        CHECK(background_removal(dets, ev, 0.5) == dets);
    }
}

TEST_CASE("nms") {
    SECTION("duplicate boxes, same class: the better one wins") {
        const std::vector<Detection> dets{{{0, 0, 10, 10}, 0, 0.8}, {{0, 0, 10, 10}, 0, 0.9}};
        const auto kept = nms(dets, 0.5);
        REQUIRE(kept.size() == 1);
        CHECK(kept[0].score == 0.9);
    }
    SECTION("identical boxes of different classes both survive") {
        const std::vector<Detection> dets{{{0, 0, 10, 10}, 0, 0.9}, {{0, 0, 10, 10}, 1, 0.8}};
        CHECK(nms(dets, 0.5).size() == 2);
    }
    SECTION("overlap at the threshold is not suppressed") {
        // candidate self-intersection 0.4 against the kept box
        const std::vector<Detection> dets{{{0, 0, 10, 10}, 0, 0.9}, {{6, 0, 16, 10}, 0, 0.5}};
        CHECK(intersection_over_self(dets[1].bbox, dets[0].bbox) == 0.4);
        CHECK(nms(dets, 0.5).size() == 2);
    }
    SECTION("overlap 1.0 keeps everything") {
        const std::vector<Detection> dets{{{0, 0, 10, 10}, 0, 0.9}, {{0, 0, 10, 10}, 0, 0.8}};
        CHECK(nms(dets, 1.0).size() == 2);
    }
    SECTION("single detection is identity") {
        const std::vector<Detection> dets{{{0, 0, 10, 10}, 3, 0.4}};
        CHECK(nms(dets, 0.5) == dets);
    }
    SECTION("iou mode uses the union denominator") {
        // inter 50: candidate-area overlap 50/100 = 0.5, union overlap 50/150 = 1/3
        const std::vector<Detection> dets{{{0, 0, 10, 10}, 0, 0.9}, {{5, 0, 15, 10}, 0, 0.5}};
        CHECK(nms(dets, 0.45, NmsMode::self).size() == 1);
        CHECK(nms(dets, 0.45, NmsMode::iou).size() == 2);
    }
}

TEST_CASE("fusion invariants on random scenes") {
    std::mt19937 rng(7301);
    for (int i = 0; i < 300; ++i) {
        const RandomScene scene = random_scene(rng);
        const SegmentationEvidence ev = evidence_from_mask(scene.mask);

        std::vector<Detection> scored;
        for (const RawDetection& r : scene.raw) scored.push_back(confidence_score(r));

        for (const Detection& d : scored) {
            const double p = prob_background(d, ev);
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            const double pmax = prob_background(d, ev, BkgMode::max);
            CHECK(pmax >= 0.0);
            CHECK(pmax <= 1.0);
        }

        const auto survivors = background_removal(scored, ev, 0.5);
        for (const Detection& d : scored)
            if (d.score >= 0.5)
                CHECK(std::count(survivors.begin(), survivors.end(), d) ==
                      std::count(scored.begin(), scored.end(), d));
        CHECK(survivors.size() <= scored.size());
        CHECK(background_removal(survivors, ev, 0.5) == survivors);  // idempotent

        for (const NmsMode mode : {NmsMode::self, NmsMode::iou}) {
            const auto kept = nms(survivors, 0.5, mode);
            CHECK(kept.size() <= survivors.size());
            CHECK(nms(kept, 0.5, mode) == kept);  // idempotent
            // Every kept candidate clears the suppression test against the
            // boxes kept before it within its class.
            for (std::size_t a = 0; a < kept.size(); ++a) {
                for (std::size_t b = a + 1; b < kept.size(); ++b) {
                    if (kept[a].class_id != kept[b].class_id) continue;
                    const double ov = mode == NmsMode::self
                                          ? intersection_over_self(kept[b].bbox, kept[a].bbox)
                                          : box_iou(kept[b].bbox, kept[a].bbox);
                    CHECK(ov <= 0.5);
                }
            }
        }
    }
}

TEST_CASE("semantic_food_detection equals the manual stage composition") {
    std::mt19937 rng(7302);
    FusionConfig cfg;
    for (int i = 0; i < 200; ++i) {
        const RandomScene scene = random_scene(rng);
        std::vector<Detection> scored;
        for (const RawDetection& r : scene.raw) scored.push_back(confidence_score(r));
        const auto manual =
            nms(background_removal(filter_by_threshold(scored, cfg.confidence_threshold),
                                   evidence_from_mask(scene.mask, 0.001),
                                   cfg.background_threshold, cfg.bkg_mode),
                cfg.nms_overlap, cfg.nms_mode);
        CHECK(semantic_food_detection(scene.raw, scene.mask, cfg, 0.001) == manual);
    }
}

TEST_CASE("semantic_food_detection never invents boxes") {
    std::mt19937 rng(7303);
    FusionConfig cfg;
    for (int i = 0; i < 100; ++i) {
        const RandomScene scene = random_scene(rng);
        std::vector<Detection> scored;
        for (const RawDetection& r : scene.raw) scored.push_back(confidence_score(r));
        const auto out = semantic_food_detection(scene.raw, scene.mask, cfg, 0.001);
        for (const Detection& d : out) {
            CHECK(d.score >= cfg.confidence_threshold);
            CHECK(std::count(scored.begin(), scored.end(), d) >= 1);
        }
    }
    CHECK(semantic_food_detection({}, BinaryMask(8, 8), cfg, 0.001).empty());
}

TEST_CASE("structured scene: duplicate and background box are removed") {
    // Three objects, one duplicate of the first, one pure-background box.
    BinaryMask m(100, 80);
    const std::vector<BBox> objects{{8, 6, 32, 24}, {44, 8, 72, 28}, {12, 44, 36, 68}};
    for (const BBox& b : objects)
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x) m.set(x, y, true);

    std::vector<RawDetection> raw;
    const auto one_hot = [](const BBox& b, int cls, double score) {
        RawDetection d;
        d.bbox = b;
        d.objectness = score;
        d.class_probs.assign(3, 0.0);
        d.class_probs[static_cast<std::size_t>(cls)] = 1.0;
        return d;
    };
    raw.push_back(one_hot(objects[0], 0, 0.9));
    raw.push_back(one_hot(objects[1], 1, 0.8));
    raw.push_back(one_hot(objects[2], 2, 0.7));
    raw.push_back(one_hot({10, 6, 34, 24}, 0, 0.45));   // duplicate of object 0
    raw.push_back(one_hot({80, 60, 96, 76}, 1, 0.2));   // pure background

    FusionConfig cfg;
    const auto out = semantic_food_detection(raw, m, cfg, 0.001);
    REQUIRE(out.size() == 3);
    CHECK(out[0].bbox == objects[0]);
    CHECK(out[1].bbox == objects[1]);
    CHECK(out[2].bbox == objects[2]);
}
