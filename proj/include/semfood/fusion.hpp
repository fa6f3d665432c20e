#pragma once

#include <algorithm>
#include <vector>

#include "semfood/detection.hpp"
#include "semfood/geometry.hpp"
#include "semfood/mask.hpp"

namespace semfood {

/// Denominator used when comparing a candidate box against an already kept
/// box during suppression: the candidate's own area, or the union (IoU).
enum class NmsMode { self, iou };

/// How the two background evidence terms are combined: their product
/// (default) or their maximum.
enum class BkgMode { product, max };

/// Boxes and contours of the regions produced by segmentation
/// post-processing, index-aligned per region.
struct SegmentationEvidence {
    std::vector<BBox> boxes;
    std::vector<Contour> contours;
};

inline SegmentationEvidence evidence_from_regions(const std::vector<Region>& regions) {
    SegmentationEvidence ev;
    ev.boxes.reserve(regions.size());
    ev.contours.reserve(regions.size());
    for (const Region& r : regions) {
        ev.boxes.push_back(r.bbox);
        ev.contours.push_back(r.contour);
    }
    return ev;
}

struct FusionConfig {
    double confidence_threshold = 1.0 / 65.0;
    double background_threshold = 0.5;
    double nms_overlap = 0.5;
    BkgMode bkg_mode = BkgMode::product;
    NmsMode nms_mode = NmsMode::self;
};

/// Probability that box b is a false detection judged by the segmentation
/// boxes alone: the smallest fraction of b lying outside any evidence box.
/// With no evidence at all there is no food anywhere, so 1.
inline double prob_false_by_boxes(const BBox& b, const std::vector<BBox>& s1) {
    double best = 1.0;
    for (const BBox& s : s1) best = std::min(best, 1.0 - intersection_over_self(b, s));
    return best;
}

/// 0 if b contains a pixel of at least one evidence contour, else 1.
inline double prob_false_by_contours(const BBox& b, const std::vector<Contour>& s2) {
    for (const Contour& c : s2)
        if (box_intersects_contour(b, c)) return 0.0;
    return 1.0;
}

/// Probability that a detection sits on background: capped by the complement
/// of its confidence score and by the combined box/contour evidence terms.
inline double prob_background(const Detection& d, const SegmentationEvidence& ev,
                              BkgMode mode = BkgMode::product) {
    const double by_boxes = prob_false_by_boxes(d.bbox, ev.boxes);
    const double by_contours = prob_false_by_contours(d.bbox, ev.contours);
    const double unsupported =
        mode == BkgMode::product ? by_boxes * by_contours : std::max(by_boxes, by_contours);
    return std::min(1.0 - d.score, unsupported);
}

/// Removes detections whose background probability exceeds T (strictly),
/// preserving order. A detection with score >= 1-T can never be removed.
inline std::vector<Detection> background_removal(const std::vector<Detection>& dets,
                                                 const SegmentationEvidence& ev, double threshold,
                                                 BkgMode mode = BkgMode::product) {
    std::vector<Detection> out;
    out.reserve(dets.size());
    for (const Detection& d : dets)
        if (prob_background(d, ev, mode) <= threshold) out.push_back(d);
    return out;
}

/// Greedy per-class non-maximum suppression. Within each class, detections
/// are sorted by descending score (stable on ties) and a candidate is dropped
/// iff its maximum overlap against the already kept boxes exceeds `overlap`.
/// Output is concatenated in ascending class order, score-descending within
/// each class.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double overlap,
                                  NmsMode mode = NmsMode::self) {
    std::vector<int> classes;
    for (const Detection& d : dets) classes.push_back(d.class_id);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    const auto measure = [mode](const BBox& candidate, const BBox& kept) {
        return mode == NmsMode::self ? intersection_over_self(candidate, kept)
                                     : box_iou(candidate, kept);
    };

    std::vector<Detection> out;
    out.reserve(dets.size());
    std::vector<std::size_t> order;
    for (int cls : classes) {
        order.clear();
        for (std::size_t i = 0; i < dets.size(); ++i)
            if (dets[i].class_id == cls) order.push_back(i);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return dets[a].score > dets[b].score;
        });
        const std::size_t first_kept = out.size();
        for (std::size_t i : order) {
            double worst = 0.0;
            for (std::size_t k = first_kept; k < out.size(); ++k)
                worst = std::max(worst, measure(dets[i].bbox, out[k].bbox));
            if (worst <= overlap) out.push_back(dets[i]);
        }
    }
    return out;
}

/// The full fusion chain: score raw detections, drop the ones below the
/// confidence threshold, extract segmentation evidence from the mask, remove
/// background detections, then suppress per-class duplicates.
inline std::vector<Detection> semantic_food_detection(const std::vector<RawDetection>& raw,
                                                      const BinaryMask& m, const FusionConfig& cfg,
                                                      double min_area_fraction) {
    std::vector<Detection> scored;
    scored.reserve(raw.size());
    for (const RawDetection& r : raw) scored.push_back(confidence_score(r));
    const std::vector<Detection> kept = filter_by_threshold(scored, cfg.confidence_threshold);
    const SegmentationEvidence ev = evidence_from_regions(extract_regions(m, min_area_fraction));
    const std::vector<Detection> survivors =
        background_removal(kept, ev, cfg.background_threshold, cfg.bkg_mode);
    return nms(survivors, cfg.nms_overlap, cfg.nms_mode);
}

}  // namespace semfood
