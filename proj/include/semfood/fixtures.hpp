#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "semfood/dataset.hpp"
#include "semfood/detection.hpp"
#include "semfood/mask.hpp"
#include "semfood/pgm.hpp"

namespace semfood {

/// A small self-contained dataset for tests and demos: three 100x80 trays
/// with nine food items in total, detections that match every item exactly,
/// one injected duplicate (killed by suppression) and one injected pure
/// background box (killed by background removal). The corrupted variant
/// flips the class of one detection, so one tray fails and recall drops to
/// 8/9.
struct SyntheticFixture {
    std::vector<std::string> labels;
    std::map<std::string, BinaryMask> masks;
    std::vector<TrayAnnotation> annotations;
    std::map<std::string, std::vector<RawDetection>> detections;
    std::map<std::string, std::vector<RawDetection>> detections_corrupted;
};

namespace detail {

struct FixtureItem {
    const char* image;
    const char* label;
    int class_id;
    int x, y, w, h;
    double score;
};

// Rectangles are pairwise separated by several background pixels, so each
// one is its own region. Two items carry deliberately low scores (0.1) and
// drop out of threshold sweeps past 1/16.
inline constexpr FixtureItem kItems[] = {
    {"tray_001", "pane", 0, 8, 6, 24, 18, 0.90},
    {"tray_001", "pasta", 1, 44, 8, 28, 20, 0.80},
    {"tray_001", "mela", 2, 12, 44, 24, 24, 0.10},
    {"tray_002", "insalata", 3, 10, 10, 26, 20, 0.70},
    {"tray_002", "torta", 4, 48, 12, 24, 22, 0.60},
    {"tray_002", "pane", 0, 14, 46, 30, 18, 0.10},
    {"tray_003", "pasta", 1, 6, 8, 22, 26, 0.95},
    {"tray_003", "yogurt", 5, 40, 6, 28, 18, 0.85},
    {"tray_003", "mela", 2, 46, 40, 26, 22, 0.55},
};

inline RawDetection one_hot_detection(const BBox& box, int class_id, double score,
                                      int class_count) {
    RawDetection d;
    d.bbox = box;
    d.objectness = score;
    d.objectness_is_logit = false;
    d.class_probs.assign(static_cast<std::size_t>(class_count), 0.0);
    d.class_probs[static_cast<std::size_t>(class_id)] = 1.0;
    return d;
}

}  // namespace detail

inline SyntheticFixture make_synthetic_fixture() {
    SyntheticFixture f;
    f.labels = {"pane", "pasta", "mela", "insalata", "torta", "yogurt"};
    const int class_count = static_cast<int>(f.labels.size());
    const int width = 100, height = 80;

    std::map<std::string, TrayAnnotation> annotations;
    for (const detail::FixtureItem& item : detail::kItems) {
        auto [it, inserted] = annotations.try_emplace(item.image);
        TrayAnnotation& a = it->second;
        if (inserted) {
            a.image_id = item.image;
            a.width = width;
            a.height = height;
            f.masks.emplace(item.image, BinaryMask(width, height));
        }
        const BBox box{item.x, item.y, item.x + item.w, item.y + item.h};
        GroundTruthItem gt;
        gt.bbox = box;
        gt.class_id = item.class_id;
        gt.polygon = Contour{{box.x0, box.y0},
                             {box.x1 - 1, box.y0},
                             {box.x1 - 1, box.y1 - 1},
                             {box.x0, box.y1 - 1}};
        a.items.push_back(std::move(gt));
        a.item_labels.emplace_back(item.label);

        BinaryMask& mask = f.masks.at(item.image);
        for (int y = box.y0; y < box.y1; ++y)
            for (int x = box.x0; x < box.x1; ++x) mask.set(x, y, true);

        f.detections[item.image].push_back(
            detail::one_hot_detection(box, item.class_id, item.score, class_count));
    }
    for (auto& [id, a] : annotations) f.annotations.push_back(std::move(a));

    // Duplicate of the first tray's "pane" item, shifted two pixels east:
    // same class, lower score, overlap against the true box well above 1/2.
    f.detections["tray_001"].push_back(
        detail::one_hot_detection({10, 6, 34, 24}, 0, 0.45, class_count));
    // Pure background box on tray_002, far from every region.
    f.detections["tray_002"].push_back(
        detail::one_hot_detection({76, 56, 92, 68}, 4, 0.20, class_count));

    f.detections_corrupted = f.detections;
    // Flip the class of tray_002's "torta" detection to "yogurt": the box
    // still sits on its region, but the label no longer matches.
    for (RawDetection& d : f.detections_corrupted.at("tray_002")) {
        if (d.bbox == BBox{48, 12, 72, 34}) {
            d.class_probs.assign(static_cast<std::size_t>(class_count), 0.0);
            d.class_probs[5] = 1.0;
        }
    }
    return f;
}

/// Writes the fixture as a ready-to-run dataset:
///   dir/masks/<id>.pgm, dir/annotations.json, dir/labels.txt,
///   dir/detections.txt and dir/detections_corrupted.txt
inline void write_synthetic_fixture(const SyntheticFixture& f, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "masks");
    for (const auto& [id, mask] : f.masks) write_mask(mask, (dir / "masks" / (id + ".pgm")).string());

    LabelMap map;
    for (const std::string& name : f.labels) {
        map.ids.emplace(name, map.size());
        map.names.push_back(name);
    }
    std::ofstream labels(dir / "labels.txt", std::ios::binary);
    if (!labels) throw std::runtime_error("cannot write labels.txt");
    for (const std::string& name : f.labels) labels << name << '\n';
    labels.close();

    write_annotations(f.annotations, map, (dir / "annotations.json").string());
    write_detections(f.detections, (dir / "detections.txt").string());
    write_detections(f.detections_corrupted, (dir / "detections_corrupted.txt").string());
}

}  // namespace semfood
