#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "semfood/dataset.hpp"
#include "semfood/detection.hpp"
#include "semfood/fusion.hpp"
#include "semfood/mask.hpp"
#include "semfood/metrics.hpp"
#include "semfood/pgm.hpp"

namespace semfood {

/// Everything one run needs: fusion parameters plus dataset paths and
/// evaluation knobs. Defaults: confidence 1/65, background threshold 0.5,
/// suppression overlap 0.5, beta 2, matching IoU 0.5, min region fraction
/// 0.001.
struct RunConfig {
    FusionConfig fusion;
    double min_area_fraction = 0.001;
    double match_iou = 0.5;
    double beta = 2.0;
    bool objectness_is_logit = false;
    bool allow_unknown_labels = false;
    int jobs = 1;

    std::string masks_dir;
    std::string detections_path;
    std::string annotations_path;
    std::string labels_path;
    std::string out_path;
    std::string dump_detections_dir;
};

/// Aggregated outcome of a pipeline run.
struct RunResult {
    EvalReport report;
    std::map<int, TrayGroupStats> by_tray_size;
    std::map<std::string, std::vector<Detection>> final_detections;
    std::vector<std::string> skipped;  // "image_id: reason", sorted by image id
    int images_evaluated = 0;
    std::int64_t true_positives = 0;
    std::int64_t false_positives = 0;
    std::int64_t false_negatives = 0;
    std::int64_t final_detection_count = 0;
    /// 0 = clean run, 2 = partial (some images could not be paired or read).
    int exit_code = 0;
};

namespace detail {

struct PerImage {
    std::string image_id;
    std::vector<Detection> final_detections;
    MatchResult match;
    PixelTally pixels;
    double covering = 0.0;
    double rand_index = 0.0;
    double variation_of_information = 0.0;
    bool has_region_metrics = false;
    std::map<int, std::pair<std::int64_t, std::int64_t>> class_tp_nf;
};

inline PerImage evaluate_image(const TrayAnnotation& annotation, const BinaryMask& mask,
                               const std::vector<RawDetection>& raw, const RunConfig& cfg) {
    if (mask.width != annotation.width || mask.height != annotation.height)
        throw schema_error("mask is " + std::to_string(mask.width) + "x" +
                           std::to_string(mask.height) + " but annotation says " +
                           std::to_string(annotation.width) + "x" +
                           std::to_string(annotation.height));

    PerImage r;
    r.image_id = annotation.image_id;

    const RegionExtraction extraction =
        extract_regions_detailed(mask, cfg.min_area_fraction);
    const SegmentationEvidence evidence = evidence_from_regions(extraction.regions);

    std::vector<Detection> scored;
    scored.reserve(raw.size());
    for (const RawDetection& d : raw) scored.push_back(confidence_score(d));
    const std::vector<Detection> confident =
        filter_by_threshold(scored, cfg.fusion.confidence_threshold);
    const std::vector<Detection> grounded = background_removal(
        confident, evidence, cfg.fusion.background_threshold, cfg.fusion.bkg_mode);
    r.final_detections = nms(grounded, cfg.fusion.nms_overlap, cfg.fusion.nms_mode);

    // Segmentation quality against the annotation: pixel metrics on the
    // food/background view, region metrics on the partitions.
    const LabelMask gt_regions = rasterize_annotation(annotation);
    r.pixels = tally_pixels_binary(gt_regions, extraction.labels);
    if (gt_regions.labels.size() >= 2) {
        const RegionMetrics rm = region_metrics(extraction.labels, gt_regions);
        r.covering = rm.covering;
        r.rand_index = rm.rand_index;
        r.variation_of_information = rm.variation_of_information;
        r.has_region_metrics = true;
    }

    r.match = match_detections(r.final_detections, annotation.items, cfg.match_iou);
    for (const GroundTruthItem& g : annotation.items) ++r.class_tp_nf[g.class_id].second;
    for (const auto& [pi, gi] : r.match.tp)
        ++r.class_tp_nf[annotation.items[static_cast<std::size_t>(gi)].class_id].first;
    return r;
}

}  // namespace detail

/// Runs the whole workflow over a dataset: per image, post-process the mask,
/// score and fuse the detections, then evaluate against the annotations.
/// Images are processed on cfg.jobs workers; results are reduced in sorted
/// image-id order so the outcome does not depend on the worker count.
inline RunResult run_pipeline(const RunConfig& cfg) {
    const LabelMap labels = read_labels(cfg.labels_path);
    const std::vector<TrayAnnotation> annotations =
        read_annotations(cfg.annotations_path, labels, cfg.allow_unknown_labels);
    std::map<std::string, std::vector<RawDetection>> detections =
        read_detections(cfg.detections_path, cfg.objectness_is_logit);

    RunResult result;

    std::map<std::string, const TrayAnnotation*> by_id;
    for (const TrayAnnotation& a : annotations) by_id.emplace(a.image_id, &a);
    for (const auto& [id, list] : detections)
        if (!by_id.count(id)) result.skipped.push_back(id + ": detections without annotation");

    struct Job {
        const TrayAnnotation* annotation;
        std::string mask_path;
    };
    std::vector<Job> jobs;
    for (const auto& [id, annotation] : by_id) {
        const std::filesystem::path mask_path =
            std::filesystem::path(cfg.masks_dir) / (id + ".pgm");
        if (!std::filesystem::exists(mask_path)) {
            result.skipped.push_back(id + ": missing mask " + mask_path.string());
            continue;
        }
        jobs.push_back({annotation, mask_path.string()});
    }

    std::vector<std::optional<detail::PerImage>> done(jobs.size());
    std::vector<std::string> failures(jobs.size());
    std::atomic<std::size_t> next{0};
    const int worker_count = std::max(1, cfg.jobs);
    const auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
            const Job& job = jobs[i];
            try {
                const BinaryMask mask = read_binary_mask(job.mask_path);
                const auto it = detections.find(job.annotation->image_id);
                static const std::vector<RawDetection> kNone;
                done[i] = detail::evaluate_image(*job.annotation, mask,
                                                 it == detections.end() ? kNone : it->second, cfg);
            } catch (const std::exception& e) {
                failures[i] = e.what();
            }
        }
    };
    if (worker_count == 1 || jobs.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < worker_count; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    // Deterministic reduction in sorted image-id order.
    PixelTally pixels;
    double covering_sum = 0.0, rand_sum = 0.0, vi_sum = 0.0;
    int region_metric_images = 0;
    std::map<int, std::pair<std::int64_t, std::int64_t>> class_tp_nf;
    std::vector<MatchResult> per_tray;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!done[i]) {
            result.skipped.push_back(jobs[i].annotation->image_id + ": " + failures[i]);
            continue;
        }
        const detail::PerImage& r = *done[i];
        ++result.images_evaluated;
        pixels.absorb(r.pixels);
        if (r.has_region_metrics) {
            covering_sum += r.covering;
            rand_sum += r.rand_index;
            vi_sum += r.variation_of_information;
            ++region_metric_images;
        }
        for (const auto& [cls, tp_nf] : r.class_tp_nf) {
            class_tp_nf[cls].first += tp_nf.first;
            class_tp_nf[cls].second += tp_nf.second;
        }
        per_tray.push_back(r.match);
        result.true_positives += static_cast<std::int64_t>(r.match.tp.size());
        result.false_positives += static_cast<std::int64_t>(r.match.fp.size());
        result.false_negatives += static_cast<std::int64_t>(r.match.fn.size());
        result.final_detection_count += static_cast<std::int64_t>(r.final_detections.size());
        result.final_detections.emplace(r.image_id, r.final_detections);
    }
    std::sort(result.skipped.begin(), result.skipped.end());

    EvalReport& rep = result.report;
    if (pixels.total > 0) {
        rep.global_accuracy =
            static_cast<double>(pixels.matching) / static_cast<double>(pixels.total);
        double iou_sum = 0.0;
        for (const auto& [cls, iu] : pixels.class_inter_union) {
            const double iou = static_cast<double>(iu[0]) / static_cast<double>(iu[1]);
            rep.per_class_iou[cls] = iou;
            iou_sum += iou;
        }
        rep.mean_iou = pixels.class_inter_union.empty()
                           ? 1.0
                           : iou_sum / static_cast<double>(pixels.class_inter_union.size());
    }
    if (region_metric_images > 0) {
        rep.covering = covering_sum / region_metric_images;
        rep.rand_index = rand_sum / region_metric_images;
        rep.variation_of_information = vi_sum / region_metric_images;
    }
    const PrecisionRecallF prf = precision_recall_fbeta_counts(
        result.true_positives, result.false_positives, result.false_negatives, cfg.beta);
    rep.precision = prf.precision;
    rep.recall = prf.recall;
    rep.f2 = prf.f;
    rep.maa = maa_from_class_counts(class_tp_nf);
    rep.tray_accuracy = per_tray.empty() ? 0.0 : tray_accuracy(per_tray);
    result.by_tray_size = recall_by_tray_size(per_tray);

    if (!cfg.dump_detections_dir.empty()) {
        std::filesystem::create_directories(cfg.dump_detections_dir);
        for (const auto& [id, dets] : result.final_detections) {
            const std::filesystem::path p =
                std::filesystem::path(cfg.dump_detections_dir) / (id + ".txt");
            std::ofstream out(p, std::ios::binary);
            if (!out) throw std::runtime_error("cannot open " + p.string() + " for writing");
            out << "# label score x y w h\n";
            for (const Detection& d : dets)
                out << labels.name_of(d.class_id) << ' ' << detail::format_double(d.score) << ' '
                    << d.bbox.x0 << ' ' << d.bbox.y0 << ' ' << d.bbox.width() << ' '
                    << d.bbox.height() << '\n';
        }
    }

    result.exit_code = result.skipped.empty() ? 0 : 2;
    return result;
}

/// Report serialization with a fixed key order; the same inputs and config
/// always produce the same bytes.
inline std::string format_report(const RunResult& result, const RunConfig& cfg) {
    nlohmann::ordered_json doc;
    doc["images"] = {{"evaluated", result.images_evaluated}, {"skipped", result.skipped}};
    doc["config"] = {{"confidence_threshold", cfg.fusion.confidence_threshold},
                     {"background_threshold", cfg.fusion.background_threshold},
                     {"nms_overlap", cfg.fusion.nms_overlap},
                     {"nms_mode", cfg.fusion.nms_mode == NmsMode::self ? "self" : "union"},
                     {"bkg_mode", cfg.fusion.bkg_mode == BkgMode::product ? "product" : "max"},
                     {"min_region_fraction", cfg.min_area_fraction},
                     {"match_iou", cfg.match_iou},
                     {"beta", cfg.beta}};
    nlohmann::ordered_json seg;
    seg["global_accuracy"] = result.report.global_accuracy;
    seg["mean_iou"] = result.report.mean_iou;
    nlohmann::ordered_json per_class;
    for (const auto& [cls, iou] : result.report.per_class_iou)
        per_class[cls == 0 ? "background" : "food"] = iou;
    seg["per_class_iou"] = std::move(per_class);
    seg["covering"] = result.report.covering;
    seg["rand_index"] = result.report.rand_index;
    seg["variation_of_information"] = result.report.variation_of_information;
    doc["segmentation"] = std::move(seg);
    nlohmann::ordered_json det;
    det["precision"] = result.report.precision;
    det["recall"] = result.report.recall;
    det["f2"] = result.report.f2;
    det["maa"] = result.report.maa;
    det["tray_accuracy"] = result.report.tray_accuracy;
    det["true_positives"] = result.true_positives;
    det["false_positives"] = result.false_positives;
    det["false_negatives"] = result.false_negatives;
    det["final_detections"] = result.final_detection_count;
    doc["detection"] = std::move(det);
    nlohmann::ordered_json groups;
    for (const auto& [size, stats] : result.by_tray_size)
        groups[std::to_string(size)] = {{"recall", stats.recall},
                                        {"tray_accuracy", stats.tray_accuracy}};
    doc["per_tray_size"] = std::move(groups);
    return doc.dump(2) + "\n";
}

inline void write_report(const RunResult& result, const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << format_report(result, cfg);
    if (!out) throw std::runtime_error("write failure on " + path);
}

/// Reruns the pipeline over a grid of confidence thresholds. The
/// surviving-detection count can only fall as the threshold rises.
inline std::vector<std::pair<double, RunResult>> threshold_sweep(
    RunConfig cfg, const std::vector<double>& thresholds) {
    std::vector<std::pair<double, RunResult>> out;
    for (double t : thresholds) {
        cfg.fusion.confidence_threshold = t;
        out.emplace_back(t, run_pipeline(cfg));
    }
    return out;
}

/// 1/65 ... 1/2, the standard sweep grid.
inline std::vector<double> default_sweep_grid() {
    return {1.0 / 65.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0};
}

}  // namespace semfood
