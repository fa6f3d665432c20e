// Command-line front end: segmentation post-processing, detection fusion and
// evaluation over file-based model outputs.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "semfood/semfood.hpp"

namespace fs = std::filesystem;
using namespace semfood;

namespace {

struct CliOptions {
    RunConfig run;
    std::string nms_mode = "self";
    std::string bkg_mode = "product";
    std::string t_o = "prob";
    std::string dump_masks_dir;
    std::string fixtures_dir;
    bool fixtures_list = false;
};

void add_fusion_flags(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--conf-thresh", opt.run.fusion.confidence_threshold,
                    "Confidence score threshold (default 1/65)")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--bkg-thresh", opt.run.fusion.background_threshold,
                    "Background probability removal threshold")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--nms-thresh", opt.run.fusion.nms_overlap, "Suppression overlap threshold")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--nms-mode", opt.nms_mode, "Overlap denominator: self | union")
        ->check(CLI::IsMember({"self", "union"}));
    cmd->add_option("--bkg-mode", opt.bkg_mode, "Evidence combination: product | max")
        ->check(CLI::IsMember({"product", "max"}));
    cmd->add_option("--min-region-frac", opt.run.min_area_fraction,
                    "Drop regions smaller than this fraction of the image")
        ->check(CLI::Range(0.0, 0.999999));
    cmd->add_option("--t-o", opt.t_o, "Objectness field meaning: logit | prob")
        ->check(CLI::IsMember({"logit", "prob"}));
}

void add_eval_flags(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--match-iou", opt.run.match_iou, "Box IoU needed for a true positive")
        ->check(CLI::Range(0.000001, 1.0));
    cmd->add_option("--beta", opt.run.beta, "F-measure beta")->check(CLI::PositiveNumber);
}

void finalize(CliOptions& opt) {
    opt.run.fusion.nms_mode = opt.nms_mode == "self" ? NmsMode::self : NmsMode::iou;
    opt.run.fusion.bkg_mode = opt.bkg_mode == "product" ? BkgMode::product : BkgMode::max;
    opt.run.objectness_is_logit = opt.t_o == "logit";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write failure on " + path);
}

std::vector<std::string> sorted_mask_ids(const std::string& dir) {
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".pgm")
            ids.push_back(entry.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

int run_segment_postproc(const CliOptions& opt) {
    nlohmann::ordered_json doc;
    doc["images"] = nlohmann::ordered_json::array();
    for (const std::string& id : sorted_mask_ids(opt.run.masks_dir)) {
        const fs::path path = fs::path(opt.run.masks_dir) / (id + ".pgm");
        const BinaryMask mask = read_binary_mask(path.string());
        const RegionExtraction extraction =
            extract_regions_detailed(mask, opt.run.min_area_fraction);
        nlohmann::ordered_json jimg;
        jimg["id"] = id;
        jimg["width"] = mask.width;
        jimg["height"] = mask.height;
        jimg["regions"] = nlohmann::ordered_json::array();
        for (const Region& r : extraction.regions) {
            nlohmann::ordered_json jr;
            jr["bbox"] = {r.bbox.x0, r.bbox.y0, r.bbox.width(), r.bbox.height()};
            jr["area"] = r.area;
            auto contour = nlohmann::ordered_json::array();
            for (const Point& p : r.contour) contour.push_back({p.x, p.y});
            jr["contour"] = std::move(contour);
            jimg["regions"].push_back(std::move(jr));
        }
        doc["images"].push_back(std::move(jimg));
        if (!opt.dump_masks_dir.empty()) {
            fs::create_directories(opt.dump_masks_dir);
            write_mask(extraction.filled, (fs::path(opt.dump_masks_dir) / (id + ".pgm")).string());
        }
    }
    const std::string text = doc.dump(2) + "\n";
    if (opt.run.out_path.empty())
        std::cout << text;
    else
        write_text(opt.run.out_path, text);
    return 0;
}

int run_fuse(const CliOptions& opt) {
    const auto raw = read_detections(opt.run.detections_path, opt.run.objectness_is_logit);
    std::map<std::string, std::vector<Detection>> fused;
    std::vector<std::string> skipped;
    for (const auto& [id, dets] : raw) {
        const fs::path mask_path = fs::path(opt.run.masks_dir) / (id + ".pgm");
        if (!fs::exists(mask_path)) {
            skipped.push_back(id + ": missing mask " + mask_path.string());
            continue;
        }
        const BinaryMask mask = read_binary_mask(mask_path.string());
        fused[id] = semantic_food_detection(dets, mask, opt.run.fusion, opt.run.min_area_fraction);
    }
    if (!opt.run.out_path.empty()) write_final_detections(fused, opt.run.out_path);
    if (!opt.run.dump_detections_dir.empty()) {
        fs::create_directories(opt.run.dump_detections_dir);
        for (const auto& [id, dets] : fused)
            write_final_detections({{id, dets}},
                                   (fs::path(opt.run.dump_detections_dir) / (id + ".txt")).string());
    }
    std::int64_t total = 0;
    for (const auto& [id, dets] : fused) total += static_cast<std::int64_t>(dets.size());
    std::cout << "fused " << fused.size() << " image(s), " << total << " detection(s) kept\n";
    for (const std::string& s : skipped) std::cerr << "skipped " << s << "\n";
    return skipped.empty() ? 0 : 2;
}

int run_evaluate(const CliOptions& opt) {
    const LabelMap labels = read_labels(opt.run.labels_path);
    const auto annotations =
        read_annotations(opt.run.annotations_path, labels, opt.run.allow_unknown_labels);
    const auto final_dets = read_final_detections(opt.run.detections_path);

    std::int64_t tp = 0, fp = 0, fn = 0;
    std::map<int, std::pair<std::int64_t, std::int64_t>> class_tp_nf;
    std::vector<MatchResult> per_tray;
    PixelTally pixels;
    double covering_sum = 0.0, rand_sum = 0.0, vi_sum = 0.0;
    int seg_images = 0;
    std::vector<std::string> skipped;
    static const std::vector<Detection> kNone;

    for (const TrayAnnotation& a : annotations) {
        const auto it = final_dets.find(a.image_id);
        const std::vector<Detection>& dets = it == final_dets.end() ? kNone : it->second;
        const MatchResult m = match_detections(dets, a.items, opt.run.match_iou);
        tp += static_cast<std::int64_t>(m.tp.size());
        fp += static_cast<std::int64_t>(m.fp.size());
        fn += static_cast<std::int64_t>(m.fn.size());
        for (const GroundTruthItem& g : a.items) ++class_tp_nf[g.class_id].second;
        for (const auto& [pi, gi] : m.tp)
            ++class_tp_nf[a.items[static_cast<std::size_t>(gi)].class_id].first;
        per_tray.push_back(m);

        if (!opt.run.masks_dir.empty()) {
            const fs::path mask_path = fs::path(opt.run.masks_dir) / (a.image_id + ".pgm");
            if (!fs::exists(mask_path)) {
                skipped.push_back(a.image_id + ": missing mask " + mask_path.string());
                continue;
            }
            const BinaryMask mask = read_binary_mask(mask_path.string());
            const RegionExtraction extraction =
                extract_regions_detailed(mask, opt.run.min_area_fraction);
            const LabelMask gt_regions = rasterize_annotation(a);
            pixels.absorb(tally_pixels_binary(gt_regions, extraction.labels));
            const RegionMetrics rm = region_metrics(extraction.labels, gt_regions);
            covering_sum += rm.covering;
            rand_sum += rm.rand_index;
            vi_sum += rm.variation_of_information;
            ++seg_images;
        }
    }

    const PrecisionRecallF prf = precision_recall_fbeta_counts(tp, fp, fn, opt.run.beta);
    nlohmann::ordered_json doc;
    doc["images"] = {{"evaluated", annotations.size()}, {"skipped", skipped}};
    if (seg_images > 0) {
        nlohmann::ordered_json seg;
        seg["global_accuracy"] =
            static_cast<double>(pixels.matching) / static_cast<double>(pixels.total);
        nlohmann::ordered_json per_class;
        double iou_sum = 0.0;
        for (const auto& [cls, iu] : pixels.class_inter_union) {
            const double iou = static_cast<double>(iu[0]) / static_cast<double>(iu[1]);
            per_class[cls == 0 ? "background" : "food"] = iou;
            iou_sum += iou;
        }
        seg["mean_iou"] = iou_sum / static_cast<double>(pixels.class_inter_union.size());
        seg["per_class_iou"] = std::move(per_class);
        seg["covering"] = covering_sum / seg_images;
        seg["rand_index"] = rand_sum / seg_images;
        seg["variation_of_information"] = vi_sum / seg_images;
        doc["segmentation"] = std::move(seg);
    } else {
        doc["segmentation"] = nullptr;
    }
    doc["detection"] = {{"precision", prf.precision}, {"recall", prf.recall},
                        {"f2", prf.f},                {"maa", maa_from_class_counts(class_tp_nf)},
                        {"tray_accuracy", per_tray.empty() ? 0.0 : tray_accuracy(per_tray)},
                        {"true_positives", tp},       {"false_positives", fp},
                        {"false_negatives", fn}};
    nlohmann::ordered_json groups;
    for (const auto& [size, stats] : recall_by_tray_size(per_tray))
        groups[std::to_string(size)] = {{"recall", stats.recall},
                                        {"tray_accuracy", stats.tray_accuracy}};
    doc["per_tray_size"] = std::move(groups);

    const std::string text = doc.dump(2) + "\n";
    if (opt.run.out_path.empty())
        std::cout << text;
    else
        write_text(opt.run.out_path, text);
    return skipped.empty() ? 0 : 2;
}

int run_full_pipeline(const CliOptions& opt) {
    const RunResult result = run_pipeline(opt.run);
    const std::string text = format_report(result, opt.run);
    if (opt.run.out_path.empty())
        std::cout << text;
    else
        write_text(opt.run.out_path, text);
    for (const std::string& s : result.skipped) std::cerr << "skipped " << s << "\n";
    std::fprintf(stderr, "evaluated %d image(s): precision %.4f recall %.4f F2 %.4f\n",
                 result.images_evaluated, result.report.precision, result.report.recall,
                 result.report.f2);
    return result.exit_code;
}

int run_sweep(const CliOptions& opt) {
    const auto sweep = threshold_sweep(opt.run, default_sweep_grid());
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    std::printf("%-10s %-10s %-9s %-9s %-9s %-9s %-9s\n", "threshold", "detections", "precision",
                "recall", "f2", "maa", "ta");
    for (const auto& [threshold, result] : sweep) {
        std::printf("%-10.6f %-10lld %-9.4f %-9.4f %-9.4f %-9.4f %-9.4f\n", threshold,
                    static_cast<long long>(result.final_detection_count), result.report.precision,
                    result.report.recall, result.report.f2, result.report.maa,
                    result.report.tray_accuracy);
        rows.push_back({{"threshold", threshold},
                        {"final_detections", result.final_detection_count},
                        {"precision", result.report.precision},
                        {"recall", result.report.recall},
                        {"f2", result.report.f2},
                        {"maa", result.report.maa},
                        {"tray_accuracy", result.report.tray_accuracy}});
    }
    if (!opt.run.out_path.empty()) write_text(opt.run.out_path, rows.dump(2) + "\n");
    for (const auto& [threshold, result] : sweep)
        if (result.exit_code != 0) return result.exit_code;
    return 0;
}

int run_fixtures(const CliOptions& opt) {
    write_synthetic_fixture(make_synthetic_fixture(), opt.fixtures_dir);
    std::cout << "wrote synthetic fixture to " << opt.fixtures_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Food-tray detection fusion and evaluation toolkit"};
    app.require_subcommand(1);
    CliOptions opt;

    CLI::App* postproc =
        app.add_subcommand("segment-postproc", "Trace, fill and box the regions of binary masks");
    postproc->add_option("--masks", opt.run.masks_dir, "Directory of <id>.pgm masks")
        ->required()
        ->check(CLI::ExistingDirectory);
    postproc->add_option("--min-region-frac", opt.run.min_area_fraction,
                         "Drop regions smaller than this fraction of the image")
        ->check(CLI::Range(0.0, 0.999999));
    postproc->add_option("--out", opt.run.out_path, "Region report JSON (stdout if omitted)");
    postproc->add_option("--dump-masks", opt.dump_masks_dir,
                         "Write hole-filled masks to this directory");

    CLI::App* fuse = app.add_subcommand("fuse", "Fuse raw detections with segmentation masks");
    fuse->add_option("--masks", opt.run.masks_dir, "Directory of <id>.pgm masks")
        ->required()
        ->check(CLI::ExistingDirectory);
    fuse->add_option("--detections", opt.run.detections_path, "Raw detection records")
        ->required()
        ->check(CLI::ExistingFile);
    fuse->add_option("--out", opt.run.out_path, "Write fused detections to this file");
    fuse->add_option("--dump-detections", opt.run.dump_detections_dir,
                     "Write per-image fused detections to this directory");
    add_fusion_flags(fuse, opt);

    CLI::App* evaluate =
        app.add_subcommand("evaluate", "Score fused detections against annotations");
    evaluate->add_option("--detections", opt.run.detections_path, "Fused detection records")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate->add_option("--annotations", opt.run.annotations_path, "Annotation JSON")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate->add_option("--labels", opt.run.labels_path, "Label vocabulary, one name per line")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate->add_option("--masks", opt.run.masks_dir,
                         "Optional mask directory; enables the segmentation metrics")
        ->check(CLI::ExistingDirectory);
    evaluate->add_option("--min-region-frac", opt.run.min_area_fraction,
                         "Drop regions smaller than this fraction of the image")
        ->check(CLI::Range(0.0, 0.999999));
    evaluate->add_option("--out", opt.run.out_path, "Report JSON (stdout if omitted)");
    evaluate->add_flag("--allow-unknown-labels", opt.run.allow_unknown_labels,
                       "Map unknown labels to a reserved id instead of failing");
    add_eval_flags(evaluate, opt);

    CLI::App* pipeline =
        app.add_subcommand("pipeline", "Full run: post-process, fuse and evaluate");
    pipeline->add_option("--masks", opt.run.masks_dir, "Directory of <id>.pgm masks")
        ->required()
        ->check(CLI::ExistingDirectory);
    pipeline->add_option("--detections", opt.run.detections_path, "Raw detection records")
        ->required()
        ->check(CLI::ExistingFile);
    pipeline->add_option("--annotations", opt.run.annotations_path, "Annotation JSON")
        ->required()
        ->check(CLI::ExistingFile);
    pipeline->add_option("--labels", opt.run.labels_path, "Label vocabulary, one name per line")
        ->required()
        ->check(CLI::ExistingFile);
    pipeline->add_option("--out", opt.run.out_path, "Report JSON (stdout if omitted)");
    pipeline->add_option("--dump-detections", opt.run.dump_detections_dir,
                         "Write per-image fused detections to this directory");
    pipeline->add_option("--jobs", opt.run.jobs, "Worker threads (output is identical either way)")
        ->check(CLI::Range(1, 256));
    pipeline->add_flag("--allow-unknown-labels", opt.run.allow_unknown_labels,
                       "Map unknown labels to a reserved id instead of failing");
    add_fusion_flags(pipeline, opt);
    add_eval_flags(pipeline, opt);

    CLI::App* sweep = app.add_subcommand(
        "sweep", "Run the pipeline over the confidence grid 1/65, 1/32, 1/16, 1/8, 1/4, 1/2");
    sweep->add_option("--masks", opt.run.masks_dir, "Directory of <id>.pgm masks")
        ->required()
        ->check(CLI::ExistingDirectory);
    sweep->add_option("--detections", opt.run.detections_path, "Raw detection records")
        ->required()
        ->check(CLI::ExistingFile);
    sweep->add_option("--annotations", opt.run.annotations_path, "Annotation JSON")
        ->required()
        ->check(CLI::ExistingFile);
    sweep->add_option("--labels", opt.run.labels_path, "Label vocabulary, one name per line")
        ->required()
        ->check(CLI::ExistingFile);
    sweep->add_option("--out", opt.run.out_path, "Sweep table JSON");
    sweep->add_option("--jobs", opt.run.jobs, "Worker threads")->check(CLI::Range(1, 256));
    sweep->add_flag("--allow-unknown-labels", opt.run.allow_unknown_labels,
                    "Map unknown labels to a reserved id instead of failing");
    add_fusion_flags(sweep, opt);
    add_eval_flags(sweep, opt);

    CLI::App* fixtures =
        app.add_subcommand("fixtures", "Write the bundled synthetic demo dataset");
    fixtures->add_option("--out", opt.fixtures_dir, "Destination directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);  // prints the message or the help text
        return rc == 0 ? 0 : 1;
    }
    finalize(opt);

    try {
        if (postproc->parsed()) return run_segment_postproc(opt);
        if (fuse->parsed()) return run_fuse(opt);
        if (evaluate->parsed()) return run_evaluate(opt);
        if (pipeline->parsed()) return run_full_pipeline(opt);
        if (sweep->parsed()) return run_sweep(opt);
        if (fixtures->parsed()) return run_fixtures(opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
