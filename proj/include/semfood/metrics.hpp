#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "semfood/detection.hpp"
#include "semfood/geometry.hpp"
#include "semfood/mask.hpp"

namespace semfood {

/// One annotated food item: box, class and (optionally) the boundary polygon.
struct GroundTruthItem {
    BBox bbox;
    int class_id = 0;
    std::optional<Contour> polygon;
};

/// Outcome of matching predictions against ground truth on one image.
struct MatchResult {
    std::vector<std::pair<int, int>> tp;  // (prediction index, ground-truth index)
    std::vector<int> fp;                  // unmatched prediction indices
    std::vector<int> fn;                  // unmatched ground-truth indices
};

/// All metric values of one evaluation run.
struct EvalReport {
    double global_accuracy = 0.0;
    double mean_iou = 0.0;
    std::map<std::int32_t, double> per_class_iou;
    double covering = 0.0;
    double rand_index = 0.0;
    double variation_of_information = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f2 = 0.0;
    double maa = 0.0;
    double tray_accuracy = 0.0;
};

namespace detail {

inline void require_same_shape(const LabelMask& a, const LabelMask& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("label masks differ in shape");
}

/// Joint label histogram of two equally shaped masks plus both marginals,
/// built in one pass. Uses a dense matrix while max labels are small and
/// falls back to a hash map otherwise, so memory stays O(N + Ka*Kb).
struct JointCounts {
    std::int64_t total = 0;
    std::vector<std::tuple<std::int32_t, std::int32_t, std::int64_t>> cells;
    std::map<std::int32_t, std::int64_t> margin_a;
    std::map<std::int32_t, std::int64_t> margin_b;
};

inline JointCounts joint_counts(const LabelMask& a, const LabelMask& b) {
    require_same_shape(a, b);
    JointCounts jc;
    jc.total = static_cast<std::int64_t>(a.labels.size());

    std::int64_t max_a = 0, max_b = 0;
    bool negative = false;
    for (std::int32_t v : a.labels) {
        max_a = std::max<std::int64_t>(max_a, v);
        negative |= v < 0;
    }
    for (std::int32_t v : b.labels) {
        max_b = std::max<std::int64_t>(max_b, v);
        negative |= v < 0;
    }

    if (!negative && (max_a + 1) * (max_b + 1) <= (std::int64_t{1} << 24)) {
        const std::int64_t cols = max_b + 1;
        std::vector<std::int64_t> dense(static_cast<std::size_t>((max_a + 1) * cols), 0);
        for (std::size_t i = 0; i < a.labels.size(); ++i)
            ++dense[static_cast<std::size_t>(a.labels[i] * cols + b.labels[i])];
        for (std::int64_t la = 0; la <= max_a; ++la) {
            for (std::int64_t lb = 0; lb <= max_b; ++lb) {
                const std::int64_t n = dense[static_cast<std::size_t>(la * cols + lb)];
                if (n == 0) continue;
                jc.cells.emplace_back(static_cast<std::int32_t>(la), static_cast<std::int32_t>(lb),
                                      n);
                jc.margin_a[static_cast<std::int32_t>(la)] += n;
                jc.margin_b[static_cast<std::int32_t>(lb)] += n;
            }
        }
        return jc;
    }

    std::unordered_map<std::uint64_t, std::int64_t> sparse;
    sparse.reserve(1024);
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(
                                       a.labels[i]))
                                   << 32) |
                                  static_cast<std::uint32_t>(b.labels[i]);
        ++sparse[key];
    }
    for (const auto& [key, n] : sparse) {
        const auto la = static_cast<std::int32_t>(key >> 32);
        const auto lb = static_cast<std::int32_t>(key & 0xffffffffu);
        jc.cells.emplace_back(la, lb, n);
        jc.margin_a[la] += n;
        jc.margin_b[lb] += n;
    }
    std::sort(jc.cells.begin(), jc.cells.end());
    return jc;
}

inline std::int64_t pairs_of(std::int64_t n) { return n * (n - 1) / 2; }

}  // namespace detail

/// Fraction of pixels whose labels agree.
inline double global_pixel_accuracy(const LabelMask& target, const LabelMask& predicted) {
    detail::require_same_shape(target, predicted);
    std::int64_t matching = 0;
    for (std::size_t i = 0; i < target.labels.size(); ++i)
        matching += target.labels[i] == predicted.labels[i];
    return static_cast<double>(matching) / static_cast<double>(target.labels.size());
}

/// Per-class pixel tallies: match count plus per-class intersection/union,
/// the raw material for accuracy and IoU pooled across many images.
struct PixelTally {
    std::int64_t matching = 0;
    std::int64_t total = 0;
    std::map<std::int32_t, std::array<std::int64_t, 2>> class_inter_union;

    void absorb(const PixelTally& other) {
        matching += other.matching;
        total += other.total;
        for (const auto& [c, iu] : other.class_inter_union) {
            auto& mine = class_inter_union[c];
            mine[0] += iu[0];
            mine[1] += iu[1];
        }
    }
};

inline PixelTally tally_pixels(const LabelMask& target, const LabelMask& predicted) {
    detail::require_same_shape(target, predicted);
    PixelTally t;
    t.total = static_cast<std::int64_t>(target.labels.size());
    for (std::size_t i = 0; i < target.labels.size(); ++i) {
        const std::int32_t tv = target.labels[i];
        const std::int32_t pv = predicted.labels[i];
        if (tv == pv) {
            ++t.matching;
            auto& iu = t.class_inter_union[tv];
            ++iu[0];
            ++iu[1];
        } else {
            ++t.class_inter_union[tv][1];
            ++t.class_inter_union[pv][1];
        }
    }
    return t;
}

/// tally_pixels over the food/background view of two region maps (nonzero =
/// food), without materializing the binarized masks.
inline PixelTally tally_pixels_binary(const LabelMask& target, const LabelMask& predicted) {
    detail::require_same_shape(target, predicted);
    std::int64_t counts[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < target.labels.size(); ++i)
        ++counts[target.labels[i] != 0][predicted.labels[i] != 0];
    PixelTally t;
    t.total = static_cast<std::int64_t>(target.labels.size());
    t.matching = counts[0][0] + counts[1][1];
    if (counts[0][0] + counts[0][1] + counts[1][0] > 0)
        t.class_inter_union[0] = {counts[0][0], counts[0][0] + counts[0][1] + counts[1][0]};
    if (counts[1][1] + counts[0][1] + counts[1][0] > 0)
        t.class_inter_union[1] = {counts[1][1], counts[1][1] + counts[0][1] + counts[1][0]};
    return t;
}

/// Jaccard index of one class. A class absent from both masks has an empty
/// union and counts as 1 by convention.
inline double class_iou(const LabelMask& target, const LabelMask& predicted, std::int32_t cls) {
    detail::require_same_shape(target, predicted);
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < target.labels.size(); ++i) {
        const bool in_t = target.labels[i] == cls;
        const bool in_p = predicted.labels[i] == cls;
        inter += in_t && in_p;
        uni += in_t || in_p;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Mean Jaccard index over the classes occurring in target or prediction.
inline double mean_iou(const LabelMask& target, const LabelMask& predicted) {
    const PixelTally t = tally_pixels(target, predicted);
    if (t.class_inter_union.empty()) return 1.0;
    double sum = 0.0;
    for (const auto& [c, iu] : t.class_inter_union)
        sum += static_cast<double>(iu[0]) / static_cast<double>(iu[1]);
    return sum / static_cast<double>(t.class_inter_union.size());
}

/// Mean Jaccard index over an explicit class list; classes absent from both
/// masks contribute 1.
inline double mean_iou(const LabelMask& target, const LabelMask& predicted,
                       const std::vector<std::int32_t>& classes) {
    if (classes.empty()) throw std::invalid_argument("mean_iou: empty class list");
    const PixelTally t = tally_pixels(target, predicted);
    double sum = 0.0;
    for (std::int32_t c : classes) {
        const auto it = t.class_inter_union.find(c);
        sum += it == t.class_inter_union.end()
                   ? 1.0
                   : static_cast<double>(it->second[0]) / static_cast<double>(it->second[1]);
    }
    return sum / static_cast<double>(classes.size());
}

namespace detail {

// These take jc = joint_counts(ground_truth, segmented).

inline double covering_from(const JointCounts& jc) {
    std::map<std::int32_t, double> best;  // per GT region
    for (const auto& [gt_label, s_label, n] : jc.cells) {
        const double iou = static_cast<double>(n) /
                           static_cast<double>(jc.margin_a.at(gt_label) +
                                               jc.margin_b.at(s_label) - n);
        auto [it, inserted] = best.emplace(gt_label, iou);
        if (!inserted) it->second = std::max(it->second, iou);
    }
    double sum = 0.0;
    for (const auto& [gt_label, iou] : best)
        sum += static_cast<double>(jc.margin_a.at(gt_label)) * iou;
    return sum / static_cast<double>(jc.total);
}

inline double rand_index_from(const JointCounts& jc) {
    if (jc.total < 2) throw std::invalid_argument("rand_index: needs at least 2 pixels");
    std::int64_t same_both = 0, same_a = 0, same_b = 0;
    for (const auto& [la, lb, n] : jc.cells) same_both += pairs_of(n);
    for (const auto& [l, n] : jc.margin_a) same_a += pairs_of(n);
    for (const auto& [l, n] : jc.margin_b) same_b += pairs_of(n);
    const std::int64_t pairs = pairs_of(jc.total);
    const std::int64_t agreeing = pairs + 2 * same_both - same_a - same_b;
    return static_cast<double>(agreeing) / static_cast<double>(pairs);
}

inline double variation_of_information_from(const JointCounts& jc) {
    const double n = static_cast<double>(jc.total);
    double h_a = 0.0, h_b = 0.0, mi = 0.0;
    for (const auto& [l, c] : jc.margin_a) {
        const double p = static_cast<double>(c) / n;
        h_a -= p * std::log(p);
    }
    for (const auto& [l, c] : jc.margin_b) {
        const double p = static_cast<double>(c) / n;
        h_b -= p * std::log(p);
    }
    for (const auto& [la, lb, c] : jc.cells) {
        const double p = static_cast<double>(c) / n;
        mi += p * std::log(static_cast<double>(c) * n /
                           (static_cast<double>(jc.margin_a.at(la)) *
                            static_cast<double>(jc.margin_b.at(lb))));
    }
    return std::max(0.0, h_a + h_b - 2.0 * mi);
}

}  // namespace detail

/// Covering of the ground-truth partition by the segmented partition: each GT
/// region contributes its best Jaccard overlap against any segmented region,
/// weighted by its size. Labels are region ids; the background label is a
/// region like any other.
inline double covering(const LabelMask& segmented, const LabelMask& ground_truth) {
    return detail::covering_from(detail::joint_counts(ground_truth, segmented));
}

/// Fraction of pixel pairs whose same/different-label relation agrees between
/// the two partitions, computed through the contingency-table identity rather
/// than the quadratic pair scan.
inline double rand_index(const LabelMask& segmented, const LabelMask& ground_truth) {
    return detail::rand_index_from(detail::joint_counts(ground_truth, segmented));
}

/// Partition distance H(S) + H(GT) - 2*MI(S,GT) from the empirical joint
/// label distribution, in nats. Zero iff the partitions coincide up to
/// relabeling; symmetric in its arguments.
inline double variation_of_information(const LabelMask& segmented, const LabelMask& ground_truth) {
    return detail::variation_of_information_from(detail::joint_counts(ground_truth, segmented));
}

/// The three region metrics from a single contingency pass; identical values
/// to the individual calls, one third of the work on large masks.
struct RegionMetrics {
    double covering = 0.0;
    double rand_index = 0.0;
    double variation_of_information = 0.0;
};

inline RegionMetrics region_metrics(const LabelMask& segmented, const LabelMask& ground_truth) {
    const detail::JointCounts jc = detail::joint_counts(ground_truth, segmented);
    return {detail::covering_from(jc), detail::rand_index_from(jc),
            detail::variation_of_information_from(jc)};
}

/// Greedy detection-to-ground-truth matching: predictions in score-descending
/// order (stable on ties) each claim the unmatched same-class ground truth
/// with the highest box IoU, provided it reaches iou_threshold.
inline MatchResult match_detections(const std::vector<Detection>& preds,
                                    const std::vector<GroundTruthItem>& gts,
                                    double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
        throw std::invalid_argument("match_detections: iou_threshold must be in (0,1]");
    std::vector<int> order(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return preds[static_cast<std::size_t>(a)].score >
                                                preds[static_cast<std::size_t>(b)].score; });

    MatchResult m;
    std::vector<bool> gt_used(gts.size(), false);
    for (int pi : order) {
        const Detection& p = preds[static_cast<std::size_t>(pi)];
        int best_gt = -1;
        double best_iou = 0.0;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (gt_used[gi] || gts[gi].class_id != p.class_id) continue;
            const double iou = box_iou(p.bbox, gts[gi].bbox);
            if (iou > best_iou) {
                best_iou = iou;
                best_gt = static_cast<int>(gi);
            }
        }
        if (best_gt >= 0 && best_iou >= iou_threshold) {
            gt_used[static_cast<std::size_t>(best_gt)] = true;
            m.tp.emplace_back(pi, best_gt);
        } else {
            m.fp.push_back(pi);
        }
    }
    std::sort(m.fp.begin(), m.fp.end());
    for (std::size_t gi = 0; gi < gts.size(); ++gi)
        if (!gt_used[gi]) m.fn.push_back(static_cast<int>(gi));
    return m;
}

struct PrecisionRecallF {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

/// Precision, recall and F_beta from raw counts. Conventions for empty
/// denominators: with no predictions, precision is 1 if there is also no
/// ground truth and 0 otherwise; with no ground truth, recall is 1; F_beta
/// with precision = recall = 0 is 0.
inline PrecisionRecallF precision_recall_fbeta_counts(std::int64_t tp, std::int64_t fp,
                                                      std::int64_t fn, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("precision_recall_fbeta: beta must be > 0");
    PrecisionRecallF r;
    r.precision = tp + fp == 0 ? (fn == 0 ? 1.0 : 0.0)
                               : static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double b2 = beta * beta;
    const double denom = b2 * r.precision + r.recall;
    r.f = denom == 0.0 ? 0.0 : (1.0 + b2) * r.precision * r.recall / denom;
    return r;
}

inline PrecisionRecallF precision_recall_fbeta(const MatchResult& m, double beta) {
    return precision_recall_fbeta_counts(static_cast<std::int64_t>(m.tp.size()),
                                         static_cast<std::int64_t>(m.fp.size()),
                                         static_cast<std::int64_t>(m.fn.size()), beta);
}

/// Macro average accuracy from per-class true-positive / ground-truth counts:
/// the mean of TP_c/NF_c over classes that actually occur.
inline double maa_from_class_counts(
    const std::map<int, std::pair<std::int64_t, std::int64_t>>& tp_nf_by_class) {
    double sum = 0.0;
    int classes = 0;
    for (const auto& [cls, tp_nf] : tp_nf_by_class) {
        if (tp_nf.second <= 0) continue;
        sum += static_cast<double>(tp_nf.first) / static_cast<double>(tp_nf.second);
        ++classes;
    }
    return classes == 0 ? 1.0 : sum / static_cast<double>(classes);
}

/// Per-class recall averaged over the classes present in the ground truth,
/// robust to class imbalance.
inline double macro_average_accuracy(const MatchResult& m, const std::vector<GroundTruthItem>& gts,
                                     int class_count) {
    if (class_count < 1) throw std::invalid_argument("macro_average_accuracy: class_count < 1");
    std::map<int, std::pair<std::int64_t, std::int64_t>> tp_nf;
    for (const GroundTruthItem& g : gts) ++tp_nf[g.class_id].second;
    for (const auto& [pi, gi] : m.tp) ++tp_nf[gts[static_cast<std::size_t>(gi)].class_id].first;
    return maa_from_class_counts(tp_nf);
}

/// Fraction of trays whose ground-truth items are all matched. False
/// positives do not hurt a tray; a tray without ground truth counts as
/// trivially recognized.
inline double tray_accuracy(const std::vector<MatchResult>& per_tray) {
    if (per_tray.empty()) throw std::invalid_argument("tray_accuracy: no trays");
    std::int64_t full = 0;
    for (const MatchResult& m : per_tray) full += m.fn.empty();
    return static_cast<double>(full) / static_cast<double>(per_tray.size());
}

struct TrayGroupStats {
    double recall = 0.0;
    double tray_accuracy = 0.0;
};

/// Pooled recall and tray accuracy grouped by the number of foods per tray.
/// Trays without ground truth fall in no group.
inline std::map<int, TrayGroupStats> recall_by_tray_size(const std::vector<MatchResult>& per_tray) {
    struct Acc {
        std::int64_t tp = 0, nf = 0, trays = 0, full = 0;
    };
    std::map<int, Acc> groups;
    for (const MatchResult& m : per_tray) {
        const int nf = static_cast<int>(m.tp.size() + m.fn.size());
        if (nf == 0) continue;
        Acc& a = groups[nf];
        a.tp += static_cast<std::int64_t>(m.tp.size());
        a.nf += nf;
        ++a.trays;
        a.full += m.fn.empty();
    }
    std::map<int, TrayGroupStats> out;
    for (const auto& [size, a] : groups)
        out[size] = {static_cast<double>(a.tp) / static_cast<double>(a.nf),
                     static_cast<double>(a.full) / static_cast<double>(a.trays)};
    return out;
}

}  // namespace semfood
