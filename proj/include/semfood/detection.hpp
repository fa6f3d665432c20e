#pragma once

#include <cmath>
#include <vector>

#include "semfood/geometry.hpp"

namespace semfood {

/// One raw detector output box. `objectness` carries either the precomputed
/// probability sigma(t_o) (the default) or the raw logit t_o, disambiguated
/// by `objectness_is_logit`. `class_probs` are the conditional class
/// probabilities Pr(class | object), consumed as given, never renormalised.
struct RawDetection {
    BBox bbox;
    double objectness = 0.0;
    bool objectness_is_logit = false;
    std::vector<double> class_probs;

    friend bool operator==(const RawDetection&, const RawDetection&) = default;
};

/// A scored detection: winning class plus its class-specific confidence score.
struct Detection {
    BBox bbox;
    int class_id = 0;
    double score = 0.0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Numerically stable logistic, 1/(1+e^-t).
inline double logistic(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// Class-specific confidence score: the winning conditional class probability
/// (argmax, ties to the lowest index) times the objectness probability.
inline Detection confidence_score(const RawDetection& r) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(r.class_probs.size()); ++c)
        if (r.class_probs[c] > r.class_probs[best]) best = c;
    const double obj = r.objectness_is_logit ? logistic(r.objectness) : r.objectness;
    return {r.bbox, best, r.class_probs[static_cast<std::size_t>(best)] * obj};
}

/// Keeps detections with score >= threshold, preserving order.
inline std::vector<Detection> filter_by_threshold(const std::vector<Detection>& dets,
                                                  double threshold) {
    std::vector<Detection> out;
    out.reserve(dets.size());
    for (const Detection& d : dets)
        if (d.score >= threshold) out.push_back(d);
    return out;
}

}  // namespace semfood
