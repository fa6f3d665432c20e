#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

namespace semfood {

/// Pixel location on the image grid; x is the column index, y the row index.
struct Point {
    int x = 0;
    int y = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned pixel box, half-open on both axes: [x0,x1) x [y0,y1).
/// Under this convention the area is an exact pixel count and intersections
/// stay representable without +1 corrections.
struct BBox {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    friend bool operator==(const BBox&, const BBox&) = default;

    bool valid() const { return x0 < x1 && y0 < y1; }
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool contains(const Point& p) const {
        return p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1;
    }
};

/// Closed pixel chain: consecutive points (and last back to first) are
/// 8-adjacent. A single-pixel contour is a single point.
using Contour = std::vector<Point>;

/// Pixel count covered by the box.
inline std::int64_t box_area(const BBox& b) {
    return static_cast<std::int64_t>(b.width()) * static_cast<std::int64_t>(b.height());
}

/// Pixel count of the overlap region, 0 when disjoint.
inline std::int64_t box_intersection_area(const BBox& a, const BBox& b) {
    const int w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const int h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    if (w <= 0 || h <= 0) return 0;
    return static_cast<std::int64_t>(w) * static_cast<std::int64_t>(h);
}

/// Fraction of box a covered by box b, in [0,1].
inline double intersection_over_self(const BBox& a, const BBox& b) {
    return static_cast<double>(box_intersection_area(a, b)) / static_cast<double>(box_area(a));
}

/// Intersection over union (Jaccard index) of two boxes.
inline double box_iou(const BBox& a, const BBox& b) {
    const std::int64_t inter = box_intersection_area(a, b);
    const std::int64_t uni = box_area(a) + box_area(b) - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// True iff at least one contour pixel lies inside the box.
/// Contour pixels are foreground, so they count as inside.
inline bool box_intersects_contour(const BBox& b, const Contour& c) {
    return std::any_of(c.begin(), c.end(), [&](const Point& p) { return b.contains(p); });
}

}  // namespace semfood
