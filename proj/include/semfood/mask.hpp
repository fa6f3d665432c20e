#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "semfood/geometry.hpp"

namespace semfood {

/// Per-pixel food/background map, row-major, 1 = food.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(int w, int h)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }

    std::int64_t foreground_count() const {
        std::int64_t n = 0;
        for (std::uint8_t b : bits) n += b != 0;
        return n;
    }
};

/// Per-pixel non-negative integer identifiers, row-major. Depending on use
/// the values are connected-component ids, region ids or class ids.
struct LabelMask {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> labels;

    LabelMask() = default;
    LabelMask(int w, int h)
        : width(w), height(h), labels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

    friend bool operator==(const LabelMask&, const LabelMask&) = default;

    std::int32_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    void set(int x, int y, std::int32_t v) { labels[static_cast<std::size_t>(y) * width + x] = v; }
};

/// One extracted region: exterior boundary, tightest bounding box and the
/// filled pixel area.
struct Region {
    Contour contour;
    BBox bbox;
    std::int64_t area = 0;
};

namespace detail {

// Moore neighbourhood in clockwise order on screen coordinates (y grows
// downward), starting west: W, NW, N, NE, E, SE, S, SW.
inline constexpr std::array<Point, 8> kMooreOffset = {
    {{-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}}};

inline int moore_index(const Point& center, const Point& neighbor) {
    const Point d{neighbor.x - center.x, neighbor.y - center.y};
    for (int i = 0; i < 8; ++i)
        if (kMooreOffset[i] == d) return i;
    throw std::logic_error("moore_index: points are not 8-adjacent");
}

}  // namespace detail

/// Labels foreground pixels by 8-connectivity. Background stays 0 and
/// component ids are 1..K in raster order of first encounter. Works on
/// row runs merged with a union-find, one pass plus the label write.
inline LabelMask connected_components(const BinaryMask& m) {
    LabelMask out(m.width, m.height);

    struct Run {
        int y, x0, x1;  // row and half-open column range
    };
    std::vector<Run> runs;
    std::vector<std::int32_t> parent;
    const auto find = [&](std::int32_t i) {
        while (parent[static_cast<std::size_t>(i)] != i) {
            parent[static_cast<std::size_t>(i)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
            i = parent[static_cast<std::size_t>(i)];
        }
        return i;
    };
    const auto unite = [&](std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    };

    std::int32_t prev_begin = 0, prev_end = 0;  // runs of the previous row
    for (int y = 0; y < m.height; ++y) {
        const std::uint8_t* row = m.bits.data() + static_cast<std::size_t>(y) * m.width;
        const std::int32_t row_begin = static_cast<std::int32_t>(runs.size());
        int x = 0;
        std::int32_t probe = prev_begin;
        while (x < m.width) {
            if (row[x] == 0) {
                ++x;
                continue;
            }
            const int x0 = x;
            while (x < m.width && row[x] != 0) ++x;
            const std::int32_t id = static_cast<std::int32_t>(runs.size());
            runs.push_back({y, x0, x});
            parent.push_back(id);
            // 8-connectivity: a previous-row run touches iff the column
            // ranges are within one pixel of each other.
            while (probe < prev_end && runs[static_cast<std::size_t>(probe)].x1 < x0) ++probe;
            for (std::int32_t p = probe;
                 p < prev_end && runs[static_cast<std::size_t>(p)].x0 <= x; ++p)
                unite(p, id);
        }
        prev_begin = row_begin;
        prev_end = static_cast<std::int32_t>(runs.size());
    }

    // Runs were created in raster order, so mapping roots in run order gives
    // component ids in raster order of first encounter.
    std::vector<std::int32_t> component(runs.size(), 0);
    std::int32_t next_id = 0;
    for (std::int32_t i = 0; i < static_cast<std::int32_t>(runs.size()); ++i) {
        const std::int32_t root = find(i);
        if (component[static_cast<std::size_t>(root)] == 0)
            component[static_cast<std::size_t>(root)] = ++next_id;
        component[static_cast<std::size_t>(i)] = component[static_cast<std::size_t>(root)];
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const Run& r = runs[i];
        std::int32_t* dst = out.labels.data() + static_cast<std::size_t>(r.y) * m.width;
        for (int xx = r.x0; xx < r.x1; ++xx) dst[xx] = component[i];
    }
    return out;
}

/// Traces the exterior boundary of the region containing `start` with the
/// Moore-neighbour walk, clockwise, treating everything outside the image as
/// background. `start` must be the raster-first foreground pixel of its
/// component. The walk stops with Jacob's criterion: once it re-enters the
/// start pixel and departs toward the same second pixel it originally did,
/// the boundary has closed. Interior holes are never visited.
inline Contour trace_boundary(const BinaryMask& m, const Point& start) {
    if (start.x < 0 || start.y < 0 || start.x >= m.width || start.y >= m.height ||
        !m.at(start.x, start.y))
        throw std::invalid_argument("trace_boundary: start is not a foreground pixel");

    const auto fg = [&](const Point& p) {
        return p.x >= 0 && p.y >= 0 && p.x < m.width && p.y < m.height && m.at(p.x, p.y);
    };

    struct Step {
        Point next;
        Point backtrack;  // background neighbour examined just before `next`
        bool found = false;
    };
    // Scan the Moore neighbourhood of `pivot` clockwise, starting just after
    // the (background) neighbour `from`.
    const auto advance = [&](const Point& pivot, const Point& from) -> Step {
        const int d = detail::moore_index(pivot, from);
        Point prev = from;
        for (int k = 1; k <= 8; ++k) {
            const Point& off = detail::kMooreOffset[(d + k) % 8];
            const Point q{pivot.x + off.x, pivot.y + off.y};
            if (fg(q)) return {q, prev, true};
            prev = q;
        }
        return {};
    };

    Contour contour{start};
    const Point entry{start.x - 1, start.y};  // virtual west entry into the start pixel
    const Step first = advance(start, entry);
    if (!first.found) return contour;  // isolated pixel
    const Point second = first.next;
    contour.push_back(second);

    Point cur = second;
    Point back = first.backtrack;
    const std::size_t limit =
        8 * static_cast<std::size_t>(m.width) * static_cast<std::size_t>(m.height) + 8;
    while (contour.size() < limit) {
        const Step step = advance(cur, back);
        if (!step.found) throw std::logic_error("trace_boundary: walk lost the region");
        if (step.next == start && advance(start, step.backtrack).next == second)
            return contour;
        contour.push_back(step.next);
        cur = step.next;
        back = step.backtrack;
    }
    throw std::runtime_error("trace_boundary: walk did not close (start pixel not raster-first?)");
}

/// Turns every background pocket that cannot reach the image border into
/// foreground. Background connectivity is 4-adjacency, the dual of the
/// 8-connected foreground, so diagonal foreground walls seal a hole.
inline BinaryMask fill_holes(const BinaryMask& m) {
    BinaryMask out = m;
    if (m.width == 0 || m.height == 0) return out;
    std::vector<std::uint8_t> reachable(m.bits.size(), 0);
    std::vector<std::int32_t> stack;
    const auto seed = [&](int x, int y) {
        const std::size_t idx = static_cast<std::size_t>(y) * m.width + x;
        if (m.bits[idx] == 0 && reachable[idx] == 0) {
            reachable[idx] = 1;
            stack.push_back(static_cast<std::int32_t>(idx));
        }
    };
    for (int x = 0; x < m.width; ++x) {
        seed(x, 0);
        seed(x, m.height - 1);
    }
    for (int y = 0; y < m.height; ++y) {
        seed(0, y);
        seed(m.width - 1, y);
    }
    constexpr std::array<Point, 4> kCross = {{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
    while (!stack.empty()) {
        const std::int32_t cur = stack.back();
        stack.pop_back();
        const int cx = cur % m.width;
        const int cy = cur / m.width;
        for (const Point& d : kCross) {
            const int nx = cx + d.x;
            const int ny = cy + d.y;
            if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * m.width + nx;
            if (m.bits[nidx] != 0 || reachable[nidx] != 0) continue;
            reachable[nidx] = 1;
            stack.push_back(static_cast<std::int32_t>(nidx));
        }
    }
    for (std::size_t i = 0; i < out.bits.size(); ++i)
        if (out.bits[i] == 0 && reachable[i] == 0) out.bits[i] = 1;
    return out;
}

/// Full product of the segmentation post-processing stage. `regions` holds
/// the surviving regions in raster order; `labels` maps every pixel to the
/// 1-based index of its surviving region (0 for background and for pixels of
/// dropped regions); `filled` is the hole-filled mask.
struct RegionExtraction {
    std::vector<Region> regions;
    LabelMask labels;
    BinaryMask filled;
};

inline RegionExtraction extract_regions_detailed(const BinaryMask& m, double min_area_fraction) {
    if (!(min_area_fraction >= 0.0 && min_area_fraction < 1.0))
        throw std::invalid_argument("extract_regions: min_area_fraction must be in [0,1)");

    RegionExtraction out;
    out.filled = fill_holes(m);
    const LabelMask cc = connected_components(out.filled);

    std::int32_t component_count = 0;
    for (std::int32_t l : cc.labels) component_count = std::max(component_count, l);

    struct Stats {
        std::int64_t area = 0;
        int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
        Point first{};  // raster-first pixel
    };
    std::vector<Stats> stats(static_cast<std::size_t>(component_count));
    for (int y = 0; y < cc.height; ++y) {
        for (int x = 0; x < cc.width; ++x) {
            const std::int32_t l = cc.at(x, y);
            if (l == 0) continue;
            Stats& s = stats[static_cast<std::size_t>(l - 1)];
            if (s.area == 0) {
                s.min_x = s.max_x = x;
                s.min_y = s.max_y = y;
                s.first = {x, y};
            } else {
                s.min_x = std::min(s.min_x, x);
                s.max_x = std::max(s.max_x, x);
                s.min_y = std::min(s.min_y, y);
                s.max_y = std::max(s.max_y, y);
            }
            ++s.area;
        }
    }

    const double threshold =
        min_area_fraction * static_cast<double>(m.width) * static_cast<double>(m.height);
    std::vector<std::int32_t> remap(static_cast<std::size_t>(component_count) + 1, 0);
    for (std::int32_t l = 1; l <= component_count; ++l) {
        const Stats& s = stats[static_cast<std::size_t>(l - 1)];
        if (static_cast<double>(s.area) < threshold) continue;
        Region r;
        r.contour = trace_boundary(out.filled, s.first);
        r.bbox = {s.min_x, s.min_y, s.max_x + 1, s.max_y + 1};
        r.area = s.area;
        out.regions.push_back(std::move(r));
        remap[static_cast<std::size_t>(l)] = static_cast<std::int32_t>(out.regions.size());
    }

    out.labels = LabelMask(m.width, m.height);
    for (std::size_t i = 0; i < cc.labels.size(); ++i)
        out.labels.labels[i] = remap[static_cast<std::size_t>(cc.labels[i])];
    return out;
}

/// Hole-filled regions of the mask with bounding boxes and areas, raster
/// ordered; regions smaller than min_area_fraction of the image are dropped.
inline std::vector<Region> extract_regions(const BinaryMask& m, double min_area_fraction) {
    return extract_regions_detailed(m, min_area_fraction).regions;
}

}  // namespace semfood
