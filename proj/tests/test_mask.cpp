#include <catch2/catch.hpp>

#include <random>
#include <set>

#include "semfood/mask.hpp"
#include "test_util.hpp"

using namespace semfood;

namespace {

BinaryMask mask_from_rows(const std::vector<std::string>& rows) {
    BinaryMask m(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) m.set(x, y, rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] != '.');
    return m;
}

// 5x5 ring: a 5x5 square with the 3x3 interior removed.
BinaryMask donut() {
    return mask_from_rows({
        "#####",
        "#...#",
        "#...#",
        "#...#",
        "#####",
    });
}

bool is_background_8_neighbor_or_border(const BinaryMask& m, const Point& p) {
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = p.x + dx, ny = p.y + dy;
            if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height) return true;
            if (!m.at(nx, ny)) return true;
        }
    }
    return false;
}

}  // namespace

TEST_CASE("connected_components basics") {
    SECTION("all background") {
        const BinaryMask m(4, 3);
        const LabelMask cc = connected_components(m);
        for (auto l : cc.labels) CHECK(l == 0);
    }
    SECTION("diagonal pixels join under 8-connectivity") {
        BinaryMask m(4, 4);
        m.set(1, 1, true);
        m.set(2, 2, true);
        const LabelMask cc = connected_components(m);
        CHECK(cc.at(1, 1) == 1);
        CHECK(cc.at(2, 2) == 1);
    }
    SECTION("two blobs get raster-ordered ids") {
        const BinaryMask m = mask_from_rows({
            "##.##",
            "##.##",
        });
        const LabelMask cc = connected_components(m);
        CHECK(cc.at(0, 0) == 1);
        CHECK(cc.at(1, 1) == 1);
        CHECK(cc.at(3, 0) == 2);
        CHECK(cc.at(4, 1) == 2);
        CHECK(cc.at(2, 0) == 0);
    }
}

TEST_CASE("trace_boundary on canonical shapes") {
    SECTION("single pixel") {
        BinaryMask m(5, 5);
        m.set(2, 2, true);
        CHECK(trace_boundary(m, {2, 2}) == Contour{{2, 2}});
    }
    SECTION("start on background is an error") {
        BinaryMask m(5, 5);
        m.set(2, 2, true);
        CHECK_THROWS_AS(trace_boundary(m, {0, 0}), std::invalid_argument);
    }
    SECTION("solid 3x3 square: all 8 perimeter pixels, clockwise, no interior") {
        const BinaryMask m = mask_from_rows({
            "###..",
            "###..",
            "###..",
        });
        const Contour expected{{0, 0}, {1, 0}, {2, 0}, {2, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}};
        CHECK(trace_boundary(m, {0, 0}) == expected);
    }
    SECTION("donut: 16-pixel exterior only, the hole boundary never appears") {
        const Contour expected{{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}, {4, 1}, {4, 2}, {4, 3},
                               {4, 4}, {3, 4}, {2, 4}, {1, 4}, {0, 4}, {0, 3}, {0, 2}, {0, 1}};
        CHECK(trace_boundary(donut(), {0, 0}) == expected);
    }
    SECTION("one-pixel-wide line closes without repeating the start") {
        const BinaryMask m = mask_from_rows({"###"});
        CHECK(trace_boundary(m, {0, 0}) == Contour{{0, 0}, {1, 0}, {2, 0}, {1, 0}});
    }
    SECTION("border-touching region traces fine") {
        const BinaryMask m = mask_from_rows({
            "##",
            "##",
        });
        CHECK(trace_boundary(m, {0, 0}) == Contour{{0, 0}, {1, 0}, {1, 1}, {0, 1}});
    }
}

TEST_CASE("traced contours are exterior boundary pixels") {
    std::mt19937 rng(7101);
    for (int i = 0; i < 150; ++i) {
        const BinaryMask m = testutil::random_mask(rng, 24);
        const LabelMask cc = connected_components(m);
        std::set<std::int32_t> seen;
        for (int y = 0; y < m.height; ++y) {
            for (int x = 0; x < m.width; ++x) {
                const std::int32_t l = cc.at(x, y);
                if (l == 0 || !seen.insert(l).second) continue;
                const Contour c = trace_boundary(m, {x, y});
                for (std::size_t k = 0; k < c.size(); ++k) {
                    CHECK(m.at(c[k].x, c[k].y));
                    CHECK(is_background_8_neighbor_or_border(m, c[k]));
                    const Point& next = c[(k + 1) % c.size()];
                    CHECK(std::abs(next.x - c[k].x) <= 1);
                    CHECK(std::abs(next.y - c[k].y) <= 1);
                    if (c.size() > 1) CHECK(!(next == c[k]));
                }
            }
        }
    }
}

TEST_CASE("fill_holes") {
    SECTION("solid square is a fixed point") {
        const BinaryMask m = mask_from_rows({
            ".....",
            ".###.",
            ".###.",
            ".###.",
        });
        CHECK(fill_holes(m) == m);
    }
    SECTION("donut becomes a solid square") {
        const BinaryMask solid = mask_from_rows({
            "#####",
            "#####",
            "#####",
            "#####",
            "#####",
        });
        CHECK(fill_holes(donut()) == solid);
    }
    SECTION("channel open to the border is not a hole") {
        const BinaryMask m = mask_from_rows({
            "###.#",
            "#...#",
            "#####",
        });
        CHECK(fill_holes(m) == m);
    }
}

TEST_CASE("fill_holes properties on random masks") {
    std::mt19937 rng(7102);
    for (int i = 0; i < 200; ++i) {
        const BinaryMask m = testutil::random_mask(rng, 24);
        const BinaryMask once = fill_holes(m);
        CHECK(fill_holes(once) == once);  // idempotent
        for (std::size_t k = 0; k < m.bits.size(); ++k)
            CHECK(once.bits[k] >= m.bits[k]);  // monotone

        // After filling, every background pixel can reach the border through
        // 4-connected background.
        std::vector<std::uint8_t> reach(once.bits.size(), 0);
        std::vector<int> stack;
        const auto seed = [&](int x, int y) {
            const std::size_t idx = static_cast<std::size_t>(y) * once.width + x;
            if (!once.bits[idx] && !reach[idx]) {
                reach[idx] = 1;
                stack.push_back(static_cast<int>(idx));
            }
        };
        for (int x = 0; x < once.width; ++x) {
            seed(x, 0);
            seed(x, once.height - 1);
        }
        for (int y = 0; y < once.height; ++y) {
            seed(0, y);
            seed(once.width - 1, y);
        }
        while (!stack.empty()) {
            const int cur = stack.back();
            stack.pop_back();
            const int cx = cur % once.width, cy = cur / once.width;
            if (cx + 1 < once.width) seed(cx + 1, cy);
            if (cx > 0) seed(cx - 1, cy);
            if (cy + 1 < once.height) seed(cx, cy + 1);
            if (cy > 0) seed(cx, cy - 1);
        }
        for (std::size_t k = 0; k < once.bits.size(); ++k)
            if (!once.bits[k]) CHECK(reach[k] == 1);
    }
}

TEST_CASE("extract_regions") {
    SECTION("area filter drops the speck") {
        BinaryMask m(100, 100);
        for (int y = 10; y < 20; ++y)
            for (int x = 10; x < 20; ++x) m.set(x, y, true);  // 100 px blob
        m.set(80, 80, true);                                  // 1 px speck
        const auto kept = extract_regions(m, 0.001);          // threshold 10 px
        REQUIRE(kept.size() == 1);
        CHECK(kept[0].area == 100);
        CHECK(kept[0].bbox == BBox{10, 10, 20, 20});
        const auto all = extract_regions(m, 0.0);
        CHECK(all.size() == 2);
    }
    SECTION("empty mask yields no regions") {
        CHECK(extract_regions(BinaryMask(8, 8), 0.0).empty());
    }
    SECTION("holes are filled before measuring") {
        const auto regions = extract_regions(donut(), 0.0);
        REQUIRE(regions.size() == 1);
        CHECK(regions[0].area == 25);
        CHECK(regions[0].bbox == BBox{0, 0, 5, 5});
        CHECK(regions[0].contour.size() == 16);
    }
    SECTION("invalid fraction") {
        CHECK_THROWS_AS(extract_regions(BinaryMask(4, 4), 1.0), std::invalid_argument);
        CHECK_THROWS_AS(extract_regions(BinaryMask(4, 4), -0.1), std::invalid_argument);
    }
}

TEST_CASE("region geometry matches a brute-force component scan") {
    std::mt19937 rng(7103);
    for (int i = 0; i < 120; ++i) {
        const BinaryMask m = testutil::random_mask(rng, 64);
        const auto extraction = extract_regions_detailed(m, 0.0);
        const LabelMask cc = connected_components(extraction.filled);

        std::int32_t count = 0;
        for (auto l : cc.labels) count = std::max(count, l);
        REQUIRE(extraction.regions.size() == static_cast<std::size_t>(count));

        std::int64_t total_area = 0;
        for (std::int32_t l = 1; l <= count; ++l) {
            int min_x = m.width, min_y = m.height, max_x = -1, max_y = -1;
            std::int64_t area = 0;
            for (int y = 0; y < m.height; ++y)
                for (int x = 0; x < m.width; ++x)
                    if (cc.at(x, y) == l) {
                        min_x = std::min(min_x, x);
                        min_y = std::min(min_y, y);
                        max_x = std::max(max_x, x);
                        max_y = std::max(max_y, y);
                        ++area;
                    }
            const Region& r = extraction.regions[static_cast<std::size_t>(l - 1)];
            CHECK(r.bbox == BBox{min_x, min_y, max_x + 1, max_y + 1});
            CHECK(r.area == area);
            total_area += area;
            std::set<std::pair<int, int>> distinct;
            for (const Point& p : r.contour) {
                CHECK(r.bbox.contains(p));
                distinct.emplace(p.x, p.y);
            }
            CHECK(static_cast<std::int64_t>(distinct.size()) <= r.area);
        }
        CHECK(total_area == extraction.filled.foreground_count());
    }
}
