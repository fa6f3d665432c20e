#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "semfood/detection.hpp"
#include "semfood/geometry.hpp"
#include "semfood/mask.hpp"
#include "semfood/metrics.hpp"

namespace semfood {

/// Malformed or inconsistent dataset input (labels, annotations, detections).
class schema_error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Food label vocabulary: id = position in the file, one name per line.
struct LabelMap {
    std::vector<std::string> names;
    std::map<std::string, int> ids;

    int size() const { return static_cast<int>(names.size()); }
    /// Id used for all unknown labels when they are allowed through.
    int reserved_unknown_id() const { return size(); }

    std::optional<int> find(const std::string& name) const {
        const auto it = ids.find(name);
        if (it == ids.end()) return std::nullopt;
        return it->second;
    }

    std::string name_of(int id) const {
        if (id >= 0 && id < size()) return names[static_cast<std::size_t>(id)];
        return "<unknown>";
    }
};

inline LabelMap read_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw schema_error("cannot open label file " + path);
    LabelMap map;
    std::string line;
    while (std::getline(in, line)) {
        const auto l = line.find_first_not_of(" \t\r\n");
        if (l == std::string::npos) continue;
        const auto r = line.find_last_not_of(" \t\r\n");
        const std::string name = line.substr(l, r - l + 1);
        if (map.ids.count(name))
            throw schema_error(path + ": duplicate label '" + name + "'");
        map.ids.emplace(name, map.size());
        map.names.push_back(name);
    }
    return map;
}

/// Ground truth for one tray image.
struct TrayAnnotation {
    std::string image_id;
    int width = 0;
    int height = 0;
    std::vector<GroundTruthItem> items;
    std::vector<std::string> item_labels;  // original label text, index-aligned with items
};

namespace detail {

inline BBox bbox_from_xywh_json(const nlohmann::json& arr, int width, int height,
                                const std::string& where) {
    if (!arr.is_array() || arr.size() != 4)
        throw schema_error(where + ": bbox must be [x, y, w, h]");
    for (const auto& v : arr)
        if (!v.is_number_integer())
            throw schema_error(where + ": bbox fields must be integers");
    const int x = arr[0].get<int>(), y = arr[1].get<int>();
    const int w = arr[2].get<int>(), h = arr[3].get<int>();
    if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > width || y + h > height)
        throw schema_error(where + ": bbox [" + std::to_string(x) + "," + std::to_string(y) + "," +
                           std::to_string(w) + "," + std::to_string(h) + "] outside " +
                           std::to_string(width) + "x" + std::to_string(height));
    return {x, y, x + w, y + h};
}

}  // namespace detail

/// Parses the annotation document. Schema, one object per dataset:
///   {"images": [{"id", "width", "height",
///                "items": [{"label", "bbox": [x,y,w,h],
///                           "polygon": [[x,y], ...] (optional)}]}]}
/// Unknown labels are rejected unless allow_unknown maps them all to the
/// label map's reserved id.
inline std::vector<TrayAnnotation> read_annotations(const std::string& path, const LabelMap& labels,
                                                    bool allow_unknown = false) {
    std::ifstream in(path);
    if (!in) throw schema_error("cannot open annotation file " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(path + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("images") || !doc["images"].is_array())
        throw schema_error(path + ": expected top-level object with an \"images\" array");

    std::vector<TrayAnnotation> out;
    std::set<std::string> seen;
    for (const auto& jimg : doc["images"]) {
        TrayAnnotation a;
        if (!jimg.contains("id") || !jimg["id"].is_string())
            throw schema_error(path + ": image without string \"id\"");
        a.image_id = jimg["id"].get<std::string>();
        const std::string where = path + ", image '" + a.image_id + "'";
        if (!seen.insert(a.image_id).second)
            throw schema_error(where + ": duplicate image id");
        if (!jimg.contains("width") || !jimg.contains("height") ||
            !jimg["width"].is_number_integer() || !jimg["height"].is_number_integer())
            throw schema_error(where + ": missing integer width/height");
        a.width = jimg["width"].get<int>();
        a.height = jimg["height"].get<int>();
        if (a.width < 1 || a.height < 1)
            throw schema_error(where + ": non-positive dimensions");

        if (jimg.contains("items")) {
            if (!jimg["items"].is_array()) throw schema_error(where + ": \"items\" must be an array");
            int index = 0;
            for (const auto& jitem : jimg["items"]) {
                const std::string iwhere = where + ", item " + std::to_string(index);
                GroundTruthItem item;
                if (!jitem.contains("label") || !jitem["label"].is_string())
                    throw schema_error(iwhere + ": missing string \"label\"");
                const std::string label = jitem["label"].get<std::string>();
                if (const auto id = labels.find(label)) {
                    item.class_id = *id;
                } else if (allow_unknown) {
                    item.class_id = labels.reserved_unknown_id();
                } else {
                    throw schema_error(iwhere + ": unknown label '" + label + "'");
                }
                if (!jitem.contains("bbox"))
                    throw schema_error(iwhere + ": missing \"bbox\"");
                item.bbox = detail::bbox_from_xywh_json(jitem["bbox"], a.width, a.height, iwhere);
                if (jitem.contains("polygon")) {
                    const auto& jpoly = jitem["polygon"];
                    if (!jpoly.is_array() || jpoly.empty())
                        throw schema_error(iwhere + ": polygon must be a non-empty array");
                    Contour poly;
                    for (const auto& jp : jpoly) {
                        if (!jp.is_array() || jp.size() != 2 || !jp[0].is_number_integer() ||
                            !jp[1].is_number_integer())
                            throw schema_error(iwhere + ": polygon points must be [x, y]");
                        const Point p{jp[0].get<int>(), jp[1].get<int>()};
                        if (p.x < 0 || p.y < 0 || p.x >= a.width || p.y >= a.height)
                            throw schema_error(iwhere + ": polygon point (" + std::to_string(p.x) +
                                               "," + std::to_string(p.y) + ") outside " +
                                               std::to_string(a.width) + "x" +
                                               std::to_string(a.height));
                        poly.push_back(p);
                    }
                    item.polygon = std::move(poly);
                }
                a.items.push_back(std::move(item));
                a.item_labels.push_back(label);
                ++index;
            }
        }
        out.push_back(std::move(a));
    }
    return out;
}

inline void write_annotations(const std::vector<TrayAnnotation>& annotations,
                              const LabelMap& labels, const std::string& path) {
    nlohmann::ordered_json doc;
    doc["images"] = nlohmann::ordered_json::array();
    for (const TrayAnnotation& a : annotations) {
        nlohmann::ordered_json jimg;
        jimg["id"] = a.image_id;
        jimg["width"] = a.width;
        jimg["height"] = a.height;
        jimg["items"] = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < a.items.size(); ++i) {
            const GroundTruthItem& item = a.items[i];
            nlohmann::ordered_json jitem;
            jitem["label"] = i < a.item_labels.size() ? a.item_labels[i]
                                                      : labels.name_of(item.class_id);
            jitem["bbox"] = {item.bbox.x0, item.bbox.y0, item.bbox.width(), item.bbox.height()};
            if (item.polygon) {
                auto jpoly = nlohmann::ordered_json::array();
                for (const Point& p : *item.polygon) jpoly.push_back({p.x, p.y});
                jitem["polygon"] = std::move(jpoly);
            }
            jimg["items"].push_back(std::move(jitem));
        }
        doc["images"].push_back(std::move(jimg));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << doc.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failure on " + path);
}

namespace detail {

inline double parse_number(const std::string& tok, int line_no, const std::string& path) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != tok.size() || !std::isfinite(v))
        throw schema_error(path + ":" + std::to_string(line_no) + ": non-numeric field '" + tok +
                           "'");
    return v;
}

/// Sub-pixel (x, y, w, h) to the half-open integer box, each edge rounded
/// half away from zero and clamped at the image origin.
inline BBox round_xywh(double x, double y, double w, double h, int line_no,
                       const std::string& path) {
    const auto r = [](double v) { return static_cast<int>(std::llround(v)); };
    BBox b;
    b.x0 = std::max(0, r(x));
    b.y0 = std::max(0, r(y));
    b.x1 = std::max(0, r(x + w));
    b.y1 = std::max(0, r(y + h));
    if (!b.valid())
        throw schema_error(path + ":" + std::to_string(line_no) + ": degenerate box after rounding");
    return b;
}

}  // namespace detail

/// Reads line-oriented detection records, grouped by image id with per-image
/// order preserved. Record layout, whitespace or comma separated:
///   image_id x y w h objectness p_1 ... p_C
/// The objectness field is sigma(t_o) unless objectness_is_logit; C is fixed
/// by the first record. Blank lines and lines starting with '#' are skipped.
inline std::map<std::string, std::vector<RawDetection>> read_detections(
    const std::string& path, bool objectness_is_logit = false) {
    std::ifstream in(path);
    if (!in) throw schema_error("cannot open detection file " + path);
    std::map<std::string, std::vector<RawDetection>> out;
    std::string line;
    int line_no = 0;
    std::size_t class_count = 0;
    while (std::getline(in, line)) {
        ++line_no;
        for (char& c : line)
            if (c == ',') c = ' ';
        std::istringstream ss(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ss >> tok) tokens.push_back(tok);
        if (tokens.empty() || tokens[0][0] == '#') continue;
        if (tokens.size() < 7)
            throw schema_error(path + ":" + std::to_string(line_no) +
                               ": wrong field count (need image_id x y w h objectness p_1...)");
        if (class_count == 0) class_count = tokens.size() - 6;
        if (tokens.size() - 6 != class_count)
            throw schema_error(path + ":" + std::to_string(line_no) + ": wrong field count (" +
                               std::to_string(tokens.size() - 6) + " class probabilities, expected " +
                               std::to_string(class_count) + ")");

        RawDetection d;
        const double x = detail::parse_number(tokens[1], line_no, path);
        const double y = detail::parse_number(tokens[2], line_no, path);
        const double w = detail::parse_number(tokens[3], line_no, path);
        const double h = detail::parse_number(tokens[4], line_no, path);
        d.bbox = detail::round_xywh(x, y, w, h, line_no, path);
        d.objectness = detail::parse_number(tokens[5], line_no, path);
        d.objectness_is_logit = objectness_is_logit;
        if (!objectness_is_logit && !(d.objectness >= 0.0 && d.objectness <= 1.0))
            throw schema_error(path + ":" + std::to_string(line_no) +
                               ": objectness probability out of [0,1]");
        for (std::size_t i = 6; i < tokens.size(); ++i) {
            const double p = detail::parse_number(tokens[i], line_no, path);
            if (!(p >= 0.0 && p <= 1.0))
                throw schema_error(path + ":" + std::to_string(line_no) +
                                   ": class probability out of [0,1]");
            d.class_probs.push_back(p);
        }
        out[tokens[0]].push_back(std::move(d));
    }
    return out;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Writes detection records in exactly the format read_detections accepts.
inline void write_detections(const std::map<std::string, std::vector<RawDetection>>& dets,
                             const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "# image_id x y w h objectness p_1 ... p_C\n";
    for (const auto& [id, list] : dets) {
        for (const RawDetection& d : list) {
            out << id << ' ' << d.bbox.x0 << ' ' << d.bbox.y0 << ' ' << d.bbox.width() << ' '
                << d.bbox.height() << ' ' << detail::format_double(d.objectness);
            for (double p : d.class_probs) out << ' ' << detail::format_double(p);
            out << '\n';
        }
    }
    if (!out) throw std::runtime_error("write failure on " + path);
}

/// Final (fused) detections, one line per box: image_id class_id score x y w h.
inline void write_final_detections(const std::map<std::string, std::vector<Detection>>& dets,
                                   const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "# image_id class_id score x y w h\n";
    for (const auto& [id, list] : dets) {
        for (const Detection& d : list)
            out << id << ' ' << d.class_id << ' ' << detail::format_double(d.score) << ' '
                << d.bbox.x0 << ' ' << d.bbox.y0 << ' ' << d.bbox.width() << ' '
                << d.bbox.height() << '\n';
    }
    if (!out) throw std::runtime_error("write failure on " + path);
}

inline std::map<std::string, std::vector<Detection>> read_final_detections(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw schema_error("cannot open detection file " + path);
    std::map<std::string, std::vector<Detection>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        for (char& c : line)
            if (c == ',') c = ' ';
        std::istringstream ss(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ss >> tok) tokens.push_back(tok);
        if (tokens.empty() || tokens[0][0] == '#') continue;
        if (tokens.size() != 7)
            throw schema_error(path + ":" + std::to_string(line_no) +
                               ": wrong field count (need image_id class_id score x y w h)");
        Detection d;
        d.class_id = static_cast<int>(detail::parse_number(tokens[1], line_no, path));
        d.score = detail::parse_number(tokens[2], line_no, path);
        const double x = detail::parse_number(tokens[3], line_no, path);
        const double y = detail::parse_number(tokens[4], line_no, path);
        const double w = detail::parse_number(tokens[5], line_no, path);
        const double h = detail::parse_number(tokens[6], line_no, path);
        d.bbox = detail::round_xywh(x, y, w, h, line_no, path);
        out[tokens[0]].push_back(d);
    }
    return out;
}

namespace detail {

/// 8-connected integer line from a to b (Bresenham), endpoints included.
inline void draw_line(BinaryMask& m, Point a, Point b) {
    const int dx = std::abs(b.x - a.x), dy = -std::abs(b.y - a.y);
    const int sx = a.x < b.x ? 1 : -1, sy = a.y < b.y ? 1 : -1;
    int err = dx + dy;
    while (true) {
        m.set(a.x, a.y, true);
        if (a == b) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            a.x += sx;
        }
        if (e2 <= dx) {
            err += dx;
            a.y += sy;
        }
    }
}

}  // namespace detail

/// Paints the ground truth of one tray as a per-pixel region map: item i gets
/// id i+1 (later items overwrite earlier ones), background stays 0. An item
/// with a polygon contributes its filled outline; otherwise its box.
inline LabelMask rasterize_annotation(const TrayAnnotation& a) {
    LabelMask out(a.width, a.height);
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        const GroundTruthItem& item = a.items[i];
        const std::int32_t id = static_cast<std::int32_t>(i) + 1;
        if (item.polygon && !item.polygon->empty()) {
            BinaryMask scratch(a.width, a.height);
            const Contour& poly = *item.polygon;
            for (std::size_t k = 0; k < poly.size(); ++k)
                detail::draw_line(scratch, poly[k], poly[(k + 1) % poly.size()]);
            const BinaryMask filled = fill_holes(scratch);
            for (int y = 0; y < a.height; ++y)
                for (int x = 0; x < a.width; ++x)
                    if (filled.at(x, y)) out.set(x, y, id);
        } else {
            for (int y = item.bbox.y0; y < item.bbox.y1; ++y)
                for (int x = item.bbox.x0; x < item.bbox.x1; ++x) out.set(x, y, id);
        }
    }
    return out;
}

/// Food/background view of a ground-truth region map.
inline LabelMask binarize_labels(const LabelMask& regions) {
    LabelMask out(regions.width, regions.height);
    for (std::size_t i = 0; i < regions.labels.size(); ++i)
        out.labels[i] = regions.labels[i] != 0 ? 1 : 0;
    return out;
}

}  // namespace semfood
