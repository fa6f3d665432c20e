#pragma once

#include <cctype>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "semfood/mask.hpp"

namespace semfood {

/// PGM parse failure with a machine-checkable kind.
class pgm_error : public std::runtime_error {
  public:
    enum class kind { bad_magic, bad_header, dimension_overflow, truncated, bad_pixel };

    pgm_error(kind k, const std::string& what) : std::runtime_error(what), kind_(k) {}
    kind which() const { return kind_; }

  private:
    kind kind_;
};

/// Raw PGM raster: P2 (ASCII) and P5 (binary) with maxval up to 65535.
struct PgmImage {
    int width = 0;
    int height = 0;
    int maxval = 255;
    std::vector<std::uint16_t> pixels;  // row-major

    friend bool operator==(const PgmImage&, const PgmImage&) = default;
};

namespace detail {

// Next header token, skipping whitespace and '#' comments to end of line.
// The byte that terminates the token stays in the stream: for P5 the single
// whitespace between maxval and the raster must remain readable.
inline std::string pgm_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c) && c != '#') {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (c != EOF) in.unget();
    return tok;
}

inline long pgm_int(std::istream& in, const char* field) {
    const std::string tok = pgm_token(in);
    if (tok.empty())
        throw pgm_error(pgm_error::kind::bad_header, std::string("missing ") + field);
    for (char ch : tok)
        if (!std::isdigit(static_cast<unsigned char>(ch)))
            throw pgm_error(pgm_error::kind::bad_header,
                            std::string("non-numeric ") + field + ": '" + tok + "'");
    errno = 0;
    const long v = std::strtol(tok.c_str(), nullptr, 10);
    if (errno != 0)
        throw pgm_error(pgm_error::kind::dimension_overflow,
                        std::string(field) + " out of range: '" + tok + "'");
    return v;
}

}  // namespace detail

inline PgmImage read_pgm(std::istream& in) {
    const std::string magic = detail::pgm_token(in);
    if (magic != "P2" && magic != "P5")
        throw pgm_error(pgm_error::kind::bad_magic, "not a P2/P5 PGM (magic '" + magic + "')");
    const bool binary = magic == "P5";

    const long width = detail::pgm_int(in, "width");
    const long height = detail::pgm_int(in, "height");
    if (width < 1 || height < 1 || width * height > (1L << 29))
        throw pgm_error(pgm_error::kind::dimension_overflow,
                        "unreasonable dimensions " + std::to_string(width) + "x" +
                            std::to_string(height));
    const long maxval = detail::pgm_int(in, "maxval");
    if (maxval < 1 || maxval > 65535)
        throw pgm_error(pgm_error::kind::bad_header, "maxval out of range: " + std::to_string(maxval));

    PgmImage img;
    img.width = static_cast<int>(width);
    img.height = static_cast<int>(height);
    img.maxval = static_cast<int>(maxval);
    const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    img.pixels.resize(count);

    if (binary) {
        const int sep = in.get();  // single whitespace byte between maxval and the raster
        if (sep == EOF || !std::isspace(sep))
            throw pgm_error(pgm_error::kind::bad_header, "missing raster separator");
        const int bytes_per = maxval > 255 ? 2 : 1;
        std::vector<char> buf(count * static_cast<std::size_t>(bytes_per));
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::size_t>(in.gcount()) != buf.size())
            throw pgm_error(pgm_error::kind::truncated, "raster shorter than width*height");
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t v;
            if (bytes_per == 1) {
                v = static_cast<std::uint8_t>(buf[i]);
            } else {
                v = (static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[2 * i])) << 8) |
                    static_cast<std::uint8_t>(buf[2 * i + 1]);
            }
            if (v > static_cast<std::uint32_t>(maxval))
                throw pgm_error(pgm_error::kind::bad_pixel,
                                "pixel value " + std::to_string(v) + " exceeds maxval");
            img.pixels[i] = static_cast<std::uint16_t>(v);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const std::string tok = detail::pgm_token(in);
            if (tok.empty())
                throw pgm_error(pgm_error::kind::truncated, "raster shorter than width*height");
            for (char ch : tok)
                if (!std::isdigit(static_cast<unsigned char>(ch)))
                    throw pgm_error(pgm_error::kind::bad_pixel, "non-numeric pixel '" + tok + "'");
            const long v = std::strtol(tok.c_str(), nullptr, 10);
            if (v > maxval)
                throw pgm_error(pgm_error::kind::bad_pixel,
                                "pixel value " + std::to_string(v) + " exceeds maxval");
            img.pixels[i] = static_cast<std::uint16_t>(v);
        }
    }
    return img;
}

inline PgmImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pgm_error(pgm_error::kind::truncated, "cannot open " + path);
    try {
        return read_pgm(in);
    } catch (const pgm_error& e) {
        throw pgm_error(e.which(), path + ": " + e.what());
    }
}

inline void write_pgm(const PgmImage& img, std::ostream& out, bool ascii = false) {
    out << (ascii ? "P2" : "P5") << "\n"
        << img.width << " " << img.height << "\n"
        << img.maxval << "\n";
    if (ascii) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                if (x) out << ' ';
                out << img.pixels[static_cast<std::size_t>(y) * img.width + x];
            }
            out << '\n';
        }
    } else {
        const int bytes_per = img.maxval > 255 ? 2 : 1;
        std::string buf;
        buf.reserve(img.pixels.size() * static_cast<std::size_t>(bytes_per));
        for (std::uint16_t v : img.pixels) {
            if (bytes_per == 2) buf.push_back(static_cast<char>(v >> 8));
            buf.push_back(static_cast<char>(v & 0xff));
        }
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw std::runtime_error("write_pgm: stream failure");
}

inline void write_pgm(const PgmImage& img, const std::string& path, bool ascii = false) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_pgm(img, out, ascii);
}

/// Binarizes a PGM: a pixel is food iff its value exceeds maxval/2.
inline BinaryMask binary_mask_from_pgm(const PgmImage& img) {
    BinaryMask m(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        m.bits[i] = 2 * static_cast<int>(img.pixels[i]) > img.maxval ? 1 : 0;
    return m;
}

inline LabelMask label_mask_from_pgm(const PgmImage& img) {
    LabelMask m(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        m.labels[i] = static_cast<std::int32_t>(img.pixels[i]);
    return m;
}

inline BinaryMask read_binary_mask(const std::string& path) {
    return binary_mask_from_pgm(read_pgm(path));
}

inline LabelMask read_label_mask(const std::string& path) {
    return label_mask_from_pgm(read_pgm(path));
}

inline void write_mask(const BinaryMask& m, const std::string& path, bool ascii = false) {
    PgmImage img;
    img.width = m.width;
    img.height = m.height;
    img.maxval = 255;
    img.pixels.resize(m.bits.size());
    for (std::size_t i = 0; i < m.bits.size(); ++i) img.pixels[i] = m.bits[i] ? 255 : 0;
    write_pgm(img, path, ascii);
}

inline void write_mask(const LabelMask& m, const std::string& path, bool ascii = false) {
    std::int32_t max_label = 1;
    for (std::int32_t l : m.labels) {
        if (l < 0) throw std::invalid_argument("write_mask: negative label");
        max_label = std::max(max_label, l);
    }
    if (max_label > 65535) throw std::invalid_argument("write_mask: label exceeds PGM range");
    PgmImage img;
    img.width = m.width;
    img.height = m.height;
    img.maxval = max_label;
    img.pixels.resize(m.labels.size());
    for (std::size_t i = 0; i < m.labels.size(); ++i)
        img.pixels[i] = static_cast<std::uint16_t>(m.labels[i]);
    write_pgm(img, path, ascii);
}

}  // namespace semfood
