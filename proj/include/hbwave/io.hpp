// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#pragma once

#include "hbwave/core.hpp"
#include "hbwave/timeseries.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <glob.h>

namespace hbwave::io {

/// Payload ended before the size announced by the header.
class TruncatedError : public FormatError {
public:
    using FormatError::FormatError;
};

namespace detail {

inline std::uint32_t bswap32(std::uint32_t v) noexcept {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

inline std::string shortest(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

template <class T>
T parse_number(std::string_view tok, const std::string& what) {
    T v{};
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
        throw FormatError(what + ": cannot parse '" + std::string(tok) + "'");
    return v;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw FormatError("cannot open '" + p.string() + "' for reading");
    return f;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw FormatError("cannot open '" + p.string() + "' for writing");
    return f;
}

inline void check_written(std::ostream& os, const std::string& what) {
    if (!os) throw FormatError(what + ": write failed");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SPC1 spectral container
// ---------------------------------------------------------------------------

struct Spc1 {
    Image data;
    double start_nm = 0.0;
    double step_nm = 1.0;
};

inline constexpr std::size_t kMaxSpc1Values = std::size_t{1} << 34;

/// Values are stored as float32; doubles are rounded to nearest.
inline void write_spc1(std::ostream& os, const Image& img, double start_nm, double step_nm) {
    os << "SPC1 " << img.rows() << ' ' << img.cols() << ' ' << img.channels() << ' '
       << detail::shortest(start_nm) << ' ' << detail::shortest(step_nm) << '\n';
    std::vector<std::uint32_t> buf(img.data().size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(img.data()[i]));
        if constexpr (std::endian::native == std::endian::big) u = detail::bswap32(u);
        buf[i] = u;
    }
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
    detail::check_written(os, "SPC1");
}

inline Spc1 read_spc1(std::istream& is) {
    std::string line;
    char ch = 0;
    while (line.size() < 256 && is.get(ch) && ch != '\n') line.push_back(ch);
    if (ch != '\n' || line.size() >= 256)
        throw FormatError("SPC1: header line missing or longer than 255 bytes");
    std::istringstream hs(line);
    std::vector<std::string> tok;
    for (std::string t; hs >> t;) tok.push_back(t);
    if (tok.size() != 6 || tok[0] != "SPC1")
        throw FormatError("SPC1: expected 'SPC1 <height> <width> <L> <start_nm> <step_nm>', got '" +
                          line + "'");
    const int h = detail::parse_number<int>(tok[1], "SPC1 height");
    const int w = detail::parse_number<int>(tok[2], "SPC1 width");
    const int l = detail::parse_number<int>(tok[3], "SPC1 L");
    Spc1 out;
    out.start_nm = detail::parse_number<double>(tok[4], "SPC1 start_nm");
    out.step_nm = detail::parse_number<double>(tok[5], "SPC1 step_nm");
    if (h < 0 || w < 0 || l < 1) throw FormatError("SPC1: dimensions must be >= 0 and L >= 1");
    const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w) *
                          static_cast<std::size_t>(l);
    if (n > kMaxSpc1Values) throw FormatError("SPC1: payload of " + std::to_string(n) +
                                              " values exceeds the reader limit");
    out.data = Image(h, w, l);
    std::vector<std::uint32_t> buf(n);
    const auto bytes = static_cast<std::streamsize>(n * sizeof(std::uint32_t));
    is.read(reinterpret_cast<char*>(buf.data()), bytes);
    if (is.gcount() != bytes)
        throw TruncatedError("SPC1: payload truncated, expected " + std::to_string(bytes) +
                             " bytes, got " + std::to_string(is.gcount()));
    if (is.peek() != std::char_traits<char>::eof())
        throw FormatError("SPC1: trailing bytes after payload");
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t u = buf[i];
        if constexpr (std::endian::native == std::endian::big) u = detail::bswap32(u);
        out.data.data()[i] = static_cast<double>(std::bit_cast<float>(u));
    }
    return out;
}

inline void write_cube(const std::filesystem::path& p, const SpectralCube& cube) {
    auto f = detail::open_out(p);
    write_spc1(f, cube, cube.grid().start(), cube.grid().step());
}

/// With `expected`, a cube on any other grid is rejected.
inline SpectralCube read_cube(const std::filesystem::path& p,
                              const std::optional<WavelengthGrid>& expected = std::nullopt) {
    auto f = detail::open_in(p);
    Spc1 s = read_spc1(f);
    std::optional<WavelengthGrid> grid;
    try {
        grid.emplace(s.start_nm, s.step_nm, s.data.channels());
    } catch (const ArgumentError& e) {
        throw FormatError("SPC1 '" + p.string() + "': invalid grid: " + e.what());
    }
    if (expected) require_same_grid(*grid, *expected, ("cube '" + p.string() + "'").c_str());
    return {std::move(s.data), *grid};
}

inline void write_map(std::ostream& os, const ConcentrationMap& map) {
    write_spc1(os, map, 0.0, 1.0);
}
inline void write_map(const std::filesystem::path& p, const ConcentrationMap& map) {
    auto f = detail::open_out(p);
    write_map(f, map);
}

inline ConcentrationMap read_map(std::istream& is, const std::string& name = "map") {
    Spc1 s = read_spc1(is);
    if (s.data.channels() != 3 || s.start_nm != 0.0 || s.step_nm != 1.0)
        throw FormatError("'" + name +
                          "' is not a concentration map (need L = 3, start 0, step 1)");
    return ConcentrationMap(std::move(s.data));
}
inline ConcentrationMap read_map(const std::filesystem::path& p) {
    auto f = detail::open_in(p);
    return read_map(f, p.string());
}

// ---------------------------------------------------------------------------
// 16-bit portable pixmap
// ---------------------------------------------------------------------------

struct Pixmap {
    Image data;          // 3 channels, physical units
    double scale = 1.0;  // physical units per count
};

/// Scale that maps the image maximum to full range (1 for an all-zero image).
inline double auto_scale(const Image& img) {
    double m = 0.0;
    for (double v : img.data())
        if (std::isfinite(v)) m = std::max(m, v);
    return m > 0.0 ? m / 65535.0 : 1.0;
}

/// Counts are round(v / scale), clamped to [0, 65535]; NaN writes 0.
inline void write_ppm(std::ostream& os, const Image& img, double scale) {
    if (img.channels() != 3) throw ArgumentError("ppm: image must have 3 channels");
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw ArgumentError("ppm: scale must be finite and > 0");
    os << "P6\n# scale " << detail::shortest(scale) << '\n'
       << img.cols() << ' ' << img.rows() << "\n65535\n";
    std::vector<unsigned char> buf(img.data().size() * 2);
    for (std::size_t i = 0; i < img.data().size(); ++i) {
        const double c = img.data()[i] / scale;
        const auto q = static_cast<std::uint16_t>(
            std::isnan(c) ? 0.0 : std::clamp(std::nearbyint(c), 0.0, 65535.0));
        buf[2 * i] = static_cast<unsigned char>(q >> 8);
        buf[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    detail::check_written(os, "ppm");
}

inline Pixmap read_ppm(std::istream& is) {
    std::optional<double> scale;
    auto next_token = [&]() -> std::string {
        std::string t;
        int c;
        while ((c = is.get()) != EOF) {
            if (c == '#') {
                std::string comment;
                std::getline(is, comment);
                std::istringstream cs(comment);
                std::string key;
                double v;
                if (cs >> key >> v && key == "scale") scale = v;
                if (!t.empty()) break;
                continue;
            }
            if (std::isspace(c)) {
                if (!t.empty()) break;
                continue;
            }
            t.push_back(static_cast<char>(c));
            if (t.size() > 32) break;
        }
        return t;
    };
    if (next_token() != "P6") throw FormatError("ppm: missing P6 magic");
    const int w = detail::parse_number<int>(next_token(), "ppm width");
    const int h = detail::parse_number<int>(next_token(), "ppm height");
    const int maxval = detail::parse_number<int>(next_token(), "ppm maxval");
    if (w < 0 || h < 0) throw FormatError("ppm: negative dimensions");
    if (maxval < 1 || maxval > 65535) throw FormatError("ppm: maxval must lie in [1, 65535]");
    if (scale && (!(*scale > 0.0) || !std::isfinite(*scale)))
        throw FormatError("ppm: scale comment must be finite and > 0");

    Pixmap out;
    out.scale = scale.value_or(1.0 / maxval);
    out.data = Image(h, w, 3);
    const std::size_t n = out.data.data().size();
    const std::size_t bps = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(n * bps);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size())
        throw TruncatedError("ppm: payload truncated, expected " + std::to_string(buf.size()) +
                             " bytes, got " + std::to_string(is.gcount()));
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned q = bps == 2 ? (unsigned(buf[2 * i]) << 8) | buf[2 * i + 1] : buf[i];
        if (q > static_cast<unsigned>(maxval)) throw FormatError("ppm: sample exceeds maxval");
        out.data.data()[i] = q * out.scale;
    }
    return out;
}

inline void write_ppm(const std::filesystem::path& p, const Image& img, double scale) {
    auto f = detail::open_out(p);
    write_ppm(f, img, scale);
}
inline void write_ppm(const std::filesystem::path& p, const Image& img) {
    write_ppm(p, img, auto_scale(img));
}
inline Pixmap read_ppm(const std::filesystem::path& p) {
    auto f = detail::open_in(p);
    try {
        return read_ppm(f);
    } catch (const TruncatedError& e) {
        throw TruncatedError("'" + p.string() + "': " + e.what());
    } catch (const FormatError& e) {
        throw FormatError("'" + p.string() + "': " + e.what());
    }
}
inline RgbImage read_rgb(const std::filesystem::path& p) {
    return RgbImage(read_ppm(p).data);
}

/// Any nonzero channel marks a pixel as selected.
inline Image read_mask(const std::filesystem::path& p) {
    const Image rgb = read_ppm(p).data;
    Image m(rgb.rows(), rgb.cols(), 1);
    for (std::size_t i = 0; i < rgb.pixels(); ++i) {
        const double* px = rgb.pixel(i);
        m.pixel(i)[0] = (px[0] != 0.0 || px[1] != 0.0 || px[2] != 0.0) ? 1.0 : 0.0;
    }
    return m;
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

struct Table {
    std::vector<std::string> columns;        // excluding wavelength_nm
    std::vector<double> wavelengths;
    std::vector<std::vector<double>> values;  // values[column][row]

    std::vector<std::pair<double, double>> column(std::size_t j) const {
        std::vector<std::pair<double, double>> out;
        for (std::size_t i = 0; i < wavelengths.size(); ++i)
            out.emplace_back(wavelengths[i], values[j][i]);
        return out;
    }
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }
    return out;
}

}  // namespace detail

/// Header `wavelength_nm,<col>,...`; wavelengths must be strictly increasing.
inline Table read_table(std::istream& is, const std::string& name = "table") {
    std::string line;
    if (!std::getline(is, line)) throw FormatError(name + ": empty file");
    auto header = detail::split_csv(line);
    if (header.size() < 2 || header[0] != "wavelength_nm")
        throw FormatError(name + ": header must start with 'wavelength_nm' and name >= 1 column");
    Table t;
    t.columns.assign(header.begin() + 1, header.end());
    t.values.resize(t.columns.size());
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto f = detail::split_csv(line);
        const std::string where = name + " line " + std::to_string(lineno);
        if (f.size() != header.size())
            throw FormatError(where + ": expected " + std::to_string(header.size()) +
                              " fields, got " + std::to_string(f.size()));
        const double wl = detail::parse_number<double>(f[0], where);
        if (!t.wavelengths.empty() && !(wl > t.wavelengths.back()))
            throw FormatError(where + ": wavelengths must be strictly increasing (" +
                              detail::shortest(wl) + " after " +
                              detail::shortest(t.wavelengths.back()) + ")");
        t.wavelengths.push_back(wl);
        for (std::size_t j = 1; j < f.size(); ++j) {
            const double v = detail::parse_number<double>(f[j], where);
            if (!std::isfinite(v)) throw FormatError(where + ": non-finite value");
            t.values[j - 1].push_back(v);
        }
    }
    if (t.wavelengths.size() < 2) throw FormatError(name + ": needs >= 2 data rows");
    return t;
}

inline Table read_table(const std::filesystem::path& p) {
    auto f = detail::open_in(p);
    return read_table(f, p.string());
}

/// Columns 1-3 are taken as red, green, blue.
inline CameraSensitivity load_sensitivity(const Table& t, const WavelengthGrid& grid) {
    if (t.columns.size() != 3)
        throw FormatError("sensitivity table needs 3 columns (red, green, blue), got " +
                          std::to_string(t.columns.size()));
    Matrix c(3, grid.size());
    for (int j = 0; j < 3; ++j) c.row(j) = resample_to_grid(t.column(j), grid).transpose();
    return {grid, c};
}
inline CameraSensitivity load_sensitivity(const std::filesystem::path& p,
                                          const WavelengthGrid& grid) {
    return load_sensitivity(read_table(p), grid);
}

/// Columns 1-2 are taken as HbO, Hb.
inline ChromophoreBasis load_basis(const Table& t, const WavelengthGrid& grid) {
    if (t.columns.size() != 2)
        throw FormatError("chromophore table needs 2 columns (hbo, hb), got " +
                          std::to_string(t.columns.size()));
    return {grid, resample_to_grid(t.column(0), grid), resample_to_grid(t.column(1), grid)};
}
inline ChromophoreBasis load_basis(const std::filesystem::path& p, const WavelengthGrid& grid) {
    return load_basis(read_table(p), grid);
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

inline void write_trace(std::ostream& os, const timeseries::Trace& t) {
    os << "frame,time_s,thb_g_per_l\n";
    for (std::size_t i = 0; i < t.size(); ++i)
        os << i << ',' << detail::shortest(t.time(i)) << ',' << detail::shortest(t.values[i])
           << '\n';
    detail::check_written(os, "trace");
}
inline void write_trace(const std::filesystem::path& p, const timeseries::Trace& t) {
    auto f = detail::open_out(p);
    write_trace(f, t);
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

/// Sorted matches of a shell pattern; a literal existing path matches itself.
inline std::vector<std::filesystem::path> expand_glob(const std::string& pattern) {
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    std::vector<std::filesystem::path> out;
    if (rc == 0)
        for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    globfree(&g);
    if (out.empty()) throw FormatError("no files match '" + pattern + "'");
    return out;
}

}  // namespace hbwave::io
