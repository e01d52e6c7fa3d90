#pragma once

// Minimal curve plotting over an 8-bit image: axes, nice ticks, optional
// decade log scaling, polyline series with markers, legend, and a tiny
// built-in 3x5 bitmap font. Deliberately dependency-free so benchmark
// figures can be produced anywhere the workbench builds.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "spectral_splat/errors.hpp"
#include "spectral_splat/png_io.hpp"
#include "spectral_splat/scene.hpp"

namespace sgs {

struct PlotSeries {
    std::vector<double> xs;
    std::vector<double> ys;
    Vec3 rgb{0.1, 0.3, 0.8};  // in [0,1]
    std::string label;
    bool markers = true;
    bool dashed = false;
};

struct PlotOptions {
    int width = 640;
    int height = 420;
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
};

namespace detail {

// 3x5 glyphs, 15 bits row-major from the top, leftmost column in bit 2.
inline std::uint16_t plot_glyph(char c) {
    const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    auto rows = [](unsigned a, unsigned b, unsigned cc, unsigned d, unsigned e) {
        return static_cast<std::uint16_t>(a << 12 | b << 9 | cc << 6 | d << 3 | e);
    };
    switch (u) {
        case '0': return rows(07, 05, 05, 05, 07);
        case '1': return rows(02, 06, 02, 02, 07);
        case '2': return rows(07, 01, 07, 04, 07);
        case '3': return rows(07, 01, 07, 01, 07);
        case '4': return rows(05, 05, 07, 01, 01);
        case '5': return rows(07, 04, 07, 01, 07);
        case '6': return rows(07, 04, 07, 05, 07);
        case '7': return rows(07, 01, 01, 02, 02);
        case '8': return rows(07, 05, 07, 05, 07);
        case '9': return rows(07, 05, 07, 01, 07);
        case 'A': return rows(02, 05, 07, 05, 05);
        case 'B': return rows(06, 05, 06, 05, 06);
        case 'C': return rows(03, 04, 04, 04, 03);
        case 'D': return rows(06, 05, 05, 05, 06);
        case 'E': return rows(07, 04, 06, 04, 07);
        case 'F': return rows(07, 04, 06, 04, 04);
        case 'G': return rows(03, 04, 05, 05, 03);
        case 'H': return rows(05, 05, 07, 05, 05);
        case 'I': return rows(07, 02, 02, 02, 07);
        case 'J': return rows(01, 01, 01, 05, 02);
        case 'K': return rows(05, 05, 06, 05, 05);
        case 'L': return rows(04, 04, 04, 04, 07);
        case 'M': return rows(05, 07, 07, 05, 05);
        case 'N': return rows(06, 05, 05, 05, 05);
        case 'O': return rows(02, 05, 05, 05, 02);
        case 'P': return rows(06, 05, 06, 04, 04);
        case 'Q': return rows(02, 05, 05, 02, 01);
        case 'R': return rows(06, 05, 06, 05, 05);
        case 'S': return rows(03, 04, 02, 01, 06);
        case 'T': return rows(07, 02, 02, 02, 02);
        case 'U': return rows(05, 05, 05, 05, 03);
        case 'V': return rows(05, 05, 05, 05, 02);
        case 'W': return rows(05, 05, 07, 07, 05);
        case 'X': return rows(05, 05, 02, 05, 05);
        case 'Y': return rows(05, 05, 02, 02, 02);
        case 'Z': return rows(07, 01, 02, 04, 07);
        case '.': return rows(00, 00, 00, 00, 02);
        case ',': return rows(00, 00, 00, 02, 04);
        case '-': return rows(00, 00, 07, 00, 00);
        case '+': return rows(00, 02, 07, 02, 00);
        case ':': return rows(00, 02, 00, 02, 00);
        case '=': return rows(00, 07, 00, 07, 00);
        case '/': return rows(01, 01, 02, 04, 04);
        case '(': return rows(01, 02, 02, 02, 01);
        case ')': return rows(04, 02, 02, 02, 04);
        case '_': return rows(00, 00, 00, 00, 07);
        case ' ': return 0;
        default: return rows(07, 07, 07, 07, 07);  // unknown -> solid block
    }
}

inline void plot_set_px(ImageU8& img, int x, int y, const Vec3& rgb) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    auto q = [](double v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    };
    const std::size_t at = (static_cast<std::size_t>(y) * img.width + x) * 3;
    img.pixels[at + 0] = q(rgb.x);
    img.pixels[at + 1] = q(rgb.y);
    img.pixels[at + 2] = q(rgb.z);
}

inline void plot_fill_rect(ImageU8& img, int x0, int y0, int x1, int y1, const Vec3& rgb) {
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) plot_set_px(img, x, y, rgb);
}

inline void plot_text(ImageU8& img, int x, int y, const std::string& text, const Vec3& rgb,
                      int scale = 1) {
    int cx = x;
    for (char c : text) {
        const std::uint16_t glyph = plot_glyph(c);
        for (int row = 0; row < 5; ++row) {
            for (int col = 0; col < 3; ++col) {
                if (!(glyph >> ((4 - row) * 3 + (2 - col)) & 1u)) continue;
                for (int dy = 0; dy < scale; ++dy)
                    for (int dx = 0; dx < scale; ++dx)
                        plot_set_px(img, cx + col * scale + dx, y + row * scale + dy, rgb);
            }
        }
        cx += 4 * scale;
    }
}

inline int plot_text_width(const std::string& text, int scale = 1) {
    return text.empty() ? 0 : static_cast<int>(text.size()) * 4 * scale - scale;
}

// DDA polyline segment with optional 4px-on / 3px-off dashing; `phase`
// carries the dash position across segments of one polyline.
inline void plot_line(ImageU8& img, double x0, double y0, double x1, double y1, const Vec3& rgb,
                      bool dashed, double& phase) {
    const double dx = x1 - x0;
    const double dy = y1 - y0;
    const double len = std::hypot(dx, dy);
    const int steps = std::max(1, static_cast<int>(std::ceil(len)));
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        if (!dashed || std::fmod(phase + t * len, 7.0) < 4.0) {
            plot_set_px(img, static_cast<int>(std::lround(x0 + t * dx)),
                        static_cast<int>(std::lround(y0 + t * dy)), rgb);
        }
    }
    phase = std::fmod(phase + len, 7.0);
}

inline void plot_marker(ImageU8& img, double x, double y, const Vec3& rgb) {
    const int cx = static_cast<int>(std::lround(x));
    const int cy = static_cast<int>(std::lround(y));
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) plot_set_px(img, cx + dx, cy + dy, rgb);
}

inline std::string plot_format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct PlotAxis {
    double lo = 0.0;
    double hi = 1.0;   // transformed (log10 when logarithmic) data bounds
    bool log = false;
    double transform(double v) const { return log ? std::log10(v) : v; }
    bool admits(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
};

// Ticks in transformed coordinates, with display labels. Linear axes use
// 1/2/5 decade steps; log axes tick integer decades when at least two fit.
inline std::vector<std::pair<double, std::string>> plot_ticks(const PlotAxis& axis) {
    std::vector<std::pair<double, std::string>> ticks;
    const double range = axis.hi - axis.lo;
    if (axis.log) {
        const int first = static_cast<int>(std::ceil(axis.lo - 1e-9));
        const int last = static_cast<int>(std::floor(axis.hi + 1e-9));
        if (last > first) {
            for (int k = first; k <= last; ++k)
                ticks.emplace_back(static_cast<double>(k),
                                   plot_format_value(std::pow(10.0, k)));
            return ticks;
        }
    }
    const double raw = range / 4.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double norm = raw / mag;
    const double step = (norm < 1.5 ? 1.0 : norm < 3.5 ? 2.0 : norm < 7.5 ? 5.0 : 10.0) * mag;
    for (double t = std::ceil(axis.lo / step) * step; t <= axis.hi + step * 1e-9; t += step) {
        const double display = axis.log ? std::pow(10.0, t)
                               : std::abs(t) < step * 1e-9 ? 0.0  // snap "-0" labels
                                                           : t;
        ticks.emplace_back(t, plot_format_value(display));
    }
    return ticks;
}

} // namespace detail

inline ImageU8 render_plot(const std::vector<PlotSeries>& series, const PlotOptions& opts = {}) {
    if (opts.width < 120 || opts.height < 90)
        throw DomainError("render_plot: canvas must be at least 120x90");
    for (const PlotSeries& s : series) {
        if (s.xs.size() != s.ys.size())
            throw ShapeMismatchError("render_plot: series '" + s.label +
                                     "' has mismatched xs/ys lengths");
    }

    detail::PlotAxis xaxis;
    detail::PlotAxis yaxis;
    xaxis.log = opts.log_x;
    yaxis.log = opts.log_y;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const PlotSeries& s : series) {
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            if (!xaxis.admits(s.xs[i]) || !yaxis.admits(s.ys[i])) continue;
            xmin = std::min(xmin, xaxis.transform(s.xs[i]));
            xmax = std::max(xmax, xaxis.transform(s.xs[i]));
            ymin = std::min(ymin, yaxis.transform(s.ys[i]));
            ymax = std::max(ymax, yaxis.transform(s.ys[i]));
        }
    }
    if (!(xmin <= xmax)) throw DomainError("render_plot: no plottable points");
    auto pad = [](double& lo, double& hi) {
        const double span = hi - lo;
        const double p = span > 0.0 ? span * 0.05 : std::max(1.0, std::abs(lo)) * 0.1;
        lo -= p;
        hi += p;
    };
    pad(xmin, xmax);
    pad(ymin, ymax);
    xaxis.lo = xmin;
    xaxis.hi = xmax;
    yaxis.lo = ymin;
    yaxis.hi = ymax;

    ImageU8 img;
    img.width = opts.width;
    img.height = opts.height;
    img.channels = 3;
    img.pixels.assign(static_cast<std::size_t>(opts.width) * opts.height * 3, 255);

    const Vec3 frame{0.25, 0.25, 0.28};
    const Vec3 grid{0.88, 0.88, 0.90};
    const Vec3 text{0.15, 0.15, 0.18};
    const int left = 52, right = opts.width - 12;
    const int top = opts.title.empty() ? 14 : 24;
    const int bottom = opts.height - (opts.x_label.empty() ? 24 : 34);

    auto to_px_x = [&](double v) {
        return left + (xaxis.transform(v) - xaxis.lo) / (xaxis.hi - xaxis.lo) * (right - left);
    };
    auto to_px_y = [&](double v) {
        return bottom - (yaxis.transform(v) - yaxis.lo) / (yaxis.hi - yaxis.lo) * (bottom - top);
    };

    for (const auto& [t, label] : detail::plot_ticks(xaxis)) {
        const int px = static_cast<int>(
            std::lround(left + (t - xaxis.lo) / (xaxis.hi - xaxis.lo) * (right - left)));
        for (int y = top; y <= bottom; ++y) detail::plot_set_px(img, px, y, grid);
        detail::plot_text(img, px - detail::plot_text_width(label) / 2, bottom + 5, label, text);
    }
    for (const auto& [t, label] : detail::plot_ticks(yaxis)) {
        const int py = static_cast<int>(
            std::lround(bottom - (t - yaxis.lo) / (yaxis.hi - yaxis.lo) * (bottom - top)));
        for (int x = left; x <= right; ++x) detail::plot_set_px(img, x, py, grid);
        detail::plot_text(img, left - 6 - detail::plot_text_width(label), py - 2, label, text);
    }

    for (int x = left; x <= right; ++x) {
        detail::plot_set_px(img, x, top, frame);
        detail::plot_set_px(img, x, bottom, frame);
    }
    for (int y = top; y <= bottom; ++y) {
        detail::plot_set_px(img, left, y, frame);
        detail::plot_set_px(img, right, y, frame);
    }

    for (const PlotSeries& s : series) {
        double phase = 0.0;
        bool have_prev = false;
        double px = 0.0, py = 0.0;
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            if (!xaxis.admits(s.xs[i]) || !yaxis.admits(s.ys[i])) {
                have_prev = false;  // break the polyline at unplottable points
                continue;
            }
            const double cx = to_px_x(s.xs[i]);
            const double cy = to_px_y(s.ys[i]);
            if (have_prev) detail::plot_line(img, px, py, cx, cy, s.rgb, s.dashed, phase);
            if (s.markers) detail::plot_marker(img, cx, cy, s.rgb);
            px = cx;
            py = cy;
            have_prev = true;
        }
    }

    if (!opts.title.empty()) detail::plot_text(img, left, 6, opts.title, text, 2);
    if (!opts.x_label.empty()) {
        const int w = detail::plot_text_width(opts.x_label);
        detail::plot_text(img, (left + right) / 2 - w / 2, opts.height - 12, opts.x_label, text);
    }
    if (!opts.y_label.empty()) detail::plot_text(img, 4, top - 8, opts.y_label, text);

    int legend_w = 0;
    bool any_label = false;
    for (const PlotSeries& s : series) {
        if (s.label.empty()) continue;
        any_label = true;
        legend_w = std::max(legend_w, detail::plot_text_width(s.label));
    }
    if (any_label) {
        const int rows = static_cast<int>(
            std::count_if(series.begin(), series.end(),
                          [](const PlotSeries& s) { return !s.label.empty(); }));
        const int box_w = legend_w + 26;
        const int box_h = rows * 9 + 6;
        const int bx = right - box_w - 6;
        const int by = top + 6;
        detail::plot_fill_rect(img, bx, by, bx + box_w, by + box_h, {1.0, 1.0, 1.0});
        int row = 0;
        for (const PlotSeries& s : series) {
            if (s.label.empty()) continue;
            const int ly = by + 3 + row * 9;
            double phase = 0.0;
            detail::plot_line(img, bx + 3, ly + 2, bx + 15, ly + 2, s.rgb, s.dashed, phase);
            detail::plot_text(img, bx + 20, ly, s.label, text);
            ++row;
        }
    }
    return img;
}

inline void save_plot_png(const std::string& path, const std::vector<PlotSeries>& series,
                          const PlotOptions& opts = {}) {
    save_png_rgb8(path, render_plot(series, opts));
}

} // namespace sgs
