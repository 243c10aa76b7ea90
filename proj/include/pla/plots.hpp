#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "pla/errors.hpp"
#include "pla/evaluation.hpp"

namespace pla::plots {

namespace detail {

inline std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    // never emit "-0.00"
    if (buf[0] == '-' && std::string_view(buf + 1).find_first_not_of("0.") == std::string_view::npos)
        return buf + 1;
    return buf;
}

inline void require_finite(double v) {
    if (!std::isfinite(v)) throw DegenerateInput("plot values must be finite");
}

}  // namespace detail

inline constexpr const char* kHeatLowColor = "#204080";
inline constexpr const char* kHeatHighColor = "#e06040";

/// Linear blend between the heatmap endpoints at t in [0, 1], rounded per
/// channel. The endpoint channels differ by even amounts, so t = 0.5 lands on
/// an exact midpoint color.
inline std::string heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int low[3] = {0x20, 0x40, 0x80};
    const int high[3] = {0xe0, 0x60, 0x40};
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                  static_cast<int>(std::lround(low[0] + (high[0] - low[0]) * t)),
                  static_cast<int>(std::lround(low[1] + (high[1] - low[1]) * t)),
                  static_cast<int>(std::lround(low[2] + (high[2] - low[2]) * t)));
    return buf;
}

/// Scatter of predicted against ground-truth values on a shared scale, with
/// the y = x reference diagonal. Pure string-in/string-out; equal inputs give
/// identical bytes.
inline std::string emit_scatter(const std::vector<double>& predicted,
                                const std::vector<double>& actual, const std::string& label) {
    if (predicted.size() != actual.size()) throw LengthMismatch(predicted.size(), actual.size());
    if (predicted.empty()) throw EmptyInput();

    double lo = predicted[0], hi = predicted[0];
    for (double v : predicted) {
        detail::require_finite(v);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : actual) {
        detail::require_finite(v);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    const double px0 = 70, py0 = 30, side = 460;  // square plot area
    auto X = [&](double v) { return px0 + (v - lo) / (hi - lo) * side; };
    auto Y = [&](double v) { return py0 + (hi - v) / (hi - lo) * side; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"560\" height=\"560\" "
           "viewBox=\"0 0 560 560\">\n";
    svg += "<rect width=\"560\" height=\"560\" fill=\"#ffffff\"/>\n";
    svg += "<rect x=\"70\" y=\"30\" width=\"460\" height=\"460\" fill=\"none\" "
           "stroke=\"#404040\" stroke-width=\"1\"/>\n";

    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        svg += "<text x=\"" + detail::num(X(v)) + "\" y=\"510\" font-size=\"12\" "
               "text-anchor=\"middle\" fill=\"#202020\">" + detail::num(v) + "</text>\n";
        svg += "<text x=\"62\" y=\"" + detail::num(Y(v) + 4) + "\" font-size=\"12\" "
               "text-anchor=\"end\" fill=\"#202020\">" + detail::num(v) + "</text>\n";
    }

    svg += "<line class=\"refline\" x1=\"" + detail::num(X(lo)) + "\" y1=\"" + detail::num(Y(lo)) +
           "\" x2=\"" + detail::num(X(hi)) + "\" y2=\"" + detail::num(Y(hi)) +
           "\" stroke=\"#d03030\" stroke-width=\"1.5\"/>\n";

    for (std::size_t i = 0; i < predicted.size(); ++i) {
        svg += "<circle class=\"pt\" cx=\"" + detail::num(X(actual[i])) + "\" cy=\"" +
               detail::num(Y(predicted[i])) +
               "\" r=\"3\" fill=\"#3060b0\" fill-opacity=\"0.7\"/>\n";
    }

    svg += "<text x=\"300\" y=\"545\" font-size=\"14\" text-anchor=\"middle\" "
           "fill=\"#202020\">" + label + " (ground truth)</text>\n";
    svg += "<text x=\"20\" y=\"260\" font-size=\"14\" text-anchor=\"middle\" "
           "fill=\"#202020\" transform=\"rotate(-90 20 260)\">" + label + " (predicted)</text>\n";
    svg += "</svg>\n";
    return svg;
}

/// Route heatmap: the polyline is drawn segment by segment, each segment
/// colored by the mean of its endpoint values on the low-high ramp, plus a
/// vertical colorbar. Pure and deterministic like emit_scatter.
inline std::string emit_heatmap(const std::vector<eval::Point2>& path,
                                const std::vector<double>& values, const std::string& label) {
    if (path.size() != values.size()) throw LengthMismatch(path.size(), values.size());
    if (path.size() < 2) throw EmptyInput();

    double xmin = path[0][0], xmax = path[0][0], ymin = path[0][1], ymax = path[0][1];
    for (const auto& p : path) {
        detail::require_finite(p[0]);
        detail::require_finite(p[1]);
        xmin = std::min(xmin, p[0]);
        xmax = std::max(xmax, p[0]);
        ymin = std::min(ymin, p[1]);
        ymax = std::max(ymax, p[1]);
    }
    double vmin = values[0], vmax = values[0];
    for (double v : values) {
        detail::require_finite(v);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    if (!(xmax > xmin)) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if (!(ymax > ymin)) {
        ymin -= 1.0;
        ymax += 1.0;
    }

    const double left = 50, top = 30, plot_w = 480, plot_h = 400;
    const double scale = std::min(plot_w / (xmax - xmin), plot_h / (ymax - ymin));
    const double ox = left + (plot_w - (xmax - xmin) * scale) / 2.0;
    const double oy = top + (plot_h - (ymax - ymin) * scale) / 2.0;
    auto X = [&](double x) { return ox + (x - xmin) * scale; };
    auto Y = [&](double y) { return oy + (ymax - y) * scale; };
    auto T = [&](double v) { return vmax > vmin ? (v - vmin) / (vmax - vmin) : 0.0; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
           "viewBox=\"0 0 640 480\">\n";
    svg += "<rect width=\"640\" height=\"480\" fill=\"#ffffff\"/>\n";

    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const double t = T((values[i] + values[i + 1]) / 2.0);
        svg += "<line class=\"seg\" x1=\"" + detail::num(X(path[i][0])) + "\" y1=\"" +
               detail::num(Y(path[i][1])) + "\" x2=\"" + detail::num(X(path[i + 1][0])) +
               "\" y2=\"" + detail::num(Y(path[i + 1][1])) + "\" stroke=\"" + heat_color(t) +
               "\" stroke-width=\"5\" stroke-linecap=\"round\"/>\n";
    }

    const int strips = 64;
    const double bar_x = 560, bar_y = 40, bar_w = 18, bar_h = 380;
    for (int k = 0; k < strips; ++k) {
        const double t = 1.0 - (k + 0.5) / strips;  // vmax at the top
        svg += "<rect x=\"" + detail::num(bar_x) + "\" y=\"" +
               detail::num(bar_y + bar_h * k / strips) + "\" width=\"" + detail::num(bar_w) +
               "\" height=\"" + detail::num(bar_h / strips + 0.5) + "\" fill=\"" + heat_color(t) +
               "\"/>\n";
    }
    svg += "<rect x=\"560\" y=\"40\" width=\"18\" height=\"380\" fill=\"none\" "
           "stroke=\"#404040\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"584\" y=\"48\" font-size=\"12\" fill=\"#202020\">" + detail::num(vmax) +
           "</text>\n";
    svg += "<text x=\"584\" y=\"422\" font-size=\"12\" fill=\"#202020\">" + detail::num(vmin) +
           "</text>\n";
    svg += "<text x=\"320\" y=\"462\" font-size=\"14\" text-anchor=\"middle\" "
           "fill=\"#202020\">" + label + "</text>\n";
    svg += "</svg>\n";
    return svg;
}

}  // namespace pla::plots
