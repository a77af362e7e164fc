#include "waferwise/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "waferwise/error.hpp"
#include "waferwise/io.hpp"

namespace waferwise::render {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string fmt_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string color_for(double t) {
    // Piecewise-linear viridis-like ramp.
    static constexpr std::array<std::array<double, 3>, 5> stops = {{
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37},
    }};
    if (!(t >= 0.0)) t = 0.0;
    if (t > 1.0) t = 1.0;
    const double pos = t * (stops.size() - 1);
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(pos), stops.size() - 2);
    const double f = pos - static_cast<double>(i);
    char buf[8];
    int rgb[3];
    for (int k = 0; k < 3; ++k) {
        rgb[k] = static_cast<int>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
    }
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    return buf;
}

std::pair<double, double> legend_range(const std::map<DieIndex, double>& values) {
    if (values.empty()) throw Error("empty_map", "wafer map has no dies");
    double lo = values.begin()->second;
    double hi = lo;
    for (const auto& [die, v] : values) {
        if (!std::isfinite(v)) {
            throw Error("invalid_input", "non-finite value at die (" + std::to_string(die.col) + "," +
                                             std::to_string(die.row) + ")");
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo <= 0.0) {
        lo -= 0.5;
        hi += 0.5;
    }
    return {lo, hi};
}

RenderedMap render_wafer_map(const std::map<DieIndex, double>& values, const MapOptions& options) {
    const auto [lo, hi] = legend_range(values);
    RenderedMap out;
    out.legend_min = lo;
    out.legend_max = hi;

    int min_col = values.begin()->first.col, max_col = min_col;
    int min_row = values.begin()->first.row, max_row = min_row;
    for (const auto& [die, v] : values) {
        min_col = std::min(min_col, die.col);
        max_col = std::max(max_col, die.col);
        min_row = std::min(min_row, die.row);
        max_row = std::max(max_row, die.row);
    }
    const double margin = 20.0;
    const double title_h = 30.0;
    const double area_w = options.width - options.legend_width - 2 * margin;
    const double area_h = options.height - title_h - 2 * margin;
    if (area_w <= 0.0 || area_h <= 0.0) throw Error("invalid_input", "canvas too small for the wafer map");
    const int n_cols = max_col - min_col + 1;
    const int n_rows = max_row - min_row + 1;
    const double pitch = std::min(area_w / n_cols, area_h / n_rows);
    const double gap = pitch * 0.08;
    const double x0 = margin + (area_w - pitch * n_cols) / 2.0;
    const double y0 = margin + title_h + (area_h - pitch * n_rows) / 2.0;

    // Wafer outline: circle through the outermost die corners.
    const double cx = x0 + pitch * n_cols / 2.0;
    const double cy = y0 + pitch * n_rows / 2.0;
    double radius = 0.0;

    io::CsvWriter csv(std::vector<std::string>{"die_col", "die_row", "value"});
    for (const auto& [die, v] : values) {
        DieBox box;
        box.die = die;
        box.x = x0 + (die.col - min_col) * pitch + gap / 2.0;
        box.y = y0 + (die.row - min_row) * pitch + gap / 2.0;
        box.w = pitch - gap;
        box.h = pitch - gap;
        box.value = v;
        box.color = color_for((v - lo) / (hi - lo));
        for (double px : {box.x, box.x + box.w}) {
            for (double py : {box.y, box.y + box.h}) {
                radius = std::max(radius, std::hypot(px - cx, py - cy));
            }
        }
        out.boxes.push_back(box);
        csv.cell(static_cast<long long>(die.col)).cell(static_cast<long long>(die.row)).cell(v);
        csv.end_row();
    }
    out.csv = csv.text();

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(options.width) + "\" height=\"" +
         fmt(options.height) + "\" viewBox=\"0 0 " + fmt(options.width) + " " + fmt(options.height) + "\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + fmt(options.width) + "\" height=\"" + fmt(options.height) +
         "\" fill=\"#ffffff\"/>\n";
    if (!options.title.empty()) {
        s += "<text x=\"" + fmt(margin) + "\" y=\"" + fmt(margin + 14.0) +
             "\" font-family=\"sans-serif\" font-size=\"16\">" + escape(options.title) + "</text>\n";
    }
    s += "<circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" r=\"" + fmt(radius + gap) +
         "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1.5\"/>\n";
    for (const auto& b : out.boxes) {
        s += "<rect class=\"die\" data-col=\"" + std::to_string(b.die.col) + "\" data-row=\"" +
             std::to_string(b.die.row) + "\" x=\"" + fmt(b.x) + "\" y=\"" + fmt(b.y) + "\" width=\"" + fmt(b.w) +
             "\" height=\"" + fmt(b.h) + "\" fill=\"" + b.color + "\"><title>(" + std::to_string(b.die.col) + "," +
             std::to_string(b.die.row) + ") " + io::format_double(b.value) + "</title></rect>\n";
    }

    // Vertical legend bar.
    const double lx = options.width - options.legend_width + 10.0;
    const double ly = margin + title_h;
    const double lh = area_h;
    const int steps = 32;
    for (int i = 0; i < steps; ++i) {
        const double t = 1.0 - (i + 0.5) / steps;
        s += "<rect x=\"" + fmt(lx) + "\" y=\"" + fmt(ly + lh * i / steps) + "\" width=\"20\" height=\"" +
             fmt(lh / steps + 0.5) + "\" fill=\"" + color_for(t) + "\"/>\n";
    }
    const auto label = [&](double y, double v) {
        s += "<text x=\"" + fmt(lx + 26.0) + "\" y=\"" + fmt(y) + "\" font-family=\"sans-serif\" font-size=\"12\">" +
             fmt_value(v) + " " + escape(options.unit) + "</text>\n";
    };
    label(ly + 10.0, hi);
    label(ly + lh / 2.0 + 4.0, (lo + hi) / 2.0);
    label(ly + lh, lo);
    s += "</svg>\n";
    out.svg = std::move(s);
    return out;
}

}  // namespace waferwise::render
