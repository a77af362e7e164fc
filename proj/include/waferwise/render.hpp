#pragma once

#include <map>
#include <string>
#include <vector>

#include "waferwise/model.hpp"

namespace waferwise::render {

struct MapOptions {
    double width = 720.0;   // canvas, px
    double height = 720.0;
    double legend_width = 110.0;  // reserved on the right of the canvas
    std::string title;
    std::string unit = "nm";
};

struct DieBox {
    DieIndex die;
    double x = 0.0;  // top-left corner, px
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;
    double value = 0.0;
    std::string color;  // "#rrggbb"
};

struct RenderedMap {
    std::string svg;
    std::string csv;  // die_col,die_row,value
    std::vector<DieBox> boxes;
    double legend_min = 0.0;
    double legend_max = 0.0;
};

/// Color ramp from dark blue (t = 0) through green to yellow (t = 1); t is clamped.
std::string color_for(double t);

/// Legend bounds of the values; a degenerate range is widened by ±0.5.
std::pair<double, double> legend_range(const std::map<DieIndex, double>& values);

/// Dies are laid out on their (col, row) grid, row 0 at the top, scaled to fit the canvas.
/// Throws Error("empty_map") when there are no values.
RenderedMap render_wafer_map(const std::map<DieIndex, double>& values, const MapOptions& options = {});

}  // namespace waferwise::render
