#include <doctest.h>

#include <set>

#include "waferwise/error.hpp"
#include "waferwise/fabsim.hpp"
#include "waferwise/io.hpp"
#include "waferwise/render.hpp"

using namespace waferwise;

TEST_CASE("empty map is an error") {
    CHECK_THROWS_AS(render::render_wafer_map({}), Error);
}

TEST_CASE("uniform values share one color and the legend is widened") {
    std::map<DieIndex, double> v;
    for (const auto& d : fabsim::make_grid(37).dies) v[d] = 1.0;
    const auto m = render::render_wafer_map(v);
    CHECK(m.legend_min == 0.5);
    CHECK(m.legend_max == 1.5);
    std::set<std::string> colors;
    for (const auto& b : m.boxes) colors.insert(b.color);
    CHECK(colors.size() == 1);
}

TEST_CASE("a single hot die gets the top color and the CSV twin matches the input") {
    std::map<DieIndex, double> v;
    for (const auto& d : fabsim::make_grid(37).dies) v[d] = 0.25 + 0.01 * d.col;
    const DieIndex hot{3, 3};
    v[hot] = 9.0;
    const auto m = render::render_wafer_map(v);
    for (const auto& b : m.boxes) {
        if (b.die == hot) CHECK(b.color == render::color_for(1.0));
        else CHECK(b.color != render::color_for(1.0));
    }
    const auto t = io::parse_csv(m.csv);
    REQUIRE(t.rows.size() == v.size());
    for (const auto& row : t.rows) {
        const DieIndex d{static_cast<int>(io::parse_int(row[0])), static_cast<int>(io::parse_int(row[1]))};
        CHECK(io::parse_double(row[2]) == v.at(d));
    }
}

TEST_CASE("149-die map fits the default canvas without overlap") {
    std::map<DieIndex, double> v;
    for (const auto& d : fabsim::make_grid(149).dies) v[d] = d.col * 0.1 + d.row;
    const auto m = render::render_wafer_map(v);
    const render::MapOptions opt;
    REQUIRE(m.boxes.size() == 149);
    for (std::size_t i = 0; i < m.boxes.size(); ++i) {
        const auto& a = m.boxes[i];
        CHECK(a.w > 0.0);
        CHECK(a.x >= 0.0);
        CHECK(a.y >= 0.0);
        CHECK(a.x + a.w <= opt.width - opt.legend_width);
        CHECK(a.y + a.h <= opt.height);
        for (std::size_t j = i + 1; j < m.boxes.size(); ++j) {
            const auto& b = m.boxes[j];
            const bool apart = a.x + a.w <= b.x || b.x + b.w <= a.x || a.y + a.h <= b.y || b.y + b.h <= a.y;
            CHECK(apart);
        }
    }
    std::size_t rects = 0;
    for (std::size_t p = m.svg.find("class=\"die\""); p != std::string::npos; p = m.svg.find("class=\"die\"", p + 1)) {
        ++rects;
    }
    CHECK(rects == 149);
}

TEST_CASE("rendering is deterministic") {
    std::map<DieIndex, double> v{{{0, 0}, 1.0}, {{1, 0}, 2.0}};
    CHECK(render::render_wafer_map(v).svg == render::render_wafer_map(v).svg);
}
