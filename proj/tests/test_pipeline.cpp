#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "waferwise/error.hpp"
#include "waferwise/fabsim.hpp"
#include "waferwise/io.hpp"
#include "waferwise/pipeline.hpp"
#include "waferwise/rng.hpp"

using namespace waferwise;

namespace {

const std::vector<WaferDataset>& wafers() {
    static const std::vector<WaferDataset> w = [] {
        auto cfg = fabsim::ScenarioConfig::defaults();
        cfg.n_dies = 69;
        std::vector<WaferDataset> out;
        for (auto& s : fabsim::generate_scenario(cfg, 3)) out.push_back(std::move(s.data));
        return out;
    }();
    return w;
}

std::vector<learn::ModelSpec> quick_models() {
    auto et = learn::ModelSpec::extra_trees(1);
    et.forest.n_trees = 20;
    return {learn::ModelSpec::linear(), et};
}

}  // namespace

TEST_CASE("CD2 features: perpendicular overlay, die coordinates, target position") {
    const auto& w = wafers();
    for (const auto o : kAllOrientations) {
        const auto a = pipeline::assemble_cd2_features(w, DboStep::AEI, o);
        REQUIRE(a.x.cols() == pipeline::kCd2FeatureCount);
        CHECK(a.x.col_names[26] == "die_col");
        CHECK(a.x.col_names[29] == "target_y_um");
        CHECK(a.y.size() == a.meta.size());
        for (std::size_t i = 0; i < a.meta.size(); i += 37) {
            const auto& m = a.meta[i];
            const auto wafer = std::find_if(w.begin(), w.end(), [&](const auto& x) { return x.wafer_id == m.wafer_id; });
            const auto* ov = wafer->find_overlay(m.die, DboStep::AEI);
            REQUIRE(ov != nullptr);
            const auto& expected = o == Orientation::Horizontal ? ov->values_y : ov->values_x;
            for (std::size_t s = 0; s < kOverlaySites; ++s) CHECK(a.x.values(i, s) == expected[s]);
            CHECK(a.x.values(i, 26) == m.die.col);
            const auto& rec = wafer->cdsem[m.record_index];
            CHECK(rec.structure.orientation == o);
            CHECK(a.y[i] == rec.cd2_nm);
            CHECK(a.x.values(i, 28) == rec.target_x_um);
        }
    }
}

TEST_CASE("capacitance features: parallel overlay, die coordinates, instance") {
    const auto& w = wafers();
    const auto a = pipeline::assemble_cap_features(w, DboStep::ADI, Orientation::Vertical, Family::BA, 4);
    REQUIRE(a.x.cols() == pipeline::kCapFeatureCount);
    CHECK(a.y.size() == 69u * 5 * 4);
    const auto& m = a.meta[7];
    const auto wafer = std::find_if(w.begin(), w.end(), [&](const auto& x) { return x.wafer_id == m.wafer_id; });
    const auto* ov = wafer->find_overlay(m.die, DboStep::ADI);
    CHECK(a.x.values(7, 3) == ov->values_y[3]);
    CHECK(a.x.values(7, 28) == wafer->capacitance[m.record_index].structure.instance);
}

TEST_CASE("ByWafer split never trains on the test wafer") {
    const auto& w = wafers();
    const auto a = pipeline::assemble_cd2_features(w, DboStep::ADI, Orientation::Horizontal);
    const auto s = pipeline::split_rows(a, w, pipeline::ByWafer{{"D02", "D03", "D11"}, "D10"});
    for (auto i : s.train) CHECK(a.meta[i].wafer_id != "D10");
    for (auto i : s.test) CHECK(a.meta[i].wafer_id == "D10");
    CHECK(s.train.size() + s.test.size() == a.meta.size());
    CHECK_THROWS_AS(pipeline::split_rows(a, w, pipeline::ByWafer{{"D02"}, "D99"}), Error);
    CHECK_THROWS_AS(pipeline::split_rows(a, w, pipeline::ByWafer{{"D10"}, "D10"}), Error);
}

TEST_CASE("pooled split is seeded, disjoint and stratified by wafer and ring") {
    const auto& w = wafers();
    const auto a = pipeline::assemble_cap_features(w, DboStep::ADI, Orientation::Horizontal, Family::BA, 4);
    const auto s1 = pipeline::split_rows(a, w, pipeline::Pooled8020{5, 0.2});
    const auto s2 = pipeline::split_rows(a, w, pipeline::Pooled8020{5, 0.2});
    const auto s3 = pipeline::split_rows(a, w, pipeline::Pooled8020{6, 0.2});
    CHECK(s1.test == s2.test);
    CHECK(s1.test != s3.test);
    std::set<std::size_t> all(s1.train.begin(), s1.train.end());
    for (auto i : s1.test) CHECK(all.insert(i).second);
    CHECK(all.size() == a.meta.size());

    std::map<std::pair<std::string, int>, std::pair<int, int>> counts;  // (rows, test rows)
    std::set<std::size_t> test(s1.test.begin(), s1.test.end());
    for (std::size_t i = 0; i < a.meta.size(); ++i) {
        const auto& wafer = *std::find_if(w.begin(), w.end(), [&](const auto& x) { return x.wafer_id == a.meta[i].wafer_id; });
        auto& c = counts[{a.meta[i].wafer_id, static_cast<int>(pipeline::die_ring(wafer, a.meta[i].die))}];
        ++c.first;
        c.second += test.count(i) ? 1 : 0;
    }
    CHECK(counts.size() == 12);
    for (const auto& [key, c] : counts) CHECK(c.second == std::lround(0.2 * c.first));
}

TEST_CASE("die rings cover center, middle and edge") {
    const auto& w = wafers().front();
    std::set<pipeline::DieRing> rings;
    for (const auto& d : w.grid) rings.insert(pipeline::die_ring(w, d));
    CHECK(rings.size() == 3);
}

TEST_CASE("test rows do not influence training") {
    auto w = wafers();
    auto spec = pipeline::ExperimentSpec::cd2_default(DboStep::ADI, Orientation::Horizontal, 1);
    spec.models = quick_models();
    const auto base = pipeline::run_experiment(spec, w);

    // Permute the test wafer's targets and overlay rows.
    auto& test = *std::find_if(w.begin(), w.end(), [](const auto& x) { return x.wafer_id == "D10"; });
    auto rng = make_rng(9, {});
    std::vector<double> cd;
    for (const auto& r : test.cdsem) cd.push_back(r.cd2_nm);
    std::shuffle(cd.begin(), cd.end(), rng);
    for (std::size_t i = 0; i < cd.size(); ++i) test.cdsem[i].cd2_nm = cd[i];
    for (auto& ov : test.overlay) std::shuffle(ov.values_y.begin(), ov.values_y.end(), rng);
    const auto permuted = pipeline::run_experiment(spec, w);

    REQUIRE(base.cells.size() == permuted.cells.size());
    for (std::size_t c = 0; c < base.cells.size(); ++c) {
        CHECK(base.cells[c].r2_train == permuted.cells[c].r2_train);
        CHECK(base.cells[c].mse_train == permuted.cells[c].mse_train);
        CHECK(base.cells[c].r2_test != permuted.cells[c].r2_test);
    }
    std::vector<double> a;
    std::vector<double> b;
    for (const auto& p : base.predictions) if (!p.test) a.push_back(p.y_pred);
    for (const auto& p : permuted.predictions) if (!p.test) b.push_back(p.y_pred);
    CHECK(a == b);
}

TEST_CASE("report metrics are recomputable from the predictions CSV") {
    auto spec = pipeline::ExperimentSpec::capacitance_default(DboStep::AEI, Orientation::Vertical, Family::BA, 4, 2);
    spec.models = quick_models();
    const auto report = pipeline::run_experiment(spec, wafers());
    const auto text = pipeline::predictions_csv(report);
    const auto table = io::parse_csv(text);
    for (std::size_t c = 0; c < report.cells.size(); ++c) {
        std::vector<double> y;
        std::vector<double> f;
        for (const auto& row : table.rows) {
            if (io::parse_int(row[table.column("cell")]) != static_cast<long long>(c)) continue;
            if (row[table.column("split")] != "test") continue;
            y.push_back(io::parse_double(row[table.column("y_true")]));
            f.push_back(io::parse_double(row[table.column("y_pred")]));
        }
        CHECK(y.size() == report.cells[c].n_test);
        CHECK(io::format_double(oracle::r2(y, f)) == io::format_double(report.cells[c].r2_test));
        CHECK(io::format_double(oracle::mse(y, f)) == io::format_double(report.cells[c].mse_test));
    }
    const auto re = pipeline::recompute_metrics(text);
    for (std::size_t c = 0; c < report.cells.size(); ++c) {
        CHECK(re.at(c).r2_train == report.cells[c].r2_train);
        CHECK(re.at(c).r2_test == report.cells[c].r2_test);
        CHECK(re.at(c).mse_test == report.cells[c].mse_test);
    }
    // The report CSV carries the same numbers at full precision.
    const auto rep = io::parse_csv(pipeline::report_csv(report));
    for (std::size_t c = 0; c < report.cells.size(); ++c) {
        CHECK(io::parse_double(rep.rows[c][rep.column("r2_test")]) == report.cells[c].r2_test);
    }
}

TEST_CASE("a failing model becomes a failed cell without stopping the others") {
    auto spec = pipeline::ExperimentSpec::cd2_default(DboStep::CMP, Orientation::Vertical, 1);
    auto svr = learn::ModelSpec::svr_default();
    svr.svr.max_iterations = 3;
    spec.models = {svr, quick_models()[1]};
    const auto report = pipeline::run_experiment(spec, wafers());
    REQUIRE(report.cells.size() == 2);
    CHECK(report.cells[0].failed);
    CHECK(report.cells[0].note.find("nonconvergence") != std::string::npos);
    CHECK_FALSE(report.cells[1].failed);
    CHECK(report.cells[1].r2_test > 0.5);
}

TEST_CASE("cleaning mode is recorded and the leakage is flagged") {
    auto spec = pipeline::ExperimentSpec::capacitance_default(DboStep::ADI, Orientation::Horizontal, Family::BA, 4, 1);
    spec.models = quick_models();
    const auto clean = pipeline::run_experiment(spec, wafers());
    spec.clean = false;
    const auto raw = pipeline::run_experiment(spec, wafers());
    CHECK(clean.cells[0].mode == "clean");
    CHECK(raw.cells[0].mode == "raw");
    const auto has = [](const pipeline::FitReport& r, const std::string& key) {
        return std::any_of(r.metadata.begin(), r.metadata.end(), [&](const auto& kv) { return kv.first == key; });
    };
    CHECK(has(clean, "cleaning_leakage"));
    CHECK_FALSE(has(raw, "cleaning_leakage"));
    CHECK(clean.clean_reports.size() == 2);
}

TEST_CASE("per-die error map covers every test die") {
    auto spec = pipeline::ExperimentSpec::cd2_default(DboStep::AEI, Orientation::Horizontal, 1);
    spec.models = {quick_models()[1]};
    const auto report = pipeline::run_experiment(spec, wafers());
    CHECK(report.cells[0].die_mae.size() == 69);
    for (const auto& [die, mae] : report.cells[0].die_mae) CHECK(mae >= 0.0);
}

TEST_CASE("missing DBO step is reported") {
    auto w = wafers();
    w[0].overlay.erase(std::remove_if(w[0].overlay.begin(), w[0].overlay.end(),
                                      [](const auto& r) { return r.step == DboStep::CMP; }),
                       w[0].overlay.end());
    auto spec = pipeline::ExperimentSpec::cd2_default(DboStep::CMP, Orientation::Horizontal, 1);
    spec.models = quick_models();
    CHECK_THROWS_AS(pipeline::run_experiment(spec, w), Error);
}
