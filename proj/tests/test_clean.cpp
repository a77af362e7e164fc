#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "waferwise/clean.hpp"
#include "waferwise/error.hpp"
#include "waferwise/fabsim.hpp"
#include "waferwise/rng.hpp"

using namespace waferwise;

namespace {

Matrix to_matrix(const oracle::Points& p) {
    Matrix m(p.size(), p.front().size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t c = 0; c < p[i].size(); ++c) m(i, c) = p[i][c];
    }
    return m;
}

oracle::Points random_points(Rng& rng, std::size_t n, std::size_t d, bool integer) {
    oracle::Points p(n, std::vector<double>(d));
    for (auto& row : p) {
        for (auto& v : row) v = integer ? std::floor(uniform01(rng) * 6.0) : uniform01(rng) * 10.0;
    }
    return p;
}

/// Partition as a set of index sets, ignoring label numbers.
std::set<std::set<std::size_t>> partition(const std::vector<int>& labels) {
    std::map<int, std::set<std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].insert(i);
    std::set<std::set<std::size_t>> out;
    for (auto& [l, g] : groups) out.insert(l == clean::kNoise ? std::set<std::size_t>{} : g);
    return out;
}

WaferDataset small_wafer() {
    WaferDataset w;
    w.wafer_id = "T";
    for (int c = 0; c < 4; ++c) {
        for (int r = 0; r < 4; ++r) w.grid.push_back({c, r});
    }
    for (const auto& die : w.grid) {
        for (int k = 0; k < 5; ++k) {
            const double v = 1000.0 + 2.0 * die.col + 1.5 * die.row + 0.3 * k;
            w.capacitance.push_back({die, {Family::BA, 4, Orientation::Horizontal, k}, v, false});
            w.capacitance.push_back({die, {Family::AB, 1, Orientation::Vertical, k}, 700.0 + k, false});
        }
    }
    return w;
}

}  // namespace

TEST_CASE("dbscan matches the brute-force oracle") {
    auto rng = make_rng(11, {});
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 120);
        const std::size_t d = 1 + static_cast<std::size_t>(uniform01(rng) * 3);
        const bool integer = t % 4 == 0;
        const auto p = random_points(rng, n, d, integer);
        const double eps = integer ? 1.0 + std::floor(uniform01(rng) * 2.0) : 0.2 + uniform01(rng) * 2.5;
        const int min_samples = 2 + static_cast<int>(uniform01(rng) * 5);
        CHECK(clean::dbscan(to_matrix(p), {eps, min_samples}) == oracle::dbscan(p, eps, min_samples));
    }
}

TEST_CASE("dbscan counts the point itself and uses eps inclusively") {
    const oracle::Points p{{0.0}, {1.0}, {5.0}};
    CHECK(clean::dbscan(to_matrix(p), {1.0, 2}) == std::vector<int>{0, 0, clean::kNoise});
    CHECK(clean::dbscan(to_matrix(p), {0.999, 2}) == std::vector<int>{clean::kNoise, clean::kNoise, clean::kNoise});
}

TEST_CASE("border point joins the nearest core") {
    // Cores at 0,0.5 and 3,3.5; the point at 1.6 is within eps = 1.2 of 0.5 only when nearer.
    const oracle::Points p{{0.0}, {0.5}, {1.6}, {2.9}, {3.4}};
    const auto labels = clean::dbscan(to_matrix(p), {1.2, 3});
    CHECK(labels == oracle::dbscan(p, 1.2, 3));
}

TEST_CASE("dbscan partition is invariant under point permutation") {
    auto rng = make_rng(12, {});
    for (int t = 0; t < 30; ++t) {
        const auto p = random_points(rng, 80, 2, t % 2 == 0);
        const double eps = t % 2 == 0 ? 1.0 : 0.9;
        std::vector<std::size_t> perm(p.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        oracle::Points q;
        for (auto i : perm) q.push_back(p[i]);
        const auto a = clean::dbscan(to_matrix(p), {eps, 3});
        const auto b = clean::dbscan(to_matrix(q), {eps, 3});
        std::vector<int> b_back(p.size());
        for (std::size_t k = 0; k < perm.size(); ++k) b_back[perm[k]] = b[k];
        CHECK(partition(a) == partition(b_back));
    }
}

TEST_CASE("dbscan rejects bad parameters") {
    const Matrix m(3, 1);
    CHECK_THROWS_AS(clean::dbscan(m, {0.0, 2}), Error);
    CHECK_THROWS_AS(clean::dbscan(m, {1.0, 1}), Error);
    CHECK_THROWS_AS(clean::dbscan(Matrix(), {1.0, 2}), Error);
}

TEST_CASE("knee curve is the sorted k-distance with self as first neighbor") {
    const oracle::Points p{{0.0}, {1.0}, {3.0}, {7.0}};
    const auto k = clean::knee_eps(to_matrix(p), 2);
    CHECK(k.curve == std::vector<double>{1.0, 1.0, 2.0, 4.0});
    CHECK(std::find(k.curve.begin(), k.curve.end(), k.eps) != k.curve.end());
    CHECK_THROWS_AS(clean::knee_eps(to_matrix(p), 4), Error);
}

TEST_CASE("knee separates a dense blob from scattered outliers") {
    auto rng = make_rng(3, {});
    oracle::Points blob;
    for (int i = 0; i < 400; ++i) blob.push_back({normal(rng, 0.3), normal(rng, 0.3), normal(rng, 0.3)});
    for (int i = 0; i < 20; ++i) blob.push_back({uniform01(rng) * 20 - 10, uniform01(rng) * 20 - 10, 8.0 + i});
    const auto k = clean::knee_eps(to_matrix(blob), 2);
    CHECK_FALSE(k.weak_knee);
    const auto labels = clean::dbscan(to_matrix(blob), {k.eps, 2});
    const auto noise_in_blob = std::count(labels.begin(), labels.begin() + 400, clean::kNoise);
    const auto noise_in_tail = std::count(labels.begin() + 400, labels.end(), clean::kNoise);
    CHECK(noise_in_tail == 20);
    CHECK(noise_in_blob < 10);

    oracle::Points uniform;
    for (int i = 0; i < 400; ++i) uniform.push_back({uniform01(rng), uniform01(rng), uniform01(rng)});
    CHECK(clean::knee_eps(to_matrix(uniform), 2).weak_knee);
}

TEST_CASE("outliers are replaced by the die mean, else the wafer mean") {
    auto w = small_wafer();
    const clean::StructureType type{Family::BA, 4, Orientation::Horizontal};
    // Die (1,1) instance 2 shorts; every instance of die (2,3) opens.
    std::size_t shorted = 0;
    std::vector<std::size_t> opened;
    for (std::size_t i = 0; i < w.capacitance.size(); ++i) {
        auto& r = w.capacitance[i];
        if (!type.matches(r.structure)) continue;
        if (r.die == DieIndex{1, 1} && r.structure.instance == 2) {
            r.value_fF = 3000.0;
            shorted = i;
        }
        if (r.die == DieIndex{2, 3}) {
            r.value_fF = 50.0 + 40.0 * r.structure.instance;
            opened.push_back(i);
        }
    }
    clean::CleanOptions opt;
    opt.eps = 0.5;
    opt.scale = std::array<double, 3>{10.0, 1.0, 1.0};  // each die is its own cluster
    const auto res = clean::clean_capacitance(w, type, opt);
    CHECK(res.report.n_outliers == 6);

    double die_sum = 0.0;
    double wafer_sum = 0.0;
    int die_n = 0;
    int wafer_n = 0;
    for (std::size_t i = 0; i < w.capacitance.size(); ++i) {
        const auto& r = w.capacitance[i];
        if (!type.matches(r.structure) || i == shorted || r.die == DieIndex{2, 3}) continue;
        wafer_sum += r.value_fF;
        ++wafer_n;
        if (r.die == DieIndex{1, 1}) {
            die_sum += r.value_fF;
            ++die_n;
        }
    }
    CHECK(res.records[shorted].value_fF == doctest::Approx(die_sum / die_n).epsilon(1e-12));
    CHECK(res.records[shorted].flagged_outlier);
    for (auto i : opened) CHECK(res.records[i].value_fF == doctest::Approx(wafer_sum / wafer_n).epsilon(1e-12));
    for (const auto& rep : res.report.replaced) {
        CHECK(rep.policy == (rep.record_index == shorted ? clean::ReplacementPolicy::DieMean
                                                         : clean::ReplacementPolicy::WaferMean));
    }
    // Other structure types are untouched.
    for (std::size_t i = 0; i < w.capacitance.size(); ++i) {
        if (!type.matches(w.capacitance[i].structure)) CHECK(res.records[i] == w.capacitance[i]);
    }
}

TEST_CASE("cleaning with fixed eps and scale is idempotent") {
    auto cfg = fabsim::ScenarioConfig::defaults();
    cfg.n_dies = 69;
    cfg.wafers.resize(1);
    const auto w = fabsim::generate_scenario(cfg, 4).front().data;
    for (const auto& type : {clean::StructureType{Family::BA, 4, Orientation::Horizontal},
                             clean::StructureType{Family::AB, 6, Orientation::Vertical}}) {
        const auto first = clean::clean_capacitance(w, type);
        clean::CleanOptions fixed;
        fixed.eps = first.report.eps_used;
        fixed.scale = first.report.scale;
        const auto a = clean::clean_capacitance(w, type, fixed);
        CHECK(a.records == first.records);
        WaferDataset w2 = w;
        w2.capacitance = a.records;
        const auto b = clean::clean_capacitance(w2, type, fixed);
        CHECK(b.records == a.records);
    }
}

TEST_CASE("cleaning is invariant under record order") {
    auto cfg = fabsim::ScenarioConfig::defaults();
    cfg.n_dies = 69;
    cfg.wafers.resize(1);
    const auto w = fabsim::generate_scenario(cfg, 8).front().data;
    const clean::StructureType type{Family::BA, 2, Orientation::Vertical};
    auto shuffled = w;
    auto rng = make_rng(1, {});
    std::shuffle(shuffled.capacitance.begin(), shuffled.capacitance.end(), rng);
    const auto a = clean::clean_capacitance(w, type);
    const auto b = clean::clean_capacitance(shuffled, type);
    CHECK(a.report.eps_used == b.report.eps_used);
    auto key = [](const std::vector<CapacitanceRecord>& recs) {
        std::vector<std::tuple<DieIndex, StructureId, double, bool>> out;
        for (const auto& r : recs) out.emplace_back(r.die, r.structure, r.value_fF, r.flagged_outlier);
        std::sort(out.begin(), out.end());
        return out;
    };
    const auto ka = key(a.records);
    const auto kb = key(b.records);
    REQUIRE(ka.size() == kb.size());
    for (std::size_t i = 0; i < ka.size(); ++i) {
        CHECK(std::get<0>(ka[i]) == std::get<0>(kb[i]));
        CHECK(std::get<1>(ka[i]) == std::get<1>(kb[i]));
        CHECK(std::get<2>(ka[i]) == doctest::Approx(std::get<2>(kb[i])).epsilon(1e-12));
        CHECK(std::get<3>(ka[i]) == std::get<3>(kb[i]));
    }
}

TEST_CASE("cleaning recovers most injected failures") {
    auto cfg = fabsim::ScenarioConfig::defaults();
    cfg.wafers.resize(1);
    const auto sw = fabsim::generate_scenario(cfg, 2).front();
    std::vector<clean::CleanReport> reports;
    const auto cleaned = clean::clean_wafer(sw.data, {}, &reports);
    CHECK(reports.size() == 24);
    std::size_t injected = 0;
    std::size_t caught = 0;
    for (std::size_t i = 0; i < sw.data.capacitance.size(); ++i) {
        if (sw.data.capacitance[i].structure.family != Family::BA || !sw.truth.injected_failure[i]) continue;
        ++injected;
        caught += cleaned.capacitance[i].flagged_outlier ? 1 : 0;
    }
    REQUIRE(injected > 0);
    CHECK(static_cast<double>(caught) / static_cast<double>(injected) >= 0.9);
}

TEST_CASE("zero-variance coordinate is warned and left unscaled") {
    auto w = small_wafer();
    for (auto& r : w.capacitance) r.die.row = 0;
    w.grid.clear();
    const auto res = clean::clean_capacitance(w, {Family::BA, 4, Orientation::Horizontal});
    CHECK(res.report.scale[2] == 1.0);
    CHECK_FALSE(res.report.warnings.empty());
}

TEST_CASE("report CSVs carry one row per item") {
    auto w = small_wafer();
    w.capacitance[0].value_fF = 9000.0;
    std::vector<clean::CleanReport> reports;
    clean::clean_wafer(w, {}, &reports);
    const auto rep = clean::replacements_csv(reports);
    CHECK(rep.rfind("wafer_id,die_col,die_row,family,level,orientation,instance,old_cap_fF,new_cap_fF,policy", 0) == 0);
    CHECK(rep.find("9000") != std::string::npos);
    const auto summary = clean::clean_summary_csv(reports);
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);
}
