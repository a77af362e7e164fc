// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "waferwise/clean.hpp"
#include "waferwise/dataset_io.hpp"
#include "waferwise/dbo.hpp"
#include "waferwise/fabsim.hpp"
#include "waferwise/io.hpp"
#include "waferwise/learn.hpp"
#include "waferwise/pipeline.hpp"
#include "waferwise/rng.hpp"

using namespace waferwise;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* pattern, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, pattern, a);
    return buf;
}

std::string fmt3(double v) { return fmt("%.3f", v); }

std::vector<WaferDataset> scenario_data(const fabsim::ScenarioConfig& cfg, std::uint64_t seed) {
    std::vector<WaferDataset> out;
    for (auto& s : fabsim::generate_scenario(cfg, seed)) out.push_back(std::move(s.data));
    return out;
}

// ---------------------------------------------------------------------------

Outcome zero_overlay_symmetry() {
    double worst = 0.0;
    for (double pitch : {96.0, 64.0, 128.0}) {
        const auto model = dbo::GratingModel::standard(pitch);
        for (const auto& [x0, delta] : {std::pair{pitch / 4, pitch / 32}, std::pair{pitch / 8, pitch / 16}}) {
            const auto t = dbo::simulate_target(model, x0, delta, 0.0, 0.0, 1);
            for (double v : dbo::differential_spectrum(t)) worst = std::max(worst, std::abs(v));
        }
    }
    return {worst == 0.0, "max|dR| = " + fmt("%g", worst) + " over 3 pitches x 2 pad designs"};
}

Outcome overlay_recovery_sweep() {
    const auto start = std::chrono::steady_clock::now();
    const double p = 96.0;
    const auto model = dbo::GratingModel::standard(p);
    bool ok = true;
    std::string detail;
    for (const auto& [x0, delta, name] : {std::tuple{p / 4, p / 32, "x0=P/4,d=P/32"}, std::tuple{p / 8, p / 16, "x0=P/8,d=P/16"}}) {
        double max_err = 0.0;
        double max_bias = 0.0;
        double max_excess = -1.0;
        for (int i = -10; i <= 10; ++i) {
            const double eps = 0.5 * i;
            const double est = dbo::estimate_overlay(dbo::simulate_target(model, x0, delta, eps, 0.0, 1)).overlay_nm;
            const double bias = oracle::dbo_closed_form(p, x0, delta, eps) - eps;
            const double err = std::abs(est - eps);
            max_err = std::max(max_err, err);
            max_bias = std::max(max_bias, std::abs(bias));
            max_excess = std::max(max_excess, err - std::abs(bias));
            ok = ok && err <= 0.05 + std::abs(bias);
        }
        detail += std::string(name) + ": max err " + fmt("%.4f", max_err) + " nm, max bias " + fmt("%.4f", max_bias) +
                  " nm, max err-|bias| " + fmt("%.1e", max_excess) + "; ";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ok = ok && secs < 5.0;
    return {ok, detail + "runtime " + fmt("%.3f", secs) + " s"};
}

Outcome dbscan_oracle() {
    auto rng = make_rng(2024, {});
    int same = 0;
    const int total = 500;
    for (int t = 0; t < total; ++t) {
        const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 200);
        const std::size_t d = 1 + static_cast<std::size_t>(uniform01(rng) * 3);
        const bool integer = t % 5 == 0;  // exercises distance ties
        oracle::Points pts(n, std::vector<double>(d));
        Matrix m(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                pts[i][c] = integer ? std::floor(uniform01(rng) * 8.0) : uniform01(rng) * 10.0;
                m(i, c) = pts[i][c];
            }
        }
        const double eps = integer ? 1.0 + std::floor(uniform01(rng) * 3.0) : 0.1 + uniform01(rng) * 3.0;
        const int min_samples = 2 + static_cast<int>(uniform01(rng) * 8);
        same += clean::dbscan(m, {eps, min_samples}) == oracle::dbscan(pts, eps, min_samples) ? 1 : 0;
    }
    return {same == total, std::to_string(same) + "/" + std::to_string(total) + " instances identical"};
}

Outcome metrics_exact() {
    const std::vector<double> y{1, 2, 3};
    const std::vector<double> f{1, 2, 5};
    const bool hand = learn::mse(y, f) == 4.0 / 3.0 && learn::r2(y, f) == -1.0;
    auto rng = make_rng(7, {});
    bool baseline = true;
    for (int t = 0; t < 200; ++t) {
        std::vector<double> v(2 + t);
        for (auto& x : v) x = 30.0 + normal(rng, 2.0);
        baseline = baseline && learn::r2(v, std::vector<double>(v.size(), oracle::mean(v))) == 0.0;
    }
    return {hand && baseline, std::string("mse=4/3, r2=-1 ") + (hand ? "exact" : "MISMATCH") +
                                  "; mean predictor r2 == 0 on 200 random targets: " + (baseline ? "yes" : "no")};
}

// CD2 experiments shared by the ordering, step, memorization and wafer-map criteria.
struct Cd2Runs {
    std::map<std::uint64_t, std::vector<pipeline::FitReport>> by_seed;  // one report per (step, orientation)
    double seconds = 0.0;
};

const Cd2Runs& cd2_runs() {
    static const Cd2Runs runs = [] {
        Cd2Runs r;
        const auto start = std::chrono::steady_clock::now();
        for (auto seed : kSeeds) {
            const auto data = scenario_data(fabsim::ScenarioConfig::defaults(), seed);
            for (auto step : kAllDboSteps) {
                for (auto o : kAllOrientations) {
                    r.by_seed[seed].push_back(
                        pipeline::run_experiment(pipeline::ExperimentSpec::cd2_default(step, o, seed), data));
                }
            }
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return r;
    }();
    return runs;
}

const pipeline::CellResult& cell(const pipeline::FitReport& r, learn::ModelKind kind) {
    const auto name = std::string(learn::to_string(kind));
    for (const auto& c : r.cells) {
        if (c.model == name) return c;
    }
    throw std::runtime_error("no cell for " + name);
}

Outcome extra_trees_memorization() {
    int ok = 0;
    int total = 0;
    for (const auto& [seed, reports] : cd2_runs().by_seed) {
        for (const auto& r : reports) {
            ++total;
            ok += fmt3(cell(r, learn::ModelKind::ExtraTrees).r2_train) == "1.000" ? 1 : 0;
        }
    }
    // The training rows are distinct (checked on every step and orientation of one seed).
    const auto data = scenario_data(fabsim::ScenarioConfig::defaults(), 1);
    bool distinct = true;
    for (auto step : kAllDboSteps) {
        for (auto o : kAllOrientations) {
            const auto a = pipeline::assemble_cd2_features(data, step, o);
            std::set<std::vector<double>> rows;
            std::size_t n_train = 0;
            for (std::size_t i = 0; i < a.meta.size(); ++i) {
                if (a.meta[i].wafer_id == "D10") continue;
                ++n_train;
                const auto row = a.x.values.row(i);
                rows.emplace(row.begin(), row.end());
            }
            distinct = distinct && rows.size() == n_train;
        }
    }
    // And on a capacitance training set.
    auto spec = pipeline::ExperimentSpec::capacitance_default(DboStep::AEI, Orientation::Vertical, Family::AB, 2, 1);
    spec.models = {learn::ModelSpec::extra_trees(1)};
    const bool cap = fmt3(pipeline::run_experiment(spec, data).cells[0].r2_train) == "1.000";
    return {ok == total && distinct && cap, std::to_string(ok) + "/" + std::to_string(total) +
                                                " CD2 cells and the BA/AB capacitance cell give r2_train = 1.000; "
                                                "training rows distinct: " + (distinct ? "yes" : "no")};
}

Outcome model_ordering() {
    int ordered = 0;
    int above = 0;
    int total = 0;
    double min_et = 1.0;
    for (const auto& [seed, reports] : cd2_runs().by_seed) {
        for (const auto& r : reports) {
            ++total;
            const double lin = cell(r, learn::ModelKind::Linear).r2_test;
            const double et = cell(r, learn::ModelKind::ExtraTrees).r2_test;
            ordered += lin < et ? 1 : 0;
            above += et >= 0.8 - 0.05 ? 1 : 0;
            min_et = std::min(min_et, et);
        }
    }
    return {ordered == total && above == total,
            "Linear < ExtraTrees in " + std::to_string(ordered) + "/" + std::to_string(total) +
                " (seed, step, orientation) cells; ExtraTrees r2_test >= 0.75 in " + std::to_string(above) + "/" +
                std::to_string(total) + ", min " + fmt3(min_et) + " (" + fmt("%.0f", cd2_runs().seconds) + " s)"};
}

Outcome step_stability() {
    std::map<DboStep, std::pair<double, int>> sums;
    for (const auto& [seed, reports] : cd2_runs().by_seed) {
        for (const auto& r : reports) {
            for (const auto& c : r.cells) {
                if (c.failed) continue;
                sums[c.step].first += c.r2_test;
                ++sums[c.step].second;
            }
        }
    }
    const auto mean = [&](DboStep s) { return sums[s].first / sums[s].second; };
    const double adi = mean(DboStep::ADI);
    const double aei = mean(DboStep::AEI);
    const double cmp = mean(DboStep::CMP);
    return {aei >= adi && aei >= cmp,
            "mean r2_test ADI " + fmt3(adi) + ", AEI " + fmt3(aei) + ", CMP " + fmt3(cmp) +
                " (5 seeds x 2 orientations x 4 models)"};
}

Outcome cleaning_benefit() {
    int better = 0;
    bool recall_ok = true;
    bool rate_ok = true;
    std::string detail;
    for (auto seed : kSeeds) {
        auto cfg = fabsim::ScenarioConfig::defaults();
        cfg.capacitance.fail_rate_base = 0.03;
        const auto synth = fabsim::generate_scenario(cfg, seed);
        std::vector<WaferDataset> data;
        for (const auto& s : synth) data.push_back(s.data);

        std::size_t records = 0;
        std::size_t injected = 0;
        std::size_t caught = 0;
        for (const auto& s : synth) {
            if (s.data.wafer_id != "D02" && s.data.wafer_id != "D10") continue;
            const auto cleaned = clean::clean_wafer(s.data, {});
            for (std::size_t i = 0; i < s.data.capacitance.size(); ++i) {
                if (s.data.capacitance[i].structure.family != Family::BA) continue;
                ++records;
                if (!s.truth.injected_failure[i]) continue;
                ++injected;
                caught += cleaned.capacitance[i].flagged_outlier ? 1 : 0;
            }
        }
        const double rate = static_cast<double>(injected) / static_cast<double>(records);
        const double recall = static_cast<double>(caught) / static_cast<double>(injected);
        rate_ok = rate_ok && rate >= 0.03;
        recall_ok = recall_ok && recall >= 0.9;

        auto spec = pipeline::ExperimentSpec::capacitance_default(DboStep::ADI, Orientation::Horizontal, Family::BA, 4,
                                                                  seed);
        spec.models = {learn::ModelSpec::extra_trees(seed)};
        const double r2_clean = pipeline::run_experiment(spec, data).cells[0].r2_test;
        spec.clean = false;
        const double r2_raw = pipeline::run_experiment(spec, data).cells[0].r2_test;
        better += r2_clean > r2_raw ? 1 : 0;
        detail += "seed " + std::to_string(seed) + ": BA4 raw " + fmt3(r2_raw) + " -> clean " + fmt3(r2_clean) +
                  ", injected " + fmt("%.1f%%", 100 * rate) + ", recall " + fmt3(recall) + "; ";
    }
    detail.resize(detail.size() - 2);
    return {better >= 4 && recall_ok && rate_ok, "clean > raw in " + std::to_string(better) + "/5 seeds (" + detail + ")"};
}

Outcome ab_ba_contrast() {
    int var_ok = 0;
    int r2_ok = 0;
    std::string detail;
    for (auto seed : kSeeds) {
        const auto data = scenario_data(fabsim::ScenarioConfig::defaults(), seed);
        std::vector<double> ab6;
        std::vector<double> ba6;
        for (const auto& w : data) {
            for (const auto& r : w.capacitance) {
                if (r.structure.level != 6) continue;
                (r.structure.family == Family::AB ? ab6 : ba6).push_back(r.value_fF);
            }
        }
        const double var_ab = std::pow(learn::population_std(ab6), 2);
        const double var_ba = std::pow(learn::population_std(ba6), 2);
        var_ok += var_ab > var_ba ? 1 : 0;

        std::map<Family, double> mean_r2;
        for (auto fam : kAllFamilies) {
            double sum = 0.0;
            int n = 0;
            for (int level = kMinLevel; level <= kMaxLevel; ++level) {
                for (auto o : kAllOrientations) {
                    auto spec = pipeline::ExperimentSpec::capacitance_default(DboStep::ADI, o, fam, level, seed);
                    spec.models = {learn::ModelSpec::extra_trees(seed)};
                    sum += pipeline::run_experiment(spec, data).cells[0].r2_test;
                    ++n;
                }
            }
            mean_r2[fam] = sum / n;
        }
        r2_ok += mean_r2[Family::AB] < mean_r2[Family::BA] ? 1 : 0;
        detail += "seed " + std::to_string(seed) + ": var AB6/BA6 " + fmt("%.1f", var_ab / var_ba) + ", clean r2 AB " +
                  fmt3(mean_r2[Family::AB]) + " BA " + fmt3(mean_r2[Family::BA]) + "; ";
    }
    detail.resize(detail.size() - 2);
    return {var_ok == 5 && r2_ok == 5, "var(AB6) > var(BA6) in " + std::to_string(var_ok) +
                                           "/5 seeds, AB mean clean r2 < BA in " + std::to_string(r2_ok) + "/5 (" +
                                           detail + ")"};
}

Outcome wafer_map_errors() {
    int passing = 0;
    std::string detail;
    for (const auto& [seed, reports] : cd2_runs().by_seed) {
        bool ok = true;
        std::string s = "seed " + std::to_string(seed) + ":";
        for (const auto& r : reports) {
            const auto& c = cell(r, learn::ModelKind::ExtraTrees);
            if (c.step != DboStep::ADI) continue;
            std::vector<double> e;
            for (const auto& [die, v] : c.die_mae) e.push_back(v);
            std::sort(e.begin(), e.end());
            const double median = e.size() % 2 ? e[e.size() / 2] : 0.5 * (e[e.size() / 2 - 1] + e[e.size() / 2]);
            ok = ok && median <= 1.5 && e.back() <= 2.5;
            s += " " + std::string(to_string(c.orientation)) + " median " + fmt("%.2f", median) + " max " +
                 fmt("%.2f", e.back());
        }
        passing += ok ? 1 : 0;
        detail += s + (ok ? " ok" : " over") + "; ";
    }
    detail.resize(detail.size() - 2);
    return {passing >= 3, std::to_string(passing) + "/5 seeds within median <= 1.5 nm and max <= 2.5 nm (" + detail + ")"};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
    }
    return out;
}

Outcome reproducibility() {
    const std::string tool = WAFERWISE_TOOL;
    const auto root = fs::temp_directory_path() / "waferwise_acceptance_repro";
    fs::remove_all(root);
    fs::create_directories(root);
    const auto a = (root / "a").string();
    const auto b = (root / "b").string();
    const auto sh = [&](const std::string& args) {
        return std::system((tool + " " + args + " > /dev/null 2>> " + (root / "stderr.txt").string()).c_str()) == 0;
    };
    struct Step {
        std::string name;
        std::string args;
    };
    const std::vector<Step> steps = {
        {"data", "synth --seed 5 --grid 61"},
        {"clean", "clean --set data.dir=" + a + "/data"},
        {"train", "train --set data.dir=" + a + "/data --dbo-step adi --set experiment.orientation=v"},
        {"predict", "predict --set model.file=" + a + "/train/model.json --set predict.features=" + a +
                        "/train/features.csv"},
        {"eval", "eval --set data.dir=" + a + "/data --dbo-step aei --set model.n_trees=20"},
        {"eval_cap", "eval --set data.dir=" + a + "/data --set experiment.target=capacitance "
                     "--set experiment.structures=BA4,AB6 --set experiment.models=Linear,ExtraTrees --dbo-step cmp"},
        {"render", "render --set render.predictions=" + a + "/eval/predictions.csv"},
    };
    int same = 0;
    std::string detail;
    for (const auto& s : steps) {
        const bool first = sh(s.args + " --jobs 1 --out " + a + "/" + s.name);
        const bool second = first && sh("--config " + a + "/" + s.name + "/config.ini " +
                                        (s.name == "data" ? "synth" : s.args.substr(0, s.args.find(' '))) +
                                        " --jobs 4 --out " + b + "/" + s.name);
        const bool identical = second && snapshot(a + "/" + s.name) == snapshot(b + "/" + s.name);
        same += identical ? 1 : 0;
        if (!identical) detail += " " + s.name + (first ? (second ? " differs" : " rerun failed") : " failed");
    }
    const bool ok = same == static_cast<int>(steps.size());
    if (ok) fs::remove_all(root);
    return {ok, std::to_string(same) + "/" + std::to_string(steps.size()) +
                    " commands (synth, clean, train, predict, eval x2, render) rerun from the echoed config with "
                    "--jobs 4 reproduce every artifact byte for byte" + detail};
}

Outcome roundtrip_fidelity() {
    const auto root = fs::temp_directory_path() / "waferwise_acceptance_roundtrip";
    fs::remove_all(root);
    auto data = scenario_data(fabsim::ScenarioConfig::defaults(), 9);
    data[1] = clean::clean_wafer(data[1], {});  // carries flagged records
    io::write_bundle(data, root / "bundle");
    const auto back = io::read_bundle(root / "bundle");
    bool bundle_ok = back.size() == data.size();
    for (std::size_t i = 0; bundle_ok && i < data.size(); ++i) bundle_ok = back[i] == data[i];

    const auto train = pipeline::assemble_cd2_features(data, DboStep::ADI, Orientation::Horizontal);
    const auto other = pipeline::assemble_cd2_features(scenario_data(fabsim::ScenarioConfig::defaults(), 10),
                                                        DboStep::ADI, Orientation::Horizontal);
    std::vector<std::size_t> probe_rows(1000);
    for (std::size_t i = 0; i < probe_rows.size(); ++i) probe_rows[i] = (i * 7) % other.meta.size();
    const Matrix probes = other.x.values.select_rows(probe_rows);
    int models_ok = 0;
    for (const auto& spec : pipeline::default_models(3)) {
        const auto model = learn::fit_model(train.x, train.y, spec);
        const auto path = root / (std::string(learn::to_string(spec.kind)) + ".json");
        learn::save_model(model, path);
        const auto loaded = learn::load_model(path);
        models_ok += loaded == model && loaded.predict(probes) == model.predict(probes) ? 1 : 0;
    }
    fs::remove_all(root);
    return {bundle_ok && models_ok == 4, std::string("4-wafer bundle round-trip ") + (bundle_ok ? "exact" : "DIFFERS") +
                                             "; " + std::to_string(models_ok) +
                                             "/4 model kinds reload with bit-identical predictions on 1000 probes"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"zero-overlay symmetry", zero_overlay_symmetry},
        {"overlay recovery sweep", overlay_recovery_sweep},
        {"DBSCAN oracle equivalence", dbscan_oracle},
        {"metric identities", metrics_exact},
        {"ExtraTrees memorization", extra_trees_memorization},
        {"model ordering", model_ordering},
        {"AEI step stability", step_stability},
        {"cleaning benefit", cleaning_benefit},
        {"AB/BA contrast", ab_ba_contrast},
        {"per-die CD2 error", wafer_map_errors},
        {"reproducibility", reproducibility},
        {"round-trip fidelity", roundtrip_fidelity},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
