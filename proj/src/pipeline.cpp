#include "waferwise/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "waferwise/error.hpp"
#include "waferwise/fabsim.hpp"
#include "waferwise/io.hpp"
#include "waferwise/log.hpp"
#include "waferwise/rng.hpp"

namespace waferwise::pipeline {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string> overlay_columns() {
    std::vector<std::string> names;
    for (std::size_t s = 0; s < kOverlaySites; ++s) names.push_back("ov_" + std::to_string(s));
    return names;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

std::string fmt(double v) { return std::isfinite(v) ? io::format_double(v) : "nan"; }

}  // namespace

std::string_view to_string(ExperimentKind kind) {
    return kind == ExperimentKind::Cd2Prediction ? "cd2" : "capacitance";
}

std::string describe(const SplitSpec& split) {
    if (const auto* w = std::get_if<ByWafer>(&split)) {
        std::string s = "by-wafer train=";
        for (std::size_t i = 0; i < w->train_ids.size(); ++i) s += (i ? "+" : "") + w->train_ids[i];
        return s + " test=" + w->test_id;
    }
    const auto& p = std::get<Pooled8020>(split);
    return "pooled test_fraction=" + io::format_double(p.test_fraction) + " seed=" + std::to_string(p.seed) +
           " stratified by wafer and die ring";
}

std::vector<learn::ModelSpec> default_models(std::uint64_t seed) {
    return {learn::ModelSpec::linear(), learn::ModelSpec::svr_default(), learn::ModelSpec::random_forest(seed),
            learn::ModelSpec::extra_trees(seed)};
}

ExperimentSpec ExperimentSpec::cd2_default(DboStep step, Orientation orientation, std::uint64_t seed) {
    ExperimentSpec s;
    s.kind = ExperimentKind::Cd2Prediction;
    s.dbo_step = step;
    s.orientation = orientation;
    s.family = Family::AB;
    s.level = 1;
    s.models = default_models(seed);
    s.split = ByWafer{{"D02", "D03", "D11"}, "D10"};
    return s;
}

ExperimentSpec ExperimentSpec::capacitance_default(DboStep step, Orientation orientation, Family family,
                                                   int level, std::uint64_t seed) {
    ExperimentSpec s;
    s.kind = ExperimentKind::CapacitancePrediction;
    s.dbo_step = step;
    s.orientation = orientation;
    s.family = family;
    s.level = level;
    s.models = default_models(seed);
    s.split = Pooled8020{seed, 0.2};
    s.wafer_ids = {"D02", "D10"};
    return s;
}

Assembled assemble_cd2_features(std::span<const WaferDataset> wafers, DboStep step, Orientation orientation) {
    Assembled out;
    out.x.col_names = overlay_columns();
    for (const char* n : {"die_col", "die_row", "target_x_um", "target_y_um"}) out.x.col_names.emplace_back(n);
    std::vector<double> row(kCd2FeatureCount);
    for (const auto& w : wafers) {
        for (std::size_t i = 0; i < w.cdsem.size(); ++i) {
            const auto& rec = w.cdsem[i];
            if (rec.structure.orientation != orientation) continue;
            const auto* ov = w.find_overlay(rec.die, step);
            if (!ov) {
                ++out.dropped;
                continue;
            }
            const auto& values = orientation == Orientation::Horizontal ? ov->values_y : ov->values_x;
            if (values.size() != kOverlaySites) {
                throw Error("arity_mismatch", "OverlayRecord arity " + std::to_string(kOverlaySites) + ", got " +
                                                  std::to_string(values.size()));
            }
            std::copy(values.begin(), values.end(), row.begin());
            row[kOverlaySites] = rec.die.col;
            row[kOverlaySites + 1] = rec.die.row;
            row[kOverlaySites + 2] = rec.target_x_um;
            row[kOverlaySites + 3] = rec.target_y_um;
            out.x.values.append_row(row);
            out.y.push_back(rec.cd2_nm);
            out.meta.push_back({w.wafer_id, rec.die, i});
        }
    }
    if (out.x.values.rows() == 0) out.x.values = Matrix(0, kCd2FeatureCount);
    return out;
}

Assembled assemble_cap_features(std::span<const WaferDataset> wafers, DboStep step, Orientation orientation,
                                Family family, int level) {
    Assembled out;
    out.x.col_names = overlay_columns();
    for (const char* n : {"die_col", "die_row", "instance"}) out.x.col_names.emplace_back(n);
    std::vector<double> row(kCapFeatureCount);
    for (const auto& w : wafers) {
        for (std::size_t i = 0; i < w.capacitance.size(); ++i) {
            const auto& rec = w.capacitance[i];
            if (rec.structure.orientation != orientation || rec.structure.family != family ||
                rec.structure.level != level) {
                continue;
            }
            const auto* ov = w.find_overlay(rec.die, step);
            if (!ov) {
                ++out.dropped;
                continue;
            }
            const auto& values = orientation == Orientation::Horizontal ? ov->values_x : ov->values_y;
            if (values.size() != kOverlaySites) {
                throw Error("arity_mismatch", "OverlayRecord arity " + std::to_string(kOverlaySites) + ", got " +
                                                  std::to_string(values.size()));
            }
            std::copy(values.begin(), values.end(), row.begin());
            row[kOverlaySites] = rec.die.col;
            row[kOverlaySites + 1] = rec.die.row;
            row[kOverlaySites + 2] = rec.structure.instance;
            out.x.values.append_row(row);
            out.y.push_back(rec.value_fF);
            out.meta.push_back({w.wafer_id, rec.die, i});
        }
    }
    if (out.x.values.rows() == 0) out.x.values = Matrix(0, kCapFeatureCount);
    return out;
}

DieRing die_ring(const WaferDataset& wafer, DieIndex die) {
    const auto grid = fabsim::grid_from_dies(wafer.grid);
    const double r = std::sqrt(grid.radius2(die));
    if (r < 1.0 / 3.0) return DieRing::Center;
    if (r < 2.0 / 3.0) return DieRing::Middle;
    return DieRing::Edge;
}

SplitRows split_rows(const Assembled& data, std::span<const WaferDataset> wafers, const SplitSpec& split) {
    SplitRows out;
    const std::size_t n = data.meta.size();
    if (const auto* bw = std::get_if<ByWafer>(&split)) {
        std::set<std::string> present;
        for (const auto& m : data.meta) present.insert(m.wafer_id);
        for (const auto& id : bw->train_ids) {
            if (!present.count(id)) throw Error("invalid_input", "training wafer " + id + " has no rows");
            if (id == bw->test_id) throw Error("invalid_input", "wafer " + id + " is both training and test");
        }
        if (!present.count(bw->test_id)) throw Error("invalid_input", "test wafer " + bw->test_id + " has no rows");
        const std::set<std::string> train(bw->train_ids.begin(), bw->train_ids.end());
        for (std::size_t i = 0; i < n; ++i) {
            if (data.meta[i].wafer_id == bw->test_id) {
                out.test.push_back(i);
            } else if (train.count(data.meta[i].wafer_id)) {
                out.train.push_back(i);
            }
        }
        return out;
    }

    const auto& pooled = std::get<Pooled8020>(split);
    if (!(pooled.test_fraction > 0.0 && pooled.test_fraction < 1.0)) {
        throw Error("invalid_input", "test fraction must lie in (0, 1)");
    }
    // Strata keyed by (wafer, ring); rows keep ascending order inside each stratum.
    std::map<std::pair<std::string, int>, std::vector<std::size_t>> strata;
    std::map<std::string, fabsim::WaferGrid> grids;
    for (const auto& w : wafers) grids.emplace(w.wafer_id, fabsim::grid_from_dies(w.grid));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& m = data.meta[i];
        const auto it = grids.find(m.wafer_id);
        if (it == grids.end()) throw Error("invalid_input", "row from unknown wafer " + m.wafer_id);
        const double r = std::sqrt(it->second.radius2(m.die));
        const int ring = r < 1.0 / 3.0 ? 0 : (r < 2.0 / 3.0 ? 1 : 2);
        strata[{m.wafer_id, ring}].push_back(i);
    }
    for (auto& [key, rows] : strata) {
        auto rng = make_rng(pooled.seed, {fnv1a(key.first), static_cast<std::uint64_t>(key.second)});
        for (std::size_t k = rows.size(); k > 1; --k) {
            const auto j = std::min(k - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(k)));
            std::swap(rows[k - 1], rows[j]);
        }
        const auto n_test = static_cast<std::size_t>(std::lround(pooled.test_fraction * static_cast<double>(rows.size())));
        out.test.insert(out.test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
        out.train.insert(out.train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

FitReport run_experiment(const ExperimentSpec& spec, std::span<const WaferDataset> all_wafers) {
    if (spec.models.empty()) throw Error("invalid_input", "experiment has no models");
    std::vector<WaferDataset> wafers;
    for (const auto& w : all_wafers) {
        if (spec.wafer_ids.empty() ||
            std::find(spec.wafer_ids.begin(), spec.wafer_ids.end(), w.wafer_id) != spec.wafer_ids.end()) {
            wafers.push_back(w);
        }
    }
    for (const auto& id : spec.wafer_ids) {
        if (std::none_of(wafers.begin(), wafers.end(), [&](const WaferDataset& w) { return w.wafer_id == id; })) {
            throw Error("invalid_input", "wafer " + id + " not found");
        }
    }
    for (const auto& w : wafers) {
        if (!w.has_step(spec.dbo_step)) {
            throw Error("invalid_input", "wafer " + w.wafer_id + " has no overlay at DBO step " +
                                             std::string(to_string(spec.dbo_step)));
        }
    }

    FitReport report;
    const bool cap = spec.kind == ExperimentKind::CapacitancePrediction;
    const std::string target =
        cap ? StructureId{spec.family, spec.level, spec.orientation, 0}.type_label() : std::string("CD2_AB1");
    const std::string mode = cap ? (spec.clean ? "clean" : "raw") : "-";

    if (cap && spec.clean) {
        const clean::StructureType type{spec.family, spec.level, spec.orientation};
        for (auto& w : wafers) {
            auto res = clean::clean_capacitance(w, type, spec.clean_options);
            w.capacitance = std::move(res.records);
            report.clean_reports.push_back(std::move(res.report));
        }
    }

    const Assembled data = cap ? assemble_cap_features(wafers, spec.dbo_step, spec.orientation, spec.family, spec.level)
                               : assemble_cd2_features(wafers, spec.dbo_step, spec.orientation);
    if (data.y.empty()) throw Error("invalid_input", "no rows for " + target + " " + std::string(to_string(spec.orientation)));
    if (data.dropped > 0) {
        log::warn(std::to_string(data.dropped) + " records dropped: die has no overlay at the DBO step");
    }
    const SplitRows split = split_rows(data, wafers, spec.split);
    if (split.train.size() < 2 || split.test.empty()) throw Error("invalid_input", "split leaves too few rows");

    FeatureMatrix x_train{data.x.values.select_rows(split.train), data.x.col_names};
    const Matrix x_test = data.x.values.select_rows(split.test);
    std::vector<double> y_train;
    std::vector<double> y_test;
    for (auto i : split.train) y_train.push_back(data.y[i]);
    for (auto i : split.test) y_test.push_back(data.y[i]);

    auto& md = report.metadata;
    md.emplace_back("experiment", std::string(to_string(spec.kind)));
    md.emplace_back("dbo_step", std::string(to_string(spec.dbo_step)));
    md.emplace_back("orientation", std::string(to_string(spec.orientation)));
    md.emplace_back("target", target);
    md.emplace_back("split", describe(spec.split));
    md.emplace_back("rows_train", std::to_string(split.train.size()));
    md.emplace_back("rows_test", std::to_string(split.test.size()));
    md.emplace_back("rows_dropped", std::to_string(data.dropped));
    md.emplace_back("features", std::to_string(data.x.cols()));
    md.emplace_back("overlay_direction", cap ? (spec.orientation == Orientation::Horizontal ? "X" : "Y")
                                             : (spec.orientation == Orientation::Horizontal ? "Y" : "X"));
    md.emplace_back("scaling", "divide by population std of training rows, no centering, all models");
    if (cap) {
        md.emplace_back("cleaning", spec.clean ? "dbscan min_samples=" + std::to_string(spec.clean_options.min_samples) +
                                                     " per wafer and structure type, before the split"
                                               : "off");
        if (spec.clean) {
            md.emplace_back("cleaning_leakage",
                            "knee eps and replacement means use all rows of the wafer, test rows included");
        }
    }

    for (const auto& model_spec : spec.models) {
        CellResult cell;
        cell.model = std::string(learn::to_string(model_spec.kind));
        cell.step = spec.dbo_step;
        cell.orientation = spec.orientation;
        cell.target = target;
        cell.mode = mode;
        cell.n_train = split.train.size();
        cell.n_test = split.test.size();
        const std::string key = cell.model + "_";
        md.emplace_back(key + "seed", std::to_string(model_spec.seed));
        if (model_spec.kind == learn::ModelKind::SVR) {
            md.emplace_back(key + "C", io::format_double(model_spec.svr.c));
            md.emplace_back(key + "epsilon", io::format_double(model_spec.svr.epsilon));
            md.emplace_back(key + "gamma", model_spec.svr.gamma > 0.0 ? io::format_double(model_spec.svr.gamma)
                                                                      : "auto: 1/(d*var(X_scaled))");
        } else if (model_spec.kind != learn::ModelKind::Linear) {
            md.emplace_back(key + "n_trees", std::to_string(model_spec.forest.n_trees));
            md.emplace_back(key + "max_features", std::to_string(model_spec.resolved_max_features(data.x.cols())));
            md.emplace_back(key + "bootstrap", model_spec.resolved_bootstrap() ? "true" : "false");
        }

        try {
            const auto model = learn::fit_model(x_train, y_train, model_spec, {spec.jobs});
            if (const auto* svr = std::get_if<learn::SvrParams>(&model.params)) {
                md.emplace_back(key + "gamma_used", io::format_double(svr->gamma));
            }
            const auto f_train = model.predict(x_train.values);
            const auto f_test = model.predict(x_test);
            cell.mse_train = learn::mse(y_train, f_train);
            cell.mse_test = learn::mse(y_test, f_test);
            try {
                cell.r2_train = learn::r2(y_train, f_train);
            } catch (const Error&) {
                cell.r2_train = nan();
            }
            try {
                cell.r2_test = learn::r2(y_test, f_test);
            } catch (const Error&) {
                cell.r2_test = nan();
            }
            for (const auto& w : model.warnings) cell.note += (cell.note.empty() ? "" : "; ") + w;

            std::map<DieIndex, std::pair<double, std::size_t>> err;
            for (std::size_t k = 0; k < split.test.size(); ++k) {
                auto& [sum, count] = err[data.meta[split.test[k]].die];
                sum += std::abs(y_test[k] - f_test[k]);
                ++count;
            }
            for (const auto& [die, sc] : err) cell.die_mae[die] = sc.first / static_cast<double>(sc.second);

            const std::size_t cell_index = report.cells.size();
            for (std::size_t k = 0; k < split.train.size(); ++k) {
                const auto& m = data.meta[split.train[k]];
                report.predictions.push_back({cell_index, m.wafer_id, m.die, false, y_train[k], f_train[k]});
            }
            for (std::size_t k = 0; k < split.test.size(); ++k) {
                const auto& m = data.meta[split.test[k]];
                report.predictions.push_back({cell_index, m.wafer_id, m.die, true, y_test[k], f_test[k]});
            }
        } catch (const Error& e) {
            cell.failed = true;
            cell.r2_train = cell.r2_test = cell.mse_train = cell.mse_test = nan();
            cell.note = std::string(e.code()) + ": " + e.what();
            log::warn(cell.model + " failed: " + cell.note);
        }
        report.cells.push_back(std::move(cell));
    }
    return report;
}

void merge_reports(FitReport& a, FitReport b) {
    const std::size_t offset = a.cells.size();
    for (auto& c : b.cells) a.cells.push_back(std::move(c));
    for (auto& p : b.predictions) {
        p.cell += offset;
        a.predictions.push_back(std::move(p));
    }
    for (auto& kv : b.metadata) {
        const bool seen = std::any_of(a.metadata.begin(), a.metadata.end(),
                                      [&](const auto& e) { return e.first == kv.first; });
        if (!seen) {
            a.metadata.push_back(std::move(kv));
        } else {
            const auto it = std::find_if(a.metadata.begin(), a.metadata.end(),
                                         [&](const auto& e) { return e.first == kv.first; });
            if (it->second != kv.second && it->second.find(kv.second) == std::string::npos) {
                it->second += " | " + kv.second;
            }
        }
    }
    for (auto& r : b.clean_reports) a.clean_reports.push_back(std::move(r));
}

std::string report_csv(const FitReport& report) {
    static constexpr std::string_view kHeader[] = {"model",    "step",    "orientation", "target",
                                                   "mode",     "r2_train", "r2_test",    "mse_train",
                                                   "mse_test", "n_train", "n_test",      "note"};
    io::CsvWriter w(kHeader);
    for (const auto& c : report.cells) {
        std::string note = c.note;
        std::replace(note.begin(), note.end(), ',', ';');
        std::replace(note.begin(), note.end(), '\n', ' ');
        w.cell(c.model).cell(to_string(c.step)).cell(to_string(c.orientation)).cell(c.target).cell(c.mode);
        w.cell(fmt(c.r2_train)).cell(fmt(c.r2_test)).cell(fmt(c.mse_train)).cell(fmt(c.mse_test));
        w.cell(c.n_train).cell(c.n_test).cell(note);
        w.end_row();
    }
    return w.text();
}

std::string predictions_csv(const FitReport& report) {
    static constexpr std::string_view kHeader[] = {"cell",     "model",   "step",    "orientation",
                                                   "target",   "mode",    "wafer_id", "die_col",
                                                   "die_row",  "split",   "y_true",  "y_pred"};
    io::CsvWriter w(kHeader);
    for (const auto& p : report.predictions) {
        const auto& c = report.cells.at(p.cell);
        w.cell(p.cell).cell(c.model).cell(to_string(c.step)).cell(to_string(c.orientation)).cell(c.target);
        w.cell(c.mode).cell(p.wafer_id).cell(p.die.col).cell(p.die.row).cell(p.test ? "test" : "train");
        w.cell(p.y_true).cell(p.y_pred);
        w.end_row();
    }
    return w.text();
}

std::string metadata_csv(const FitReport& report) {
    static constexpr std::string_view kHeader[] = {"key", "value"};
    io::CsvWriter w(kHeader);
    for (const auto& [k, v] : report.metadata) {
        std::string value = v;
        std::replace(value.begin(), value.end(), ',', ';');
        w.cell(k).cell(value);
        w.end_row();
    }
    return w.text();
}

std::map<std::size_t, RecomputedMetrics> recompute_metrics(std::string_view text) {
    const auto table = io::parse_csv(text, "predictions");
    const auto c_cell = table.column("cell");
    const auto c_split = table.column("split");
    const auto c_true = table.column("y_true");
    const auto c_pred = table.column("y_pred");
    std::map<std::size_t, std::array<std::vector<double>, 4>> cols;  // train y, train f, test y, test f
    for (const auto& row : table.rows) {
        auto& v = cols[static_cast<std::size_t>(io::parse_int(row[c_cell]))];
        const std::size_t base = row[c_split] == "test" ? 2 : 0;
        v[base].push_back(io::parse_double(row[c_true]));
        v[base + 1].push_back(io::parse_double(row[c_pred]));
    }
    std::map<std::size_t, RecomputedMetrics> out;
    for (const auto& [cell, v] : cols) {
        RecomputedMetrics m;
        auto safe_r2 = [](const std::vector<double>& y, const std::vector<double>& f) {
            try {
                return learn::r2(y, f);
            } catch (const Error&) {
                return nan();
            }
        };
        m.r2_train = safe_r2(v[0], v[1]);
        m.mse_train = learn::mse(v[0], v[1]);
        m.r2_test = safe_r2(v[2], v[3]);
        m.mse_test = learn::mse(v[2], v[3]);
        out[cell] = m;
    }
    return out;
}

}  // namespace waferwise::pipeline
