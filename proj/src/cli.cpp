#include "waferwise/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>

#include "waferwise/clean.hpp"
#include "waferwise/config.hpp"
#include "waferwise/dataset_io.hpp"
#include "waferwise/error.hpp"
#include "waferwise/fabsim.hpp"
#include "waferwise/io.hpp"
#include "waferwise/learn.hpp"
#include "waferwise/pipeline.hpp"
#include "waferwise/render.hpp"

namespace waferwise::cli {

namespace fs = std::filesystem;

namespace {

struct Context {
    std::string verb;
    config::RunConfig cfg;
    fs::path out_dir;
    std::ostream& out;
};

std::string fixed(double v, int digits = 3) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string general(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

void prepare_out(const Context& ctx) {
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec || !fs::is_directory(ctx.out_dir)) {
        throw Error("io", "cannot create output directory " + ctx.out_dir.string());
    }
}

void write_artifact(const Context& ctx, const std::string& name, std::string_view text) {
    io::write_file_atomic(ctx.out_dir / name, text);
}

void echo_config(const Context& ctx) {
    write_artifact(ctx, "config.ini",
                   ctx.cfg.resolved_text("waferwise " + std::string(kVersion) + " " + ctx.verb));
}

std::vector<DboStep> steps_of(const config::RunConfig& cfg) {
    const auto& text = cfg.get("run.dbo_step");
    if (text == "all") return {kAllDboSteps.begin(), kAllDboSteps.end()};
    const auto step = parse_dbo_step(text);
    if (!step) throw Error("invalid_config", "bad value '" + text + "' for config key 'run.dbo_step'");
    return {*step};
}

std::vector<Orientation> orientations_of(const config::RunConfig& cfg) {
    const auto& text = cfg.get("experiment.orientation");
    if (text == "both") return {kAllOrientations.begin(), kAllOrientations.end()};
    const auto o = parse_orientation(text);
    if (!o) throw Error("invalid_config", "bad value '" + text + "' for config key 'experiment.orientation'");
    return {*o};
}

bool capacitance_target(const config::RunConfig& cfg) {
    const auto& t = cfg.get("experiment.target");
    if (t == "cd2") return false;
    if (t == "capacitance") return true;
    throw Error("invalid_config", "bad value '" + t + "' for config key 'experiment.target'");
}

std::vector<std::pair<Family, int>> structures_of(const config::RunConfig& cfg) {
    std::vector<std::pair<Family, int>> out;
    for (const auto& s : cfg.get_list("experiment.structures")) {
        const auto parsed = parse_structure_type(s);
        if (!parsed) throw Error("invalid_config", "bad value '" + s + "' for config key 'experiment.structures'");
        out.push_back(*parsed);
    }
    if (out.empty()) throw Error("invalid_config", "config key 'experiment.structures' is empty");
    return out;
}

clean::CleanOptions clean_options_of(const config::RunConfig& cfg) {
    clean::CleanOptions o;
    const auto& eps = cfg.get("clean.eps");
    if (eps != "auto") {
        double v = 0.0;
        try {
            v = io::parse_double(eps);
        } catch (const Error&) {
            throw Error("invalid_config", "bad value '" + eps + "' for config key 'clean.eps'");
        }
        if (!(v > 0.0)) throw Error("invalid_config", "config key 'clean.eps' must be > 0");
        o.eps = v;
    }
    o.min_samples = static_cast<int>(cfg.get_int("clean.min_samples"));
    return o;
}

learn::ModelSpec model_spec(const config::RunConfig& cfg, const std::string& name) {
    const auto kind = learn::parse_model_kind(name);
    if (!kind) throw Error("invalid_config", "unknown model '" + name + "'");
    const auto seed = static_cast<std::uint64_t>(cfg.get_int("run.seed"));
    learn::ModelSpec s;
    switch (*kind) {
        case learn::ModelKind::Linear: s = learn::ModelSpec::linear(); break;
        case learn::ModelKind::SVR: s = learn::ModelSpec::svr_default(); break;
        case learn::ModelKind::RandomForest: s = learn::ModelSpec::random_forest(seed); break;
        case learn::ModelKind::ExtraTrees: s = learn::ModelSpec::extra_trees(seed); break;
    }
    s.forest.n_trees = static_cast<int>(cfg.get_int("model.n_trees"));
    s.svr.c = cfg.get_double("model.svr_c");
    s.svr.epsilon = cfg.get_double("model.svr_epsilon");
    s.svr.gamma = cfg.get_double("model.svr_gamma");
    return s;
}

/// Experiment for one cell group, with split and wafers from the config.
pipeline::ExperimentSpec experiment_spec(const config::RunConfig& cfg, bool cap, DboStep step, Orientation o,
                                         Family family, int level) {
    const auto seed = static_cast<std::uint64_t>(cfg.get_int("run.seed"));
    auto spec = cap ? pipeline::ExperimentSpec::capacitance_default(step, o, family, level, seed)
                    : pipeline::ExperimentSpec::cd2_default(step, o, seed);
    spec.models.clear();
    for (const auto& m : cfg.get_list("experiment.models")) spec.models.push_back(model_spec(cfg, m));
    const auto& split = cfg.get("experiment.split");
    const auto pooled = pipeline::Pooled8020{seed, cfg.get_double("experiment.test_fraction")};
    const auto by_wafer = pipeline::ByWafer{cfg.get_list("experiment.train_wafers"), cfg.get("experiment.test_wafer")};
    if (split == "bywafer") {
        spec.split = by_wafer;
    } else if (split == "pooled") {
        spec.split = pooled;
    } else if (split == "auto") {
        if (cap) {
            spec.split = pooled;
        } else {
            spec.split = by_wafer;
        }
    } else {
        throw Error("invalid_config", "bad value '" + split + "' for config key 'experiment.split'");
    }
    const auto wafers = cfg.get_list("experiment.wafers");
    if (!wafers.empty()) spec.wafer_ids = wafers;
    spec.clean = cfg.get_bool("clean.enabled");
    spec.clean_options = clean_options_of(cfg);
    spec.jobs = static_cast<int>(cfg.get_int("run.jobs"));
    return spec;
}

std::vector<WaferDataset> select_wafers(const std::vector<WaferDataset>& all, const std::vector<std::string>& ids) {
    if (ids.empty()) return all;
    std::vector<WaferDataset> out;
    for (const auto& id : ids) {
        const auto it = std::find_if(all.begin(), all.end(), [&](const WaferDataset& w) { return w.wafer_id == id; });
        if (it == all.end()) throw Error("invalid_input", "wafer " + id + " not in the data bundle");
        out.push_back(*it);
    }
    return out;
}

// ---------------------------------------------------------------------------

void cmd_synth(Context& ctx) {
    const auto scenario = config::scenario_from(ctx.cfg);
    const auto seed = static_cast<std::uint64_t>(ctx.cfg.get_int("run.seed"));
    const auto wafers = fabsim::generate_scenario(scenario, seed);
    prepare_out(ctx);
    std::vector<WaferDataset> data;
    for (const auto& w : wafers) data.push_back(w.data);
    io::write_bundle(data, ctx.out_dir);
    if (ctx.cfg.get_bool("synth.truth")) {
        for (const auto& w : wafers) io::write_truth(w, ctx.out_dir / w.data.wafer_id);
    }
    echo_config(ctx);
    for (const auto& w : wafers) {
        const auto failures = std::count(w.truth.injected_failure.begin(), w.truth.injected_failure.end(), true);
        ctx.out << "synth: " << w.data.wafer_id << " " << to_string(w.data.recipe) << " dies=" << w.truth.dies.size()
                << " overlay=" << w.data.overlay.size() << " cdsem=" << w.data.cdsem.size()
                << " capacitance=" << w.data.capacitance.size() << " injected_failures=" << failures << "\n";
    }
}

void cmd_clean(Context& ctx) {
    const auto wafers = io::read_bundle(ctx.cfg.get("data.dir"));
    const auto options = clean_options_of(ctx.cfg);
    std::vector<WaferDataset> cleaned;
    std::vector<clean::CleanReport> reports;
    for (const auto& w : wafers) {
        std::vector<clean::CleanReport> r;
        cleaned.push_back(clean::clean_wafer(w, options, &r));
        std::size_t outliers = 0;
        std::size_t replaced = 0;
        std::size_t weak = 0;
        for (const auto& rep : r) {
            outliers += rep.n_outliers;
            replaced += rep.replaced.size();
            weak += rep.weak_knee ? 1 : 0;
        }
        ctx.out << "clean: " << w.wafer_id << " types=" << r.size() << " outliers=" << outliers
                << " replaced=" << replaced << " weak_knee=" << weak << "\n";
        for (auto& rep : r) reports.push_back(std::move(rep));
    }
    prepare_out(ctx);
    io::write_bundle(cleaned, ctx.out_dir);
    write_artifact(ctx, "replacements.csv", clean::replacements_csv(reports));
    write_artifact(ctx, "clean_summary.csv", clean::clean_summary_csv(reports));
    write_artifact(ctx, "knee_curve.csv", clean::knee_curve_csv(reports));
    echo_config(ctx);
}

void cmd_train(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto steps = steps_of(cfg);
    const auto orientations = orientations_of(cfg);
    if (steps.size() != 1) throw Error("invalid_config", "train needs one DBO step: set run.dbo_step or --dbo-step");
    if (orientations.size() != 1) {
        throw Error("invalid_config", "train needs one orientation: set experiment.orientation to h or v");
    }
    const bool cap = capacitance_target(cfg);
    const auto structures = cap ? structures_of(cfg) : std::vector<std::pair<Family, int>>{{Family::AB, 1}};
    if (structures.size() != 1) throw Error("invalid_config", "train needs one structure in experiment.structures");
    const auto [family, level] = structures.front();

    auto spec = experiment_spec(cfg, cap, steps.front(), orientations.front(), family, level);
    const auto model_kind = cfg.get("model.kind");
    const auto mspec = model_spec(cfg, model_kind);

    auto wafers = select_wafers(io::read_bundle(cfg.get("data.dir")), spec.wafer_ids);
    if (cap && spec.clean) {
        const clean::StructureType type{family, level, spec.orientation};
        for (auto& w : wafers) w.capacitance = clean::clean_capacitance(w, type, spec.clean_options).records;
    }
    const auto data = cap ? pipeline::assemble_cap_features(wafers, spec.dbo_step, spec.orientation, family, level)
                          : pipeline::assemble_cd2_features(wafers, spec.dbo_step, spec.orientation);
    const auto split = pipeline::split_rows(data, wafers, spec.split);
    if (split.train.size() < 2) throw Error("invalid_input", "split leaves too few training rows");

    FeatureMatrix x_train{data.x.values.select_rows(split.train), data.x.col_names};
    std::vector<double> y_train;
    for (auto i : split.train) y_train.push_back(data.y[i]);
    const auto model = learn::fit_model(x_train, y_train, mspec, {spec.jobs});

    std::vector<double> y_test;
    for (auto i : split.test) y_test.push_back(data.y[i]);
    const auto f_train = model.predict(x_train.values);
    const auto f_test = model.predict(data.x.values.select_rows(split.test));
    const auto safe_r2 = [](const std::vector<double>& y, const std::vector<double>& f) {
        if (y.size() < 2) return std::nan("");
        try {
            return learn::r2(y, f);
        } catch (const Error&) {
            return std::nan("");
        }
    };
    const double r2_train = safe_r2(y_train, f_train);
    const double r2_test = safe_r2(y_test, f_test);

    prepare_out(ctx);
    learn::save_model(model, ctx.out_dir / "model.json");

    std::vector<std::string> header{"wafer_id", "split"};
    for (const auto& n : data.x.col_names) header.push_back(n);
    header.emplace_back("y");
    io::CsvWriter features(header);
    std::vector<bool> is_test(data.y.size(), false);
    for (auto i : split.test) is_test[i] = true;
    for (std::size_t i = 0; i < data.y.size(); ++i) {
        features.cell(data.meta[i].wafer_id).cell(is_test[i] ? "test" : "train");
        for (double v : data.x.values.row(i)) features.cell(v);
        features.cell(data.y[i]);
        features.end_row();
    }
    write_artifact(ctx, "features.csv", features.text());

    const std::string target = cap ? StructureId{family, level, spec.orientation, 0}.type_label() : "CD2_AB1";
    const std::string mode = cap ? (spec.clean ? "clean" : "raw") : "-";
    io::CsvWriter metrics(std::vector<std::string>{"model", "step", "orientation", "target", "mode", "n_train", "n_test",
                                                   "r2_train", "r2_test", "mse_train", "mse_test"});
    metrics.cell(learn::to_string(mspec.kind)).cell(to_string(spec.dbo_step)).cell(to_string(spec.orientation));
    metrics.cell(target).cell(mode).cell(split.train.size()).cell(split.test.size());
    metrics.cell(r2_train).cell(r2_test).cell(learn::mse(y_train, f_train));
    metrics.cell(y_test.empty() ? std::nan("") : learn::mse(y_test, f_test));
    metrics.end_row();
    write_artifact(ctx, "train_metrics.csv", metrics.text());
    echo_config(ctx);

    ctx.out << "train: " << learn::to_string(mspec.kind) << " " << to_string(spec.dbo_step) << " "
            << to_string(spec.orientation) << " " << target << " " << mode << " n_train=" << split.train.size()
            << " n_test=" << split.test.size() << " r2_train=" << fixed(r2_train) << " r2_test=" << fixed(r2_test)
            << "\n";
}

void cmd_predict(Context& ctx) {
    const auto model = learn::load_model(ctx.cfg.get("model.file"));
    const fs::path features_path = ctx.cfg.get("predict.features");
    const auto table = io::read_csv(features_path);
    static const std::set<std::string> passthrough{"wafer_id", "split", "y"};
    std::vector<std::size_t> feature_cols;
    std::vector<std::string> names;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (passthrough.count(table.header[c]) == 0) {
            feature_cols.push_back(c);
            names.push_back(table.header[c]);
        }
    }
    if (feature_cols.size() != model.n_features()) {
        throw Error("arity_mismatch", "model expects " + std::to_string(model.n_features()) + " features, " +
                                          features_path.string() + " has " + std::to_string(feature_cols.size()));
    }
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (k < model.col_names.size() && names[k] != model.col_names[k]) {
            throw Error("schema_mismatch", features_path.string() + ": feature column " + std::to_string(k) + " is '" +
                                               names[k] + "', model expects '" + model.col_names[k] + "'");
        }
    }
    const auto find = [&](const std::string& name) -> std::optional<std::size_t> {
        const auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - table.header.begin());
    };
    const auto wafer_col = find("wafer_id");
    const auto split_col = find("split");
    const auto y_col = find("y");

    Matrix x(table.rows.size(), feature_cols.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != table.header.size()) {
            throw Error("arity_mismatch", features_path.string() + ": row " + std::to_string(r + 1) + " has " +
                                              std::to_string(row.size()) + " fields, header has " +
                                              std::to_string(table.header.size()));
        }
        for (std::size_t k = 0; k < feature_cols.size(); ++k) x(r, k) = io::parse_double(row[feature_cols[k]]);
    }
    const auto pred = model.predict(x);

    std::vector<std::string> header{"row"};
    if (wafer_col) header.emplace_back("wafer_id");
    if (split_col) header.emplace_back("split");
    if (y_col) header.emplace_back("y_true");
    header.emplace_back("y_pred");
    io::CsvWriter w(header);
    std::vector<double> y_all;
    std::vector<double> f_all;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        w.cell(r);
        if (wafer_col) w.cell(table.rows[r][*wafer_col]);
        if (split_col) w.cell(table.rows[r][*split_col]);
        if (y_col) {
            const double y = io::parse_double(table.rows[r][*y_col]);
            w.cell(y);
            y_all.push_back(y);
            f_all.push_back(pred[r]);
        }
        w.cell(pred[r]);
        w.end_row();
    }
    prepare_out(ctx);
    write_artifact(ctx, "predictions.csv", w.text());
    echo_config(ctx);
    ctx.out << "predict: " << learn::to_string(model.spec.kind) << " rows=" << pred.size();
    if (y_all.size() >= 2) {
        ctx.out << " mse=" << general(learn::mse(y_all, f_all));
        try {
            ctx.out << " r2=" << fixed(learn::r2(y_all, f_all));
        } catch (const Error&) {
        }
    }
    ctx.out << "\n";
}

std::string die_errors_csv(const pipeline::FitReport& report) {
    io::CsvWriter w(std::vector<std::string>{"cell", "model", "step", "orientation", "target", "mode", "die_col",
                                             "die_row", "mae"});
    for (std::size_t i = 0; i < report.cells.size(); ++i) {
        const auto& c = report.cells[i];
        for (const auto& [die, mae] : c.die_mae) {
            w.cell(i).cell(c.model).cell(to_string(c.step)).cell(to_string(c.orientation)).cell(c.target).cell(c.mode);
            w.cell(static_cast<long long>(die.col)).cell(static_cast<long long>(die.row)).cell(mae);
            w.end_row();
        }
    }
    return w.text();
}

void cmd_eval(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto wafers = io::read_bundle(cfg.get("data.dir"));
    const bool cap = capacitance_target(cfg);
    const auto structures = cap ? structures_of(cfg) : std::vector<std::pair<Family, int>>{{Family::AB, 1}};
    pipeline::FitReport all;
    for (const auto& [family, level] : structures) {
        for (const auto step : steps_of(cfg)) {
            for (const auto o : orientations_of(cfg)) {
                const auto spec = experiment_spec(cfg, cap, step, o, family, level);
                pipeline::merge_reports(all, pipeline::run_experiment(spec, wafers));
            }
        }
    }
    // Cleaning does not depend on the DBO step; keep one report per wafer and type.
    std::vector<clean::CleanReport> clean_reports;
    std::set<std::pair<std::string, clean::StructureType>> seen;
    for (const auto& r : all.clean_reports) {
        if (seen.insert({r.wafer_id, r.type}).second) clean_reports.push_back(r);
    }

    prepare_out(ctx);
    write_artifact(ctx, "report.csv", pipeline::report_csv(all));
    write_artifact(ctx, "predictions.csv", pipeline::predictions_csv(all));
    write_artifact(ctx, "metadata.csv", pipeline::metadata_csv(all));
    write_artifact(ctx, "die_errors.csv", die_errors_csv(all));
    if (!clean_reports.empty()) {
        write_artifact(ctx, "clean_summary.csv", clean::clean_summary_csv(clean_reports));
        write_artifact(ctx, "replacements.csv", clean::replacements_csv(clean_reports));
    }
    echo_config(ctx);
    for (const auto& c : all.cells) {
        ctx.out << "eval: " << c.model << " " << to_string(c.step) << " " << to_string(c.orientation) << " " << c.target
                << " " << c.mode << " r2_train=" << fixed(c.r2_train) << " r2_test=" << fixed(c.r2_test)
                << " mse_test=" << general(c.mse_test) << " n_train=" << c.n_train << " n_test=" << c.n_test;
        if (c.failed) ctx.out << " FAILED " << c.note;
        ctx.out << "\n";
    }
}

void cmd_render(Context& ctx) {
    const fs::path path = ctx.cfg.get("render.predictions");
    const auto table = io::read_csv(path);
    const auto c_cell = table.column("cell");
    const auto c_model = table.column("model");
    const auto c_step = table.column("step");
    const auto c_orient = table.column("orientation");
    const auto c_target = table.column("target");
    const auto c_mode = table.column("mode");
    const auto c_col = table.column("die_col");
    const auto c_row = table.column("die_row");
    const auto c_split = table.column("split");
    const auto c_true = table.column("y_true");
    const auto c_pred = table.column("y_pred");

    const auto& which = ctx.cfg.get("render.cell");
    std::optional<long long> only;
    if (which != "all") {
        try {
            only = io::parse_int(which);
        } catch (const Error&) {
            throw Error("invalid_config", "bad value '" + which + "' for config key 'render.cell'");
        }
    }

    struct Acc {
        std::string title;
        std::map<DieIndex, std::pair<double, std::size_t>> sums;
    };
    std::map<long long, Acc> cells;
    for (const auto& row : table.rows) {
        const long long cell = io::parse_int(row[c_cell]);
        if (only && cell != *only) continue;
        if (row[c_split] != "test") continue;
        auto& acc = cells[cell];
        if (acc.title.empty()) {
            acc.title = row[c_model] + " " + row[c_step] + " " + row[c_orient] + " " + row[c_target] +
                        (row[c_mode] == "-" ? "" : " " + row[c_mode]) + ": mean |error| per die";
        }
        const DieIndex die{static_cast<int>(io::parse_int(row[c_col])), static_cast<int>(io::parse_int(row[c_row]))};
        auto& [sum, n] = acc.sums[die];
        sum += std::abs(io::parse_double(row[c_true]) - io::parse_double(row[c_pred]));
        ++n;
    }
    if (cells.empty()) {
        throw Error("empty_map", "no test predictions" + (only ? " for cell " + which : std::string()) + " in " +
                                     path.string());
    }
    prepare_out(ctx);
    for (const auto& [cell, acc] : cells) {
        std::map<DieIndex, double> values;
        for (const auto& [die, sn] : acc.sums) values[die] = sn.first / static_cast<double>(sn.second);
        render::MapOptions options;
        options.title = acc.title;
        const auto map = render::render_wafer_map(values, options);
        const std::string stem = "map_" + std::to_string(cell);
        write_artifact(ctx, stem + ".svg", map.svg);
        write_artifact(ctx, stem + ".csv", map.csv);
        ctx.out << "render: cell " << cell << " dies=" << values.size() << " range=[" << general(map.legend_min) << ","
                << general(map.legend_max) << "] " << stem << ".svg\n";
    }
    echo_config(ctx);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"waferwise: overlay-driven virtual metrology for LELE fork-fork structures", "waferwise"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    std::string config_path;
    std::string out_dir = "out";
    std::optional<long long> seed;
    std::optional<long long> jobs;
    std::optional<long long> grid;
    std::optional<std::string> eps;
    std::optional<std::string> step;
    std::vector<std::string> sets;
    bool no_clean = false;

    app.add_option("--config", config_path, "key=value configuration file with [sections]");
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", seed, "root seed (run.seed)");
    app.add_option("--jobs", jobs, "worker threads (run.jobs)");
    app.add_option("--dbo-step", step, "adi, aei, cmp or all (run.dbo_step)");
    app.add_flag("--no-clean", no_clean, "disable capacitance cleaning (clean.enabled=false)");
    app.add_option("--eps-override", eps, "fixed DBSCAN radius instead of the knee (clean.eps)");
    app.add_option("--grid", grid, "dies per wafer (synth.grid)");
    app.add_option("--set", sets, "override any key: section.name=value");
    app.fallthrough();

    const std::vector<std::pair<std::string, std::string>> verbs = {
        {"synth", "generate a synthetic wafer bundle"},
        {"clean", "clean capacitance outliers of a bundle"},
        {"train", "fit one model and save it"},
        {"predict", "predict from a feature table with a saved model"},
        {"eval", "run the model comparison and write the report"},
        {"render", "render per-die error wafer maps from eval predictions"},
    };
    for (const auto& [name, help] : verbs) app.add_subcommand(name, help);

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << "waferwise " << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        Context ctx{app.get_subcommands().front()->get_name(), {}, out_dir, out};
        if (!config_path.empty()) ctx.cfg.load_file(config_path);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw Error("invalid_config", "--set expects section.name=value, got '" + s + "'");
            ctx.cfg.set(s.substr(0, eq), s.substr(eq + 1));
        }
        if (seed) ctx.cfg.set("run.seed", std::to_string(*seed));
        if (jobs) ctx.cfg.set("run.jobs", std::to_string(*jobs));
        if (step) ctx.cfg.set("run.dbo_step", *step);
        if (no_clean) ctx.cfg.set("clean.enabled", "false");
        if (eps) ctx.cfg.set("clean.eps", *eps);
        if (grid) ctx.cfg.set("synth.grid", std::to_string(*grid));
        if (ctx.cfg.get_int("run.jobs") < 1) throw Error("invalid_config", "config key 'run.jobs' must be >= 1");
        (void)steps_of(ctx.cfg);

        if (ctx.verb == "synth") cmd_synth(ctx);
        else if (ctx.verb == "clean") cmd_clean(ctx);
        else if (ctx.verb == "train") cmd_train(ctx);
        else if (ctx.verb == "predict") cmd_predict(ctx);
        else if (ctx.verb == "eval") cmd_eval(ctx);
        else cmd_render(ctx);
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.code() << ": " << e.what() << "\n";
    } catch (const fs::filesystem_error& e) {
        err << "error: io: " << e.what() << "\n";
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << "\n";
    }
    return 1;
}

}  // namespace waferwise::cli
