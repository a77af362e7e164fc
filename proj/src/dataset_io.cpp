#include "waferwise/dataset_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>

#include "waferwise/error.hpp"
#include "waferwise/io.hpp"

namespace waferwise::io {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kOverlayHeader[] = {"wafer_id", "die_col", "die_row", "step",
                                               "site_index", "ov_x_nm", "ov_y_nm"};
constexpr std::string_view kCdsemHeader[] = {"wafer_id", "die_col", "die_row", "target_x_um", "target_y_um",
                                             "family",   "level",   "orientation", "cd2_nm"};
constexpr std::string_view kCapHeader[] = {"wafer_id", "die_col", "die_row", "family",
                                           "level",    "orientation", "instance", "cap_fF"};
constexpr std::string_view kCapFlaggedHeader[] = {"wafer_id", "die_col",     "die_row",  "family", "level",
                                                  "orientation", "instance", "cap_fF",   "flagged_outlier"};
constexpr std::string_view kGridHeader[] = {"die_col", "die_row"};
constexpr std::string_view kManifestHeader[] = {"wafer_id", "recipe", "seed"};

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string overlay_file(DboStep step) { return "overlay_" + lower(to_string(step)) + ".csv"; }

int parse_small_int(std::string_view text) { return static_cast<int>(parse_int(text)); }

std::uint64_t parse_u64(std::string_view text) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error("parse", "not an unsigned integer: '" + std::string(text) + "'");
    }
    return v;
}

template <typename T>
T require(std::optional<T> value, std::string_view what, std::string_view text, const std::string& where) {
    if (!value) throw Error("parse", where + ": invalid " + std::string(what) + " '" + std::string(text) + "'");
    return *value;
}

void check_wafer_id(const std::string& got, const std::string& want, const std::string& where) {
    if (got != want) throw Error("schema_mismatch", where + ": wafer_id '" + got + "' but expected '" + want + "'");
}

}  // namespace

std::string overlay_csv(const WaferDataset& wafer, DboStep step) {
    CsvWriter w(kOverlayHeader);
    for (const auto& rec : wafer.overlay) {
        if (rec.step != step) continue;
        const std::size_t n = std::max(rec.values_x.size(), rec.values_y.size());
        for (std::size_t s = 0; s < n; ++s) {
            w.cell(wafer.wafer_id).cell(rec.die.col).cell(rec.die.row).cell(to_string(step)).cell(s);
            w.cell(s < rec.values_x.size() ? rec.values_x[s] : 0.0);
            w.cell(s < rec.values_y.size() ? rec.values_y[s] : 0.0);
            w.end_row();
        }
    }
    return w.text();
}

std::string cdsem_csv(const WaferDataset& wafer) {
    CsvWriter w(kCdsemHeader);
    for (const auto& r : wafer.cdsem) {
        w.cell(wafer.wafer_id).cell(r.die.col).cell(r.die.row).cell(r.target_x_um).cell(r.target_y_um);
        w.cell(to_string(r.structure.family)).cell(r.structure.level).cell(to_string(r.structure.orientation));
        w.cell(r.cd2_nm);
        w.end_row();
    }
    return w.text();
}

std::string capacitance_csv(const WaferDataset& wafer) {
    const bool flagged = std::any_of(wafer.capacitance.begin(), wafer.capacitance.end(),
                                     [](const CapacitanceRecord& r) { return r.flagged_outlier; });
    CsvWriter w = flagged ? CsvWriter(kCapFlaggedHeader) : CsvWriter(kCapHeader);
    for (const auto& r : wafer.capacitance) {
        w.cell(wafer.wafer_id).cell(r.die.col).cell(r.die.row);
        w.cell(to_string(r.structure.family)).cell(r.structure.level).cell(to_string(r.structure.orientation));
        w.cell(r.structure.instance).cell(r.value_fF);
        if (flagged) w.cell(r.flagged_outlier ? "1" : "0");
        w.end_row();
    }
    return w.text();
}

std::string grid_csv(const WaferDataset& wafer) {
    CsvWriter w(kGridHeader);
    for (const auto& d : wafer.grid) {
        w.cell(d.col).cell(d.row);
        w.end_row();
    }
    return w.text();
}

void write_wafer(const WaferDataset& wafer, const fs::path& dir) {
    write_file_atomic(dir / "grid.csv", grid_csv(wafer));
    for (DboStep step : kAllDboSteps) {
        if (wafer.has_step(step)) write_file_atomic(dir / overlay_file(step), overlay_csv(wafer, step));
    }
    if (!wafer.cdsem.empty()) write_file_atomic(dir / "cdsem.csv", cdsem_csv(wafer));
    if (!wafer.capacitance.empty()) write_file_atomic(dir / "capacitance.csv", capacitance_csv(wafer));
}

WaferDataset read_wafer(const fs::path& dir, const std::string& wafer_id, Recipe recipe, std::uint64_t seed) {
    WaferDataset w;
    w.wafer_id = wafer_id;
    w.recipe = recipe;
    w.seed = seed;

    {
        const auto path = dir / "grid.csv";
        const auto t = read_csv(path);
        require_header(t, kGridHeader, path.string());
        for (const auto& row : t.rows) w.grid.push_back({parse_small_int(row[0]), parse_small_int(row[1])});
        std::sort(w.grid.begin(), w.grid.end());
        w.grid.erase(std::unique(w.grid.begin(), w.grid.end()), w.grid.end());
    }

    for (DboStep step : kAllDboSteps) {
        const auto path = dir / overlay_file(step);
        if (!fs::exists(path)) continue;
        const auto t = read_csv(path);
        const auto where = path.string();
        require_header(t, kOverlayHeader, where);
        std::map<DieIndex, std::size_t> slot;
        std::vector<std::map<std::size_t, std::pair<double, double>>> sites;
        std::vector<DieIndex> order;
        for (const auto& row : t.rows) {
            check_wafer_id(row[0], wafer_id, where);
            const DieIndex die{parse_small_int(row[1]), parse_small_int(row[2])};
            const auto row_step = require(parse_dbo_step(row[3]), "step", row[3], where);
            if (row_step != step) throw Error("schema_mismatch", where + ": row step " + row[3] + " in wrong file");
            const auto site = static_cast<std::size_t>(parse_int(row[4]));
            auto [it, inserted] = slot.try_emplace(die, sites.size());
            if (inserted) {
                sites.emplace_back();
                order.push_back(die);
            }
            if (!sites[it->second].try_emplace(site, parse_double(row[5]), parse_double(row[6])).second) {
                throw Error("schema_mismatch", where + ": duplicate site " + row[4] + " for die (" + row[1] + "," +
                                                   row[2] + ")");
            }
        }
        for (std::size_t i = 0; i < order.size(); ++i) {
            OverlayRecord rec;
            rec.die = order[i];
            rec.step = step;
            std::size_t expect = 0;
            for (const auto& [site, xy] : sites[i]) {
                if (site != expect++) {
                    throw Error("arity_mismatch", where + ": die (" + std::to_string(rec.die.col) + "," +
                                                      std::to_string(rec.die.row) + ") has non-contiguous sites");
                }
                rec.values_x.push_back(xy.first);
                rec.values_y.push_back(xy.second);
            }
            w.overlay.push_back(std::move(rec));
        }
    }

    if (const auto path = dir / "cdsem.csv"; fs::exists(path)) {
        const auto t = read_csv(path);
        const auto where = path.string();
        require_header(t, kCdsemHeader, where);
        for (const auto& row : t.rows) {
            check_wafer_id(row[0], wafer_id, where);
            CdsemRecord r;
            r.die = {parse_small_int(row[1]), parse_small_int(row[2])};
            r.target_x_um = parse_double(row[3]);
            r.target_y_um = parse_double(row[4]);
            r.structure.family = require(parse_family(row[5]), "family", row[5], where);
            r.structure.level = parse_small_int(row[6]);
            r.structure.orientation = require(parse_orientation(row[7]), "orientation", row[7], where);
            r.cd2_nm = parse_double(row[8]);
            w.cdsem.push_back(r);
        }
    }

    if (const auto path = dir / "capacitance.csv"; fs::exists(path)) {
        const auto t = read_csv(path);
        const auto where = path.string();
        const bool flagged = t.header.size() == std::size(kCapFlaggedHeader);
        if (flagged) {
            require_header(t, kCapFlaggedHeader, where);
        } else {
            require_header(t, kCapHeader, where);
        }
        for (const auto& row : t.rows) {
            check_wafer_id(row[0], wafer_id, where);
            CapacitanceRecord r;
            r.die = {parse_small_int(row[1]), parse_small_int(row[2])};
            r.structure.family = require(parse_family(row[3]), "family", row[3], where);
            r.structure.level = parse_small_int(row[4]);
            r.structure.orientation = require(parse_orientation(row[5]), "orientation", row[5], where);
            r.structure.instance = parse_small_int(row[6]);
            r.value_fF = parse_double(row[7]);
            if (flagged) {
                if (row[8] != "0" && row[8] != "1") throw Error("parse", where + ": flagged_outlier must be 0 or 1");
                r.flagged_outlier = row[8] == "1";
            }
            w.capacitance.push_back(r);
        }
    }
    return w;
}

void write_bundle(const std::vector<WaferDataset>& wafers, const fs::path& root) {
    CsvWriter m(kManifestHeader);
    for (const auto& w : wafers) {
        if (w.wafer_id.empty() || w.wafer_id.find_first_of(",/\\\n") != std::string::npos || w.wafer_id == "." ||
            w.wafer_id == "..") {
            throw Error("invalid_input", "wafer id '" + w.wafer_id + "' cannot name a directory");
        }
        write_wafer(w, root / w.wafer_id);
        m.cell(w.wafer_id).cell(to_string(w.recipe)).cell(std::to_string(w.seed));
        m.end_row();
    }
    write_file_atomic(root / "manifest.csv", m.text());
}

std::vector<WaferDataset> read_bundle(const fs::path& root) {
    const auto path = root / "manifest.csv";
    if (!fs::exists(path)) throw Error("io", "no manifest.csv in " + root.string());
    const auto t = read_csv(path);
    require_header(t, kManifestHeader, path.string());
    std::vector<WaferDataset> out;
    for (const auto& row : t.rows) {
        const auto recipe = require(parse_recipe(row[1]), "recipe", row[1], path.string());
        out.push_back(read_wafer(root / row[0], row[0], recipe, parse_u64(row[2])));
    }
    return out;
}

void write_truth(const fabsim::SyntheticWafer& wafer, const fs::path& dir) {
    static constexpr std::string_view kTruthHeader[] = {"die_col", "die_row", "true_dx_nm", "true_dy_nm",
                                                        "programmed_dx_nm", "programmed_dy_nm"};
    CsvWriter t(kTruthHeader);
    const auto& tr = wafer.truth;
    for (std::size_t i = 0; i < tr.dies.size(); ++i) {
        t.cell(tr.dies[i].col).cell(tr.dies[i].row).cell(tr.die_overlay[i].dx).cell(tr.die_overlay[i].dy);
        t.cell(tr.programmed_offset[i].dx).cell(tr.programmed_offset[i].dy);
        t.end_row();
    }
    write_file_atomic(dir / "truth_overlay.csv", t.text());

    static constexpr std::string_view kFailHeader[] = {"record_index"};
    CsvWriter f(kFailHeader);
    for (std::size_t i = 0; i < tr.injected_failure.size(); ++i) {
        if (tr.injected_failure[i]) {
            f.cell(i);
            f.end_row();
        }
    }
    write_file_atomic(dir / "truth_failures.csv", f.text());
}

std::vector<std::size_t> read_injected_failures(const fs::path& dir) {
    const auto path = dir / "truth_failures.csv";
    const auto t = read_csv(path);
    static constexpr std::string_view kFailHeader[] = {"record_index"};
    require_header(t, kFailHeader, path.string());
    std::vector<std::size_t> out;
    for (const auto& row : t.rows) out.push_back(static_cast<std::size_t>(parse_int(row[0])));
    return out;
}

}  // namespace waferwise::io
