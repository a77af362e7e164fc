#include "waferwise/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

namespace waferwise {

namespace {

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string die_label(DieIndex die) {
    return "(" + std::to_string(die.col) + "," + std::to_string(die.row) + ")";
}

}  // namespace

std::string_view to_string(DboStep step) {
    switch (step) {
        case DboStep::ADI: return "ADI";
        case DboStep::AEI: return "AEI";
        case DboStep::CMP: return "CMP";
    }
    return "?";
}

std::optional<DboStep> parse_dbo_step(std::string_view text) {
    const auto t = lower(text);
    if (t == "adi") return DboStep::ADI;
    if (t == "aei") return DboStep::AEI;
    if (t == "cmp") return DboStep::CMP;
    return std::nullopt;
}

std::string_view to_string(Family family) { return family == Family::AB ? "AB" : "BA"; }

std::string_view to_string(Orientation orientation) {
    return orientation == Orientation::Horizontal ? "H" : "V";
}

std::optional<Family> parse_family(std::string_view text) {
    const auto t = lower(text);
    if (t == "ab") return Family::AB;
    if (t == "ba") return Family::BA;
    return std::nullopt;
}

std::optional<Orientation> parse_orientation(std::string_view text) {
    const auto t = lower(text);
    if (t == "h" || t == "horizontal") return Orientation::Horizontal;
    if (t == "v" || t == "vertical") return Orientation::Vertical;
    return std::nullopt;
}

std::string StructureId::type_label() const {
    return std::string(to_string(family)) + std::to_string(level);
}

std::optional<std::pair<Family, int>> parse_structure_type(std::string_view text) {
    if (text.size() != 3) return std::nullopt;
    auto family = parse_family(text.substr(0, 2));
    const char digit = text[2];
    if (!family || digit < '0' + kMinLevel || digit > '0' + kMaxLevel) return std::nullopt;
    return std::pair{*family, digit - '0'};
}

DesignedGap designed_gap(Family family, int level) {
    const int steps = family == Family::AB ? (kMaxLevel - level) : (level - kMinLevel);
    return {24.0 + 2.0 * steps};
}

DesignedGap designed_gap(const StructureId& structure) {
    return designed_gap(structure.family, structure.level);
}

std::string_view to_string(Recipe recipe) {
    return recipe == Recipe::Programmed ? "Programmed" : "NonProgrammed";
}

std::optional<Recipe> parse_recipe(std::string_view text) {
    const auto t = lower(text);
    if (t == "programmed") return Recipe::Programmed;
    if (t == "nonprogrammed" || t == "non-programmed") return Recipe::NonProgrammed;
    return std::nullopt;
}

const OverlayRecord* WaferDataset::find_overlay(DieIndex die, DboStep step) const {
    for (const auto& rec : overlay) {
        if (rec.step == step && rec.die == die) return &rec;
    }
    return nullptr;
}

bool WaferDataset::has_step(DboStep step) const {
    return std::any_of(overlay.begin(), overlay.end(),
                       [step](const OverlayRecord& r) { return r.step == step; });
}

bool WaferDataset::contains_die(DieIndex die) const {
    return std::binary_search(grid.begin(), grid.end(), die);
}

bool operator==(const OverlayRecord& a, const OverlayRecord& b) {
    return a.die == b.die && a.step == b.step && a.values_x == b.values_x &&
           a.values_y == b.values_y;
}

bool operator==(const CdsemRecord& a, const CdsemRecord& b) {
    return a.die == b.die && a.target_x_um == b.target_x_um && a.target_y_um == b.target_y_um &&
           a.structure == b.structure && a.cd2_nm == b.cd2_nm;
}

bool operator==(const CapacitanceRecord& a, const CapacitanceRecord& b) {
    return a.die == b.die && a.structure == b.structure && a.value_fF == b.value_fF &&
           a.flagged_outlier == b.flagged_outlier;
}

bool operator==(const WaferDataset& a, const WaferDataset& b) {
    return a.wafer_id == b.wafer_id && a.recipe == b.recipe && a.grid == b.grid &&
           a.overlay == b.overlay && a.cdsem == b.cdsem && a.capacitance == b.capacitance &&
           a.seed == b.seed;
}

std::vector<Violation> validate(const WaferDataset& dataset) {
    std::vector<Violation> out;
    auto add = [&out](std::string record, std::string field, std::string rule) {
        out.push_back({std::move(record), std::move(field), std::move(rule)});
    };

    if (dataset.wafer_id.empty()) add("wafer", "wafer_id", "non-empty");
    if (dataset.grid.empty()) add("wafer", "grid", "at least one die");
    if (!std::is_sorted(dataset.grid.begin(), dataset.grid.end()) ||
        std::adjacent_find(dataset.grid.begin(), dataset.grid.end()) != dataset.grid.end()) {
        add("wafer", "grid", "sorted unique (col,row)");
    }

    auto check_die = [&](const std::string& record, DieIndex die) {
        if (!dataset.contains_die(die)) add(record, "die", "die " + die_label(die) + " in wafer grid");
    };
    auto check_structure = [&](const std::string& record, const StructureId& s) {
        if (s.level < kMinLevel || s.level > kMaxLevel) add(record, "structure.level", "level in [1,6]");
        if (s.instance < 0 || s.instance >= kInstancesPerStructure) {
            add(record, "structure.instance", "instance in [0,4]");
        }
    };

    std::set<std::pair<DieIndex, DboStep>> seen_overlay;
    for (std::size_t i = 0; i < dataset.overlay.size(); ++i) {
        const auto& rec = dataset.overlay[i];
        const std::string name = "overlay[" + std::to_string(i) + "]";
        check_die(name, rec.die);
        if (!seen_overlay.insert({rec.die, rec.step}).second) {
            add(name, "die/step", "one OverlayRecord per (die, step)");
        }
        for (const auto* values : {&rec.values_x, &rec.values_y}) {
            const char* field = values == &rec.values_x ? "values_x" : "values_y";
            if (values->size() != kOverlaySites) {
                add(name, field, "OverlayRecord arity " + std::to_string(kOverlaySites) + ", got " +
                                     std::to_string(values->size()));
            }
            for (double v : *values) {
                if (!std::isfinite(v)) {
                    add(name, field, "finite values");
                    break;
                }
                if (std::abs(v) >= kOverlaySanityNm) {
                    add(name, field, "|value| < 50 nm");
                    break;
                }
            }
        }
    }

    std::map<DieIndex, std::set<std::pair<double, double>>> targets;
    for (std::size_t i = 0; i < dataset.cdsem.size(); ++i) {
        const auto& rec = dataset.cdsem[i];
        const std::string name = "cdsem[" + std::to_string(i) + "]";
        check_die(name, rec.die);
        check_structure(name, rec.structure);
        if (!(rec.cd2_nm > 0.0) || !std::isfinite(rec.cd2_nm)) add(name, "cd2", "CdsemRecord positivity cd2 > 0");
        if (!std::isfinite(rec.target_x_um) || !std::isfinite(rec.target_y_um)) {
            add(name, "target", "finite target position");
        }
        targets[rec.die].insert({rec.target_x_um, rec.target_y_um});
    }
    for (const auto& [die, positions] : targets) {
        if (positions.size() < 4 || positions.size() > 5) {
            add("cdsem die " + die_label(die), "targets",
                "4-5 targets per die, got " + std::to_string(positions.size()));
        }
    }

    for (std::size_t i = 0; i < dataset.capacitance.size(); ++i) {
        const auto& rec = dataset.capacitance[i];
        const std::string name = "capacitance[" + std::to_string(i) + "]";
        check_die(name, rec.die);
        check_structure(name, rec.structure);
        if (!std::isfinite(rec.value_fF)) add(name, "value", "finite capacitance");
    }
    return out;
}

}  // namespace waferwise
