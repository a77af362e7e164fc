#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace waferwise {

/// Die position on the wafer grid.
struct DieIndex {
    int col = 0;
    int row = 0;

    auto operator<=>(const DieIndex&) const = default;
};

enum class DboStep { ADI, AEI, CMP };

inline constexpr std::array<DboStep, 3> kAllDboSteps = {DboStep::ADI, DboStep::AEI, DboStep::CMP};

std::string_view to_string(DboStep step);
/// Accepts "adi"/"ADI" and friends.
std::optional<DboStep> parse_dbo_step(std::string_view text);

/// Number of overlay readings per die per direction.
inline constexpr std::size_t kOverlaySites = 26;
/// Sanity bound on any single overlay reading, nm.
inline constexpr double kOverlaySanityNm = 50.0;

struct OverlayRecord {
    DieIndex die;
    DboStep step = DboStep::ADI;
    std::vector<double> values_x;  // nm, one per site
    std::vector<double> values_y;  // nm, one per site
};

enum class Family { AB, BA };
enum class Orientation { Horizontal, Vertical };

inline constexpr std::array<Family, 2> kAllFamilies = {Family::AB, Family::BA};
inline constexpr std::array<Orientation, 2> kAllOrientations = {Orientation::Horizontal,
                                                               Orientation::Vertical};
inline constexpr int kMinLevel = 1;
inline constexpr int kMaxLevel = 6;
inline constexpr int kInstancesPerStructure = 5;

std::string_view to_string(Family family);
std::string_view to_string(Orientation orientation);
std::optional<Family> parse_family(std::string_view text);
std::optional<Orientation> parse_orientation(std::string_view text);

/// Fork-fork test structure identity, e.g. vertical AB3 instance 2.
struct StructureId {
    Family family = Family::AB;
    int level = 1;
    Orientation orientation = Orientation::Horizontal;
    int instance = 0;

    auto operator<=>(const StructureId&) const = default;

    /// "AB3" style label without orientation or instance.
    std::string type_label() const;
    bool same_type(const StructureId& other) const {
        return family == other.family && level == other.level && orientation == other.orientation;
    }
};

/// Parses "AB1".."BA6".
std::optional<std::pair<Family, int>> parse_structure_type(std::string_view text);

struct DesignedGap {
    double nm = 0.0;
};

/// Designed M1A-M1B space: AB6 and BA1 are 24 nm, stepping by 2 nm up to 34 nm.
DesignedGap designed_gap(const StructureId& structure);
DesignedGap designed_gap(Family family, int level);

/// Design target quoted for CD2 of AB1 when reporting relative prediction errors.
/// The layout gap rule gives 34 nm for AB1; the CD2 experiment quotes 32 nm.
inline constexpr double kAb1LayoutGapNm = 34.0;
inline constexpr double kAb1Cd2DesignTargetNm = 32.0;

struct CdsemRecord {
    DieIndex die;
    double target_x_um = 0.0;
    double target_y_um = 0.0;
    StructureId structure;
    double cd2_nm = 0.0;
};

struct CapacitanceRecord {
    DieIndex die;
    StructureId structure;
    double value_fF = 0.0;
    bool flagged_outlier = false;
};

enum class Recipe { NonProgrammed, Programmed };

std::string_view to_string(Recipe recipe);
std::optional<Recipe> parse_recipe(std::string_view text);

struct WaferDataset {
    std::string wafer_id;
    Recipe recipe = Recipe::NonProgrammed;
    std::vector<DieIndex> grid;  // sorted, unique
    std::vector<OverlayRecord> overlay;
    std::vector<CdsemRecord> cdsem;
    std::vector<CapacitanceRecord> capacitance;
    std::uint64_t seed = 0;  // 0 for ingested data

    const OverlayRecord* find_overlay(DieIndex die, DboStep step) const;
    bool has_step(DboStep step) const;
    bool contains_die(DieIndex die) const;
};

bool operator==(const OverlayRecord& a, const OverlayRecord& b);
bool operator==(const CdsemRecord& a, const CdsemRecord& b);
bool operator==(const CapacitanceRecord& a, const CapacitanceRecord& b);
bool operator==(const WaferDataset& a, const WaferDataset& b);

struct Violation {
    std::string record;  // e.g. "overlay[3]"
    std::string field;   // e.g. "values_x"
    std::string rule;    // e.g. "arity 26"
};

/// Checks every record-level invariant. Violations are data, never thrown.
std::vector<Violation> validate(const WaferDataset& dataset);

}  // namespace waferwise
