#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "waferwise/matrix.hpp"
#include "waferwise/model.hpp"

namespace waferwise::clean {

struct DbscanParams {
    double eps = 0.0;     // feature-space radius, > 0
    int min_samples = 2;  // neighborhood size including the point itself, >= 2
};

inline constexpr int kNoise = -1;

/// Density clustering. A point with at least min_samples points (itself included) at
/// distance <= eps is a core point; clusters are connected components of core points.
/// A non-core point within eps of a core joins the nearest such core (ties: the core
/// with lexicographically smallest coordinates). Labels are numbered by the lowest
/// point index in each cluster; noise is kNoise. Throws Error("invalid_input").
std::vector<int> dbscan(const Matrix& points, const DbscanParams& params);

struct KneeResult {
    double eps = 0.0;
    std::size_t index = 0;      // position of eps in the curve
    std::vector<double> curve;  // ascending k-th nearest-neighbor distances
    double strength = 0.0;      // gap between the normalized curve and its chord at the knee, in [0, 1]
    bool weak_knee = false;     // strength below kWeakKneeStrength
};

/// Below this strength the sorted distance curve has no pronounced bend.
inline constexpr double kWeakKneeStrength = 0.45;

/// Distance of every point to its k-th nearest neighbor, counting the point itself as the
/// first (k = min_samples), sorted ascending. Both axes are normalized to [0, 1] and the knee
/// is the curve point farthest below the chord joining the curve's ends; its distance is eps.
/// Needs at least k + 1 points.
KneeResult knee_eps(const Matrix& points, int k);

enum class ReplacementPolicy { DieMean, WaferMean };

std::string_view to_string(ReplacementPolicy policy);

struct Replacement {
    std::size_t record_index = 0;  // into WaferDataset::capacitance
    DieIndex die;
    StructureId structure;
    double old_value = 0.0;
    double new_value = 0.0;
    ReplacementPolicy policy = ReplacementPolicy::DieMean;
};

/// Structure type cleaned as one population: family, level and orientation.
struct StructureType {
    Family family = Family::AB;
    int level = 1;
    Orientation orientation = Orientation::Horizontal;

    std::string label() const;  // e.g. "AB3-H"
    bool matches(const StructureId& id) const {
        return id.family == family && id.level == level && id.orientation == orientation;
    }
    auto operator<=>(const StructureType&) const = default;
};

std::vector<StructureType> all_structure_types();

struct CleanOptions {
    std::optional<double> eps;                  // knee eps when empty
    int min_samples = 2;
    std::optional<std::array<double, 3>> scale;  // divisors for (cap, col, row); std when empty
};

struct CleanReport {
    std::string wafer_id;
    StructureType type;
    std::size_t n_records = 0;
    std::size_t n_outliers = 0;
    std::vector<Replacement> replaced;
    double eps_used = 0.0;
    bool eps_from_knee = true;
    std::array<double, 3> scale{1.0, 1.0, 1.0};
    std::vector<double> knee_curve;
    bool weak_knee = false;
    std::vector<std::string> warnings;
};

struct CleanResult {
    std::vector<CapacitanceRecord> records;  // the wafer's full capacitance list
    CleanReport report;
};

/// Clusters (capacitance, die col, die row), each divided by its population standard
/// deviation, and replaces noise points by the mean of the clean, originally measured
/// records of the same type on the same die, or of the whole wafer when the die has none.
/// Records of other types pass through untouched. Throws Error("invalid_input") when the
/// wafer has no records of the type.
CleanResult clean_capacitance(const WaferDataset& wafer, const StructureType& type,
                              const CleanOptions& options = {});

/// Cleans every structure type present on the wafer.
WaferDataset clean_wafer(const WaferDataset& wafer, const CleanOptions& options,
                         std::vector<CleanReport>* reports = nullptr);

/// One row per replacement.
std::string replacements_csv(const std::vector<CleanReport>& reports);
/// One row per (wafer, type): outlier count, eps and knee diagnostics.
std::string clean_summary_csv(const std::vector<CleanReport>& reports);
/// One row per curve point.
std::string knee_curve_csv(const std::vector<CleanReport>& reports);

}  // namespace waferwise::clean
