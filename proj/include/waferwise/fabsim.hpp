#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "waferwise/model.hpp"
#include "waferwise/rng.hpp"

namespace waferwise::fabsim {

/// Overlay vector, nm. Positive x narrows AB gaps of vertical structures.
struct Offset2 {
    double dx = 0.0;
    double dy = 0.0;

    bool operator==(const Offset2&) const = default;
};

/// c0 + c1·u + c2·v + c3·u² + c4·u·v + c5·v² over normalized wafer coordinates.
using Poly2 = std::array<double, 6>;

double evaluate(const Poly2& coeffs, double u, double v);

/// Die grid plus the normalization used for wafer coordinates.
struct WaferGrid {
    std::vector<DieIndex> dies;  // sorted
    double center_col = 0.0;
    double center_row = 0.0;
    double radius = 1.0;  // in die pitches; largest die-center distance

    /// (u, v) in roughly [-1, 1].
    std::pair<double, double> normalized(DieIndex die) const;
    /// Normalized radius squared, 0 at the center.
    double radius2(DieIndex die) const;
};

/// The n dies nearest to the center of the smallest odd square grid holding n.
/// 149 and 127 both land on a 13×13 grid.
WaferGrid make_grid(int n_dies);
/// Grid geometry recovered from an arbitrary die list (ingested data).
WaferGrid grid_from_dies(std::vector<DieIndex> dies);

/// Fixed 26-site overlay template in normalized field coordinates, point-symmetric.
const std::array<std::pair<double, double>, kOverlaySites>& overlay_site_template();
/// CD-SEM target positions on the die, µm. Dies carry 4 or 5 of these.
const std::array<std::pair<double, double>, 5>& cdsem_target_template();
inline constexpr double kFieldHalfWidthUm = 13000.0;
inline constexpr double kFieldHalfHeightUm = 16500.0;

struct FingerprintConfig {
    bool programmed = false;
    std::map<DieIndex, Offset2> offsets;  // programmed translational offsets
    Poly2 smooth_x{};
    Poly2 smooth_y{};
    /// Intra-field magnification and rotation, nm at the field edge.
    double field_mag_nm = 0.0;
    double field_rot_nm = 0.0;
    /// Constant registration term added to every die (M1B placement bias, in overlay sign).
    Offset2 registration{};

    double noise_sigma_adi = 0.0;
    double noise_sigma_aei = 0.0;
    double noise_sigma_cmp = 0.0;
    double outlier_rate_adi = 0.0;
    double outlier_rate_aei = 0.0;
    double outlier_rate_cmp = 0.0;
    double outlier_magnitude_nm = 8.0;

    double noise_sigma(DboStep step) const;
    double outlier_rate(DboStep step) const;

    /// Invariant violations; empty when valid.
    std::vector<std::string> check() const;
};

inline constexpr double kMaxProgrammedOffsetNm = 7.5;
inline constexpr std::array<double, 7> kProgrammedLevelsNm = {-7.5, -5.0, -2.5, 0.0, 2.5, 5.0, 7.5};

/// Programmed offsets on a random subset of dies, each axis drawn from kProgrammedLevelsNm.
std::map<DieIndex, Offset2> make_programmed_offsets(const WaferGrid& grid, double fraction,
                                                    std::uint64_t seed);

struct OverlayGeneration {
    std::vector<OverlayRecord> records;     // one per die, grid order
    std::vector<Offset2> true_die_overlay;  // noiseless, at the die center
    std::vector<Offset2> smooth_field;      // smooth_field + registration, no programmed term
    std::size_t outlier_count = 0;
};

/// Noiseless overlay at a die center.
Offset2 true_die_overlay(const FingerprintConfig& config, const WaferGrid& grid, DieIndex die);
/// Noiseless overlay at a point of the field (normalized field coordinates).
Offset2 true_site_overlay(const FingerprintConfig& config, const WaferGrid& grid, DieIndex die,
                          double fx, double fy);

/// Reported overlay at one DBO step. Random draws depend only on (seed, die), so the
/// three steps share noise directions and outlier sites; a step with lower rates
/// has a subset of the outliers of a step with higher rates.
OverlayGeneration generate_overlay(const FingerprintConfig& config, const WaferGrid& grid,
                                   DboStep step, std::uint64_t seed);

inline constexpr double kCd2FloorNm = 0.5;

/// cd2 = designed gap + s·o + bias + noise, s = -1 for AB and +1 for BA,
/// o = dx for vertical structures and dy for horizontal ones.
double derive_cd2(Offset2 true_overlay, const StructureId& structure, double cd_noise_sigma,
                  Rng& rng, double cd_bias_nm = 0.0);
double derive_cd2(Offset2 true_overlay, const StructureId& structure, double cd_noise_sigma,
                  std::uint64_t seed, double cd_bias_nm = 0.0);

struct CapacitanceModel {
    double k_geom = 24000.0;  // fF·nm
    double sigma_rel = 0.01;
    double short_threshold = 20.0;  // nm
    double short_width = 1.5;       // nm, logistic width of the short onset
    double fail_rate_base = 0.02;
    double open_rate = 0.005;
    double fail_magnitude = 2000.0;  // fF
    /// Partial-leakage excursions: C rises by a uniform fraction in [leak_min_rel, leak_max_rel]
    /// with probability leak_rate_max · logistic((leak_onset - gap) / leak_width). They are not
    /// failures: they stay near the population and carry no overlay trend.
    double leak_rate_max = 0.5;
    double leak_onset_nm = 26.0;
    double leak_width_nm = 2.0;
    double leak_min_rel = 0.03;
    double leak_max_rel = 0.25;

    double leak_rate(double cd2_nm) const;

    /// Probability of a short-type failure at a gap; decreasing in cd2, -> 1 far below threshold.
    /// fail_rate_base == 0 switches failure injection off (shorts and opens).
    double fail_rate(double cd2_nm) const;
    std::vector<std::string> check() const;
};

struct CapacitanceSample {
    CapacitanceRecord record;
    bool injected_failure = false;  // short or open
    bool leakage = false;
};

/// C = k_geom / gap · (1 + η), replaced by a failure excursion with probability fail_rate(gap)
/// (shorts, high) or open_rate (opens, low). Throws std::invalid_argument for gap <= 0.
CapacitanceSample derive_capacitance(double cd2_effective_nm, const CapacitanceModel& model,
                                     const StructureId& structure, Rng& rng);
CapacitanceSample derive_capacitance(double cd2_effective_nm, const CapacitanceModel& model,
                                     const StructureId& structure, std::uint64_t seed);

struct CdsemConfig {
    double noise_sigma_nm = 0.5;
    double p_five_targets = 0.85;
    /// Radial etch CD signature: + bowl_nm · r² (r normalized).
    double bowl_nm = 2.5;
    /// Across-field CD slope, nm at the field edge.
    double field_slope_nm = 0.4;
};

struct WaferSpec {
    std::string wafer_id;
    Recipe recipe = Recipe::NonProgrammed;
};

/// Everything the generator needs for a set of wafers.
struct ScenarioConfig {
    int n_dies = 149;
    FingerprintConfig fingerprint;  // base: smooth field, noise, outliers
    double smooth_jitter_nm = 0.4;  // per-wafer perturbation of smooth coefficients
    double programmed_fraction = 0.4;
    Offset2 m1b_shift{-2.0, -2.0};  // M1B placement error, layout nm

    bool cdsem_enabled = true;
    CdsemConfig cdsem;

    bool capacitance_enabled = true;
    CapacitanceModel capacitance;
    double cap_gap_noise_nm = 0.3;

    std::vector<WaferSpec> wafers;

    /// Defaults for the four-wafer scenario: D02, D03 non-programmed, D10, D11 programmed.
    static ScenarioConfig defaults();
    std::vector<std::string> check() const;
};

struct SyntheticTruth {
    std::vector<DieIndex> dies;
    std::vector<Offset2> die_overlay;        // noiseless at die center, grid order
    std::vector<Offset2> programmed_offset;  // zero on unselected dies
    std::vector<bool> injected_failure;      // parallel to WaferDataset::capacitance
    std::vector<bool> leakage;               // parallel to WaferDataset::capacitance
    std::array<std::size_t, 3> overlay_outliers{};  // ADI, AEI, CMP
};

struct SyntheticWafer {
    WaferDataset data;
    SyntheticTruth truth;
};

/// Programmed offsets are drawn from `pattern_seed` so wafers of one scenario share them.
SyntheticWafer generate_wafer(const ScenarioConfig& config, const WaferSpec& wafer,
                              std::uint64_t seed, std::uint64_t pattern_seed);

/// One SyntheticWafer per config.wafers entry.
std::vector<SyntheticWafer> generate_scenario(const ScenarioConfig& config, std::uint64_t seed);

/// Contribution of M1B placement to overlay (overlay is reported as M1A relative to M1B).
Offset2 registration_from_m1b_shift(Offset2 m1b_shift);

}  // namespace waferwise::fabsim
