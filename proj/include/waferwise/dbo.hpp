#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace waferwise::dbo {

/// Zero-order reflectance of a stacked grating pad: R(x, λ) = R0(λ) + a(λ)·cos(2πx/P),
/// x being the designed-plus-actual shift between the two gratings.
struct GratingModel {
    double pitch_nm = 96.0;
    std::vector<double> wavelengths_nm;  // strictly ascending
    std::vector<double> base_reflectance;
    std::vector<double> modulation;

    double reflectance(double shift_nm, std::size_t wavelength_index) const;
    /// dR/dx at a shift, analytic.
    double slope(double shift_nm, std::size_t wavelength_index) const;

    std::vector<std::string> check() const;

    /// 400-800 nm in 5 nm steps, smooth R0 and a with |a| < R0.
    static GratingModel standard(double pitch_nm = 96.0);
};

/// Pad biases that keep the estimator in its linear regime. x0 = P/4 sits at the
/// steepest point of the cosine; δ = P/32 keeps the small-ε slope within 1% of unity.
inline double default_pad_shift(double pitch_nm) { return pitch_nm / 4.0; }
inline double default_extra_offset(double pitch_nm) { return pitch_nm / 32.0; }

/// Spectra of the three pads: shifted by +x0+ε, -x0+ε and +x0+δ+ε.
struct DboTarget {
    double x0 = 0.0;
    double delta = 0.0;
    std::vector<double> wavelengths_nm;
    std::vector<double> pad_plus;
    std::vector<double> pad_minus;
    std::vector<double> pad_delta;
    std::optional<double> true_overlay_nm;  // synthetic targets only

    std::vector<std::string> check() const;
};

DboTarget simulate_target(const GratingModel& model, double x0, double delta, double overlay_true_nm,
                          double noise_sigma, std::uint64_t seed);

/// ΔR(λ) = R(+x0+ε) - R(-x0+ε).
std::vector<double> differential_spectrum(const DboTarget& target);
/// ΔR'(λ) = R(x0+δ+ε) - R(x0+ε).
std::vector<double> reference_spectrum(const DboTarget& target);

struct EstimateDiagnostics {
    double residual_norm = 0.0;      // ‖ΔR - r·ΔR'‖₂
    double reference_norm = 0.0;     // ‖ΔR'‖₂
    double ratio_spread_nm = 0.0;    // std of per-wavelength δΔR/(2ΔR')
    std::size_t ratio_count = 0;     // wavelengths entering the spread
    std::string aggregation = "weighted_least_squares";
};

struct OverlayEstimate {
    double overlay_nm = 0.0;
    EstimateDiagnostics diagnostics;
};

/// ε = δ/2 · argmin_r Σ_λ (ΔR - r·ΔR')², i.e. the per-wavelength ratios weighted by ΔR'².
/// Throws Error("insensitive_target") when ΔR' vanishes and Error("invalid_input") on
/// non-finite or inconsistent spectra.
OverlayEstimate estimate_overlay(const DboTarget& target);

/// CSV: header `shift_nm,<λ...>`; rows for +x0, -x0, x0+δ in that order.
void write_spectra_csv(const DboTarget& target, const std::filesystem::path& path);
DboTarget read_spectra_csv(const std::filesystem::path& path);

}  // namespace waferwise::dbo
