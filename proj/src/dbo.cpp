#include "waferwise/dbo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "waferwise/error.hpp"
#include "waferwise/io.hpp"
#include "waferwise/rng.hpp"

namespace waferwise::dbo {

double GratingModel::reflectance(double shift_nm, std::size_t i) const {
    return base_reflectance[i] + modulation[i] * std::cos(2.0 * std::numbers::pi * shift_nm / pitch_nm);
}

double GratingModel::slope(double shift_nm, std::size_t i) const {
    const double k = 2.0 * std::numbers::pi / pitch_nm;
    return -modulation[i] * k * std::sin(k * shift_nm);
}

std::vector<std::string> GratingModel::check() const {
    std::vector<std::string> out;
    if (!(pitch_nm > 0.0)) out.push_back("pitch must be > 0");
    if (wavelengths_nm.empty()) out.push_back("wavelength grid is empty");
    if (base_reflectance.size() != wavelengths_nm.size() || modulation.size() != wavelengths_nm.size()) {
        out.push_back("R0 and a must be tabulated on the wavelength grid");
        return out;
    }
    for (std::size_t i = 1; i < wavelengths_nm.size(); ++i) {
        if (!(wavelengths_nm[i] > wavelengths_nm[i - 1])) {
            out.push_back("wavelengths must be strictly ascending");
            break;
        }
    }
    for (std::size_t i = 0; i < wavelengths_nm.size(); ++i) {
        if (!(std::abs(modulation[i]) < base_reflectance[i])) {
            out.push_back("|a(λ)| must be below R0(λ)");
            break;
        }
    }
    return out;
}

GratingModel GratingModel::standard(double pitch_nm) {
    GratingModel m;
    m.pitch_nm = pitch_nm;
    for (double wl = 400.0; wl <= 800.0; wl += 5.0) {
        const double t = wl - 400.0;
        m.wavelengths_nm.push_back(wl);
        m.base_reflectance.push_back(0.35 + 0.10 * std::sin(2.0 * std::numbers::pi * t / 250.0));
        m.modulation.push_back(0.12 * std::cos(2.0 * std::numbers::pi * t / 330.0) + 0.03);
    }
    return m;
}

std::vector<std::string> DboTarget::check() const {
    std::vector<std::string> out;
    if (!(x0 > 0.0)) out.push_back("x0 must be > 0");
    if (delta == 0.0 || !std::isfinite(delta)) out.push_back("delta must be non-zero");
    const auto n = wavelengths_nm.size();
    if (pad_plus.size() != n || pad_minus.size() != n || pad_delta.size() != n) {
        out.push_back("pad spectra must share the wavelength grid");
    }
    return out;
}

DboTarget simulate_target(const GratingModel& model, double x0, double delta, double overlay_true_nm,
                          double noise_sigma, std::uint64_t seed) {
    if (auto problems = model.check(); !problems.empty()) {
        throw Error("invalid_input", "grating model: " + problems.front());
    }
    DboTarget t;
    t.x0 = x0;
    t.delta = delta;
    t.wavelengths_nm = model.wavelengths_nm;
    t.true_overlay_nm = overlay_true_nm;
    auto rng = make_rng(seed, {0xDB0});
    const std::size_t n = model.wavelengths_nm.size();
    t.pad_plus.resize(n);
    t.pad_minus.resize(n);
    t.pad_delta.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.pad_plus[i] = model.reflectance(x0 + overlay_true_nm, i);
        t.pad_minus[i] = model.reflectance(-x0 + overlay_true_nm, i);
        t.pad_delta[i] = model.reflectance(x0 + delta + overlay_true_nm, i);
    }
    if (noise_sigma > 0.0) {
        for (auto* pad : {&t.pad_plus, &t.pad_minus, &t.pad_delta}) {
            for (double& r : *pad) r += normal(rng, noise_sigma);
        }
    }
    return t;
}

std::vector<double> differential_spectrum(const DboTarget& target) {
    std::vector<double> out(target.pad_plus.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = target.pad_plus[i] - target.pad_minus[i];
    return out;
}

std::vector<double> reference_spectrum(const DboTarget& target) {
    std::vector<double> out(target.pad_plus.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = target.pad_delta[i] - target.pad_plus[i];
    return out;
}

OverlayEstimate estimate_overlay(const DboTarget& target) {
    if (auto problems = target.check(); !problems.empty()) {
        throw Error("invalid_input", "DBO target: " + problems.front());
    }
    for (const auto* pad : {&target.pad_plus, &target.pad_minus, &target.pad_delta}) {
        if (!std::all_of(pad->begin(), pad->end(), [](double v) { return std::isfinite(v); })) {
            throw Error("invalid_input", "DBO target: non-finite reflectance");
        }
    }
    const auto diff = differential_spectrum(target);
    const auto ref = reference_spectrum(target);

    double s_rr = 0.0;
    double s_rd = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i) {
        s_rr += ref[i] * ref[i];
        s_rd += ref[i] * diff[i];
        scale += target.pad_plus[i] * target.pad_plus[i];
    }
    const double ref_norm = std::sqrt(s_rr);
    if (ref_norm == 0.0 || ref_norm <= 1e-12 * std::sqrt(scale)) {
        throw Error("insensitive_target", "insensitive target: reference differential spectrum vanishes");
    }

    const double ratio = s_rd / s_rr;
    OverlayEstimate est;
    est.overlay_nm = 0.5 * target.delta * ratio;
    est.diagnostics.reference_norm = ref_norm;

    double resid = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i) {
        const double r = diff[i] - ratio * ref[i];
        resid += r * r;
    }
    est.diagnostics.residual_norm = std::sqrt(resid);

    // Spread over wavelengths where the reference carries signal.
    double max_ref = 0.0;
    for (double r : ref) max_ref = std::max(max_ref, std::abs(r));
    double sum = 0.0;
    double sum2 = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < diff.size(); ++i) {
        if (std::abs(ref[i]) < 1e-3 * max_ref) continue;
        const double e = 0.5 * target.delta * diff[i] / ref[i];
        sum += e;
        sum2 += e * e;
        ++count;
    }
    if (count > 0) {
        const double mean = sum / static_cast<double>(count);
        est.diagnostics.ratio_spread_nm = std::sqrt(std::max(0.0, sum2 / static_cast<double>(count) - mean * mean));
    }
    est.diagnostics.ratio_count = count;
    return est;
}

void write_spectra_csv(const DboTarget& target, const std::filesystem::path& path) {
    std::vector<std::string> header{"shift_nm"};
    for (double wl : target.wavelengths_nm) header.push_back(io::format_double(wl));
    io::CsvWriter w(header);
    const std::pair<double, const std::vector<double>*> rows[] = {
        {target.x0, &target.pad_plus},
        {-target.x0, &target.pad_minus},
        {target.x0 + target.delta, &target.pad_delta},
    };
    for (const auto& [shift, pad] : rows) {
        w.cell(shift);
        for (double r : *pad) w.cell(r);
        w.end_row();
    }
    io::write_file_atomic(path, w.text());
}

DboTarget read_spectra_csv(const std::filesystem::path& path) {
    const auto table = io::read_csv(path);
    if (table.header.empty() || table.header[0] != "shift_nm") {
        throw Error("schema_mismatch", path.string() + ": first column must be shift_nm");
    }
    if (table.rows.size() != 3) {
        throw Error("schema_mismatch", path.string() + ": expected 3 pad rows, got " +
                                           std::to_string(table.rows.size()));
    }
    DboTarget t;
    for (std::size_t c = 1; c < table.header.size(); ++c) {
        t.wavelengths_nm.push_back(io::parse_double(table.header[c]));
    }
    auto parse_row = [&](std::size_t r, std::vector<double>& pad) {
        for (std::size_t c = 1; c < table.rows[r].size(); ++c) pad.push_back(io::parse_double(table.rows[r][c]));
        return io::parse_double(table.rows[r][0]);
    };
    t.x0 = parse_row(0, t.pad_plus);
    const double minus_shift = parse_row(1, t.pad_minus);
    t.delta = parse_row(2, t.pad_delta) - t.x0;
    if (minus_shift != -t.x0) {
        throw Error("schema_mismatch", path.string() + ": second pad must sit at -x0");
    }
    return t;
}

}  // namespace waferwise::dbo
