#include "waferwise/fabsim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace waferwise::fabsim {

namespace {

enum Stream : std::uint64_t {
    kOverlayStream = 1,
    kCdsemStream = 2,
    kCapacitanceStream = 3,
    kSmoothStream = 4,
    kPatternStream = 5,
};

std::uint64_t die_key(DieIndex die) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(die.col)) << 32) |
           static_cast<std::uint32_t>(die.row);
}

std::uint64_t string_key(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

double exponential(Rng& rng) { return -std::log1p(-uniform01(rng)); }

}  // namespace

double evaluate(const Poly2& c, double u, double v) {
    return c[0] + c[1] * u + c[2] * v + c[3] * u * u + c[4] * u * v + c[5] * v * v;
}

std::pair<double, double> WaferGrid::normalized(DieIndex die) const {
    return {(die.col - center_col) / radius, (die.row - center_row) / radius};
}

double WaferGrid::radius2(DieIndex die) const {
    const auto [u, v] = normalized(die);
    return u * u + v * v;
}

WaferGrid make_grid(int n_dies) {
    if (n_dies <= 0) throw std::invalid_argument("wafer grid needs at least one die");
    int side = 1;
    while (side * side < n_dies) side += 2;
    const double c = (side - 1) / 2.0;

    std::vector<std::tuple<double, int, int>> candidates;
    for (int row = 0; row < side; ++row) {
        for (int col = 0; col < side; ++col) {
            const double d2 = (col - c) * (col - c) + (row - c) * (row - c);
            candidates.emplace_back(d2, row, col);
        }
    }
    std::sort(candidates.begin(), candidates.end());
    std::vector<DieIndex> dies;
    for (int i = 0; i < n_dies; ++i) {
        dies.push_back({std::get<2>(candidates[i]), std::get<1>(candidates[i])});
    }
    WaferGrid grid = grid_from_dies(std::move(dies));
    grid.center_col = c;
    grid.center_row = c;
    return grid;
}

WaferGrid grid_from_dies(std::vector<DieIndex> dies) {
    if (dies.empty()) throw std::invalid_argument("wafer grid needs at least one die");
    std::sort(dies.begin(), dies.end());
    dies.erase(std::unique(dies.begin(), dies.end()), dies.end());

    WaferGrid grid;
    auto [min_col, max_col] = std::minmax_element(dies.begin(), dies.end(),
                                                  [](auto a, auto b) { return a.col < b.col; });
    auto [min_row, max_row] = std::minmax_element(dies.begin(), dies.end(),
                                                  [](auto a, auto b) { return a.row < b.row; });
    grid.center_col = (min_col->col + max_col->col) / 2.0;
    grid.center_row = (min_row->row + max_row->row) / 2.0;
    double r2 = 0.0;
    for (auto d : dies) {
        const double dc = d.col - grid.center_col;
        const double dr = d.row - grid.center_row;
        r2 = std::max(r2, dc * dc + dr * dr);
    }
    grid.radius = std::max(1.0, std::sqrt(r2));
    grid.dies = std::move(dies);
    return grid;
}

const std::array<std::pair<double, double>, kOverlaySites>& overlay_site_template() {
    // 6×5 lattice over the field minus its four corners.
    static const auto sites = [] {
        std::array<std::pair<double, double>, kOverlaySites> out{};
        constexpr std::array<double, 6> xs = {-1.0, -0.6, -0.2, 0.2, 0.6, 1.0};
        constexpr std::array<double, 5> ys = {-1.0, -0.5, 0.0, 0.5, 1.0};
        std::size_t k = 0;
        for (std::size_t j = 0; j < ys.size(); ++j) {
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const bool corner = (i == 0 || i == xs.size() - 1) && (j == 0 || j == ys.size() - 1);
                if (!corner) out[k++] = {xs[i], ys[j]};
            }
        }
        return out;
    }();
    return sites;
}

const std::array<std::pair<double, double>, 5>& cdsem_target_template() {
    static const std::array<std::pair<double, double>, 5> targets = {{
        {-8000.0, -10000.0},
        {8000.0, -10000.0},
        {0.0, 0.0},
        {-8000.0, 10000.0},
        {8000.0, 10000.0},
    }};
    return targets;
}

double FingerprintConfig::noise_sigma(DboStep step) const {
    switch (step) {
        case DboStep::ADI: return noise_sigma_adi;
        case DboStep::AEI: return noise_sigma_aei;
        case DboStep::CMP: return noise_sigma_cmp;
    }
    return 0.0;
}

double FingerprintConfig::outlier_rate(DboStep step) const {
    switch (step) {
        case DboStep::ADI: return outlier_rate_adi;
        case DboStep::AEI: return outlier_rate_aei;
        case DboStep::CMP: return outlier_rate_cmp;
    }
    return 0.0;
}

std::vector<std::string> FingerprintConfig::check() const {
    std::vector<std::string> out;
    for (const auto& [die, off] : offsets) {
        if (std::abs(off.dx) > kMaxProgrammedOffsetNm || std::abs(off.dy) > kMaxProgrammedOffsetNm) {
            out.push_back("programmed offset beyond 7.5 nm");
            break;
        }
    }
    for (double s : {noise_sigma_adi, noise_sigma_aei, noise_sigma_cmp}) {
        if (!(s >= 0.0)) out.push_back("noise sigma must be >= 0");
    }
    for (double p : {outlier_rate_adi, outlier_rate_aei, outlier_rate_cmp}) {
        if (!(p >= 0.0 && p <= 1.0)) out.push_back("outlier rate must be in [0,1]");
    }
    if (noise_sigma_aei > noise_sigma_adi || noise_sigma_aei > noise_sigma_cmp) {
        out.push_back("AEI noise sigma must not exceed ADI or CMP");
    }
    if (outlier_rate_aei > outlier_rate_adi || outlier_rate_aei > outlier_rate_cmp) {
        out.push_back("AEI outlier rate must not exceed ADI or CMP");
    }
    if (!(outlier_magnitude_nm >= 0.0 && outlier_magnitude_nm <= 15.0)) {
        out.push_back("outlier magnitude must be in [0,15] nm");
    }
    return out;
}

std::map<DieIndex, Offset2> make_programmed_offsets(const WaferGrid& grid, double fraction,
                                                    std::uint64_t seed) {
    std::map<DieIndex, Offset2> out;
    auto rng = make_rng(seed, {kPatternStream});
    for (auto die : grid.dies) {
        const double select = uniform01(rng);
        const auto ix = static_cast<std::size_t>(uniform01(rng) * kProgrammedLevelsNm.size());
        const auto iy = static_cast<std::size_t>(uniform01(rng) * kProgrammedLevelsNm.size());
        if (select < fraction) out[die] = {kProgrammedLevelsNm[ix], kProgrammedLevelsNm[iy]};
    }
    return out;
}

Offset2 true_site_overlay(const FingerprintConfig& config, const WaferGrid& grid, DieIndex die,
                          double fx, double fy) {
    const auto [u, v] = grid.normalized(die);
    Offset2 o{evaluate(config.smooth_x, u, v) + config.registration.dx,
              evaluate(config.smooth_y, u, v) + config.registration.dy};
    o.dx += config.field_mag_nm * fx - config.field_rot_nm * fy;
    o.dy += config.field_mag_nm * fy + config.field_rot_nm * fx;
    if (config.programmed) {
        if (auto it = config.offsets.find(die); it != config.offsets.end()) {
            o.dx += it->second.dx;
            o.dy += it->second.dy;
        }
    }
    return o;
}

Offset2 true_die_overlay(const FingerprintConfig& config, const WaferGrid& grid, DieIndex die) {
    return true_site_overlay(config, grid, die, 0.0, 0.0);
}

OverlayGeneration generate_overlay(const FingerprintConfig& config, const WaferGrid& grid,
                                   DboStep step, std::uint64_t seed) {
    if (grid.dies.empty()) throw std::invalid_argument("generate_overlay: empty grid");
    if (auto problems = config.check(); !problems.empty()) {
        throw std::invalid_argument("fingerprint config: " + problems.front());
    }
    const double sigma = config.noise_sigma(step);
    const double rate = config.outlier_rate(step);
    const auto& sites = overlay_site_template();

    FingerprintConfig smooth_only = config;
    smooth_only.programmed = false;
    smooth_only.field_mag_nm = 0.0;
    smooth_only.field_rot_nm = 0.0;

    OverlayGeneration gen;
    gen.records.reserve(grid.dies.size());
    for (auto die : grid.dies) {
        auto rng = make_rng(seed, {kOverlayStream, die_key(die)});
        OverlayRecord rec{die, step, std::vector<double>(kOverlaySites), std::vector<double>(kOverlaySites)};
        for (std::size_t s = 0; s < kOverlaySites; ++s) {
            const auto truth = true_site_overlay(config, grid, die, sites[s].first, sites[s].second);
            for (int axis = 0; axis < 2; ++axis) {
                // Fixed draw order keeps the stream identical across steps.
                const double z = normal(rng, 1.0);
                const double u_outlier = uniform01(rng);
                const double u_sign = uniform01(rng);
                const double u_mag = uniform01(rng);
                double value = (axis == 0 ? truth.dx : truth.dy) + sigma * z;
                if (u_outlier < rate) {
                    value += (u_sign < 0.5 ? -1.0 : 1.0) * config.outlier_magnitude_nm * (1.0 + u_mag);
                    ++gen.outlier_count;
                }
                (axis == 0 ? rec.values_x : rec.values_y)[s] = value;
            }
        }
        gen.records.push_back(std::move(rec));
        gen.true_die_overlay.push_back(true_die_overlay(config, grid, die));
        gen.smooth_field.push_back(true_die_overlay(smooth_only, grid, die));
    }
    return gen;
}

double derive_cd2(Offset2 true_overlay, const StructureId& structure, double cd_noise_sigma, Rng& rng,
                  double cd_bias_nm) {
    const double o = structure.orientation == Orientation::Vertical ? true_overlay.dx : true_overlay.dy;
    const double sign = structure.family == Family::AB ? -1.0 : 1.0;
    const double noise = normal(rng, cd_noise_sigma);
    const double cd2 = designed_gap(structure).nm + sign * o + cd_bias_nm + noise;
    return std::max(cd2, kCd2FloorNm);
}

double derive_cd2(Offset2 true_overlay, const StructureId& structure, double cd_noise_sigma,
                  std::uint64_t seed, double cd_bias_nm) {
    auto rng = make_rng(seed, {kCdsemStream});
    return derive_cd2(true_overlay, structure, cd_noise_sigma, rng, cd_bias_nm);
}

double CapacitanceModel::leak_rate(double cd2_nm) const {
    return leak_rate_max / (1.0 + std::exp((cd2_nm - leak_onset_nm) / leak_width_nm));
}

double CapacitanceModel::fail_rate(double cd2_nm) const {
    if (fail_rate_base <= 0.0) return 0.0;
    const double onset = 1.0 / (1.0 + std::exp((cd2_nm - short_threshold) / short_width));
    return fail_rate_base + (1.0 - fail_rate_base) * onset;
}

std::vector<std::string> CapacitanceModel::check() const {
    std::vector<std::string> out;
    if (!(k_geom > 0.0)) out.push_back("k_geom must be > 0");
    if (!(short_threshold < 24.0)) out.push_back("short_threshold must be < 24 nm");
    if (!(short_width > 0.0)) out.push_back("short_width must be > 0");
    if (!(sigma_rel >= 0.0)) out.push_back("sigma_rel must be >= 0");
    for (double p : {fail_rate_base, open_rate}) {
        if (!(p >= 0.0 && p <= 1.0)) out.push_back("failure probabilities must be in [0,1]");
    }
    if (!(fail_magnitude >= 0.0)) out.push_back("fail_magnitude must be >= 0");
    if (!(leak_rate_max >= 0.0 && leak_rate_max <= 1.0)) out.push_back("leak_rate_max must be in [0,1]");
    if (!(leak_width_nm > 0.0)) out.push_back("leak_width_nm must be > 0");
    if (!(leak_min_rel >= 0.0 && leak_min_rel <= leak_max_rel)) out.push_back("need 0 <= leak_min_rel <= leak_max_rel");
    return out;
}

CapacitanceSample derive_capacitance(double cd2_effective_nm, const CapacitanceModel& model,
                                     const StructureId& structure, Rng& rng) {
    if (!(cd2_effective_nm > 0.0)) {
        throw std::invalid_argument("derive_capacitance: non-positive gap");
    }
    const double eta = normal(rng, model.sigma_rel);
    const double u_short = uniform01(rng);
    const double u_open = uniform01(rng);
    const double spike = exponential(rng);
    const double low = uniform01(rng);
    const double u_leak = uniform01(rng);
    const double leak_size = uniform01(rng);

    CapacitanceSample out;
    out.record.structure = structure;
    double nominal = model.k_geom / cd2_effective_nm * (1.0 + eta);
    if (u_leak < model.leak_rate(cd2_effective_nm)) {
        nominal *= 1.0 + model.leak_min_rel + (model.leak_max_rel - model.leak_min_rel) * leak_size;
        out.leakage = true;
    }
    if (u_short < model.fail_rate(cd2_effective_nm)) {
        out.record.value_fF = nominal + model.fail_magnitude * (0.5 + spike);
        out.injected_failure = true;
    } else if (model.fail_rate_base > 0.0 && u_open < model.open_rate) {
        out.record.value_fF = nominal * (0.02 + 0.28 * low);
        out.injected_failure = true;
    } else {
        out.record.value_fF = nominal;
    }
    return out;
}

CapacitanceSample derive_capacitance(double cd2_effective_nm, const CapacitanceModel& model,
                                     const StructureId& structure, std::uint64_t seed) {
    auto rng = make_rng(seed, {kCapacitanceStream});
    return derive_capacitance(cd2_effective_nm, model, structure, rng);
}

Offset2 registration_from_m1b_shift(Offset2 m1b_shift) { return {-m1b_shift.dx, -m1b_shift.dy}; }

ScenarioConfig ScenarioConfig::defaults() {
    ScenarioConfig c;
    auto& fp = c.fingerprint;
    fp.smooth_x = {0.0, 0.8, -0.5, 0.6, 0.3, -0.4};
    fp.smooth_y = {0.0, -0.6, 0.7, -0.3, 0.5, 0.6};
    fp.field_mag_nm = 0.4;
    fp.field_rot_nm = 0.2;
    fp.noise_sigma_adi = 0.6;
    fp.noise_sigma_aei = 0.3;
    fp.noise_sigma_cmp = 0.7;
    fp.outlier_rate_adi = 0.03;
    fp.outlier_rate_aei = 0.005;
    fp.outlier_rate_cmp = 0.04;
    fp.outlier_magnitude_nm = 8.0;
    c.wafers = {
        {"D02", Recipe::NonProgrammed},
        {"D03", Recipe::NonProgrammed},
        {"D10", Recipe::Programmed},
        {"D11", Recipe::Programmed},
    };
    return c;
}

std::vector<std::string> ScenarioConfig::check() const {
    std::vector<std::string> out = fingerprint.check();
    if (n_dies <= 0) out.push_back("n_dies must be > 0");
    if (!(programmed_fraction >= 0.0 && programmed_fraction <= 1.0)) {
        out.push_back("programmed_fraction must be in [0,1]");
    }
    if (!(smooth_jitter_nm >= 0.0)) out.push_back("smooth_jitter_nm must be >= 0");
    if (!(cdsem.noise_sigma_nm >= 0.0)) out.push_back("cdsem noise must be >= 0");
    if (!(cdsem.p_five_targets >= 0.0 && cdsem.p_five_targets <= 1.0)) {
        out.push_back("p_five_targets must be in [0,1]");
    }
    if (!(cap_gap_noise_nm >= 0.0)) out.push_back("cap_gap_noise_nm must be >= 0");
    for (auto& p : capacitance.check()) out.push_back(p);
    std::vector<std::string> ids;
    for (const auto& w : wafers) {
        if (w.wafer_id.empty()) out.push_back("wafer id must be non-empty");
        ids.push_back(w.wafer_id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) out.push_back("duplicate wafer id");
    return out;
}

SyntheticWafer generate_wafer(const ScenarioConfig& config, const WaferSpec& wafer, std::uint64_t seed,
                              std::uint64_t pattern_seed) {
    if (auto problems = config.check(); !problems.empty()) {
        throw std::invalid_argument("scenario config: " + problems.front());
    }
    const WaferGrid grid = make_grid(config.n_dies);

    FingerprintConfig fp = config.fingerprint;
    fp.programmed = wafer.recipe == Recipe::Programmed;
    if (fp.programmed && fp.offsets.empty()) {
        fp.offsets = make_programmed_offsets(grid, config.programmed_fraction, pattern_seed);
    }
    {
        auto rng = make_rng(seed, {kSmoothStream});
        for (auto* poly : {&fp.smooth_x, &fp.smooth_y}) {
            for (double& c : *poly) c += normal(rng, config.smooth_jitter_nm);
        }
    }
    const Offset2 reg = registration_from_m1b_shift(config.m1b_shift);
    fp.registration.dx += reg.dx;
    fp.registration.dy += reg.dy;

    SyntheticWafer out;
    auto& data = out.data;
    data.wafer_id = wafer.wafer_id;
    data.recipe = wafer.recipe;
    data.grid = grid.dies;
    data.seed = seed;

    for (std::size_t i = 0; i < kAllDboSteps.size(); ++i) {
        auto gen = generate_overlay(fp, grid, kAllDboSteps[i], seed);
        out.truth.overlay_outliers[i] = gen.outlier_count;
        if (i == 0) out.truth.die_overlay = gen.true_die_overlay;
        for (auto& rec : gen.records) data.overlay.push_back(std::move(rec));
    }
    out.truth.dies = grid.dies;
    for (auto die : grid.dies) {
        auto it = fp.offsets.find(die);
        out.truth.programmed_offset.push_back(fp.programmed && it != fp.offsets.end() ? it->second
                                                                                      : Offset2{});
    }

    if (config.cdsem_enabled) {
        const auto& targets = cdsem_target_template();
        for (auto die : grid.dies) {
            auto rng = make_rng(seed, {kCdsemStream, die_key(die)});
            const bool five = uniform01(rng) < config.cdsem.p_five_targets;
            const auto dropped = static_cast<std::size_t>(uniform01(rng) * targets.size());
            const double r2 = grid.radius2(die);
            for (std::size_t t = 0; t < targets.size(); ++t) {
                if (!five && t == dropped) continue;
                const auto [tx, ty] = targets[t];
                const double fx = tx / kFieldHalfWidthUm;
                const double fy = ty / kFieldHalfHeightUm;
                const auto overlay = true_site_overlay(fp, grid, die, fx, fy);
                const double bias = config.cdsem.bowl_nm * r2 + config.cdsem.field_slope_nm * fx;
                for (auto orientation : kAllOrientations) {
                    const StructureId s{Family::AB, 1, orientation, 0};
                    const double cd2 = derive_cd2(overlay, s, config.cdsem.noise_sigma_nm, rng, bias);
                    data.cdsem.push_back({die, tx, ty, s, cd2});
                }
            }
        }
    }

    if (config.capacitance_enabled) {
        for (std::size_t d = 0; d < grid.dies.size(); ++d) {
            const auto die = grid.dies[d];
            auto rng = make_rng(seed, {kCapacitanceStream, die_key(die)});
            const double bias = config.cdsem.bowl_nm * grid.radius2(die);
            const auto overlay = out.truth.die_overlay[d];
            for (auto family : kAllFamilies) {
                for (int level = kMinLevel; level <= kMaxLevel; ++level) {
                    for (auto orientation : kAllOrientations) {
                        for (int inst = 0; inst < kInstancesPerStructure; ++inst) {
                            const StructureId s{family, level, orientation, inst};
                            const double gap = derive_cd2(overlay, s, config.cap_gap_noise_nm, rng, bias);
                            auto sample = derive_capacitance(gap, config.capacitance, s, rng);
                            sample.record.die = die;
                            data.capacitance.push_back(sample.record);
                            out.truth.injected_failure.push_back(sample.injected_failure);
                            out.truth.leakage.push_back(sample.leakage);
                        }
                    }
                }
            }
        }
    }
    return out;
}

std::vector<SyntheticWafer> generate_scenario(const ScenarioConfig& config, std::uint64_t seed) {
    const std::uint64_t pattern_seed = derive_seed(seed, {kPatternStream});
    std::vector<SyntheticWafer> out;
    for (const auto& wafer : config.wafers) {
        const std::uint64_t wafer_seed = derive_seed(seed, {string_key(wafer.wafer_id)});
        out.push_back(generate_wafer(config, wafer, wafer_seed, pattern_seed));
    }
    return out;
}

}  // namespace waferwise::fabsim
