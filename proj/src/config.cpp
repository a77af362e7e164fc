#include "waferwise/config.hpp"

#include <algorithm>
#include <cctype>

#include "waferwise/error.hpp"
#include "waferwise/io.hpp"

namespace waferwise::config {

namespace {

std::string trim(std::string_view s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<KeyInfo> build_keys() {
    const auto d = fabsim::ScenarioConfig::defaults();
    const auto& fp = d.fingerprint;
    const auto num = [](double v) { return io::format_double(v); };
    std::string wafers;
    for (const auto& w : d.wafers) {
        wafers += (wafers.empty() ? "" : ",") + w.wafer_id + ":" + std::string(to_string(w.recipe));
    }
    using T = ValueType;
    return {
        {"run.seed", T::Int, "0", "root seed of generation, splits and models"},
        {"run.jobs", T::Int, "1", "worker threads", false},
        {"run.dbo_step", T::String, "all", "adi, aei, cmp or all"},

        {"data.dir", T::String, "data", "input wafer bundle"},

        {"synth.grid", T::Int, std::to_string(d.n_dies), "dies per wafer"},
        {"synth.wafers", T::List, wafers, "wafer_id:recipe list"},
        {"synth.truth", T::Bool, "true", "write truth sidecar files"},
        {"synth.programmed_fraction", T::Double, num(d.programmed_fraction), "share of dies with programmed offsets"},
        {"synth.smooth_jitter_nm", T::Double, num(d.smooth_jitter_nm), "per-wafer fingerprint perturbation"},
        {"synth.m1b_shift_x_nm", T::Double, num(d.m1b_shift.dx), "M1B placement error, x"},
        {"synth.m1b_shift_y_nm", T::Double, num(d.m1b_shift.dy), "M1B placement error, y"},
        {"synth.noise_sigma_adi", T::Double, num(fp.noise_sigma_adi), "overlay noise at ADI, nm"},
        {"synth.noise_sigma_aei", T::Double, num(fp.noise_sigma_aei), "overlay noise at AEI, nm"},
        {"synth.noise_sigma_cmp", T::Double, num(fp.noise_sigma_cmp), "overlay noise at CMP, nm"},
        {"synth.outlier_rate_adi", T::Double, num(fp.outlier_rate_adi), "overlay outlier rate at ADI"},
        {"synth.outlier_rate_aei", T::Double, num(fp.outlier_rate_aei), "overlay outlier rate at AEI"},
        {"synth.outlier_rate_cmp", T::Double, num(fp.outlier_rate_cmp), "overlay outlier rate at CMP"},
        {"synth.outlier_magnitude_nm", T::Double, num(fp.outlier_magnitude_nm), "overlay outlier size"},
        {"synth.cdsem_noise_nm", T::Double, num(d.cdsem.noise_sigma_nm), "CD-SEM measurement noise"},
        {"synth.cdsem_bowl_nm", T::Double, num(d.cdsem.bowl_nm), "radial etch CD signature"},
        {"synth.cap_sigma_rel", T::Double, num(d.capacitance.sigma_rel), "relative capacitance noise"},
        {"synth.fail_rate_base", T::Double, num(d.capacitance.fail_rate_base), "base short rate; 0 disables failures"},
        {"synth.open_rate", T::Double, num(d.capacitance.open_rate), "open rate"},
        {"synth.cap_gap_noise_nm", T::Double, num(d.cap_gap_noise_nm), "per-instance gap noise"},

        {"clean.enabled", T::Bool, "true", "clean capacitance before capacitance experiments"},
        {"clean.eps", T::String, "auto", "DBSCAN radius in scaled units, or auto (knee)"},
        {"clean.min_samples", T::Int, "2", "DBSCAN min_samples"},

        {"experiment.target", T::String, "cd2", "cd2 or capacitance"},
        {"experiment.orientation", T::String, "both", "h, v or both"},
        {"experiment.structures", T::List, "BA4", "capacitance structure types, e.g. AB6,BA4"},
        {"experiment.models", T::List, "Linear,SVR,RandomForest,ExtraTrees", "models evaluated by eval"},
        {"experiment.split", T::String, "auto", "auto, bywafer or pooled"},
        {"experiment.train_wafers", T::List, "D02,D03,D11", "bywafer training wafers"},
        {"experiment.test_wafer", T::String, "D10", "bywafer test wafer"},
        {"experiment.wafers", T::List, "", "wafers entering the experiment; empty selects the default"},
        {"experiment.test_fraction", T::Double, "0.2", "pooled test share"},

        {"model.kind", T::String, "ExtraTrees", "model fitted by train"},
        {"model.n_trees", T::Int, "60", "trees per forest"},
        {"model.svr_c", T::Double, "3", "SVR C"},
        {"model.svr_epsilon", T::Double, "0.07", "SVR epsilon"},
        {"model.svr_gamma", T::Double, "0", "SVR gamma; 0 selects 1/(d var X)"},
        {"model.file", T::String, "model.json", "model read by predict"},

        {"predict.features", T::String, "features.csv", "feature table read by predict"},

        {"render.predictions", T::String, "predictions.csv", "predictions written by eval"},
        {"render.cell", T::String, "all", "cell index to render, or all"},
    };
}

const KeyInfo& info(const std::string& key) {
    const auto& keys = known_keys();
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const KeyInfo& k) { return k.key == key; });
    if (it == keys.end()) throw Error("invalid_config", "unknown config key '" + key + "'");
    return *it;
}

void check_value(const KeyInfo& k, const std::string& value) {
    try {
        switch (k.type) {
            case ValueType::Int: (void)io::parse_int(value); break;
            case ValueType::Double: (void)io::parse_double(value); break;
            case ValueType::Bool: {
                const auto v = lower(value);
                if (v != "true" && v != "false" && v != "1" && v != "0") throw Error("parse", value);
                break;
            }
            default: break;
        }
    } catch (const Error&) {
        throw Error("invalid_config", "bad value '" + value + "' for config key '" + k.key + "'");
    }
}

}  // namespace

const std::vector<KeyInfo>& known_keys() {
    static const std::vector<KeyInfo> keys = build_keys();
    return keys;
}

RunConfig::RunConfig() {
    for (const auto& k : known_keys()) values_[k.key] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& k = info(key);
    const std::string v = trim(value);
    check_value(k, v);
    values_[key] = v;
}

void RunConfig::load_text(std::string_view text, std::string_view source) {
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        std::string line(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = " (" + std::string(source) + ":" + std::to_string(line_no) + ")";
        if (line.front() == '[') {
            if (line.back() != ']') throw Error("invalid_config", "malformed section header '" + line + "'" + where);
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("invalid_config", "expected name = value, got '" + line + "'" + where);
        const std::string name = trim(std::string_view(line).substr(0, eq));
        const std::string key = section.empty() ? name : section + "." + name;
        try {
            set(key, line.substr(eq + 1));
        } catch (const Error& e) {
            throw Error(e.code(), e.what() + where);
        }
    }
}

void RunConfig::load_file(const std::filesystem::path& path) {
    load_text(io::read_file(path), path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error("invalid_config", "unknown config key '" + key + "'");
    return it->second;
}

long long RunConfig::get_int(const std::string& key) const { return io::parse_int(get(key)); }

double RunConfig::get_double(const std::string& key) const { return io::parse_double(get(key)); }

bool RunConfig::get_bool(const std::string& key) const {
    const auto v = lower(get(key));
    return v == "true" || v == "1";
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    const std::string& text = get(key);
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find(',', pos), text.size());
        auto item = trim(std::string_view(text).substr(pos, end - pos));
        if (!item.empty()) out.push_back(std::move(item));
        pos = end + 1;
    }
    return out;
}

std::string RunConfig::resolved_text(std::string_view header_comment) const {
    std::string out = "# " + std::string(header_comment) + "\n";
    std::string section;
    for (const auto& k : known_keys()) {
        if (!k.echoed) continue;
        const auto dot = k.key.find('.');
        const std::string s = k.key.substr(0, dot);
        if (s != section) {
            out += "\n[" + s + "]\n";
            section = s;
        }
        out += k.key.substr(dot + 1) + " = " + get(k.key) + "\n";
    }
    return out;
}

fabsim::ScenarioConfig scenario_from(const RunConfig& c) {
    auto s = fabsim::ScenarioConfig::defaults();
    s.n_dies = static_cast<int>(c.get_int("synth.grid"));
    s.wafers.clear();
    for (const auto& item : c.get_list("synth.wafers")) {
        const auto colon = item.find(':');
        const auto recipe = colon == std::string::npos ? std::nullopt : parse_recipe(item.substr(colon + 1));
        if (!recipe || colon == 0) {
            throw Error("invalid_config", "bad value '" + item + "' for config key 'synth.wafers' (want id:recipe)");
        }
        s.wafers.push_back({item.substr(0, colon), *recipe});
    }
    s.programmed_fraction = c.get_double("synth.programmed_fraction");
    s.smooth_jitter_nm = c.get_double("synth.smooth_jitter_nm");
    s.m1b_shift = {c.get_double("synth.m1b_shift_x_nm"), c.get_double("synth.m1b_shift_y_nm")};
    auto& fp = s.fingerprint;
    fp.noise_sigma_adi = c.get_double("synth.noise_sigma_adi");
    fp.noise_sigma_aei = c.get_double("synth.noise_sigma_aei");
    fp.noise_sigma_cmp = c.get_double("synth.noise_sigma_cmp");
    fp.outlier_rate_adi = c.get_double("synth.outlier_rate_adi");
    fp.outlier_rate_aei = c.get_double("synth.outlier_rate_aei");
    fp.outlier_rate_cmp = c.get_double("synth.outlier_rate_cmp");
    fp.outlier_magnitude_nm = c.get_double("synth.outlier_magnitude_nm");
    s.cdsem.noise_sigma_nm = c.get_double("synth.cdsem_noise_nm");
    s.cdsem.bowl_nm = c.get_double("synth.cdsem_bowl_nm");
    s.capacitance.sigma_rel = c.get_double("synth.cap_sigma_rel");
    s.capacitance.fail_rate_base = c.get_double("synth.fail_rate_base");
    s.capacitance.open_rate = c.get_double("synth.open_rate");
    s.cap_gap_noise_nm = c.get_double("synth.cap_gap_noise_nm");
    const auto problems = s.check();
    if (!problems.empty()) throw Error("invalid_config", "synth: " + problems.front());
    return s;
}

}  // namespace waferwise::config
