#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "waferwise/error.hpp"
#include "waferwise/learn.hpp"
#include "waferwise/log.hpp"

namespace waferwise::learn {

double population_std(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size()));
}

ScalerState fit_scaler(const Matrix& x) {
    if (x.rows() < 2) throw Error("invalid_input", "fit_scaler needs at least 2 rows");
    ScalerState state;
    state.scale.assign(x.cols(), 1.0);
    state.passthrough.assign(x.cols(), false);
    for (std::size_t c = 0; c < x.cols(); ++c) {
        const auto col = x.column(c);
        const double s = population_std(col);
        double max_abs = 0.0;
        for (double v : col) max_abs = std::max(max_abs, std::abs(v));
        if (!(s > 1e-12 * max_abs) || s == 0.0) {
            state.passthrough[c] = true;
            state.warnings.push_back("column " + std::to_string(c) + " has zero variance; passed through unscaled");
            log::warn(state.warnings.back());
        } else {
            state.scale[c] = s;
        }
    }
    return state;
}

ScalerState identity_scaler(std::size_t cols) {
    ScalerState state;
    state.scale.assign(cols, 1.0);
    state.passthrough.assign(cols, true);
    return state;
}

Matrix apply_scaler(const ScalerState& state, const Matrix& x) {
    if (x.cols() != state.cols()) {
        throw Error("arity_mismatch", "scaler expects " + std::to_string(state.cols()) + " features, got " +
                                          std::to_string(x.cols()));
    }
    Matrix out = x;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (!state.passthrough[c]) row[c] = row[c] / state.scale[c];
        }
    }
    return out;
}

namespace {

void check_pair(std::span<const double> y, std::span<const double> f, const char* what) {
    if (y.size() != f.size()) {
        throw Error("invalid_input", std::string(what) + ": length mismatch " + std::to_string(y.size()) +
                                         " vs " + std::to_string(f.size()));
    }
    if (y.size() < 2) throw Error("invalid_input", std::string(what) + ": needs at least 2 values");
}

}  // namespace

double mse(std::span<const double> y, std::span<const double> f) {
    check_pair(y, f, "mse");
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) ss += (y[i] - f[i]) * (y[i] - f[i]);
    return ss / static_cast<double>(y.size());
}

double r2(std::span<const double> y, std::span<const double> f) {
    check_pair(y, f, "r2");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - f[i]) * (y[i] - f[i]);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    if (ss_tot == 0.0) throw Error("undefined_metric", "r2 undefined: target has zero variance");
    return 1.0 - ss_res / ss_tot;
}

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Linear: return "Linear";
        case ModelKind::SVR: return "SVR";
        case ModelKind::RandomForest: return "RandomForest";
        case ModelKind::ExtraTrees: return "ExtraTrees";
    }
    return "?";
}

std::optional<ModelKind> parse_model_kind(std::string_view text) {
    std::string t(text);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (t == "linear") return ModelKind::Linear;
    if (t == "svr") return ModelKind::SVR;
    if (t == "randomforest" || t == "rf") return ModelKind::RandomForest;
    if (t == "extratrees" || t == "et") return ModelKind::ExtraTrees;
    return std::nullopt;
}

ModelSpec ModelSpec::linear() {
    ModelSpec s;
    s.kind = ModelKind::Linear;
    return s;
}

ModelSpec ModelSpec::svr_default() {
    ModelSpec s;
    s.kind = ModelKind::SVR;
    return s;
}

ModelSpec ModelSpec::random_forest(std::uint64_t seed) {
    ModelSpec s;
    s.kind = ModelKind::RandomForest;
    s.seed = seed;
    return s;
}

ModelSpec ModelSpec::extra_trees(std::uint64_t seed) {
    ModelSpec s;
    s.kind = ModelKind::ExtraTrees;
    s.seed = seed;
    return s;
}

int ModelSpec::resolved_max_features(std::size_t n_features) const {
    const int d = static_cast<int>(n_features);
    if (forest.max_features > 0) return std::min(forest.max_features, d);
    if (kind == ModelKind::RandomForest) return std::max(1, d / 3);
    return d;
}

bool ModelSpec::resolved_bootstrap() const {
    if (forest.bootstrap) return *forest.bootstrap;
    return kind == ModelKind::RandomForest;
}

std::vector<double> FittedModel::predict(const Matrix& x) const {
    if (x.cols() != n_features()) {
        throw Error("arity_mismatch", "model expects " + std::to_string(n_features()) + " features, got " +
                                          std::to_string(x.cols()));
    }
    std::vector<double> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict_row(x.row(r));
    return out;
}

FittedModel fit_model(const FeatureMatrix& x, std::span<const double> y, const ModelSpec& spec,
                      const FitOptions& options) {
    switch (spec.kind) {
        case ModelKind::Linear: return fit_linear(x, y, spec);
        case ModelKind::SVR: return fit_svr(x, y, spec);
        case ModelKind::RandomForest:
        case ModelKind::ExtraTrees: return fit_forest(x, y, spec, options);
    }
    throw Error("invalid_input", "unknown model kind");
}

}  // namespace waferwise::learn
