#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "waferwise/matrix.hpp"

namespace waferwise::learn {

// ---------------------------------------------------------------------------
// Scaling: z = x / s, population standard deviation, no centering.

struct ScalerState {
    std::vector<double> scale;      // 1.0 for passthrough columns
    std::vector<bool> passthrough;  // zero-variance columns
    std::vector<std::string> warnings;

    std::size_t cols() const { return scale.size(); }
    bool operator==(const ScalerState&) const = default;
};

/// Needs at least two rows. Constant columns are recorded and passed through.
ScalerState fit_scaler(const Matrix& x);
/// Throws Error("arity_mismatch") when the column count differs.
Matrix apply_scaler(const ScalerState& state, const Matrix& x);
ScalerState identity_scaler(std::size_t cols);

/// Population standard deviation.
double population_std(std::span<const double> values);

// ---------------------------------------------------------------------------
// Metrics.

/// (1/n) Σ (y - f)².
double mse(std::span<const double> y, std::span<const double> f);
/// 1 - Σ(y - f)² / Σ(y - ȳ)². Throws Error("undefined_metric") when y is constant.
double r2(std::span<const double> y, std::span<const double> f);

// ---------------------------------------------------------------------------
// Models.

enum class ModelKind { Linear, SVR, RandomForest, ExtraTrees };

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view text);

struct SvrSettings {
    double c = 3.0;
    double epsilon = 0.07;
    /// <= 0 selects 1 / (d · var(X)) on the scaled training matrix.
    double gamma = 0.0;
    double tolerance = 1e-3;
    /// Termination also requires duality gap <= gap_tolerance · |dual objective|.
    double gap_tolerance = 1e-3;
    std::size_t max_iterations = 10'000'000;

    bool operator==(const SvrSettings&) const = default;
};

struct ForestSettings {
    int n_trees = 60;
    int min_samples_split = 2;
    /// 0 selects the default: d/3 for RandomForest, d for ExtraTrees.
    int max_features = 0;
    /// Defaults: true for RandomForest, false for ExtraTrees.
    std::optional<bool> bootstrap;

    bool operator==(const ForestSettings&) const = default;
};

struct ModelSpec {
    ModelKind kind = ModelKind::ExtraTrees;
    SvrSettings svr;
    ForestSettings forest;
    std::uint64_t seed = 0;
    bool scale_features = true;

    static ModelSpec linear();
    static ModelSpec svr_default();
    static ModelSpec random_forest(std::uint64_t seed = 0);
    static ModelSpec extra_trees(std::uint64_t seed = 0);

    int resolved_max_features(std::size_t n_features) const;
    bool resolved_bootstrap() const;

    bool operator==(const ModelSpec&) const = default;
};

struct LinearParams {
    std::vector<double> coef;  // in scaled feature units
    double intercept = 0.0;
    std::size_t rank = 0;

    bool operator==(const LinearParams&) const = default;
};

struct SvrStats {
    std::size_t iterations = 0;
    double dual_objective = 0.0;  // maximization form
    double primal_objective = 0.0;
    double duality_gap = 0.0;
    double final_violation = 0.0;

    bool operator==(const SvrStats&) const = default;
};

struct SvrParams {
    Matrix support;                 // scaled support vectors
    std::vector<double> dual_coef;  // α - α*
    double bias = 0.0;
    double gamma = 0.0;
    SvrStats stats;

    bool operator==(const SvrParams&) const = default;
};

struct TreeNode {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;  // go left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;  // root at 0

    double predict(std::span<const double> row) const;
    std::size_t depth() const;
    bool operator==(const Tree&) const = default;
};

struct ForestParams {
    std::vector<Tree> trees;

    bool operator==(const ForestParams&) const = default;
};

using ModelParams = std::variant<LinearParams, SvrParams, ForestParams>;

struct FittedModel {
    ModelSpec spec;
    std::vector<std::string> col_names;
    ScalerState scaler;
    std::size_t n_train = 0;
    ModelParams params;
    std::vector<std::string> warnings;

    std::size_t n_features() const { return scaler.cols(); }

    /// Throws Error("arity_mismatch") naming expected and received feature counts.
    std::vector<double> predict(const Matrix& x) const;
    double predict_row(std::span<const double> row) const;

    bool operator==(const FittedModel&) const = default;
};

struct FitOptions {
    int jobs = 1;
};

/// Least squares via complete orthogonal decomposition of the centered design;
/// rank-deficient inputs get the minimum-norm solution and a warning.
FittedModel fit_linear(const FeatureMatrix& x, std::span<const double> y,
                       const ModelSpec& spec = ModelSpec::linear());
/// ε-insensitive RBF SVR solved in the dual by SMO. Throws Error("nonconvergence")
/// with the duality gap when the iteration cap is hit.
FittedModel fit_svr(const FeatureMatrix& x, std::span<const double> y,
                    const ModelSpec& spec = ModelSpec::svr_default());
/// CART ensemble; kind must be RandomForest or ExtraTrees.
FittedModel fit_forest(const FeatureMatrix& x, std::span<const double> y, const ModelSpec& spec,
                       const FitOptions& options = {});
/// Dispatch on spec.kind.
FittedModel fit_model(const FeatureMatrix& x, std::span<const double> y, const ModelSpec& spec,
                      const FitOptions& options = {});

/// One fully grown regression tree over the given rows (duplicates allowed).
Tree build_tree(const Matrix& x, std::span<const double> y, std::span<const std::size_t> rows,
                ModelKind kind, int max_features, int min_samples_split, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Persistence: self-describing JSON, format "waferwise-model", version 1.

inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const FittedModel& model);
FittedModel deserialize_model(std::string_view text);
void save_model(const FittedModel& model, const std::filesystem::path& path);
FittedModel load_model(const std::filesystem::path& path);

}  // namespace waferwise::learn
