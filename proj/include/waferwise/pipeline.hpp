#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "waferwise/clean.hpp"
#include "waferwise/learn.hpp"
#include "waferwise/matrix.hpp"
#include "waferwise/model.hpp"

namespace waferwise::pipeline {

enum class ExperimentKind { Cd2Prediction, CapacitancePrediction };

std::string_view to_string(ExperimentKind kind);

struct ByWafer {
    std::vector<std::string> train_ids;
    std::string test_id;
};

/// Random 80-20 split stratified by wafer and die ring (center, middle, edge).
struct Pooled8020 {
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
};

using SplitSpec = std::variant<ByWafer, Pooled8020>;

std::string describe(const SplitSpec& split);

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::Cd2Prediction;
    DboStep dbo_step = DboStep::ADI;
    Orientation orientation = Orientation::Horizontal;
    Family family = Family::AB;  // capacitance target structure
    int level = 1;
    std::vector<learn::ModelSpec> models;
    SplitSpec split;
    /// Wafers entering the experiment; empty means all wafers that carry the data.
    std::vector<std::string> wafer_ids;
    bool clean = true;  // capacitance only
    clean::CleanOptions clean_options;
    int jobs = 1;

    /// Train D02, D03, D11; test D10; the four default models.
    static ExperimentSpec cd2_default(DboStep step, Orientation orientation, std::uint64_t seed = 0);
    /// Wafers D02 and D10 pooled 80-20; the four default models.
    static ExperimentSpec capacitance_default(DboStep step, Orientation orientation, Family family, int level,
                                              std::uint64_t seed = 0);
};

/// The four models compared throughout: Linear, SVR, RandomForest, ExtraTrees.
std::vector<learn::ModelSpec> default_models(std::uint64_t seed);

struct RowMeta {
    std::string wafer_id;
    DieIndex die;
    std::size_t record_index = 0;  // into the wafer's cdsem or capacitance list
};

struct Assembled {
    FeatureMatrix x;
    std::vector<double> y;
    std::vector<RowMeta> meta;
    std::size_t dropped = 0;  // records whose die has no overlay at the step
};

inline constexpr std::size_t kCd2FeatureCount = kOverlaySites + 4;
inline constexpr std::size_t kCapFeatureCount = kOverlaySites + 3;

/// One row per CD-SEM record of the orientation: 26 overlay values of the die (Y direction for
/// horizontal structures, X for vertical), die col, die row, target x, target y.
Assembled assemble_cd2_features(std::span<const WaferDataset> wafers, DboStep step, Orientation orientation);

/// One row per capacitance record of the structure type: 26 overlay values (X direction for
/// horizontal structures, Y for vertical), die col, die row, instance index.
Assembled assemble_cap_features(std::span<const WaferDataset> wafers, DboStep step, Orientation orientation,
                                Family family, int level);

enum class DieRing { Center, Middle, Edge };

/// Ring of a die by normalized radius on its wafer grid: < 1/3 center, < 2/3 middle.
DieRing die_ring(const WaferDataset& wafer, DieIndex die);

struct SplitRows {
    std::vector<std::size_t> train;  // ascending
    std::vector<std::size_t> test;   // ascending
};

/// Throws Error("invalid_input") when a ByWafer id is absent or either side is empty.
SplitRows split_rows(const Assembled& data, std::span<const WaferDataset> wafers, const SplitSpec& split);

struct CellResult {
    std::string model;
    DboStep step = DboStep::ADI;
    Orientation orientation = Orientation::Horizontal;
    std::string target;  // "CD2_AB1" or a structure type such as "BA4"
    std::string mode;    // "clean", "raw" or "-" for CD2
    double r2_train = 0.0;
    double r2_test = 0.0;
    double mse_train = 0.0;
    double mse_test = 0.0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::map<DieIndex, double> die_mae;  // mean |error| over test rows per die
    std::string note;                    // failure or warning text
    bool failed = false;
};

struct PredictionRow {
    std::size_t cell = 0;  // index into FitReport::cells
    std::string wafer_id;
    DieIndex die;
    bool test = false;
    double y_true = 0.0;
    double y_pred = 0.0;
};

struct FitReport {
    std::vector<CellResult> cells;
    std::vector<PredictionRow> predictions;
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<clean::CleanReport> clean_reports;
};

/// Assemble, split, scale on the training rows, fit each model, evaluate. Model failures
/// become cells with failed = true and the error text in note.
FitReport run_experiment(const ExperimentSpec& spec, std::span<const WaferDataset> wafers);

/// Appends b's cells and predictions to a; metadata keys already present are kept.
void merge_reports(FitReport& a, FitReport b);

/// model,step,orientation,target,mode,r2_train,r2_test,mse_train,mse_test,n_train,n_test,note
std::string report_csv(const FitReport& report);
/// cell,model,step,orientation,target,mode,wafer_id,die_col,die_row,split,y_true,y_pred
std::string predictions_csv(const FitReport& report);
std::string metadata_csv(const FitReport& report);

/// Recomputes r2/mse per cell from a predictions CSV, keyed by cell index.
struct RecomputedMetrics {
    double r2_train = 0.0;
    double r2_test = 0.0;
    double mse_train = 0.0;
    double mse_test = 0.0;
};
std::map<std::size_t, RecomputedMetrics> recompute_metrics(std::string_view predictions_csv_text);

}  // namespace waferwise::pipeline
