#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "waferwise/fabsim.hpp"
#include "waferwise/model.hpp"

namespace waferwise::io {

// Bundle layout:
//   <root>/manifest.csv                 wafer_id,recipe,seed
//   <root>/<wafer>/grid.csv             die_col,die_row
//   <root>/<wafer>/overlay_<step>.csv   wafer_id,die_col,die_row,step,site_index,ov_x_nm,ov_y_nm
//   <root>/<wafer>/cdsem.csv            wafer_id,die_col,die_row,target_x_um,target_y_um,family,level,orientation,cd2_nm
//   <root>/<wafer>/capacitance.csv      wafer_id,die_col,die_row,family,level,orientation,instance,cap_fF[,flagged_outlier]
// Synthetic bundles add truth_overlay.csv and truth_failures.csv next to the data.

std::string overlay_csv(const WaferDataset& wafer, DboStep step);
std::string cdsem_csv(const WaferDataset& wafer);
/// The flagged_outlier column is appended only when some record carries the flag.
std::string capacitance_csv(const WaferDataset& wafer);
std::string grid_csv(const WaferDataset& wafer);

void write_wafer(const WaferDataset& wafer, const std::filesystem::path& dir);
/// Reads whatever files of the layout exist; header names are checked exactly.
WaferDataset read_wafer(const std::filesystem::path& dir, const std::string& wafer_id, Recipe recipe,
                        std::uint64_t seed);

void write_bundle(const std::vector<WaferDataset>& wafers, const std::filesystem::path& root);
std::vector<WaferDataset> read_bundle(const std::filesystem::path& root);

void write_truth(const fabsim::SyntheticWafer& wafer, const std::filesystem::path& dir);
/// Indices into WaferDataset::capacitance of injected failures.
std::vector<std::size_t> read_injected_failures(const std::filesystem::path& dir);

}  // namespace waferwise::io
