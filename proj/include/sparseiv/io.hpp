#pragma once

#include "sparseiv/model.hpp"
#include "sparseiv/montecarlo.hpp"

#include <iosfwd>
#include <string>

namespace sparseiv::io {

/// Shortest round-trip form with 17 significant digits; "nan"/"inf" for
/// non-finite values.
std::string format_full(double x);

/// Reads a dataset: header row, columns `y1`, `y2`, `w_*` (controls) and
/// `z_*` (instruments), in any order. Throws Error(DataContract) naming the
/// offending column or line.
IvDataset read_dataset_csv(std::istream& in);
IvDataset read_dataset_csv(const std::string& path);

/// Writes y1, y2, the controls and the instruments with their names at full precision.
void write_dataset_csv(std::ostream& out, const IvDataset& data);

/// One row per estimator: estimator,rmse,med_bias,mad,rp05,n_zero,n_failed,n_used
void write_mc_csv(std::ostream& out, const mc::McResult& result);
/// Same numeric payload plus the design echo.
void write_mc_json(std::ostream& out, const mc::McResult& result);
/// Human table with 4 significant digits.
void write_mc_table(std::ostream& out, const mc::McResult& result);
/// Replication-level records.
void write_audit_csv(std::ostream& out, const mc::McResult& result);

}  // namespace sparseiv::io
