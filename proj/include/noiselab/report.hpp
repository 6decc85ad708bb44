#pragma once

#include <string>
#include <vector>

#include "noiselab/harness.hpp"

namespace noiselab {

/// Fit results table: one row per fitted curve with parameters, standard
/// errors, residual, AICc and the headline metric.
void write_fits_csv(const std::string& path, const std::vector<FitOutcome>& outcomes);
std::vector<std::pair<int, double>> read_layer_mus_csv(const std::string& path);

/// Seed-aggregated curve CSVs (sigma,acc_mean,acc_stderr), one per group,
/// written into `dir`; returns the file names.
std::vector<std::string> write_group_curves(const std::string& dir,
                                            const std::vector<FitOutcome>& outcomes);

struct ReportSummary {
  int files_written = 0;
  int warnings = 0;
  std::vector<std::string> notes;
};

/// Emits plot-ready CSVs from a records file: accuracy-vs-sigma curves with
/// fit overlay samples, per-layer midpoint bars, preserved relative accuracy
/// per layer, and the mixed-noise accuracy grid. Missing groups produce
/// warnings, not failures.
ReportSummary write_report(const std::string& records_path, const std::string& out_dir,
                           double a_random);

}  // namespace noiselab
