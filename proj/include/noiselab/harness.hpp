#pragma once

#include <atomic>
#include <optional>
#include <string>
#include <vector>

#include "noiselab/datasets.hpp"
#include "noiselab/model.hpp"
#include "noiselab/robustfit.hpp"
#include "noiselab/serialize.hpp"
#include "noiselab/train.hpp"

namespace noiselab {

struct GridSpec {
  enum class Scale { Log, Linear };
  Scale scale = Scale::Log;
  double lo = 1e-2, hi = 1e2;
  int count = 25;
  bool include_zero = false;
  std::vector<double> explicit_values;  // wins when non-empty

  std::vector<double> values() const;
  json to_json() const;
  static GridSpec from_json(const json& j);
  static GridSpec parse(const std::string& text);  // "log:1e-2:1e2:25" / "linear:0:2:11"
};

enum class SweepMode { Global, Walking, MixedGrid };

inline const char* to_string(SweepMode m) {
  switch (m) {
    case SweepMode::Global: return "global";
    case SweepMode::Walking: return "walking";
    case SweepMode::MixedGrid: return "mixed";
  }
  return "?";
}

struct ExperimentConfig {
  std::string model_arch = "mlp";  // mlp | lenet5 | linear
  bool batchnorm = false;
  std::string dataset = "mnist";  // mnist | fashion | cifar10 | blobs
  std::string data_dir;           // resolved via $NOISELAB_DATA when empty
  Index subset_n = 0;             // train subset, 0 = full
  Index test_subset_n = 0;        // evaluation subset, 0 = full
  int blobs_classes = 10;
  Index blobs_per_class = 200;
  Index blobs_dim = 16;
  double blobs_separation = 3.0;
  std::uint64_t data_seed = kDefaultSplitSeed;

  NoiseKind noise_kind = NoiseKind::Additive;
  Phase phase = Phase::TrainAndInference;
  SweepMode mode = SweepMode::Global;
  std::vector<int> layers;  // walking positions; empty = all injection points
  GridSpec grid;            // 1-D sigma sweep
  GridSpec grid_add{GridSpec::Scale::Log, 1e-2, 1e6, 9, false, {}};
  GridSpec grid_mul{GridSpec::Scale::Log, 1e-2, 1e6, 9, false, {}};
  bool both_orders = true;  // mixed grids run mul-first and add-first
  int mixed_layer = -1;     // fixed walking layer of the mixed grid

  std::vector<std::uint64_t> seeds{1, 2, 3};
  TrainConfig train;
  int eval_repeats = 3;
  int workers = 1;
  bool save_checkpoints = false;
  std::string out_dir;

  json to_json() const;
  static ExperimentConfig from_json(const json& j);
  /// Hash over the semantic fields (identical experiments share it; out_dir
  /// and workers do not participate).
  std::string hash() const;
};

/// One sweep cell result. Equality/resume keys use every field except
/// wallclock_s and checkpoint.
struct ExperimentRecord {
  std::string config_hash;
  std::string mode;    // global | walking | mixed
  int layer_id = -1;   // -1 for global
  std::string layer_name = "global";
  NoiseKind noise_kind = NoiseKind::Additive;
  MixOrder order = MixOrder::MultiplicativeFirst;
  double sigma_add = 0.0, sigma_mul = 0.0;
  Phase phase = Phase::TrainAndInference;
  bool clamp = false;
  std::uint64_t seed = 0;
  double accuracy = 0.0, accuracy_std = 0.0;
  int epochs_run = 0;
  bool diverged = false;
  double wallclock_s = 0.0;
  std::string checkpoint;

  /// Resume/determinism identity (excludes wallclock and artifact refs).
  std::string cell_key() const;
};

void write_records_csv(const std::string& path, const std::vector<ExperimentRecord>& records);
std::vector<ExperimentRecord> read_records_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Cooperative stop for Ctrl-C: sweeps finish in-flight cells, flush, and
/// return partial results (rerunning resumes without duplicating cells).
void request_harness_stop();
void clear_harness_stop();
bool harness_stop_requested();

/// Train/evaluate over the sigma grid with noise at every injection point.
/// Inference-only phases train one clean model per seed and reuse it across
/// the grid. Results append to <out_dir>/records.csv as cells finish, in
/// canonical order; existing cells are skipped on rerun.
std::vector<ExperimentRecord> run_global_sweep(const ExperimentConfig& config);

/// Full (layer x sigma x seed) factorial with noise at exactly one injection
/// point per cell.
std::vector<ExperimentRecord> run_walking_sweep(const ExperimentConfig& config);

/// 2-D (sigma_add x sigma_mul) grid of mixed noise at one fixed walking
/// layer, for one or both operation orders.
std::vector<ExperimentRecord> run_mixed_grid(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Aggregation / fitting
// ---------------------------------------------------------------------------

struct FitKey {
  std::string mode;
  int layer_id = -1;
  std::string layer_name;
  NoiseKind noise_kind = NoiseKind::Additive;
  MixOrder order = MixOrder::MultiplicativeFirst;
  Phase phase = Phase::TrainAndInference;
  bool clamp = false;

  std::string str() const;
};

struct FitOutcome {
  FitKey key;
  AccuracyCurve curve;            // seed-aggregated (sigma, mean, stderr)
  std::optional<FitResult> fit;   // empty on per-curve fit failure
  std::string error;              // failure reason when fit is empty
  /// Headline metric: multiplicative curves report a_min, others mu.
  std::string headline_metric() const;
};

/// Groups records by (mode, layer, noise kind, order, phase, clamp),
/// aggregates seeds into mean/stderr per sigma, and fits each curve (single
/// logistic, upgraded to the stacked double fit when AICc prefers it).
/// Fit failures are carried per curve, never thrown.
std::vector<FitOutcome> fit_all(const std::vector<ExperimentRecord>& records);

// ---------------------------------------------------------------------------
// Shared plumbing (used by the CLI and the acceptance suite)
// ---------------------------------------------------------------------------

DatasetBundle load_bundle_for(const ExperimentConfig& config);
ModelSpec model_spec_for(const ExperimentConfig& config, const DatasetBundle& data);

/// Deterministic per-cell evaluation stream.
RngStream cell_eval_stream(std::uint64_t seed, int layer_id, double sigma_add, double sigma_mul,
                           int order_tag);

}  // namespace noiselab
