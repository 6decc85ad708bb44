#pragma once

#include <string>
#include <vector>

#include "noiselab/datasets.hpp"
#include "noiselab/model.hpp"

namespace noiselab {

enum class HistScale { Log10Magnitude, Linear };

/// Histogram of post-injection activation values at one injection point.
/// Log-magnitude edges are in decades of |x| (the first bin also absorbs
/// zeros and underflow); linear edges are in raw activation units.
struct ActivationHistogram {
  int layer_id = -1;
  std::string layer_name;
  HistScale scale = HistScale::Log10Magnitude;
  bool noisy = false;
  std::vector<double> edges;        // size bins+1
  std::vector<std::int64_t> counts; // size bins
  std::int64_t total = 0;           // == sum(counts)

  double bin_center(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
};

struct BimodalityResult {
  bool is_bimodal = false;
  double valley = 0.0;  // |x| magnitude at the valley between the two modes
};

/// Threshold quantization of in-flight activations: |x| below the cut becomes
/// exactly 0; values above are replaced by their cluster mean (split by sign
/// for the ternary variant).
struct QuantizationRule {
  enum class Levels { BinaryZeroPeak, TernarySymmetric };
  int layer_id = -1;
  Levels levels = Levels::BinaryZeroPeak;
  std::vector<double> thresholds;  // 1 cut (binary/ternary) or 2 (pos/neg cuts)
  double pos_value = 0.0;          // nonzero-cluster replacement (x > cut)
  double neg_value = 0.0;          // ternary: x < -cut replacement

  double pos_threshold() const { return thresholds.at(0); }
  double neg_threshold() const { return thresholds.size() > 1 ? thresholds[1] : thresholds[0]; }
};

/// Paired noisy/clean histograms (log-magnitude and linear) at every
/// injection point, over a fixed evaluation sample.
std::vector<ActivationHistogram> capture_histograms(Model& model, const Dataset& sample,
                                                    const InjectionPlan& plan, int bins,
                                                    std::uint64_t seed = 1);

/// Detects a two-mode split on a log-magnitude histogram: the two largest
/// local maxima must each carry at least 5% of the mass on their side and the
/// valley between them must stay below 20% of the smaller peak height.
BimodalityResult detect_bimodality(const ActivationHistogram& hist);

/// Builds a quantization rule from noisy activations captured at one
/// injection point: cut at the geometric mean of the two detected peak
/// magnitudes, cluster replacement values from the same sample. Returns
/// ternary when a negative cluster exists.
QuantizationRule build_quantization_rule(Model& model, const Dataset& sample,
                                         const InjectionPlan& plan, int layer_id,
                                         std::uint64_t seed = 1);

/// Accuracy with and without the rule applied after noise injection, under
/// identical RNG streams.
std::pair<double, double> quantize_probe(Model& model, const Dataset& ds,
                                         const InjectionPlan& plan, const QuantizationRule& rule,
                                         std::uint64_t seed = 1);

/// average_weight_magnitude(unclamped) / average_weight_magnitude(clamped)
/// for one learnable layer (1-based conv/fc ordinal).
double weight_magnitude_ratio(const Model& unclamped, const Model& clamped, int ordinal);

/// Histogram dump, one file per scale: layer_id,bin_lo,bin_hi,count,noisy_flag.
void write_histogram_csv(const std::string& path, const std::vector<ActivationHistogram>& hists,
                         HistScale scale);

}  // namespace noiselab
