#pragma once

#include <string>
#include <vector>

#include "noiselab/datasets.hpp"
#include "noiselab/model.hpp"

namespace noiselab {

/// Per-injection-point repetition counts summing exactly to the budget.
struct ExecutionPlan {
  enum class Source { Uniform, Guided };
  std::vector<int> reps;  // one per injection point, every entry >= 1
  int total = 0;          // == sum(reps)
  Source source = Source::Uniform;
};

/// Budget shares proportional to 1/mu (more repetitions for more sensitive
/// layers), made integral by largest-remainder rounding with a floor of 1;
/// ties go to the smaller layer index. Scale-invariant in mu.
ExecutionPlan allocate_repetitions(const std::vector<double>& mus, int n_t);

/// Even split of the budget (remainder to the smallest indices).
ExecutionPlan uniform_plan(int layer_count, int n_t);

/// Noisy evaluation where the activation at injection point i is computed
/// n_i times with independent noise and averaged element-wise (reducing the
/// injected std by 1/sqrt(n_i)). Noise applies globally.
std::pair<double, double> evaluate_with_plan(Model& model, const Dataset& ds,
                                             const NoiseSpec& noise, const ExecutionPlan& plan,
                                             RngStream rng, int repeats);

struct PlanComparison {
  ExecutionPlan uniform, guided;
  double uniform_mean = 0, uniform_std = 0;
  double guided_mean = 0, guided_std = 0;
  std::vector<double> uniform_accs, guided_accs;  // per seed
};

/// Runs both plans over evaluation seeds and reports mean +- std accuracy
/// plus the plans themselves.
PlanComparison compare_uniform_vs_guided(Model& model, const Dataset& ds,
                                         const NoiseSpec& noise, int n_t,
                                         const std::vector<double>& mus,
                                         const std::vector<std::uint64_t>& seeds,
                                         int repeats = 1);

/// Plan serialization: JSON list of {layer_id, layer_name, n_i}.
std::string plan_to_json(const ExecutionPlan& plan, const Model& model);

/// Comparison report CSV (mirrors the uniform/guided table layout).
void write_comparison_csv(const std::string& path, const PlanComparison& cmp,
                          const Model& model, const std::string& label);

}  // namespace noiselab
