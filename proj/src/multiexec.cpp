#include "noiselab/multiexec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "noiselab/serialize.hpp"
#include "noiselab/train.hpp"

namespace noiselab {

ExecutionPlan allocate_repetitions(const std::vector<double>& mus, int n_t) {
  const int layers = static_cast<int>(mus.size());
  check(layers >= 1, "allocation needs at least one layer");
  check(n_t >= layers, "budget ", n_t, " cannot give each of ", layers, " layers one execution");
  double inv_sum = 0.0;
  for (double mu : mus) {
    check(std::isfinite(mu) && mu > 0.0, "midpoints must be positive and finite, got ", mu);
    inv_sum += 1.0 / mu;
  }
  std::vector<double> raw(static_cast<std::size_t>(layers));
  for (int i = 0; i < layers; ++i)
    raw[static_cast<std::size_t>(i)] = (1.0 / mus[static_cast<std::size_t>(i)]) / inv_sum * n_t;

  ExecutionPlan plan;
  plan.source = ExecutionPlan::Source::Guided;
  plan.total = n_t;
  plan.reps.resize(static_cast<std::size_t>(layers));
  std::vector<double> frac(static_cast<std::size_t>(layers));
  int assigned = 0;
  for (int i = 0; i < layers; ++i) {
    const double f = std::floor(raw[static_cast<std::size_t>(i)]);
    const int base = std::max(1, static_cast<int>(f));
    plan.reps[static_cast<std::size_t>(i)] = base;
    frac[static_cast<std::size_t>(i)] = raw[static_cast<std::size_t>(i)] - f;
    assigned += base;
  }
  // Largest-remainder distribution of the leftover budget; ties toward the
  // smaller index. Over-assignment (floors bumped to 1) reclaims from the
  // layers that exceed their raw share the most.
  std::vector<int> order(static_cast<std::size_t>(layers));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return frac[static_cast<std::size_t>(a)] > frac[static_cast<std::size_t>(b)];
  });
  std::size_t cursor = 0;
  while (assigned < n_t) {
    plan.reps[static_cast<std::size_t>(order[cursor % order.size()])] += 1;
    ++assigned;
    ++cursor;
  }
  while (assigned > n_t) {
    int victim = -1;
    double worst = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < layers; ++i) {
      if (plan.reps[static_cast<std::size_t>(i)] <= 1) continue;
      const double excess =
          static_cast<double>(plan.reps[static_cast<std::size_t>(i)]) - raw[static_cast<std::size_t>(i)];
      if (excess > worst) {
        worst = excess;
        victim = i;
      }
    }
    check(victim >= 0, "allocation reclaim failed");
    plan.reps[static_cast<std::size_t>(victim)] -= 1;
    --assigned;
  }
  return plan;
}

ExecutionPlan uniform_plan(int layer_count, int n_t) {
  check(layer_count >= 1, "uniform plan needs at least one layer");
  check(n_t >= layer_count, "budget ", n_t, " below layer count ", layer_count);
  ExecutionPlan plan;
  plan.source = ExecutionPlan::Source::Uniform;
  plan.total = n_t;
  plan.reps.assign(static_cast<std::size_t>(layer_count), n_t / layer_count);
  for (int i = 0; i < n_t % layer_count; ++i) plan.reps[static_cast<std::size_t>(i)] += 1;
  return plan;
}

std::pair<double, double> evaluate_with_plan(Model& model, const Dataset& ds,
                                             const NoiseSpec& noise, const ExecutionPlan& plan,
                                             RngStream rng, int repeats) {
  check(static_cast<int>(plan.reps.size()) == model.injection_count(), "plan covers ",
        plan.reps.size(), " points but the model has ", model.injection_count());
  for (int r : plan.reps) check(r >= 1, "repetition counts must be >= 1");
  check(ds.size() > 0, "evaluate on empty dataset");
  check(repeats >= 1, "repeats must be >= 1");

  std::vector<Index> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), Index(0));
  const InjectionPlan iplan = InjectionPlan::global(noise, Phase::InferenceOnly);
  std::vector<double> accs;
  for (int r = 0; r < repeats; ++r) {
    RngStream pass = rng.fork(StreamTag::EvalNoise).fork(static_cast<std::uint64_t>(r));
    std::int64_t correct = 0;
    Index b = 0;
    const Index eval_batch = 512;
    for (Index begin = 0; begin < ds.size(); begin += eval_batch, ++b) {
      const Index end = std::min(ds.size(), begin + eval_batch);
      std::vector<int> labels;
      Tensor batch = traindetail::gather_batch<float>(ds, order, begin, end, labels);
      ForwardOpts<float> fo;
      fo.plan = iplan;
      fo.rng = pass.fork(static_cast<std::uint64_t>(b));
      fo.repetitions = &plan.reps;
      Tensor logits = forward_pass(model, batch, fo);
      const Index k = logits.dim(1);
      for (Index i = 0; i < end - begin; ++i) {
        const float* row = logits.data.data() + i * k;
        Index arg = 0;
        for (Index j = 1; j < k; ++j)
          if (row[j] > row[arg]) arg = j;
        if (static_cast<int>(arg) == labels[static_cast<std::size_t>(i)]) ++correct;
      }
    }
    accs.push_back(static_cast<double>(correct) / static_cast<double>(ds.size()));
  }
  const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / accs.size();
  double var = 0.0;
  for (double a : accs) var += (a - mean) * (a - mean);
  return {mean, accs.size() > 1 ? std::sqrt(var / (accs.size() - 1)) : 0.0};
}

PlanComparison compare_uniform_vs_guided(Model& model, const Dataset& ds,
                                         const NoiseSpec& noise, int n_t,
                                         const std::vector<double>& mus,
                                         const std::vector<std::uint64_t>& seeds, int repeats) {
  check(!seeds.empty(), "comparison needs at least one seed");
  check(static_cast<int>(mus.size()) == model.injection_count(),
        "need one midpoint per injection point");
  PlanComparison cmp;
  cmp.uniform = uniform_plan(model.injection_count(), n_t);
  cmp.guided = allocate_repetitions(mus, n_t);
  for (std::uint64_t seed : seeds) {
    const RngStream rng = RngStream::root(seed);
    cmp.uniform_accs.push_back(
        evaluate_with_plan(model, ds, noise, cmp.uniform, rng, repeats).first);
    cmp.guided_accs.push_back(
        evaluate_with_plan(model, ds, noise, cmp.guided, rng, repeats).first);
  }
  auto stats = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double a : v) var += (a - mean) * (a - mean);
    return std::pair{mean, v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0};
  };
  std::tie(cmp.uniform_mean, cmp.uniform_std) = stats(cmp.uniform_accs);
  std::tie(cmp.guided_mean, cmp.guided_std) = stats(cmp.guided_accs);
  return cmp;
}

std::string plan_to_json(const ExecutionPlan& plan, const Model& model) {
  json arr = json::array();
  for (std::size_t i = 0; i < plan.reps.size(); ++i)
    arr.push_back(json{{"layer_id", static_cast<int>(i)},
                       {"layer_name", model.injection(static_cast<int>(i)).name},
                       {"n_i", plan.reps[i]}});
  return arr.dump(2);
}

void write_comparison_csv(const std::string& path, const PlanComparison& cmp,
                          const Model& model, const std::string& label) {
  std::ofstream out(path);
  check(out.good(), "cannot write ", path);
  out << "label,plan,executions,acc_mean,acc_std\n";
  auto plan_str = [&](const ExecutionPlan& p) {
    std::string s = "{";
    for (std::size_t i = 0; i < p.reps.size(); ++i)
      s += (i ? "|" : "") + std::to_string(p.reps[i]);
    return s + "}";
  };
  (void)model;
  out.precision(6);
  out << label << ",uniform," << plan_str(cmp.uniform) << "," << cmp.uniform_mean << ","
      << cmp.uniform_std << "\n";
  out << label << ",guided," << plan_str(cmp.guided) << "," << cmp.guided_mean << ","
      << cmp.guided_std << "\n";
}

}  // namespace noiselab
