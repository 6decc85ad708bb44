#include "noiselab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "noiselab/train.hpp"

namespace noiselab {

namespace {

constexpr double kLogFloor = -8.0;  // decades; |x| below 1e-8 lands in bin 0
constexpr double kLogCeil = 12.0;

ActivationHistogram make_log_hist(const Tensor& values, int bins) {
  ActivationHistogram h;
  h.scale = HistScale::Log10Magnitude;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  const double width = (kLogCeil - kLogFloor) / bins;
  for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = kLogFloor + i * width;
  for (Index i = 0; i < values.numel(); ++i) {
    const double mag = std::abs(static_cast<double>(values.data[i]));
    double lg = mag > 0.0 ? std::log10(mag) : kLogFloor;
    lg = std::clamp(lg, kLogFloor, kLogCeil - 1e-12);
    const int b = static_cast<int>((lg - kLogFloor) / width);
    ++h.counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
  }
  h.total = values.numel();
  return h;
}

ActivationHistogram make_linear_hist(const Tensor& values, int bins) {
  ActivationHistogram h;
  h.scale = HistScale::Linear;
  double lo = 0.0, hi = 0.0;
  if (values.numel() > 0) {
    lo = static_cast<double>(values.data.minCoeff());
    hi = static_cast<double>(values.data.maxCoeff());
  }
  if (hi <= lo) hi = lo + 1.0;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  const double width = (hi - lo) / bins;
  for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = lo + i * width;
  for (Index i = 0; i < values.numel(); ++i) {
    const int b = static_cast<int>((static_cast<double>(values.data[i]) - lo) / width);
    ++h.counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
  }
  h.total = values.numel();
  return h;
}

constexpr Index kProbeSample = 2048;
constexpr Index kProbeBatch = 256;

/// Run the probe sample through the model, collecting post-injection values
/// at the requested points (all points when `ids` is empty).
std::map<int, Tensor> collect_activations(Model& model, const Dataset& sample,
                                          const InjectionPlan& plan, const std::set<int>& ids,
                                          std::uint64_t seed) {
  std::set<int> want = ids;
  if (want.empty())
    for (const auto& ii : model.injections) want.insert(ii.id);
  std::map<int, std::vector<float>> parts;
  const Index n = std::min<Index>(sample.size(), kProbeSample);
  std::vector<Index> order(static_cast<std::size_t>(sample.size()));
  std::iota(order.begin(), order.end(), Index(0));
  const RngStream rng = RngStream::root(seed).fork(StreamTag::EvalNoise);
  Index b = 0;
  for (Index begin = 0; begin < n; begin += kProbeBatch, ++b) {
    const Index end = std::min(n, begin + kProbeBatch);
    std::vector<int> labels;
    Tensor batch = traindetail::gather_batch<float>(sample, order, begin, end, labels);
    auto [logits, captured] =
        forward(model, batch, plan, rng.fork(static_cast<std::uint64_t>(b)), want);
    for (auto& [id, t] : captured) {
      auto& dst = parts[id];
      dst.insert(dst.end(), t.data.data(), t.data.data() + t.numel());
    }
  }
  std::map<int, Tensor> out;
  for (auto& [id, v] : parts) {
    Tensor t = Tensor::zeros({static_cast<Index>(v.size())});
    std::copy(v.begin(), v.end(), t.data.data());
    out[id] = std::move(t);
  }
  return out;
}

}  // namespace

std::vector<ActivationHistogram> capture_histograms(Model& model, const Dataset& sample,
                                                    const InjectionPlan& plan, int bins,
                                                    std::uint64_t seed) {
  check(bins >= 4, "need at least 4 histogram bins");
  std::vector<ActivationHistogram> out;
  for (const bool noisy : {false, true}) {
    const InjectionPlan eff = noisy ? plan : InjectionPlan::none();
    auto acts = collect_activations(model, sample, eff, {}, seed);
    for (auto& [id, values] : acts) {
      for (const HistScale scale : {HistScale::Log10Magnitude, HistScale::Linear}) {
        ActivationHistogram h = scale == HistScale::Log10Magnitude
                                    ? make_log_hist(values, bins)
                                    : make_linear_hist(values, bins);
        h.layer_id = id;
        h.layer_name = model.injection(id).name;
        h.noisy = noisy;
        out.push_back(std::move(h));
      }
    }
  }
  return out;
}

BimodalityResult detect_bimodality(const ActivationHistogram& hist) {
  BimodalityResult res;
  const int bins = static_cast<int>(hist.counts.size());
  if (hist.total <= 0 || bins < 3) return res;

  // 3-wide smoothing to suppress single-bin jitter, then the two tallest
  // local maxima.
  std::vector<double> sm(static_cast<std::size_t>(bins));
  for (int i = 0; i < bins; ++i) {
    double acc = 0.0;
    int cnt = 0;
    for (int j = std::max(0, i - 1); j <= std::min(bins - 1, i + 1); ++j, ++cnt)
      acc += static_cast<double>(hist.counts[static_cast<std::size_t>(j)]);
    sm[static_cast<std::size_t>(i)] = acc / cnt;
  }
  std::vector<int> peaks;
  for (int i = 0; i < bins; ++i) {
    const double left = i > 0 ? sm[static_cast<std::size_t>(i - 1)] : -1.0;
    const double right = i < bins - 1 ? sm[static_cast<std::size_t>(i + 1)] : -1.0;
    if (sm[static_cast<std::size_t>(i)] > left && sm[static_cast<std::size_t>(i)] >= right &&
        sm[static_cast<std::size_t>(i)] > 0.0)
      peaks.push_back(i);
  }
  if (peaks.size() < 2) return res;
  std::sort(peaks.begin(), peaks.end(), [&](int a, int b) {
    return sm[static_cast<std::size_t>(a)] > sm[static_cast<std::size_t>(b)];
  });
  int p1 = peaks[0], p2 = peaks[1];
  if (p1 > p2) std::swap(p1, p2);
  if (p2 - p1 < 2) return res;

  // Deepest valley between them (raw counts).
  int valley = p1 + 1;
  for (int i = p1 + 1; i < p2; ++i)
    if (hist.counts[static_cast<std::size_t>(i)] < hist.counts[static_cast<std::size_t>(valley)])
      valley = i;

  const double mass_lo =
      std::accumulate(hist.counts.begin(), hist.counts.begin() + valley + 1, 0.0);
  const double mass_hi =
      std::accumulate(hist.counts.begin() + valley + 1, hist.counts.end(), 0.0);
  const double total = static_cast<double>(hist.total);
  const double h1 = static_cast<double>(hist.counts[static_cast<std::size_t>(p1)]);
  const double h2 = static_cast<double>(hist.counts[static_cast<std::size_t>(p2)]);
  const double hv = static_cast<double>(hist.counts[static_cast<std::size_t>(valley)]);

  const bool mass_ok = mass_lo >= 0.05 * total && mass_hi >= 0.05 * total;
  const bool valley_ok = hv < 0.2 * std::min(h1, h2);
  res.is_bimodal = mass_ok && valley_ok;
  const double center = hist.bin_center(static_cast<std::size_t>(valley));
  res.valley = hist.scale == HistScale::Log10Magnitude ? std::pow(10.0, center) : center;
  return res;
}

QuantizationRule build_quantization_rule(Model& model, const Dataset& sample,
                                         const InjectionPlan& plan, int layer_id,
                                         std::uint64_t seed) {
  model.injection(layer_id);
  auto acts = collect_activations(model, sample, plan, {layer_id}, seed);
  const Tensor& values = acts.at(layer_id);
  ActivationHistogram h = make_log_hist(values, 96);
  h.layer_id = layer_id;
  const BimodalityResult bi = detect_bimodality(h);
  check(bi.is_bimodal, "activations at injection point ", layer_id,
        " are not bimodal; no quantization rule can be built");

  QuantizationRule rule;
  rule.layer_id = layer_id;
  rule.thresholds = {bi.valley};

  double pos_sum = 0.0, neg_sum = 0.0;
  std::int64_t pos_n = 0, neg_n = 0;
  for (Index i = 0; i < values.numel(); ++i) {
    const double v = static_cast<double>(values.data[i]);
    if (v > bi.valley) {
      pos_sum += v;
      ++pos_n;
    } else if (v < -bi.valley) {
      neg_sum += v;
      ++neg_n;
    }
  }
  check(pos_n + neg_n > 0, "no activations above the quantization cut");
  rule.pos_value = pos_n > 0 ? pos_sum / pos_n : 0.0;
  rule.neg_value = neg_n > 0 ? neg_sum / neg_n : 0.0;
  rule.levels = neg_n > 0 ? QuantizationRule::Levels::TernarySymmetric
                          : QuantizationRule::Levels::BinaryZeroPeak;
  return rule;
}

namespace {

void apply_rule(const QuantizationRule& rule, Tensor& x) {
  const float pos_cut = static_cast<float>(rule.pos_threshold());
  const float neg_cut = static_cast<float>(rule.neg_threshold());
  const float pos_v = static_cast<float>(rule.pos_value);
  const float neg_v = static_cast<float>(rule.neg_value);
  const bool ternary = rule.levels == QuantizationRule::Levels::TernarySymmetric;
  for (Index i = 0; i < x.numel(); ++i) {
    const float v = x.data[i];
    if (v > pos_cut)
      x.data[i] = pos_v;
    else if (ternary && v < -neg_cut)
      x.data[i] = neg_v;
    else if (std::abs(v) <= std::max(pos_cut, neg_cut))
      x.data[i] = 0.0f;
  }
}

double eval_with_optional_rule(Model& model, const Dataset& ds, const InjectionPlan& plan,
                               const QuantizationRule* rule, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), Index(0));
  const RngStream rng = RngStream::root(seed).fork(StreamTag::EvalNoise);
  std::int64_t correct = 0;
  Index b = 0;
  for (Index begin = 0; begin < ds.size(); begin += kProbeBatch, ++b) {
    const Index end = std::min(ds.size(), begin + kProbeBatch);
    std::vector<int> labels;
    Tensor batch = traindetail::gather_batch<float>(ds, order, begin, end, labels);
    ForwardOpts<float> fo;
    fo.plan = plan;
    fo.rng = rng.fork(static_cast<std::uint64_t>(b));
    if (rule)
      fo.post_injection_hook = [&](int id, Tensor& x) {
        if (id == rule->layer_id) apply_rule(*rule, x);
      };
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
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace

std::pair<double, double> quantize_probe(Model& model, const Dataset& ds,
                                         const InjectionPlan& plan, const QuantizationRule& rule,
                                         std::uint64_t seed) {
  model.injection(rule.layer_id);
  if (plan.mode == PlanMode::WalkingAt)
    check(plan.layer_id <= rule.layer_id, "quantization at point ", rule.layer_id,
          " must sit at or after the injection at ", plan.layer_id);
  const double acc_q = eval_with_optional_rule(model, ds, plan, &rule, seed);
  const double acc_plain = eval_with_optional_rule(model, ds, plan, nullptr, seed);
  return {acc_q, acc_plain};
}

double weight_magnitude_ratio(const Model& unclamped, const Model& clamped, int ordinal) {
  check(unclamped.spec.layers.size() == clamped.spec.layers.size(),
        "models do not share a spec");
  const double denom = average_weight_magnitude(clamped, ordinal);
  check(denom > 0.0, "clamped model has zero average weight magnitude at layer ", ordinal);
  return average_weight_magnitude(unclamped, ordinal) / denom;
}

void write_histogram_csv(const std::string& path, const std::vector<ActivationHistogram>& hists,
                         HistScale scale) {
  std::ofstream out(path);
  check(out.good(), "cannot write ", path);
  out << "layer_id,bin_lo,bin_hi,count,noisy_flag\n";
  out.precision(10);
  for (const auto& h : hists) {
    if (h.scale != scale) continue;
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      out << h.layer_id << "," << h.edges[i] << "," << h.edges[i + 1] << "," << h.counts[i]
          << "," << (h.noisy ? 1 : 0) << "\n";
  }
}

}  // namespace noiselab
