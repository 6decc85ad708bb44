#pragma once

#include <cmath>
#include <string>

#include "noiselab/rng.hpp"
#include "noiselab/tensor.hpp"

namespace noiselab {

enum class NoiseKind { Additive, Multiplicative, Mixed };
enum class MixOrder { MultiplicativeFirst, AdditiveFirst };
enum class Phase { TrainAndInference, InferenceOnly };

/// Gaussian activation noise: additive offsets are N(0, sigma_add^2), the
/// multiplicative factor is N(1, sigma_mul^2). Samples are i.i.d. per element
/// and fresh per forward pass; factors are deliberately untruncated.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::Additive;
  double sigma_add = 0.0;
  double sigma_mul = 0.0;
  MixOrder order = MixOrder::MultiplicativeFirst;

  static NoiseSpec additive(double sigma) { return {NoiseKind::Additive, sigma, 0.0, {}}; }
  static NoiseSpec multiplicative(double sigma) {
    return {NoiseKind::Multiplicative, 0.0, sigma, {}};
  }
  static NoiseSpec mixed(double sigma_add, double sigma_mul, MixOrder order) {
    return {NoiseKind::Mixed, sigma_add, sigma_mul, order};
  }

  void validate() const {
    check(std::isfinite(sigma_add) && sigma_add >= 0.0, "sigma_add must be finite and >= 0, got ",
          sigma_add);
    check(std::isfinite(sigma_mul) && sigma_mul >= 0.0, "sigma_mul must be finite and >= 0, got ",
          sigma_mul);
  }

  /// The sigma that is being swept / reported for this noise kind.
  double headline_sigma() const {
    return kind == NoiseKind::Multiplicative ? sigma_mul : sigma_add;
  }
};

inline const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::Additive: return "additive";
    case NoiseKind::Multiplicative: return "multiplicative";
    case NoiseKind::Mixed: return "mixed";
  }
  return "?";
}
inline const char* to_string(MixOrder o) {
  return o == MixOrder::MultiplicativeFirst ? "mul_first" : "add_first";
}
inline const char* to_string(Phase p) {
  return p == Phase::TrainAndInference ? "train_and_inference" : "inference_only";
}

enum class PlanMode { None, Global, WalkingAt };

/// Where noise acts: at every injection point (Global) or at exactly one
/// (WalkingAt), and whether it is active during training or only at inference.
struct InjectionPlan {
  PlanMode mode = PlanMode::None;
  int layer_id = -1;  // injection-point id for WalkingAt
  NoiseSpec spec;
  Phase phase = Phase::TrainAndInference;

  static InjectionPlan none() { return {}; }
  static InjectionPlan global(NoiseSpec spec, Phase phase = Phase::TrainAndInference) {
    InjectionPlan p;
    p.mode = PlanMode::Global;
    p.spec = spec;
    p.phase = phase;
    return p;
  }
  static InjectionPlan walking(int layer_id, NoiseSpec spec,
                               Phase phase = Phase::TrainAndInference) {
    InjectionPlan p;
    p.mode = PlanMode::WalkingAt;
    p.layer_id = layer_id;
    p.spec = spec;
    p.phase = phase;
    return p;
  }

  bool applies_to(int injection_id) const {
    switch (mode) {
      case PlanMode::None: return false;
      case PlanMode::Global: return true;
      case PlanMode::WalkingAt: return injection_id == layer_id;
    }
    return false;
  }
  bool active_in_training() const {
    return mode != PlanMode::None && phase == Phase::TrainAndInference;
  }
};

namespace noisedetail {
// Sub-stream coordinates for the two noise components. Keeping them on
// separate keys makes the two mixed orders produce bit-identical output when
// one sigma is zero (same component samples either way).
inline constexpr std::uint64_t kMulComponent = 0x6d756c;  // "mul"
inline constexpr std::uint64_t kAddComponent = 0x616464;  // "add"
}  // namespace noisedetail

/// Element-wise noisy copy of x. The stream must be unique per
/// (run, epoch, batch, injection point) so repeated calls draw fresh samples.
template <typename Scalar>
TensorT<Scalar> apply_noise(const TensorT<Scalar>& x, const NoiseSpec& spec, RngStream rng) {
  spec.validate();
  TensorT<Scalar> y = x;
  const RngStream mul_rng = rng.fork(noisedetail::kMulComponent);
  const RngStream add_rng = rng.fork(noisedetail::kAddComponent);
  const Index n = y.numel();
  const double sm = spec.sigma_mul;
  const double sa = spec.sigma_add;

  auto mul_factor = [&](Index i) { return static_cast<Scalar>(1.0 + sm * mul_rng.normal_at(i)); };
  auto add_offset = [&](Index i) { return static_cast<Scalar>(sa * add_rng.normal_at(i)); };

  switch (spec.kind) {
    case NoiseKind::Additive:
      if (sa > 0.0)
        for (Index i = 0; i < n; ++i) y.data[i] += add_offset(i);
      break;
    case NoiseKind::Multiplicative:
      if (sm > 0.0)
        for (Index i = 0; i < n; ++i) y.data[i] *= mul_factor(i);
      break;
    case NoiseKind::Mixed:
      if (spec.order == MixOrder::MultiplicativeFirst) {
        for (Index i = 0; i < n; ++i) {
          Scalar v = y.data[i];
          if (sm > 0.0) v *= mul_factor(i);
          if (sa > 0.0) v += add_offset(i);
          y.data[i] = v;
        }
      } else {
        for (Index i = 0; i < n; ++i) {
          Scalar v = y.data[i];
          if (sa > 0.0) v += add_offset(i);
          if (sm > 0.0) v *= mul_factor(i);
          y.data[i] = v;
        }
      }
      break;
  }
  return y;
}

/// Empirical mean/std of the noise itself: the offset for Additive, the
/// factor for Multiplicative, and y(1) for Mixed.
inline std::pair<double, double> sample_stats(const NoiseSpec& spec, std::int64_t count,
                                              RngStream rng) {
  spec.validate();
  check(count >= 2, "sample_stats needs count >= 2, got ", count);
  TensorT<double> base;
  switch (spec.kind) {
    case NoiseKind::Additive: base = TensorT<double>::zeros({count}); break;
    case NoiseKind::Multiplicative:
    case NoiseKind::Mixed: base = TensorT<double>::full({count}, 1.0); break;
  }
  TensorT<double> s = apply_noise(base, spec, rng);
  const double mean = s.data.mean();
  const double var = (s.data - mean).square().sum() / static_cast<double>(count - 1);
  return {mean, std::sqrt(var)};
}

}  // namespace noiselab
