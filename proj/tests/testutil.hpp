#pragma once

#include <filesystem>
#include <string>

#include "noiselab/model.hpp"
#include "noiselab/train.hpp"

namespace noiselab::testutil {

/// Scratch directory unique per test binary run.
inline std::string tmp_dir(const std::string& tag) {
  const std::string dir =
      (std::filesystem::temp_directory_path() / ("noiselab_" + tag)).string();
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline TensorT<double> random_batch(Index n, Index c, Index h, Index w, std::uint64_t seed) {
  TensorT<double> x = TensorT<double>::zeros({n, c, h, w});
  const RngStream rng = RngStream::root(seed).fork(StreamTag::Test);
  for (Index i = 0; i < x.numel(); ++i) x.data[i] = rng.normal_at(static_cast<std::uint64_t>(i));
  return x;
}

inline std::vector<int> random_labels(Index n, int k, std::uint64_t seed) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  const RngStream rng = RngStream::root(seed).fork(StreamTag::Test).fork(1);
  for (Index i = 0; i < n; ++i)
    labels[static_cast<std::size_t>(i)] =
        static_cast<int>(rng.bits_at(static_cast<std::uint64_t>(i)) % static_cast<std::uint64_t>(k));
  return labels;
}

/// Smallest |input| over all ReLU layers in one traced forward pass. Seeds
/// whose margin is below the finite-difference step would make the kink
/// flip between evaluations.
inline double relu_margin(ModelT<double>& model, const TensorT<double>& batch) {
  ForwardTrace<double> trace;
  ForwardOpts<double> fo;
  fo.training = true;
  fo.trace = &trace;
  forward_pass(model, batch, fo);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < model.spec.layers.size(); ++i)
    if (std::holds_alternative<ReLU>(model.spec.layers[i].kind))
      margin = std::min(margin, trace.acts[i].data.abs().minCoeff());
  return margin;
}

struct GradCheck {
  double max_rel = 0.0;
  int checked = 0;
};

/// Central finite differences (eps = 1e-3, 64-bit) against backward_pass,
/// with the plan's noise replayed from a fixed stream on every evaluation.
inline GradCheck grad_check(ModelT<double>& model, const TensorT<double>& batch,
                            const std::vector<int>& labels, const InjectionPlan& plan,
                            RngStream noise_rng, Index stride = 1) {
  const double eps = 1e-3;
  auto loss_at = [&]() {
    ForwardOpts<double> fo;
    fo.plan = plan;
    fo.rng = noise_rng;
    fo.training = true;
    TensorT<double> logits = forward_pass(model, batch, fo);
    return softmax_cross_entropy<double>(logits, labels, nullptr);
  };

  ForwardTrace<double> trace;
  ForwardOpts<double> fo;
  fo.plan = plan;
  fo.rng = noise_rng;
  fo.training = true;
  fo.trace = &trace;
  TensorT<double> logits = forward_pass(model, batch, fo);
  TensorT<double> dlogits;
  softmax_cross_entropy(logits, labels, &dlogits);
  std::vector<LayerGradsT<double>> grads;
  backward_pass(model, trace, dlogits, grads);

  GradCheck out;
  for (std::size_t li = 0; li < model.state.size(); ++li) {
    auto check_tensor = [&](TensorT<double>& param, const TensorT<double>& grad) {
      if (param.numel() == 0 || grad.numel() == 0) return;
      for (Index k = 0; k < param.numel(); k += stride) {
        const double save = param.data[k];
        param.data[k] = save + eps;
        const double up = loss_at();
        param.data[k] = save - eps;
        const double down = loss_at();
        param.data[k] = save;
        const double fd = (up - down) / (2.0 * eps);
        const double g = grad.data[k];
        const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-6});
        out.max_rel = std::max(out.max_rel, rel);
        ++out.checked;
      }
    };
    check_tensor(model.state[li].weight, grads[li].weight);
    check_tensor(model.state[li].bias, grads[li].bias);
    check_tensor(model.state[li].gamma, grads[li].gamma);
    check_tensor(model.state[li].beta, grads[li].beta);
  }
  return out;
}

/// First seed whose forward pass keeps every ReLU input clear of the
/// finite-difference step.
inline std::uint64_t clean_seed(const ModelSpec& spec, Index n, std::uint64_t batch_seed,
                                double min_margin = 2e-2) {
  for (std::uint64_t seed = 1; seed < 200; ++seed) {
    ModelT<double> m = build_model_t<double>(spec, seed);
    TensorT<double> batch = random_batch(n, spec.in_c, spec.in_h, spec.in_w, batch_seed);
    if (relu_margin(m, batch) > min_margin) return seed;
  }
  fail("no clean seed found for gradient check");
}

}  // namespace noiselab::testutil
