#include <doctest.h>

#include "noiselab/model.hpp"
#include "noiselab/optim.hpp"
#include "testutil.hpp"

using namespace noiselab;
using namespace noiselab::testutil;

namespace {

ModelSpec conv_pool_spec(bool with_bn) {
  ModelSpec s;
  s.arch = "tiny-conv";
  s.in_c = 2;
  s.in_h = 8;
  s.in_w = 8;
  s.num_classes = 3;
  s.layers.push_back({Conv2d{2, 3, 3, 1, 1}, "conv1"});
  if (with_bn) s.layers.push_back({BatchNorm{3}, "bn1"});
  s.layers.push_back({ReLU{}, "relu1"});
  s.layers.push_back({MaxPool2d{2, 2}, "pool1"});
  s.layers.push_back({Flatten{}, "flatten"});
  s.layers.push_back({FullyConnected{3 * 4 * 4, 3}, "fc1"});
  return s;
}

}  // namespace

TEST_CASE("fully-connected net: analytic gradients match finite differences") {
  const ModelSpec spec = mlp_spec(1, 4, 4, 3, false, 8);
  const std::uint64_t seed = clean_seed(spec, 6, 21);
  ModelT<double> m = build_model_t<double>(spec, seed);
  const auto batch = random_batch(6, 1, 4, 4, 21);
  const auto labels = random_labels(6, 3, 22);
  const GradCheck gc = grad_check(m, batch, labels, InjectionPlan::none(), RngStream::root(1));
  CHECK(gc.checked > 100);
  CHECK(gc.max_rel < 1e-4);
}

TEST_CASE("conv + maxpool net: analytic gradients match finite differences") {
  const ModelSpec spec = conv_pool_spec(false);
  const std::uint64_t seed = clean_seed(spec, 4, 31);
  ModelT<double> m = build_model_t<double>(spec, seed);
  const auto batch = random_batch(4, 2, 8, 8, 31);
  const auto labels = random_labels(4, 3, 32);
  const GradCheck gc = grad_check(m, batch, labels, InjectionPlan::none(), RngStream::root(1));
  CHECK(gc.checked > 100);
  CHECK(gc.max_rel < 1e-4);
}

TEST_CASE("batchnorm (2d and 4d) gradients match finite differences") {
  SUBCASE("after fully-connected layers") {
    const ModelSpec spec = mlp_spec(1, 4, 4, 3, true, 8);
    const std::uint64_t seed = clean_seed(spec, 8, 41);
    ModelT<double> m = build_model_t<double>(spec, seed);
    const auto batch = random_batch(8, 1, 4, 4, 41);
    const auto labels = random_labels(8, 3, 42);
    const GradCheck gc =
        grad_check(m, batch, labels, InjectionPlan::none(), RngStream::root(1));
    CHECK(gc.max_rel < 1e-4);
  }
  SUBCASE("after conv layers") {
    const ModelSpec spec = conv_pool_spec(true);
    const std::uint64_t seed = clean_seed(spec, 4, 51);
    ModelT<double> m = build_model_t<double>(spec, seed);
    const auto batch = random_batch(4, 2, 8, 8, 51);
    const auto labels = random_labels(4, 3, 52);
    const GradCheck gc =
        grad_check(m, batch, labels, InjectionPlan::none(), RngStream::root(1));
    CHECK(gc.max_rel < 1e-4);
  }
}

TEST_CASE("full lenet5: sampled gradient check") {
  const ModelSpec spec = lenet5_spec(1, 28, 28, 10, true);
  const std::uint64_t seed = clean_seed(spec, 2, 61);
  ModelT<double> m = build_model_t<double>(spec, seed);
  const auto batch = random_batch(2, 1, 28, 28, 61);
  const auto labels = random_labels(2, 10, 62);
  const GradCheck gc =
      grad_check(m, batch, labels, InjectionPlan::none(), RngStream::root(1), 211);
  CHECK(gc.checked > 200);
  CHECK(gc.max_rel < 1e-4);
}

TEST_CASE("replayed additive noise: straight-through gradient equals the true one") {
  // With a fixed additive sample the injection is x + const, so the exact
  // gradient of the replayed loss equals the straight-through gradient.
  SUBCASE("single fc layer with noise after it") {
    ModelSpec spec = linear_spec(1, 3, 3, 3);
    const std::uint64_t seed = clean_seed(spec, 5, 71);
    ModelT<double> m = build_model_t<double>(spec, seed);
    const auto batch = random_batch(5, 1, 3, 3, 71);
    const auto labels = random_labels(5, 3, 72);
    const int after_fc = m.output_injection_id();
    const InjectionPlan plan = InjectionPlan::walking(after_fc, NoiseSpec::additive(0.8));
    const GradCheck gc = grad_check(m, batch, labels, plan, RngStream::root(99));
    CHECK(gc.max_rel < 1e-4);
  }
  SUBCASE("global additive noise through a deep net") {
    const ModelSpec spec = mlp_spec(1, 4, 4, 3, true, 8);
    const std::uint64_t seed = clean_seed(spec, 6, 81);
    ModelT<double> m = build_model_t<double>(spec, seed);
    const auto batch = random_batch(6, 1, 4, 4, 81);
    const auto labels = random_labels(6, 3, 82);
    const InjectionPlan plan = InjectionPlan::global(NoiseSpec::additive(0.3));
    const GradCheck gc = grad_check(m, batch, labels, plan, RngStream::root(7));
    CHECK(gc.max_rel < 1e-4);
  }
}

TEST_CASE("straight-through contract: zero-noise plans reproduce noiseless gradients") {
  const ModelSpec spec = mlp_spec(1, 4, 4, 3, true, 8);
  ModelT<double> m = build_model_t<double>(spec, 5);
  const auto batch = random_batch(6, 1, 4, 4, 91);
  const auto labels = random_labels(6, 3, 92);

  auto grads_for = [&](const InjectionPlan& plan) {
    ForwardTrace<double> trace;
    ForwardOpts<double> fo;
    fo.plan = plan;
    fo.rng = RngStream::root(3);
    fo.training = true;
    fo.trace = &trace;
    TensorT<double> logits = forward_pass(m, batch, fo);
    TensorT<double> dlogits;
    softmax_cross_entropy(logits, labels, &dlogits);
    std::vector<LayerGradsT<double>> grads;
    backward_pass(m, trace, dlogits, grads);
    return grads;
  };
  const auto clean = grads_for(InjectionPlan::none());
  for (const auto& plan : {InjectionPlan::global(NoiseSpec::additive(0.0)),
                           InjectionPlan::global(NoiseSpec::multiplicative(0.0))}) {
    const auto noisy = grads_for(plan);
    for (std::size_t i = 0; i < clean.size(); ++i) {
      if (clean[i].weight.numel() > 0)
        CHECK((clean[i].weight.data == noisy[i].weight.data).all());
      if (clean[i].gamma.numel() > 0) CHECK((clean[i].gamma.data == noisy[i].gamma.data).all());
    }
  }
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
  TensorT<double> logits = random_batch(4, 3, 1, 1, 13).reshaped({4, 3});
  const auto labels = random_labels(4, 3, 14);
  TensorT<double> dlogits;
  softmax_cross_entropy(logits, labels, &dlogits);
  const double eps = 1e-5;
  for (Index k = 0; k < logits.numel(); ++k) {
    const double save = logits.data[k];
    logits.data[k] = save + eps;
    const double up = softmax_cross_entropy<double>(logits, labels, nullptr);
    logits.data[k] = save - eps;
    const double down = softmax_cross_entropy<double>(logits, labels, nullptr);
    logits.data[k] = save;
    const double fd = (up - down) / (2.0 * eps);
    CHECK(dlogits.data[k] == doctest::Approx(fd).epsilon(1e-5));
  }
  SUBCASE("out-of-range labels rejected") {
    std::vector<int> bad = labels;
    bad[0] = 3;
    CHECK_THROWS_AS(softmax_cross_entropy(logits, bad, nullptr), Error);
  }
}

TEST_CASE("optimizer step with huge learning rate plus clamp keeps weights in the box") {
  Model m = build_model(mlp_spec(1, 4, 4, 3, false, 8), 2);
  OptimizerStateT<float> opt = OptimizerStateT<float>::init(m);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::SgdMomentum;
  cfg.lr = 1e4;
  Tensor batch = random_batch(6, 1, 4, 4, 15).cast<float>();
  const auto labels = random_labels(6, 3, 16);
  backward_and_step(m, batch, labels, InjectionPlan::none(), RngStream::root(1), opt, cfg,
                    /*clamp=*/true);
  for (const auto& li : m.learnables) {
    CHECK(m.state[li.layer_index].weight.data.maxCoeff() <= 1.0f);
    CHECK(m.state[li.layer_index].weight.data.minCoeff() >= -1.0f);
  }
}
