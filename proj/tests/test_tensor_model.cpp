#include <doctest.h>

#include "noiselab/model.hpp"

using namespace noiselab;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t = Tensor::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK_THROWS_AS(t.reshaped({5, 5}), Error);
  CHECK(t.reshaped({6, 4}).dim(0) == 6);
  CHECK_THROWS_AS(Tensor({2, 2}, Tensor::Array::Zero(3)), Error);
}

TEST_CASE("mlp spec builds with the canonical injection enumeration") {
  // input + after every layer except BatchNorm; the last one is the output.
  Model m = build_model(mlp_spec(1, 28, 28, 10, false), 1);
  CHECK(m.injection_count() == 7);
  CHECK(m.injections.front().name == "input");
  CHECK(m.injections.back().name == "fc3");
  CHECK(m.output_injection_id() == 6);

  // BatchNorm layers are not injection points, so the count is unchanged.
  Model mbn = build_model(mlp_spec(1, 28, 28, 10, true), 1);
  CHECK(mbn.injection_count() == 7);
  CHECK(mbn.learnables.size() == 3);

  std::vector<std::string> names;
  for (const auto& ii : mbn.injections) names.push_back(ii.name);
  CHECK(names == std::vector<std::string>{"input", "flatten", "fc1", "relu1", "fc2", "relu2",
                                          "fc3"});
}

TEST_CASE("lenet5 spec: canonical layout, 13 injection points") {
  for (const bool bn : {false, true}) {
    Model m = build_model(lenet5_spec(3, 32, 32, 10, bn), 3);
    CHECK(m.injection_count() == 13);
    CHECK(m.learnables.size() == 5);
    CHECK(m.learnable(1).name == "conv1");
    CHECK(m.learnable(3).name == "fc1");
  }
  // 28x28 inputs pad conv1 so the flatten stays 400 wide.
  CHECK_NOTHROW(build_model(lenet5_spec(1, 28, 28, 10, true), 3));
}

TEST_CASE("same spec and seed build bit-identical parameters") {
  Model a = build_model(mlp_spec(1, 28, 28, 10, true), 99);
  Model b = build_model(mlp_spec(1, 28, 28, 10, true), 99);
  for (std::size_t i = 0; i < a.state.size(); ++i) {
    CHECK((a.state[i].weight.data == b.state[i].weight.data).all());
    CHECK((a.state[i].bias.data == b.state[i].bias.data).all());
  }
  Model c = build_model(mlp_spec(1, 28, 28, 10, true), 98);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.state.size(); ++i)
    if (a.state[i].weight.numel() > 0 && (a.state[i].weight.data != c.state[i].weight.data).any())
      any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("shape mismatches fail at build, naming the offending layer") {
  ModelSpec bad;
  bad.arch = "bad";
  bad.in_c = 1;
  bad.in_h = 8;
  bad.in_w = 8;
  bad.num_classes = 10;
  bad.layers.push_back({Flatten{}, "flatten"});
  bad.layers.push_back({FullyConnected{64, 64}, "fc_a"});
  bad.layers.push_back({FullyConnected{32, 10}, "fc_b"});
  CHECK_THROWS_WITH_AS(build_model(bad, 1), doctest::Contains("fc_b"), Error);

  ModelSpec wrong_out = mlp_spec(1, 28, 28, 10, false);
  wrong_out.num_classes = 7;
  CHECK_THROWS_AS(build_model(wrong_out, 1), Error);
}

TEST_CASE("forward: empty plan deterministic, zero-sigma plans are identity") {
  Model m = build_model(mlp_spec(1, 8, 8, 10, true), 5);
  Tensor x = Tensor::zeros({4, 1, 8, 8});
  const RngStream rng = RngStream::root(11).fork(StreamTag::Test);
  for (Index i = 0; i < x.numel(); ++i)
    x.data[i] = static_cast<float>(rng.normal_at(static_cast<std::uint64_t>(i)));

  auto [l1, c1] = forward(m, x, InjectionPlan::none(), RngStream::root(1));
  auto [l2, c2] = forward(m, x, InjectionPlan::none(), RngStream::root(2));
  CHECK((l1.data == l2.data).all());

  auto [l3, c3] = forward(m, x, InjectionPlan::global(NoiseSpec::additive(0.0)),
                          RngStream::root(3));
  CHECK((l3.data == l1.data).all());
  auto [l4, c4] = forward(m, x, InjectionPlan::global(NoiseSpec::multiplicative(0.0)),
                          RngStream::root(4));
  CHECK((l4.data == l1.data).all());

  SUBCASE("invalid injection id is rejected") {
    CHECK_THROWS_AS(forward(m, x, InjectionPlan::walking(99, NoiseSpec::additive(1.0)),
                            RngStream::root(5)),
                    Error);
  }
  SUBCASE("captured activations are post-injection") {
    const int id = 2;  // after fc1
    auto [logits, cap] = forward(m, x, InjectionPlan::walking(id, NoiseSpec::additive(3.0)),
                                 RngStream::root(6), {id});
    auto [logits_clean, cap_clean] = forward(m, x, InjectionPlan::none(), RngStream::root(6),
                                             {id});
    REQUIRE(cap.count(id) == 1);
    REQUIRE(cap_clean.count(id) == 1);
    CHECK((cap[id].data != cap_clean[id].data).any());
  }
  SUBCASE("batch shape mismatch is rejected") {
    Tensor wrong = Tensor::zeros({2, 1, 9, 9});
    CHECK_THROWS_AS(forward(m, wrong, InjectionPlan::none(), RngStream::root(1)), Error);
  }
}

TEST_CASE("clamp_weights projects and is idempotent; BN params untouched") {
  Model m = build_model(mlp_spec(1, 8, 8, 10, true), 5);
  // scale weights up, shift a BN gamma out of range
  for (const auto& li : m.learnables) m.state[li.layer_index].weight.data *= 10.0f;
  float* gamma0 = nullptr;
  for (std::size_t i = 0; i < m.spec.layers.size(); ++i)
    if (std::holds_alternative<BatchNorm>(m.spec.layers[i].kind)) {
      m.state[i].gamma.data[0] = 3.7f;
      gamma0 = &m.state[i].gamma.data[0];
      break;
    }
  clamp_weights(m);
  for (const auto& li : m.learnables) {
    CHECK(m.state[li.layer_index].weight.data.maxCoeff() <= 1.0f);
    CHECK(m.state[li.layer_index].weight.data.minCoeff() >= -1.0f);
  }
  REQUIRE(gamma0 != nullptr);
  CHECK(*gamma0 == 3.7f);  // BN affine parameters are not clamped

  Model copy = m;
  clamp_weights(m);
  for (std::size_t i = 0; i < m.state.size(); ++i)
    if (m.state[i].weight.numel() > 0)
      CHECK((m.state[i].weight.data == copy.state[i].weight.data).all());

  SUBCASE("single values") {
    Model tiny = build_model(linear_spec(2, 1, 1, 2), 1);
    auto& w = tiny.state[tiny.learnables[0].layer_index].weight;
    w.data[0] = 3.7f;
    w.data[1] = -0.5f;
    clamp_weights(tiny);
    CHECK(w.data[0] == 1.0f);
    CHECK(w.data[1] == -0.5f);
  }
  SUBCASE("all-zero weights unchanged") {
    Model tiny = build_model(linear_spec(2, 1, 1, 2), 1);
    auto& w = tiny.state[tiny.learnables[0].layer_index].weight;
    w.data.setZero();
    clamp_weights(tiny);
    CHECK((w.data == 0.0f).all());
  }
}

TEST_CASE("average_weight_magnitude") {
  Model tiny = build_model(linear_spec(2, 1, 1, 2), 1);
  auto& w = tiny.state[tiny.learnables[0].layer_index].weight;
  REQUIRE(w.numel() == 4);
  w.data[0] = 1.0f;
  w.data[1] = -1.0f;
  w.data[2] = 1.0f;
  w.data[3] = -1.0f;
  CHECK(average_weight_magnitude(tiny, 1) == doctest::Approx(1.0));
  w.data[0] = 0.0f;
  w.data[1] = 0.0f;
  w.data[2] = 2.0f;
  w.data[3] = 2.0f;
  CHECK(average_weight_magnitude(tiny, 1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(average_weight_magnitude(tiny, 2), Error);  // only one learnable layer
}

TEST_CASE("batchnorm normalizes a unit-Gaussian batch in training mode") {
  // 1024 x 16 inputs; post-BN per-feature mean ~ 0, variance ~ 1.
  const Index n = 1024, f = 16;
  BatchNorm bn{f};
  LayerStateT<float> st;
  st.gamma = Tensor::full({f}, 1.0f);
  st.beta = Tensor::zeros({f});
  st.run_mean = Tensor::zeros({f});
  st.run_var = Tensor::full({f}, 1.0f);
  Tensor x = Tensor::zeros({n, f});
  const RngStream rng = RngStream::root(3).fork(StreamTag::Test);
  for (Index i = 0; i < x.numel(); ++i)
    x.data[i] = static_cast<float>(1.5 + 2.0 * rng.normal_at(static_cast<std::uint64_t>(i)));
  LayerAuxT<float> aux;
  Tensor y = bn_forward(bn, st, x, true, &aux);
  for (Index j = 0; j < f; ++j) {
    double mean = 0.0, var = 0.0;
    for (Index i = 0; i < n; ++i) mean += y.data[i * f + j];
    mean /= n;
    for (Index i = 0; i < n; ++i) {
      const double d = y.data[i * f + j] - mean;
      var += d * d;
    }
    var /= n;
    CHECK(std::abs(mean) < 1e-3);
    CHECK(std::abs(var - 1.0) < 1e-2);
  }
}
