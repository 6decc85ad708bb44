#include <doctest.h>

#include "noiselab/multiexec.hpp"
#include "noiselab/noise.hpp"
#include "noiselab/train.hpp"
#include "testutil.hpp"

using namespace noiselab;

TEST_CASE("allocation examples") {
  SUBCASE("symmetric midpoints split evenly") {
    const ExecutionPlan p = allocate_repetitions({1, 1, 1, 1}, 8);
    CHECK(p.reps == std::vector<int>{2, 2, 2, 2});
  }
  SUBCASE("shares 4/2/1 round exactly") {
    const ExecutionPlan p = allocate_repetitions({0.5, 1.0, 2.0}, 7);
    CHECK(p.reps == std::vector<int>{4, 2, 1});
  }
  SUBCASE("budget below layer count is rejected") {
    CHECK_THROWS_AS(allocate_repetitions({1, 1, 1}, 2), Error);
  }
  SUBCASE("non-positive midpoints are rejected") {
    CHECK_THROWS_AS(allocate_repetitions({1, 0, 1}, 5), Error);
    CHECK_THROWS_AS(allocate_repetitions({1, -2, 1}, 5), Error);
  }
  SUBCASE("guided budget 2x layer count matches uniform total") {
    const int layers = 7;
    const ExecutionPlan u = uniform_plan(layers, 2 * layers);
    CHECK(u.reps == std::vector<int>(7, 2));
    const ExecutionPlan g = allocate_repetitions({0.2, 1, 1, 2, 2, 3, 3}, 2 * layers);
    CHECK(g.total == u.total);
    int sum = 0;
    for (int r : g.reps) sum += r;
    CHECK(sum == 2 * layers);
  }
}

TEST_CASE("allocation properties over random instances") {
  const RngStream rng = RngStream::root(314).fork(StreamTag::Test);
  int checked = 0;
  for (int t = 0; t < 2000; ++t) {
    const int layers = 1 + static_cast<int>(rng.bits_at(3 * t) % 16);
    const int n_t = layers + static_cast<int>(rng.bits_at(3 * t + 1) % 50);
    std::vector<double> mus;
    RngStream mu_rng = rng.fork(static_cast<std::uint64_t>(t));
    for (int i = 0; i < layers; ++i)
      mus.push_back(std::exp(3.0 * mu_rng.normal_at(static_cast<std::uint64_t>(i))));
    const ExecutionPlan p = allocate_repetitions(mus, n_t);
    int sum = 0;
    for (int r : p.reps) {
      CHECK(r >= 1);
      sum += r;
    }
    CHECK(sum == n_t);

    // scale invariance
    std::vector<double> scaled;
    for (double m : mus) scaled.push_back(m * 37.5);
    CHECK(allocate_repetitions(scaled, n_t).reps == p.reps);

    // growing the budget never shrinks a layer by more than one unit
    const ExecutionPlan q = allocate_repetitions(mus, n_t + 1);
    for (std::size_t i = 0; i < p.reps.size(); ++i) CHECK(q.reps[i] >= p.reps[i] - 1);
    ++checked;
  }
  CHECK(checked == 2000);
}

namespace {

struct TrainedBlobs {
  DatasetBundle data;
  Model model;
};

TrainedBlobs trained_blobs_mlp(double separation, std::uint64_t seed) {
  TrainedBlobs tb{synthetic_gaussian_blobs(4, 300, 12, separation, seed),
                  build_model(mlp_spec(12, 1, 1, 4, false), seed)};
  TrainConfig tc;
  tc.epochs = 4;
  tc.seed = seed;
  train(tb.model, tb.data.train, tb.data.val, InjectionPlan::none(), tc);
  return tb;
}

}  // namespace

TEST_CASE("n_i = 1 everywhere is exactly the plain noisy evaluation") {
  TrainedBlobs tb = trained_blobs_mlp(5.0, 4);
  const NoiseSpec noise = NoiseSpec::additive(0.8);
  ExecutionPlan ones;
  ones.reps.assign(static_cast<std::size_t>(tb.model.injection_count()), 1);
  ones.total = tb.model.injection_count();
  const RngStream rng = RngStream::root(99);
  const auto [acc_plan, sd_plan] = evaluate_with_plan(tb.model, tb.data.test, noise, ones, rng, 3);
  const auto [acc_plain, sd_plain] =
      evaluate(tb.model, tb.data.test, InjectionPlan::global(noise, Phase::InferenceOnly),
               rng, 3);
  CHECK(acc_plan == acc_plain);
  CHECK(sd_plan == sd_plain);
}

TEST_CASE("averaging four samples halves the injected std (Monte-Carlo)") {
  const RngStream rng = RngStream::root(7).fork(StreamTag::Test);
  TensorT<double> zeros = TensorT<double>::zeros({1000000});
  TensorT<double> acc = TensorT<double>::zeros({1000000});
  const int n = 4;
  for (int k = 0; k < n; ++k) {
    TensorT<double> s = apply_noise(zeros, NoiseSpec::additive(2.0), rng.fork(k));
    acc.data += s.data;
  }
  acc.data /= n;
  const double mean = acc.data.mean();
  const double sd = std::sqrt((acc.data - mean).square().mean());
  CHECK(std::abs(sd - 1.0) < 0.01);  // 2 / sqrt(4)
}

TEST_CASE("plan/model mismatch is rejected") {
  TrainedBlobs tb = trained_blobs_mlp(5.0, 5);
  ExecutionPlan bad;
  bad.reps = {1, 1};
  bad.total = 2;
  CHECK_THROWS_AS(evaluate_with_plan(tb.model, tb.data.test, NoiseSpec::additive(1.0), bad,
                                     RngStream::root(1), 1),
                  Error);
}

TEST_CASE("identical midpoints make guided equal uniform, bitwise under shared rng") {
  TrainedBlobs tb = trained_blobs_mlp(5.0, 6);
  const int layers = tb.model.injection_count();
  std::vector<double> mus(static_cast<std::size_t>(layers), 1.3);
  const PlanComparison cmp = compare_uniform_vs_guided(tb.model, tb.data.test,
                                                       NoiseSpec::additive(0.7), 2 * layers,
                                                       mus, {1, 2, 3}, 1);
  CHECK(cmp.uniform.reps == cmp.guided.reps);
  CHECK(cmp.uniform_accs == cmp.guided_accs);
}

TEST_CASE("a 10x more sensitive layer makes guided strictly better in expectation") {
  // Rescale fc2's weights by 0.1 and fc3's by 10: the function is unchanged
  // (ReLU is positively homogeneous), but activations at the post-fc2 points
  // are 10x smaller, so additive noise there is 10x more damaging.
  TrainedBlobs tb = trained_blobs_mlp(6.0, 7);
  Model& m = tb.model;
  const auto& fc2 = m.learnable(2);
  const auto& fc3 = m.learnable(3);
  m.state[fc2.layer_index].weight.data *= 0.1f;
  m.state[fc2.layer_index].bias.data *= 0.1f;
  m.state[fc3.layer_index].weight.data *= 10.0f;

  const auto [clean, _] =
      evaluate(m, tb.data.test, InjectionPlan::none(), RngStream::root(1), 1);
  REQUIRE(clean > 0.9);

  // Post-fc2 and post-relu2 points (ids 4 and 5 in the canonical MLP) are the
  // sensitive ones; give them 10x smaller midpoints.
  std::vector<double> mus(static_cast<std::size_t>(m.injection_count()), 1.0);
  mus[4] = 0.1;
  mus[5] = 0.1;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 12; ++s) seeds.push_back(s);
  const PlanComparison cmp = compare_uniform_vs_guided(
      m, tb.data.test, NoiseSpec::additive(0.15), 2 * m.injection_count(), mus, seeds, 2);
  CHECK(cmp.guided.reps[4] > cmp.uniform.reps[4]);
  CHECK(cmp.guided_mean > cmp.uniform_mean);
}
