#include <doctest.h>

#include "noiselab/datasets.hpp"
#include "noiselab/train.hpp"
#include "testutil.hpp"

using namespace noiselab;

TEST_CASE("well-separated blobs train to near-perfect accuracy in 50 steps") {
  DatasetBundle data = synthetic_gaussian_blobs(2, 400, 8, 10.0, 3);
  Model m = build_model(linear_spec(8, 1, 1, 2), 1);
  TrainConfig tc;
  tc.epochs = 8;  // 720 train samples / 128 per batch -> ~48 steps
  tc.batch_size = 128;
  tc.seed = 1;
  train(m, data.train, data.val, InjectionPlan::none(), tc);
  const auto [acc, sd] = evaluate(m, data.test, InjectionPlan::none(), RngStream::root(1), 1);
  CHECK(acc > 0.99);
  CHECK(sd == 0.0);
}

TEST_CASE("identical class distributions stay at chance level") {
  DatasetBundle data = synthetic_gaussian_blobs(10, 300, 8, 0.0, 4);
  Model m = build_model(linear_spec(8, 1, 1, 10), 1);
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 1;
  train(m, data.train, data.val, InjectionPlan::none(), tc);
  const auto [acc, sd] = evaluate(m, data.test, InjectionPlan::none(), RngStream::root(1), 1);
  CHECK(acc == doctest::Approx(0.1).epsilon(0.6));  // 1/K up to sampling noise
}

TEST_CASE("untrained 10-class model sits at about 1/K on balanced labels") {
  DatasetBundle data = synthetic_gaussian_blobs(10, 300, 16, 0.0, 9);
  Model m = build_model(mlp_spec(16, 1, 1, 10, false), 7);
  const auto [acc, sd] = evaluate(m, data.test, InjectionPlan::none(), RngStream::root(1), 3);
  CHECK(std::abs(acc - 0.1) < 0.02);
  CHECK(sd == 0.0);  // empty plan: repeats are identical
}

TEST_CASE("training is bit-deterministic given (seed, config, plan)") {
  DatasetBundle data = synthetic_gaussian_blobs(3, 200, 8, 2.0, 5);
  const InjectionPlan plan = InjectionPlan::global(NoiseSpec::additive(0.5));
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 11;
  Model a = build_model(mlp_spec(8, 1, 1, 3, true), 11);
  Model b = build_model(mlp_spec(8, 1, 1, 3, true), 11);
  const TrainResult ra = train(a, data.train, data.val, plan, tc);
  const TrainResult rb = train(b, data.train, data.val, plan, tc);
  REQUIRE(ra.epoch_losses.size() == rb.epoch_losses.size());
  for (std::size_t i = 0; i < ra.epoch_losses.size(); ++i)
    CHECK(ra.epoch_losses[i] == rb.epoch_losses[i]);
  for (std::size_t i = 0; i < a.state.size(); ++i)
    if (a.state[i].weight.numel() > 0)
      CHECK((a.state[i].weight.data == b.state[i].weight.data).all());
}

TEST_CASE("noisy evaluation: sigma->0 equals noiseless; repeats vary under noise") {
  DatasetBundle data = synthetic_gaussian_blobs(4, 200, 8, 4.0, 6);
  Model m = build_model(mlp_spec(8, 1, 1, 4, false), 3);
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 3;
  train(m, data.train, data.val, InjectionPlan::none(), tc);

  const auto [clean, csd] = evaluate(m, data.test, InjectionPlan::none(), RngStream::root(2), 2);
  const auto [tiny, tsd] = evaluate(m, data.test,
                                    InjectionPlan::global(NoiseSpec::additive(1e-12)),
                                    RngStream::root(2), 2);
  CHECK(tiny == doctest::Approx(clean).epsilon(1e-12));

  const auto [noisy, nsd] = evaluate(m, data.test,
                                     InjectionPlan::global(NoiseSpec::additive(2.0)),
                                     RngStream::root(2), 5);
  CHECK(nsd > 0.0);
  CHECK(noisy < clean);

  SUBCASE("empty dataset is rejected") {
    Dataset empty;
    empty.num_classes = 4;
    CHECK_THROWS_AS(evaluate(m, empty, InjectionPlan::none(), RngStream::root(1), 1), Error);
    CHECK_THROWS_AS(evaluate(m, data.test, InjectionPlan::none(), RngStream::root(1), 0), Error);
  }
}

TEST_CASE("huge multiplicative noise at the output injection point collapses to 1/K") {
  DatasetBundle data = synthetic_gaussian_blobs(4, 400, 8, 6.0, 8);
  Model m = build_model(mlp_spec(8, 1, 1, 4, false), 2);
  TrainConfig tc;
  tc.epochs = 4;
  tc.seed = 2;
  train(m, data.train, data.val, InjectionPlan::none(), tc);
  const auto [clean, c_sd] = evaluate(m, data.test, InjectionPlan::none(), RngStream::root(5), 1);
  REQUIRE(clean > 0.9);
  const InjectionPlan plan = InjectionPlan::walking(
      m.output_injection_id(), NoiseSpec::multiplicative(1e10), Phase::InferenceOnly);
  const auto [acc, sd] = evaluate(m, data.test, plan, RngStream::root(5), 5);
  CHECK(std::abs(acc - 0.25) < 0.06);
}

TEST_CASE("early stopping halts after patience epochs without improvement") {
  DatasetBundle data = synthetic_gaussian_blobs(2, 300, 8, 10.0, 12);
  Model m = build_model(linear_spec(8, 1, 1, 2), 1);
  TrainConfig tc;
  tc.epochs = 50;
  tc.seed = 1;
  tc.patience = 3;
  const TrainResult r = train(m, data.train, data.val, InjectionPlan::none(), tc);
  CHECK(r.epochs_run < 50);  // separable data converges immediately
  CHECK(r.best_val_accuracy > 0.99);
}
