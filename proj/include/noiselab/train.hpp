#pragma once

#include <algorithm>
#include <numeric>

#include "noiselab/datasets.hpp"
#include "noiselab/model.hpp"
#include "noiselab/optim.hpp"

namespace noiselab {

struct TrainConfig {
  int epochs = 10;
  Index batch_size = 128;
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  bool clamp = false;  // re-project conv/fc weights to [-1,1] after each step
  int patience = 5;            // early stopping on validation accuracy
  double min_delta = 0.001;    // 0.1 accuracy points
  Index eval_batch = 512;

  void validate() const {
    check(epochs >= 1, "epochs must be >= 1");
    check(batch_size >= 1, "batch_size must be >= 1");
    check(optimizer.lr > 0, "learning rate must be > 0");
  }
};

struct TrainResult {
  int epochs_run = 0;
  double best_val_accuracy = 0.0;
  double final_train_loss = 0.0;
  std::vector<double> epoch_losses;
};

namespace traindetail {

template <typename Scalar>
TensorT<Scalar> gather_batch(const Dataset& ds, const std::vector<Index>& order, Index begin,
                             Index end, std::vector<int>& labels) {
  const Index c = ds.images.dim(1), h = ds.images.dim(2), w = ds.images.dim(3);
  const Index stride = c * h * w;
  TensorT<Scalar> batch = TensorT<Scalar>::zeros({end - begin, c, h, w});
  labels.resize(static_cast<std::size_t>(end - begin));
  for (Index i = begin; i < end; ++i) {
    const Index src = order[static_cast<std::size_t>(i)];
    for (Index k = 0; k < stride; ++k)
      batch.data[(i - begin) * stride + k] = static_cast<Scalar>(ds.images.data[src * stride + k]);
    labels[static_cast<std::size_t>(i - begin)] = ds.labels[static_cast<std::size_t>(src)];
  }
  return batch;
}

}  // namespace traindetail

/// One noisy training step: forward with the plan's noise (skipped entirely
/// for inference-only plans), cross-entropy on the noisy logits, gradients
/// with every injection treated as identity, optimizer update, optional
/// weight re-projection. Returns the batch loss.
template <typename Scalar>
double backward_and_step(ModelT<Scalar>& model, const TensorT<Scalar>& batch,
                         const std::vector<int>& labels, const InjectionPlan& plan,
                         RngStream rng, OptimizerStateT<Scalar>& opt_state,
                         const OptimizerConfig& opt_cfg, bool clamp) {
  ForwardTrace<Scalar> trace;
  ForwardOpts<Scalar> fo;
  fo.plan = plan.active_in_training() ? plan : InjectionPlan::none();
  fo.rng = rng;
  fo.training = true;
  fo.trace = &trace;
  TensorT<Scalar> logits = forward_pass(model, batch, fo);
  TensorT<Scalar> dlogits;
  const double loss = softmax_cross_entropy(logits, labels, &dlogits);
  check(std::isfinite(loss), "non-finite training loss ", loss);
  std::vector<LayerGradsT<Scalar>> grads;
  backward_pass(model, trace, dlogits, grads);
  optimizer_step(model, grads, opt_state, opt_cfg);
  if (clamp) clamp_weights(model);
  return loss;
}

/// Mean/std of accuracy over `repeats` independent noisy evaluation passes.
/// With an empty plan all passes are identical and std is 0.
template <typename Scalar>
std::pair<double, double> evaluate(ModelT<Scalar>& model, const Dataset& ds,
                                   const InjectionPlan& plan, RngStream rng, int repeats = 1,
                                   Index eval_batch = 512) {
  check(repeats >= 1, "repeats must be >= 1");
  check(ds.size() > 0, "evaluate on empty dataset");
  std::vector<Index> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), Index(0));
  std::vector<double> accs;
  for (int r = 0; r < repeats; ++r) {
    RngStream pass = rng.fork(StreamTag::EvalNoise).fork(static_cast<std::uint64_t>(r));
    std::int64_t correct = 0;
    Index b = 0;
    for (Index begin = 0; begin < ds.size(); begin += eval_batch, ++b) {
      const Index end = std::min(ds.size(), begin + eval_batch);
      std::vector<int> labels;
      TensorT<Scalar> batch = traindetail::gather_batch<Scalar>(ds, order, begin, end, labels);
      ForwardOpts<Scalar> fo;
      fo.plan = plan;
      fo.rng = pass.fork(static_cast<std::uint64_t>(b));
      TensorT<Scalar> logits = forward_pass(model, batch, fo);
      const Index k = logits.dim(1);
      for (Index i = 0; i < end - begin; ++i) {
        const Scalar* row = logits.data.data() + i * k;
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
  const double std_dev = accs.size() > 1 ? std::sqrt(var / (accs.size() - 1)) : 0.0;
  return {mean, std_dev};
}

/// Train with noise per `plan` for a fixed epoch budget with early stopping on
/// validation accuracy (evaluated under the same plan). Restores the best-
/// validation parameters on exit. Deterministic given (seed, config, plan).
template <typename Scalar>
TrainResult train(ModelT<Scalar>& model, const Dataset& train_ds, const Dataset& val_ds,
                  const InjectionPlan& plan, const TrainConfig& cfg) {
  cfg.validate();
  check(train_ds.size() > 0, "train on empty dataset");
  // Inference-only plans train clean; their noise only exists at evaluation.
  const InjectionPlan eff = plan.active_in_training() ? plan : InjectionPlan::none();
  OptimizerStateT<Scalar> opt_state = OptimizerStateT<Scalar>::init(model);
  const RngStream run = RngStream::root(cfg.seed);
  TrainResult result;
  double best_val = -1.0;
  int since_best = 0;
  std::vector<LayerStateT<Scalar>> best_state = model.state;

  std::vector<Index> order(static_cast<std::size_t>(train_ds.size()));
  std::iota(order.begin(), order.end(), Index(0));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream shuffle = run.fork(StreamTag::Shuffle).fork(static_cast<std::uint64_t>(epoch));
    // Fisher-Yates with positional draws keeps the permutation replayable.
    for (Index i = train_ds.size() - 1; i > 0; --i) {
      const Index j = static_cast<Index>(shuffle.bits_at(static_cast<std::uint64_t>(i)) %
                                         static_cast<std::uint64_t>(i + 1));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    RngStream enoise = run.fork(StreamTag::TrainNoise).fork(static_cast<std::uint64_t>(epoch));
    double epoch_loss = 0.0;
    Index batches = 0;
    for (Index begin = 0; begin < train_ds.size(); begin += cfg.batch_size, ++batches) {
      const Index end = std::min(train_ds.size(), begin + cfg.batch_size);
      std::vector<int> labels;
      TensorT<Scalar> batch =
          traindetail::gather_batch<Scalar>(train_ds, order, begin, end, labels);
      try {
        epoch_loss += backward_and_step(model, batch, labels, eff,
                                        enoise.fork(static_cast<std::uint64_t>(batches)),
                                        opt_state, cfg.optimizer, cfg.clamp);
      } catch (const Error& e) {
        fail(e.what(), " (epoch ", epoch, ", batch ", batches, ")");
      }
    }
    result.final_train_loss = epoch_loss / static_cast<double>(batches);
    result.epoch_losses.push_back(result.final_train_loss);
    result.epochs_run = epoch + 1;

    if (val_ds.size() > 0) {
      const auto [val_acc, _] =
          evaluate(model, val_ds, eff, run.fork(static_cast<std::uint64_t>(epoch)), 1,
                   cfg.eval_batch);
      if (val_acc > best_val + cfg.min_delta) {
        best_val = val_acc;
        best_state = model.state;
        since_best = 0;
      } else {
        ++since_best;
        if (since_best >= cfg.patience) break;
      }
    }
  }
  if (val_ds.size() > 0) {
    model.state = best_state;
    result.best_val_accuracy = best_val;
  }
  return result;
}

}  // namespace noiselab
