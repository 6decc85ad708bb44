#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <utility>

#include "noiselab/layers.hpp"
#include "noiselab/noise.hpp"
#include "noiselab/rng.hpp"

namespace noiselab {

// ---------------------------------------------------------------------------
// Model specification
// ---------------------------------------------------------------------------

struct ModelSpec {
  std::string arch;  // "mlp", "lenet5", or free-form
  Index in_c = 1, in_h = 1, in_w = 1;
  int num_classes = 0;
  std::vector<LayerSpec> layers;  // realized specs contain InjectionPoint entries

  bool realized = false;  // injection points inserted
};

/// MLP: three fully-connected layers (hidden width 64), ReLU between them,
/// optional BatchNorm after each hidden layer.
inline ModelSpec mlp_spec(Index in_c, Index in_h, Index in_w, int num_classes, bool batchnorm,
                          Index hidden = 64) {
  ModelSpec s;
  s.arch = batchnorm ? "mlp-bn" : "mlp";
  s.in_c = in_c;
  s.in_h = in_h;
  s.in_w = in_w;
  s.num_classes = num_classes;
  const Index in = in_c * in_h * in_w;
  s.layers.push_back({Flatten{}, "flatten"});
  s.layers.push_back({FullyConnected{in, hidden}, "fc1"});
  if (batchnorm) s.layers.push_back({BatchNorm{hidden}, "bn1"});
  s.layers.push_back({ReLU{}, "relu1"});
  s.layers.push_back({FullyConnected{hidden, hidden}, "fc2"});
  if (batchnorm) s.layers.push_back({BatchNorm{hidden}, "bn2"});
  s.layers.push_back({ReLU{}, "relu2"});
  s.layers.push_back({FullyConnected{hidden, num_classes}, "fc3"});
  return s;
}

/// LeNet-5, canonical variant: conv(->6,5x5)-ReLU-pool-conv(->16,5x5)-ReLU-
/// pool-flatten-fc120-ReLU-fc84-ReLU-fc(num_classes); optional BatchNorm after
/// each conv/fc except the classifier. 28x28 inputs get pad=2 in conv1 so the
/// flatten width is 400 for both 28x28 and 32x32 inputs.
inline ModelSpec lenet5_spec(Index in_c, Index in_h, Index in_w, int num_classes,
                             bool batchnorm) {
  ModelSpec s;
  s.arch = batchnorm ? "lenet5-bn" : "lenet5";
  s.in_c = in_c;
  s.in_h = in_h;
  s.in_w = in_w;
  s.num_classes = num_classes;
  const Index pad1 = in_h == 28 ? 2 : 0;
  s.layers.push_back({Conv2d{in_c, 6, 5, 1, pad1}, "conv1"});
  if (batchnorm) s.layers.push_back({BatchNorm{6}, "bn1"});
  s.layers.push_back({ReLU{}, "relu1"});
  s.layers.push_back({MaxPool2d{2, 2}, "pool1"});
  s.layers.push_back({Conv2d{6, 16, 5, 1, 0}, "conv2"});
  if (batchnorm) s.layers.push_back({BatchNorm{16}, "bn2"});
  s.layers.push_back({ReLU{}, "relu2"});
  s.layers.push_back({MaxPool2d{2, 2}, "pool2"});
  s.layers.push_back({Flatten{}, "flatten"});
  const Index flat = 16 * 5 * 5;
  s.layers.push_back({FullyConnected{flat, 120}, "fc1"});
  if (batchnorm) s.layers.push_back({BatchNorm{120}, "bn3"});
  s.layers.push_back({ReLU{}, "relu3"});
  s.layers.push_back({FullyConnected{120, 84}, "fc2"});
  if (batchnorm) s.layers.push_back({BatchNorm{84}, "bn4"});
  s.layers.push_back({ReLU{}, "relu4"});
  s.layers.push_back({FullyConnected{84, num_classes}, "fc3"});
  return s;
}

/// Single linear classifier, used by fast synthetic-data tests.
inline ModelSpec linear_spec(Index in_c, Index in_h, Index in_w, int num_classes) {
  ModelSpec s;
  s.arch = "linear";
  s.in_c = in_c;
  s.in_h = in_h;
  s.in_w = in_w;
  s.num_classes = num_classes;
  s.layers.push_back({Flatten{}, "flatten"});
  s.layers.push_back({FullyConnected{in_c * in_h * in_w, num_classes}, "fc1"});
  return s;
}

// ---------------------------------------------------------------------------
// Shape propagation
// ---------------------------------------------------------------------------

inline ActDims propagate_dims(const LayerSpec& layer, const ActDims& in) {
  struct V {
    const ActDims& in;
    const std::string& name;
    ActDims operator()(const FullyConnected& fc) const {
      check(in.flat, "layer ", name, ": fully-connected needs a flat input, got ", in.str());
      check(in.features == fc.in, "layer ", name, ": expected ", fc.in, " inputs, got ",
            in.str());
      return ActDims::vec(fc.out);
    }
    ActDims operator()(const Conv2d& cv) const {
      check(!in.flat, "layer ", name, ": conv needs an image input, got ", in.str());
      check(in.c == cv.in_ch, "layer ", name, ": expected ", cv.in_ch, " channels, got ",
            in.str());
      const Index ho = conv_out_dim(in.h, cv.kernel, cv.stride, cv.pad);
      const Index wo = conv_out_dim(in.w, cv.kernel, cv.stride, cv.pad);
      check(ho >= 1 && wo >= 1, "layer ", name, ": kernel does not fit input ", in.str());
      return ActDims::image(cv.out_ch, ho, wo);
    }
    ActDims operator()(const ReLU&) const { return in; }
    ActDims operator()(const MaxPool2d& mp) const {
      check(!in.flat, "layer ", name, ": maxpool needs an image input, got ", in.str());
      const Index ho = (in.h - mp.kernel) / mp.stride + 1;
      const Index wo = (in.w - mp.kernel) / mp.stride + 1;
      check(ho >= 1 && wo >= 1, "layer ", name, ": pool window does not fit ", in.str());
      return ActDims::image(in.c, ho, wo);
    }
    ActDims operator()(const BatchNorm& bn) const {
      const Index f = in.flat ? in.features : in.c;
      check(f == bn.features, "layer ", name, ": batchnorm over ", bn.features,
            " features does not match input ", in.str());
      return in;
    }
    ActDims operator()(const Flatten&) const { return ActDims::vec(in.numel()); }
    ActDims operator()(const InjectionPoint&) const { return in; }
  };
  return std::visit(V{in, layer.name}, layer.kind);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct InjectionInfo {
  int id = -1;
  std::size_t layer_index = 0;  // position of the InjectionPoint in the layer list
  std::string name;             // "input" or the preceding layer's name
};

struct LearnableInfo {
  int ordinal = 0;  // 1-based, conv/fc in network order (the "Layer ID" of reports)
  std::size_t layer_index = 0;
  std::string name;
};

template <typename Scalar>
struct ModelT {
  ModelSpec spec;
  std::uint64_t seed = 0;
  std::vector<LayerStateT<Scalar>> state;  // parallel to spec.layers
  std::vector<ActDims> out_dims;           // activation dims after each layer
  std::vector<InjectionInfo> injections;
  std::vector<LearnableInfo> learnables;

  int num_classes() const { return spec.num_classes; }
  int injection_count() const { return static_cast<int>(injections.size()); }
  int output_injection_id() const { return injections.back().id; }

  const InjectionInfo& injection(int id) const {
    check(id >= 0 && id < injection_count(), "invalid injection id ", id, " (model has ",
          injection_count(), " points)");
    return injections[static_cast<std::size_t>(id)];
  }

  const LearnableInfo& learnable(int ordinal) const {
    check(ordinal >= 1 && ordinal <= static_cast<int>(learnables.size()), "layer ", ordinal,
          " is not a learnable layer (model has ", learnables.size(), ")");
    return learnables[static_cast<std::size_t>(ordinal - 1)];
  }

  template <typename Other>
  ModelT<Other> cast() const {
    ModelT<Other> o;
    o.spec = spec;
    o.seed = seed;
    o.out_dims = out_dims;
    o.injections = injections;
    o.learnables = learnables;
    o.state.reserve(state.size());
    for (const auto& st : state) o.state.push_back(st.template cast<Other>());
    return o;
  }
};

using Model = ModelT<float>;

/// Insert injection points: one at the input, one after every layer except
/// BatchNorm. The last one (after the final layer) is the output point.
inline ModelSpec realize_spec(const ModelSpec& user) {
  check(!user.realized, "spec already realized");
  check(user.num_classes >= 2, "need at least 2 classes, got ", user.num_classes);
  ModelSpec r = user;
  r.layers.clear();
  int next_id = 0;
  r.layers.push_back({InjectionPoint{next_id++}, "input"});
  for (const auto& l : user.layers) {
    check(!std::holds_alternative<InjectionPoint>(l.kind),
          "user specs must not contain explicit injection points (layer ", l.name, ")");
    r.layers.push_back(l);
    if (!std::holds_alternative<BatchNorm>(l.kind))
      r.layers.push_back({InjectionPoint{next_id++}, l.name});
  }
  r.realized = true;
  return r;
}

template <typename Scalar>
ModelT<Scalar> build_model_t(const ModelSpec& user_spec, std::uint64_t seed) {
  ModelT<Scalar> m;
  m.spec = user_spec.realized ? user_spec : realize_spec(user_spec);
  m.seed = seed;

  // Shape check; record per-layer output dims and tables.
  ActDims dims = ActDims::image(m.spec.in_c, m.spec.in_h, m.spec.in_w);
  if (m.spec.in_h == 1 && m.spec.in_w == 1 && m.spec.in_c > 1) {
    // vector datasets are carried as (C,1,1) images; Flatten makes them flat
  }
  m.state.resize(m.spec.layers.size());
  const RngStream init_rng = RngStream::root(seed).fork(StreamTag::Init);
  int next_learnable = 1;
  for (std::size_t i = 0; i < m.spec.layers.size(); ++i) {
    const LayerSpec& l = m.spec.layers[i];
    dims = propagate_dims(l, dims);
    m.out_dims.push_back(dims);
    if (const auto* ip = std::get_if<InjectionPoint>(&l.kind)) {
      m.injections.push_back({ip->id, i, l.name});
    }
    LayerStateT<Scalar>& st = m.state[i];
    RngStream lr = init_rng.fork(static_cast<std::uint64_t>(i));
    if (const auto* fc = std::get_if<FullyConnected>(&l.kind)) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fc->in));
      st.weight = TensorT<Scalar>::zeros({fc->out, fc->in});
      for (Index k = 0; k < st.weight.numel(); ++k)
        st.weight.data[k] =
            static_cast<Scalar>((2.0 * lr.uniform_at(static_cast<std::uint64_t>(k)) - 1.0) * limit);
      st.bias = TensorT<Scalar>::zeros({fc->out});
      m.learnables.push_back({next_learnable++, i, l.name});
    } else if (const auto* cv = std::get_if<Conv2d>(&l.kind)) {
      const Index fan_in = cv->in_ch * cv->kernel * cv->kernel;
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      st.weight = TensorT<Scalar>::zeros({cv->out_ch, cv->in_ch, cv->kernel, cv->kernel});
      for (Index k = 0; k < st.weight.numel(); ++k)
        st.weight.data[k] =
            static_cast<Scalar>((2.0 * lr.uniform_at(static_cast<std::uint64_t>(k)) - 1.0) * limit);
      st.bias = TensorT<Scalar>::zeros({cv->out_ch});
      m.learnables.push_back({next_learnable++, i, l.name});
    } else if (const auto* bn = std::get_if<BatchNorm>(&l.kind)) {
      st.gamma = TensorT<Scalar>::full({bn->features}, Scalar(1));
      st.beta = TensorT<Scalar>::zeros({bn->features});
      st.run_mean = TensorT<Scalar>::zeros({bn->features});
      st.run_var = TensorT<Scalar>::full({bn->features}, Scalar(1));
    }
  }
  check(dims.flat && dims.features == m.spec.num_classes, "output width ", dims.str(),
        " does not match class count ", m.spec.num_classes);
  // Injection ids are unique and strictly increasing by construction; assert anyway.
  for (std::size_t k = 0; k < m.injections.size(); ++k)
    check(m.injections[k].id == static_cast<int>(k), "injection enumeration broken");
  return m;
}

inline Model build_model(const ModelSpec& spec, std::uint64_t seed) {
  return build_model_t<float>(spec, seed);
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ForwardTrace {
  std::vector<TensorT<Scalar>> acts;      // acts[i] = input consumed by layer i; back() = logits
  std::vector<LayerAuxT<Scalar>> aux;     // per layer
};

/// Options for one forward pass. `plan` must already be phase-filtered by the
/// caller (training passes drop inference-only plans).
template <typename Scalar>
struct ForwardOpts {
  InjectionPlan plan = InjectionPlan::none();
  RngStream rng;                                    // unique per (run, epoch, batch)
  const std::vector<int>* repetitions = nullptr;    // per injection id; >=1; averaged
  std::function<void(int, TensorT<Scalar>&)> post_injection_hook;  // quantize probes
  const std::set<int>* capture = nullptr;
  std::map<int, TensorT<Scalar>>* captured = nullptr;
  bool training = false;
  ForwardTrace<Scalar>* trace = nullptr;
  bool check_finite = true;
};

template <typename Scalar>
TensorT<Scalar> forward_pass(ModelT<Scalar>& model, const TensorT<Scalar>& batch,
                             ForwardOpts<Scalar>& opt) {
  check(batch.rank() == 4, "batch must be N x C x H x W, got ", shape_str(batch.shape));
  check(batch.dim(1) == model.spec.in_c && batch.dim(2) == model.spec.in_h &&
            batch.dim(3) == model.spec.in_w,
        "batch shape ", shape_str(batch.shape), " does not match model input (",
        model.spec.in_c, "x", model.spec.in_h, "x", model.spec.in_w, ")");
  if (opt.plan.mode == PlanMode::WalkingAt) model.injection(opt.plan.layer_id);
  if (opt.plan.mode != PlanMode::None) opt.plan.spec.validate();

  const Index n = batch.dim(0);
  TensorT<Scalar> x = batch;
  if (opt.trace) {
    opt.trace->acts.clear();
    opt.trace->aux.clear();
    opt.trace->aux.resize(model.spec.layers.size());
  }

  ActDims dims = ActDims::image(model.spec.in_c, model.spec.in_h, model.spec.in_w);
  for (std::size_t i = 0; i < model.spec.layers.size(); ++i) {
    const LayerSpec& l = model.spec.layers[i];
    if (opt.trace) opt.trace->acts.push_back(x);
    LayerAuxT<Scalar>* aux = opt.trace ? &opt.trace->aux[i] : nullptr;
    LayerAuxT<Scalar> scratch;  // conv needs cols even without a trace
    TensorT<Scalar> y;
    if (const auto* fc = std::get_if<FullyConnected>(&l.kind)) {
      y = fc_forward(*fc, model.state[i], x);
    } else if (const auto* cv = std::get_if<Conv2d>(&l.kind)) {
      y = conv_forward(*cv, model.state[i], x, dims, aux ? aux : &scratch);
    } else if (std::holds_alternative<ReLU>(l.kind)) {
      y = relu_forward(x);
    } else if (const auto* mp = std::get_if<MaxPool2d>(&l.kind)) {
      y = maxpool_forward(*mp, x, dims, aux ? aux : &scratch);
    } else if (const auto* bn = std::get_if<BatchNorm>(&l.kind)) {
      y = bn_forward(*bn, model.state[i], x, opt.training, aux ? aux : &scratch);
    } else if (std::holds_alternative<Flatten>(l.kind)) {
      y = x.reshaped({n, dims.numel()});
    } else if (const auto* ip = std::get_if<InjectionPoint>(&l.kind)) {
      y = x;
      if (opt.plan.applies_to(ip->id)) {
        const RngStream site = opt.rng.fork(static_cast<std::uint64_t>(ip->id));
        const int reps =
            opt.repetitions ? (*opt.repetitions)[static_cast<std::size_t>(ip->id)] : 1;
        if (reps <= 1) {
          y = apply_noise(x, opt.plan.spec, site.fork(0));
        } else {
          TensorT<double> acc = TensorT<double>::zeros(x.shape);
          for (int r = 0; r < reps; ++r) {
            TensorT<Scalar> s = apply_noise(x, opt.plan.spec, site.fork(r));
            acc.data += s.data.template cast<double>();
          }
          y = x;
          y.data = (acc.data / static_cast<double>(reps)).template cast<Scalar>();
        }
      }
      if (opt.post_injection_hook) opt.post_injection_hook(ip->id, y);
      if (opt.capture && opt.capture->count(ip->id)) (*opt.captured)[ip->id] = y;
    }
    dims = propagate_dims(l, dims);
    if (opt.check_finite && !y.all_finite())
      fail("non-finite activations after layer ", l.name, " (", kind_str(l.kind), ")");
    x = std::move(y);
  }
  if (opt.trace) opt.trace->acts.push_back(x);
  return x;
}

/// Convenience wrapper matching the operation contract: noisy forward with
/// optional capture of post-injection activations.
template <typename Scalar>
std::pair<TensorT<Scalar>, std::map<int, TensorT<Scalar>>> forward(
    ModelT<Scalar>& model, const TensorT<Scalar>& batch, const InjectionPlan& plan,
    RngStream rng, const std::set<int>& capture = {}) {
  std::map<int, TensorT<Scalar>> captured;
  ForwardOpts<Scalar> opt;
  opt.plan = plan;
  opt.rng = rng;
  if (!capture.empty()) {
    for (int id : capture) model.injection(id);
    opt.capture = &capture;
    opt.captured = &captured;
  }
  TensorT<Scalar> logits = forward_pass(model, batch, opt);
  return {std::move(logits), std::move(captured)};
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Softmax cross-entropy, mean over the batch. Log-sum-exp in double.
template <typename Scalar>
double softmax_cross_entropy(const TensorT<Scalar>& logits, const std::vector<int>& labels,
                             TensorT<Scalar>* dlogits) {
  const Index n = logits.dim(0);
  const Index k = logits.dim(1);
  check(static_cast<std::size_t>(n) == labels.size(), "labels size mismatch");
  if (dlogits) *dlogits = TensorT<Scalar>::zeros(logits.shape);
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Scalar* row = logits.data.data() + i * k;
    check(labels[static_cast<std::size_t>(i)] >= 0 &&
              labels[static_cast<std::size_t>(i)] < static_cast<int>(k),
          "label out of range at row ", i);
    double mx = static_cast<double>(row[0]);
    for (Index j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (Index j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    const double lse = mx + std::log(sum);
    const int y = labels[static_cast<std::size_t>(i)];
    loss += lse - static_cast<double>(row[y]);
    if (dlogits) {
      Scalar* drow = dlogits->data.data() + i * k;
      for (Index j = 0; j < k; ++j) {
        const double p = std::exp(static_cast<double>(row[j]) - lse);
        drow[j] = static_cast<Scalar>((p - (j == y ? 1.0 : 0.0)) / static_cast<double>(n));
      }
    }
  }
  return loss / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// Backpropagate dlogits through the trace. Injection points are identity in
/// the backward pass (straight-through), whatever noise they applied forward.
template <typename Scalar>
void backward_pass(ModelT<Scalar>& model, const ForwardTrace<Scalar>& trace,
                   const TensorT<Scalar>& dlogits, std::vector<LayerGradsT<Scalar>>& grads) {
  grads.assign(model.spec.layers.size(), {});
  TensorT<Scalar> d = dlogits;
  ActDims in_dims = ActDims::image(model.spec.in_c, model.spec.in_h, model.spec.in_w);
  for (std::size_t i = model.spec.layers.size(); i-- > 0;) {
    const LayerSpec& l = model.spec.layers[i];
    const TensorT<Scalar>& x = trace.acts[i];
    ActDims dims = i == 0 ? in_dims : model.out_dims[i - 1];
    if (const auto* fc = std::get_if<FullyConnected>(&l.kind)) {
      d = fc_backward(*fc, model.state[i], x, d, grads[i]);
    } else if (const auto* cv = std::get_if<Conv2d>(&l.kind)) {
      d = conv_backward(*cv, model.state[i], x, dims, trace.aux[i], d, grads[i]);
    } else if (std::holds_alternative<ReLU>(l.kind)) {
      d = relu_backward(x, d);
    } else if (std::holds_alternative<MaxPool2d>(l.kind)) {
      d = maxpool_backward(x, trace.aux[i], d);
    } else if (const auto* bn = std::get_if<BatchNorm>(&l.kind)) {
      d = bn_backward(*bn, model.state[i], x, trace.aux[i], d, grads[i]);
    } else if (std::holds_alternative<Flatten>(l.kind)) {
      d = d.reshaped(x.shape);
    }
    // InjectionPoint: d passes through unchanged.
  }
}

// ---------------------------------------------------------------------------
// Weight utilities
// ---------------------------------------------------------------------------

/// Project every conv/fc weight to [-1, 1]. Biases and BatchNorm parameters
/// are left alone.
template <typename Scalar>
void clamp_weights(ModelT<Scalar>& model) {
  for (const auto& li : model.learnables) {
    auto& w = model.state[li.layer_index].weight;
    w.data = w.data.min(Scalar(1)).max(Scalar(-1));
  }
}

/// Mean |w| over one learnable layer's weights (biases excluded).
/// `ordinal` is the 1-based conv/fc index in network order.
template <typename Scalar>
double average_weight_magnitude(const ModelT<Scalar>& model, int ordinal) {
  const LearnableInfo& li = model.learnable(ordinal);
  const auto& w = model.state[li.layer_index].weight;
  return w.data.template cast<double>().abs().mean();
}

}  // namespace noiselab
