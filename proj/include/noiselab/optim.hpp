#pragma once

#include "noiselab/model.hpp"

namespace noiselab {

enum class OptimizerKind { Adam, SgdMomentum };

inline const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::Adam ? "adam" : "sgd";
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double momentum = 0.9;     // sgd
  double beta1 = 0.9;        // adam
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct OptimizerStateT {
  struct Slot {
    TensorT<Scalar> m, v;  // adam moments / sgd velocity (m only)
  };
  struct LayerSlots {
    Slot weight, bias, gamma, beta;
  };
  std::vector<LayerSlots> layers;
  std::int64_t step = 0;

  static OptimizerStateT init(const ModelT<Scalar>& model) {
    OptimizerStateT s;
    s.layers.resize(model.state.size());
    return s;
  }
};

namespace optdetail {

template <typename Scalar>
void adam_update(TensorT<Scalar>& p, const TensorT<Scalar>& g,
                 typename OptimizerStateT<Scalar>::Slot& slot, const OptimizerConfig& c,
                 std::int64_t t) {
  if (slot.m.numel() == 0) {
    slot.m = TensorT<Scalar>::zeros(p.shape);
    slot.v = TensorT<Scalar>::zeros(p.shape);
  }
  const Scalar b1 = static_cast<Scalar>(c.beta1), b2 = static_cast<Scalar>(c.beta2);
  slot.m.data = b1 * slot.m.data + (Scalar(1) - b1) * g.data;
  slot.v.data = b2 * slot.v.data + (Scalar(1) - b2) * g.data.square();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  const Scalar alpha = static_cast<Scalar>(c.lr / bc1);
  const Scalar denom_scale = static_cast<Scalar>(1.0 / std::sqrt(bc2));
  p.data -= alpha * slot.m.data / ((slot.v.data.sqrt() * denom_scale) + static_cast<Scalar>(c.eps));
}

template <typename Scalar>
void sgd_update(TensorT<Scalar>& p, const TensorT<Scalar>& g,
                typename OptimizerStateT<Scalar>::Slot& slot, const OptimizerConfig& c) {
  if (slot.m.numel() == 0) slot.m = TensorT<Scalar>::zeros(p.shape);
  slot.m.data = static_cast<Scalar>(c.momentum) * slot.m.data + g.data;
  p.data -= static_cast<Scalar>(c.lr) * slot.m.data;
}

}  // namespace optdetail

template <typename Scalar>
void optimizer_step(ModelT<Scalar>& model, const std::vector<LayerGradsT<Scalar>>& grads,
                    OptimizerStateT<Scalar>& state, const OptimizerConfig& cfg) {
  ++state.step;
  for (std::size_t i = 0; i < model.state.size(); ++i) {
    auto& st = model.state[i];
    auto& sl = state.layers[i];
    auto upd = [&](TensorT<Scalar>& p, const TensorT<Scalar>& g,
                   typename OptimizerStateT<Scalar>::Slot& s) {
      if (p.numel() == 0 || g.numel() == 0) return;
      if (cfg.kind == OptimizerKind::Adam)
        optdetail::adam_update(p, g, s, cfg, state.step);
      else
        optdetail::sgd_update(p, g, s, cfg);
    };
    upd(st.weight, grads[i].weight, sl.weight);
    upd(st.bias, grads[i].bias, sl.bias);
    upd(st.gamma, grads[i].gamma, sl.gamma);
    upd(st.beta, grads[i].beta, sl.beta);
  }
}

}  // namespace noiselab
