#pragma once

#include <json.hpp>

#include "noiselab/model.hpp"
#include "noiselab/noise.hpp"

namespace noiselab {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// NoiseSpec: {type, sigma_add, sigma_mul, order}
// ---------------------------------------------------------------------------

inline json to_json(const NoiseSpec& s) {
  return json{{"type", to_string(s.kind)},
              {"sigma_add", s.sigma_add},
              {"sigma_mul", s.sigma_mul},
              {"order", to_string(s.order)}};
}

inline NoiseSpec noise_from_json(const json& j) {
  NoiseSpec s;
  const std::string type = j.at("type").get<std::string>();
  if (type == "additive")
    s.kind = NoiseKind::Additive;
  else if (type == "multiplicative")
    s.kind = NoiseKind::Multiplicative;
  else if (type == "mixed")
    s.kind = NoiseKind::Mixed;
  else
    fail("unknown noise type '", type, "'");
  s.sigma_add = j.value("sigma_add", 0.0);
  s.sigma_mul = j.value("sigma_mul", 0.0);
  const std::string order = j.value("order", "mul_first");
  if (order == "mul_first")
    s.order = MixOrder::MultiplicativeFirst;
  else if (order == "add_first")
    s.order = MixOrder::AdditiveFirst;
  else
    fail("unknown mixed-noise order '", order, "'");
  s.validate();
  return s;
}

inline Phase phase_from_string(const std::string& p) {
  if (p == "train_and_inference") return Phase::TrainAndInference;
  if (p == "inference_only") return Phase::InferenceOnly;
  fail("unknown phase '", p, "'");
}

// ---------------------------------------------------------------------------
// Layer list / ModelSpec
// ---------------------------------------------------------------------------

inline json to_json(const LayerSpec& l) {
  json j{{"name", l.name}};
  struct V {
    json& j;
    void operator()(const FullyConnected& fc) const {
      j["kind"] = "fc";
      j["in"] = fc.in;
      j["out"] = fc.out;
    }
    void operator()(const Conv2d& cv) const {
      j["kind"] = "conv";
      j["in_ch"] = cv.in_ch;
      j["out_ch"] = cv.out_ch;
      j["kernel"] = cv.kernel;
      j["stride"] = cv.stride;
      j["pad"] = cv.pad;
    }
    void operator()(const ReLU&) const { j["kind"] = "relu"; }
    void operator()(const MaxPool2d& mp) const {
      j["kind"] = "maxpool";
      j["kernel"] = mp.kernel;
      j["stride"] = mp.stride;
    }
    void operator()(const BatchNorm& bn) const {
      j["kind"] = "batchnorm";
      j["features"] = bn.features;
    }
    void operator()(const Flatten&) const { j["kind"] = "flatten"; }
    void operator()(const InjectionPoint& ip) const {
      j["kind"] = "inject";
      j["id"] = ip.id;
    }
  };
  std::visit(V{j}, l.kind);
  return j;
}

inline LayerSpec layer_from_json(const json& j) {
  LayerSpec l;
  l.name = j.at("name").get<std::string>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "fc")
    l.kind = FullyConnected{j.at("in").get<Index>(), j.at("out").get<Index>()};
  else if (kind == "conv")
    l.kind = Conv2d{j.at("in_ch").get<Index>(), j.at("out_ch").get<Index>(),
                    j.at("kernel").get<Index>(), j.at("stride").get<Index>(),
                    j.at("pad").get<Index>()};
  else if (kind == "relu")
    l.kind = ReLU{};
  else if (kind == "maxpool")
    l.kind = MaxPool2d{j.at("kernel").get<Index>(), j.at("stride").get<Index>()};
  else if (kind == "batchnorm")
    l.kind = BatchNorm{j.at("features").get<Index>()};
  else if (kind == "flatten")
    l.kind = Flatten{};
  else if (kind == "inject")
    l.kind = InjectionPoint{j.at("id").get<int>()};
  else
    fail("unknown layer kind '", kind, "'");
  return l;
}

inline json to_json(const ModelSpec& s) {
  json layers = json::array();
  for (const auto& l : s.layers) layers.push_back(to_json(l));
  return json{{"arch", s.arch},         {"in_c", s.in_c},
              {"in_h", s.in_h},         {"in_w", s.in_w},
              {"num_classes", s.num_classes}, {"realized", s.realized},
              {"layers", layers}};
}

inline ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.arch = j.at("arch").get<std::string>();
  s.in_c = j.at("in_c").get<Index>();
  s.in_h = j.at("in_h").get<Index>();
  s.in_w = j.at("in_w").get<Index>();
  s.num_classes = j.at("num_classes").get<int>();
  s.realized = j.value("realized", false);
  for (const auto& lj : j.at("layers")) s.layers.push_back(layer_from_json(lj));
  return s;
}

/// FNV-1a over the canonical (key-sorted) JSON dump; stable under field
/// reordering because nlohmann objects iterate in key order.
inline std::string config_hash(const json& j) {
  const std::string dump = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace noiselab
