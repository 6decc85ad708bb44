#include "noiselab/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "noiselab/serialize.hpp"

namespace noiselab {

namespace {

constexpr char kMagic[8] = {'N', 'L', 'C', 'K', 'P', 'T', '0', '1'};

struct TensorRef {
  const Tensor* t;
  std::string name;
};

std::vector<TensorRef> tensor_manifest(const Model& model) {
  std::vector<TensorRef> refs;
  for (std::size_t i = 0; i < model.state.size(); ++i) {
    const auto& st = model.state[i];
    const std::string base = cat("layer", i, ".");
    auto add = [&](const Tensor& t, const char* field) {
      if (t.numel() > 0) refs.push_back({&t, base + field});
    };
    add(st.weight, "weight");
    add(st.bias, "bias");
    add(st.gamma, "gamma");
    add(st.beta, "beta");
    add(st.run_mean, "run_mean");
    add(st.run_var, "run_var");
  }
  return refs;
}

Tensor* tensor_by_name(Model& model, const std::string& name) {
  const auto dot = name.find('.');
  check(dot != std::string::npos && name.rfind("layer", 0) == 0, "bad tensor name ", name);
  const std::size_t idx = std::stoul(name.substr(5, dot - 5));
  check(idx < model.state.size(), "tensor name ", name, " out of range");
  auto& st = model.state[idx];
  const std::string field = name.substr(dot + 1);
  if (field == "weight") return &st.weight;
  if (field == "bias") return &st.bias;
  if (field == "gamma") return &st.gamma;
  if (field == "beta") return &st.beta;
  if (field == "run_mean") return &st.run_mean;
  if (field == "run_var") return &st.run_var;
  fail("unknown tensor field in ", name);
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  const auto refs = tensor_manifest(model);
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& r : refs) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(r.t->numel()) * sizeof(float);
    tensors.push_back(json{{"name", r.name},
                           {"shape", r.t->shape},
                           {"byte_offset", offset},
                           {"byte_len", bytes}});
    offset += bytes;
  }
  const json header{{"format_version", 1},
                    {"library_version", kVersion},
                    {"seed", model.seed},
                    {"spec", to_json(model.spec)},
                    {"tensors", tensors}};
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot write checkpoint ", path);
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& r : refs)
    out.write(reinterpret_cast<const char*>(r.t->data.data()),
              static_cast<std::streamsize>(r.t->numel() * sizeof(float)));
  check(out.good(), "short write on checkpoint ", path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open checkpoint ", path);
  char magic[8];
  in.read(magic, sizeof magic);
  check(in.good() && std::memcmp(magic, kMagic, sizeof kMagic) == 0, path,
        ": not a model checkpoint (bad magic)");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  check(in.good() && hlen > 0 && hlen < (1ull << 30), path, ": corrupt header length");
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  check(in.good(), path, ": truncated header");
  const json header = json::parse(hs);
  check(header.at("format_version").get<int>() == 1, path, ": unsupported checkpoint version ",
        header.at("format_version").get<int>());

  Model model = build_model(spec_from_json(header.at("spec")),
                            header.at("seed").get<std::uint64_t>());
  for (const auto& tj : header.at("tensors")) {
    Tensor* t = tensor_by_name(model, tj.at("name").get<std::string>());
    const Shape shape = tj.at("shape").get<Shape>();
    check(shape == t->shape, path, ": tensor ", tj.at("name").get<std::string>(),
          " shape mismatch");
    const std::uint64_t bytes = tj.at("byte_len").get<std::uint64_t>();
    check(bytes == static_cast<std::uint64_t>(t->numel()) * sizeof(float), path,
          ": tensor byte length mismatch");
    in.read(reinterpret_cast<char*>(t->data.data()), static_cast<std::streamsize>(bytes));
    check(in.good(), path, ": truncated tensor data");
  }
  return model;
}

}  // namespace noiselab
