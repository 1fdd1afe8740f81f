#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "lhgnn/model.hpp"

namespace lhgnn {

namespace detail {
constexpr uint32_t kCkptMagic = 0x4c484743;  // "LHGC"
constexpr uint32_t kCkptVersion = 1;
}  // namespace detail

struct Checkpoint {
  ModelParams params;
  uint64_t config_fingerprint = 0;
  uint64_t seed = 0;
};

inline void save_checkpoint(ModelParams& params, uint64_t config_fingerprint, uint64_t seed,
                            const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write checkpoint: " + path);
  using detail::put;
  put(out, detail::kCkptMagic);
  put(out, detail::kCkptVersion);
  put(out, config_fingerprint);
  put(out, seed);
  put(out, params.leaky_slope);
  put(out, static_cast<uint8_t>(params.has_entity_emb));
  put(out, params.dims.input_dim);
  put(out, static_cast<int64_t>(params.dims.n_layers()));
  for (int64_t l = 0; l < params.dims.n_layers(); ++l) {
    put(out, params.dims.d_h[l]);
    put(out, params.dims.d_s[l]);
  }
  auto named = params.named_tensors();
  put(out, static_cast<int64_t>(named.size()));
  for (auto& [name, t] : named) {
    put(out, static_cast<int32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, t.rows());
    put(out, t.cols());
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checkpoint not found: " + path);
  using detail::get;
  uint32_t magic = 0, version = 0;
  if (!get(in, magic) || magic != detail::kCkptMagic)
    throw ParseError("checkpoint " + path + ": bad magic");
  if (!get(in, version) || version != detail::kCkptVersion)
    throw ParseError("checkpoint " + path + ": unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  get(in, ckpt.config_fingerprint);
  get(in, ckpt.seed);
  uint8_t has_entity = 0;
  get(in, ckpt.params.leaky_slope);
  get(in, has_entity);
  get(in, ckpt.params.dims.input_dim);
  int64_t n_layers = 0;
  get(in, n_layers);
  ckpt.params.dims.d_h.resize(n_layers);
  ckpt.params.dims.d_s.resize(n_layers);
  for (int64_t l = 0; l < n_layers; ++l) {
    get(in, ckpt.params.dims.d_h[l]);
    get(in, ckpt.params.dims.d_s[l]);
  }
  int64_t n_tensors = 0;
  if (!get(in, n_tensors)) throw ParseError("checkpoint " + path + ": truncated header");

  // Rebuild the shape skeleton, then fill tensors by name.
  ckpt.params.layers.resize(n_layers);
  int64_t prev = ckpt.params.dims.input_dim;
  for (int64_t l = 0; l < n_layers; ++l) {
    auto& lp = ckpt.params.layers[l];
    lp.w_s = Tensor(ckpt.params.dims.d_s[l], prev, true);
    lp.b_s = Tensor(1, ckpt.params.dims.d_s[l], true);
    lp.w_gamma = Tensor(prev, ckpt.params.dims.d_s[l], true);
    lp.b_gamma = Tensor(1, prev, true);
    lp.w_beta = Tensor(prev, ckpt.params.dims.d_s[l], true);
    lp.b_beta = Tensor(1, prev, true);
    lp.w_h = Tensor(ckpt.params.dims.d_h[l], prev, true);
    lp.b_h = Tensor(1, ckpt.params.dims.d_h[l], true);
    prev = ckpt.params.dims.d_h[l];
  }
  const int64_t dh = ckpt.params.dims.d_h.back(), ds = ckpt.params.dims.d_s.back();
  ckpt.params.w_link = Tensor(dh, ds, true);
  ckpt.params.u_link = Tensor(dh, ds, true);
  ckpt.params.b_link = Tensor(1, dh, true);
  ckpt.params.has_entity_emb = has_entity != 0;

  for (int64_t i = 0; i < n_tensors; ++i) {
    int32_t name_len = 0;
    get(in, name_len);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    int64_t rows = 0, cols = 0;
    get(in, rows);
    if (!get(in, cols)) throw ParseError("checkpoint " + path + ": truncated tensor " + name);
    Tensor t(rows, cols, true);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw ParseError("checkpoint " + path + ": truncated tensor data for " + name);

    if (name == "entity_emb") {
      ckpt.params.entity_emb = t;
      continue;
    }
    bool placed = false;
    for (auto& [want, slot] : ckpt.params.named_tensors()) {
      if (want != name) continue;
      if (slot.rows() != rows || slot.cols() != cols)
        throw ParseError("checkpoint " + path + ": tensor " + name + " has shape " +
                         t.shape_str() + ", expected " + slot.shape_str());
      std::copy(t.data(), t.data() + t.size(), slot.data());
      placed = true;
      break;
    }
    if (!placed) throw ParseError("checkpoint " + path + ": unexpected tensor " + name);
  }
  return ckpt;
}

}  // namespace lhgnn
