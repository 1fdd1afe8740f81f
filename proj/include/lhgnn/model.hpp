#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "lhgnn/graph.hpp"
#include "lhgnn/ops.hpp"
#include "lhgnn/path_sampler.hpp"
#include "lhgnn/rng.hpp"
#include "lhgnn/tensor.hpp"

namespace lhgnn {

// Ablation variants. The degenerate ones freeze parts of the model in both
// training and testing.
enum class Variant { kFull, kNoLinkEncoder, kNoPersonalization, kNeither };

inline bool uses_film(Variant v) {
  return v == Variant::kFull || v == Variant::kNoLinkEncoder;
}
inline bool uses_link_encoder(Variant v) {
  return v == Variant::kFull || v == Variant::kNoPersonalization;
}

inline Variant variant_from_name(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "no_link_encoder") return Variant::kNoLinkEncoder;
  if (name == "no_personalization") return Variant::kNoPersonalization;
  if (name == "neither") return Variant::kNeither;
  throw ConfigError("unknown ablation variant: " + name);
}

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoLinkEncoder: return "no_link_encoder";
    case Variant::kNoPersonalization: return "no_personalization";
    default: return "neither";
  }
}

// One LHGNN layer's learnables: semantic encoder, FiLM generators, update.
struct LayerParams {
  Tensor w_s, b_s;          // d_s x d_h_prev, 1 x d_s
  Tensor w_gamma, b_gamma;  // d_h_prev x d_s, 1 x d_h_prev
  Tensor w_beta, b_beta;
  Tensor w_h, b_h;          // d_h x d_h_prev, 1 x d_h
};

struct ModelDims {
  int64_t input_dim = 0;       // feature dim, or entity embedding dim
  std::vector<int64_t> d_h;    // per layer
  std::vector<int64_t> d_s;    // per layer
  int64_t n_layers() const { return static_cast<int64_t>(d_h.size()); }
};

struct ModelParams {
  ModelDims dims;
  std::vector<LayerParams> layers;
  Tensor w_link, u_link, b_link;  // d_h_last x d_s_last (x2), 1 x d_h_last
  Tensor entity_emb;              // n x input_dim; only for featureless graphs
  bool has_entity_emb = false;
  double leaky_slope = 0.01;

  struct Named {
    std::string name;
    Tensor tensor;
  };

  std::vector<Named> named_tensors() {
    std::vector<Named> out;
    for (size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layer" + std::to_string(l + 1) + ".";
      out.push_back({p + "w_s", layers[l].w_s});
      out.push_back({p + "b_s", layers[l].b_s});
      out.push_back({p + "w_gamma", layers[l].w_gamma});
      out.push_back({p + "b_gamma", layers[l].b_gamma});
      out.push_back({p + "w_beta", layers[l].w_beta});
      out.push_back({p + "b_beta", layers[l].b_beta});
      out.push_back({p + "w_h", layers[l].w_h});
      out.push_back({p + "b_h", layers[l].b_h});
    }
    out.push_back({"link.w", w_link});
    out.push_back({"link.u", u_link});
    out.push_back({"link.b", b_link});
    if (has_entity_emb) out.push_back({"entity_emb", entity_emb});
    return out;
  }

  void zero_grad() {
    for (auto& [name, t] : named_tensors()) t.zero_grad();
  }
};

// Glorot-uniform matrices, zero biases.
inline Tensor xavier(int64_t rows, int64_t cols, Rng& rng) {
  Tensor t(rows, cols, true);
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

inline ModelParams init_model(const ModelDims& dims, uint64_t seed, int64_t entity_count = 0,
                              double leaky_slope = 0.01) {
  if (dims.n_layers() < 1) throw ConfigError("init_model: need at least one layer");
  ModelParams mp;
  mp.dims = dims;
  mp.leaky_slope = leaky_slope;
  Rng rng = derive_stream(seed, "init");
  int64_t prev = dims.input_dim;
  for (int64_t l = 0; l < dims.n_layers(); ++l) {
    LayerParams lp;
    lp.w_s = xavier(dims.d_s[l], prev, rng);
    lp.b_s = Tensor(1, dims.d_s[l], true);
    lp.w_gamma = xavier(prev, dims.d_s[l], rng);
    lp.b_gamma = Tensor(1, prev, true);
    lp.w_beta = xavier(prev, dims.d_s[l], rng);
    lp.b_beta = Tensor(1, prev, true);
    lp.w_h = xavier(dims.d_h[l], prev, rng);
    lp.b_h = Tensor(1, dims.d_h[l], true);
    mp.layers.push_back(std::move(lp));
    prev = dims.d_h[l];
  }
  const int64_t dh = dims.d_h.back(), ds = dims.d_s.back();
  mp.w_link = xavier(dh, ds, rng);
  mp.u_link = xavier(dh, ds, rng);
  mp.b_link = Tensor(1, dh, true);
  if (entity_count > 0) {
    mp.has_entity_emb = true;
    Rng erng = derive_stream(seed, "init_entity");
    mp.entity_emb = Tensor(entity_count, dims.input_dim, true);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims.input_dim));
    for (int64_t i = 0; i < mp.entity_emb.size(); ++i)
      mp.entity_emb.data()[i] = erng.gaussian() * scale;
  }
  return mp;
}

// ---------------------------------------------------------------------------
// Batch plan: per-layer active sets and index arrays
// ---------------------------------------------------------------------------
//
// The mini-batch forward touches only nodes reachable from the batch targets
// through their sampled paths. active[l] lists the nodes whose h^l gets
// computed; active[l-1] = active[l] plus every node on their paths. Index
// arrays address rows of the previous layer's active block.

struct LayerPlan {
  ops::IndexVec u_idx, seg, flat_nodes, path_offsets, self_idx;
  ops::WeightVec weight, mult, inv_count;
  int64_t n_paths = 0;
};

struct BatchPlan {
  std::vector<std::vector<NodeId>> active;      // n_layers + 1 entries
  std::vector<std::vector<int64_t>> local_of;   // dense global -> row, -1 outside
  std::vector<LayerPlan> layers;                // layers[l-1] feeds layer l

  int64_t final_row(NodeId v) const { return local_of.back()[v]; }
  int64_t semantic_row(NodeId v) const { return local_of[local_of.size() - 2][v]; }
};

inline BatchPlan build_batch_plan(const PathSet& paths, int64_t node_count,
                                  std::vector<NodeId> targets, int64_t n_layers, double lambda) {
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

  BatchPlan plan;
  plan.active.resize(n_layers + 1);
  plan.local_of.resize(n_layers + 1);
  plan.layers.resize(n_layers);
  plan.active[n_layers] = std::move(targets);

  for (int64_t l = n_layers; l >= 1; --l) {
    const auto& tgts = plan.active[l];
    std::vector<char> mark(node_count, 0);
    for (NodeId v : tgts) {
      mark[v] = 1;
      for (NodeId u : paths.per_node[v].flat) mark[u] = 1;
    }
    auto& src = plan.active[l - 1];
    for (int64_t v = 0; v < node_count; ++v)
      if (mark[v]) src.push_back(static_cast<NodeId>(v));

    auto& local = plan.local_of[l - 1];
    local.assign(node_count, -1);
    for (size_t i = 0; i < src.size(); ++i) local[src[i]] = static_cast<int64_t>(i);

    LayerPlan lp;
    auto u_idx = std::make_shared<std::vector<int64_t>>();
    auto seg = std::make_shared<std::vector<int64_t>>();
    auto flat = std::make_shared<std::vector<int64_t>>();
    auto poff = std::make_shared<std::vector<int64_t>>();
    auto self_idx = std::make_shared<std::vector<int64_t>>();
    auto weight = std::make_shared<std::vector<double>>();
    auto mult = std::make_shared<std::vector<double>>();
    auto inv_count = std::make_shared<std::vector<double>>();
    poff->push_back(0);

    for (size_t t = 0; t < tgts.size(); ++t) {
      const NodePaths& np = paths.per_node[tgts[t]];
      self_idx->push_back(local[tgts[t]]);
      inv_count->push_back(1.0 / static_cast<double>(np.total + 1));
      for (int64_t p = 0; p < np.n_unique(); ++p) {
        const int64_t lo = np.offsets[p], hi = np.offsets[p + 1];
        const int64_t hops = hi - lo - 1;
        u_idx->push_back(local[np.flat[hi - 1]]);
        seg->push_back(static_cast<int64_t>(t));
        mult->push_back(static_cast<double>(np.mult[p]));
        weight->push_back(np.mult[p] * std::exp(-lambda * static_cast<double>(hops)));
        for (int64_t j = lo; j < hi; ++j) flat->push_back(local[np.flat[j]]);
        poff->push_back(static_cast<int64_t>(flat->size()));
      }
    }
    lp.n_paths = static_cast<int64_t>(u_idx->size());
    lp.u_idx = u_idx;
    lp.seg = seg;
    lp.flat_nodes = flat;
    lp.path_offsets = poff;
    lp.self_idx = self_idx;
    lp.weight = weight;
    lp.mult = mult;
    lp.inv_count = inv_count;
    plan.layers[l - 1] = std::move(lp);
  }

  auto& final_local = plan.local_of[n_layers];
  final_local.assign(node_count, -1);
  for (size_t i = 0; i < plan.active[n_layers].size(); ++i)
    final_local[plan.active[n_layers][i]] = static_cast<int64_t>(i);
  return plan;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct ForwardOut {
  std::vector<Tensor> h;  // h[l]: layer-l primary embeddings over active[l] (h[0] = inputs)
  std::vector<Tensor> s;  // s[l]: layer-l semantics over active[l-1]; s[0] unused
  std::vector<Tensor> gamma_norm_sum, beta_norm_sum;  // per layer, scalars
  std::vector<double> mean_gamma_norm, mean_beta_norm;

  Tensor h_final() const { return h.back(); }
  Tensor s_final() const { return s.back(); }
};

// Rows of the input block for the layer-0 active set: node features (constant)
// or learnable entity vectors (gathered through the tape).
inline Tensor input_block(Tape* tape, const ModelParams& params, const Graph& g,
                          const std::vector<NodeId>& nodes) {
  if (params.has_entity_emb) {
    auto idx = std::make_shared<std::vector<int64_t>>(nodes.begin(), nodes.end());
    return ops::gather_rows(tape, params.entity_emb, idx);
  }
  if (!g.has_features())
    throw ConfigError("model input: graph has no features and no entity embeddings configured");
  Tensor h0(static_cast<int64_t>(nodes.size()), g.feat_dim);
  for (size_t i = 0; i < nodes.size(); ++i)
    std::copy(g.feature_row(nodes[i]), g.feature_row(nodes[i]) + g.feat_dim,
              h0.data() + static_cast<int64_t>(i) * g.feat_dim);
  return h0;
}

inline ForwardOut model_forward(Tape* tape, const ModelParams& params, const Graph& g,
                                const BatchPlan& plan, Variant variant) {
  const int64_t n_layers = static_cast<int64_t>(plan.layers.size());
  ForwardOut out;
  out.h.resize(n_layers + 1);
  out.s.resize(n_layers + 1);
  out.h[0] = input_block(tape, params, g, plan.active[0]);

  const bool film = uses_film(variant);
  for (int64_t l = 1; l <= n_layers; ++l) {
    const LayerParams& lp = params.layers[l - 1];
    const LayerPlan& pl = plan.layers[l - 1];
    Tensor h_prev = out.h[l - 1];

    // Eq-style semantic encoding: S = LeakyReLU(H W_s^T + b_s), rows follow
    // the previous layer's active set.
    Tensor s_l = ops::leaky_relu(
        tape, ops::add(tape, ops::matmul(tape, h_prev, lp.w_s, false, true), lp.b_s),
        params.leaky_slope);
    out.s[l] = s_l;

    Tensor s_path;
    if (film) s_path = ops::segment_mean_rows(tape, s_l, pl.flat_nodes, pl.path_offsets);

    ops::FilmAggregateSpec spec;
    spec.u_idx = pl.u_idx;
    spec.seg = pl.seg;
    spec.weight = pl.weight;
    spec.mult = pl.mult;
    spec.self_idx = pl.self_idx;
    spec.inv_count = pl.inv_count;
    spec.identity_film = !film;
    spec.slope = params.leaky_slope;
    auto agg = ops::film_context_aggregate(tape, s_path, h_prev, lp.w_gamma, lp.b_gamma,
                                           lp.w_beta, lp.b_beta, spec);
    out.gamma_norm_sum.push_back(agg.gamma_norm_sum);
    out.beta_norm_sum.push_back(agg.beta_norm_sum);
    out.mean_gamma_norm.push_back(agg.mean_gamma_norm);
    out.mean_beta_norm.push_back(agg.mean_beta_norm);

    Tensor h_pre = ops::leaky_relu(
        tape, ops::add(tape, ops::matmul(tape, agg.context, lp.w_h, false, true), lp.b_h),
        params.leaky_slope);
    out.h[l] = ops::l2_normalize(tape, h_pre);
  }
  return out;
}

// Whole-graph plan (inference, evaluation, the probe).
inline BatchPlan full_graph_plan(const PathSet& paths, int64_t node_count, int64_t n_layers,
                                 double lambda) {
  std::vector<NodeId> all(node_count);
  for (int64_t v = 0; v < node_count; ++v) all[v] = static_cast<NodeId>(v);
  return build_batch_plan(paths, node_count, std::move(all), n_layers, lambda);
}

}  // namespace lhgnn
