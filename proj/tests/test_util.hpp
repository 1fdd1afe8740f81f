#pragma once

#include <memory>
#include <vector>

#include "lhgnn/graph.hpp"
#include "lhgnn/rng.hpp"

namespace testutil {

// 6-node toy graph: a cycle with a chord plus random features.
inline lhgnn::Dataset toy6(int64_t feat_dim = 6, uint64_t seed = 2024) {
  lhgnn::Dataset ds;
  ds.graph.node_count = 6;
  ds.graph.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}, {1, 4}};
  ds.graph.rebuild_adjacency();
  auto feats = std::make_shared<std::vector<double>>(6 * feat_dim);
  lhgnn::Rng rng(seed);
  for (auto& x : *feats) x = rng.gaussian() * 0.5;
  ds.graph.feat_dim = feat_dim;
  ds.graph.features = feats;
  ds.labels.type_names = {"even", "odd"};
  ds.labels.type_of = {0, 1, 0, 1, 0, 1};
  for (int i = 0; i < 6; ++i) ds.id_names.push_back(std::to_string(i));
  return ds;
}

inline std::shared_ptr<lhgnn::Graph> share(const lhgnn::Graph& g) {
  return std::make_shared<lhgnn::Graph>(g);
}

}  // namespace testutil
