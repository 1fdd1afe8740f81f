#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lhgnn/errors.hpp"
#include "lhgnn/rng.hpp"

namespace lhgnn {

using NodeId = int32_t;
using Edge = std::pair<NodeId, NodeId>;

// A latent heterogeneous graph as the model is allowed to see it: nodes,
// directed edge records, a symmetric adjacency, and optional node features.
// Type labels are deliberately not part of this struct; they travel in
// ProbeLabels and are consumed only by the evaluation probe.
struct Graph {
  int64_t node_count = 0;
  std::vector<Edge> edges;                   // deduplicated directed records
  std::vector<std::vector<NodeId>> adjacency;  // symmetric, sorted, unique

  int64_t feat_dim = 0;
  std::shared_ptr<const std::vector<double>> features;  // node_count x feat_dim

  bool has_features() const { return feat_dim > 0 && features; }
  const double* feature_row(NodeId v) const { return features->data() + int64_t(v) * feat_dim; }
  int64_t degree(NodeId v) const { return static_cast<int64_t>(adjacency[v].size()); }

  // Undirected membership test against the symmetric adjacency.
  bool has_edge(NodeId u, NodeId v) const {
    const auto& nbrs = adjacency[u];
    return std::binary_search(nbrs.begin(), nbrs.end(), v);
  }

  void rebuild_adjacency() {
    adjacency.assign(node_count, {});
    for (const auto& [h, t] : edges) {
      adjacency[h].push_back(t);
      adjacency[t].push_back(h);
    }
    for (auto& nbrs : adjacency) {
      std::sort(nbrs.begin(), nbrs.end());
      nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
  }
};

// Ground-truth node types, kept out of Graph so the model path cannot read
// them. type_of is -1 for unlabeled nodes.
struct ProbeLabels {
  std::vector<int32_t> type_of;
  std::vector<std::string> type_names;
  bool empty() const { return type_names.empty(); }
};

struct Dataset {
  Graph graph;
  ProbeLabels labels;
  std::vector<std::string> id_names;  // original node ids, index = dense id
};

struct LinkSplit {
  std::shared_ptr<const Graph> full;  // negative sampling rejects against this
  Graph train_graph;                  // rebuilt from train edges only
  std::vector<Edge> train_edges, val_edges, test_edges;
};

struct Triplet {
  NodeId a, b, c;
};

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace detail {

inline bool parse_dense_int(const std::string& s, int64_t& out) {
  if (s.empty() || s.size() > 18) return false;
  int64_t v = 0;
  for (char ch : s) {
    if (ch < '0' || ch > '9') return false;
    v = v * 10 + (ch - '0');
  }
  if (s.size() > 1 && s[0] == '0') return false;  // canonical form only
  out = v;
  return true;
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (start <= line.size()) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

}  // namespace detail

// Feature matrix: a header line "n d" followed by n rows of d numbers.
inline std::pair<int64_t, std::shared_ptr<std::vector<double>>> load_features(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("feature file not found: " + path);
  int64_t n = 0, d = 0;
  if (!(in >> n >> d) || n < 0 || d <= 0)
    throw ParseError("feature file " + path + ": malformed header, expected `n d`");
  auto data = std::make_shared<std::vector<double>>(static_cast<size_t>(n * d));
  for (int64_t i = 0; i < n * d; ++i)
    if (!(in >> (*data)[i]))
      throw ParseError("feature file " + path + ": truncated at value " + std::to_string(i));
  return {d, data};
}

// Edge list: `head<TAB>tail` per line, optional third column ignored (kept in
// the file for provenance only). Without features, arbitrary string ids are
// remapped densely by first appearance. With features, the feature row count
// fixes node_count and ids must already be integers in [0, node_count).
inline Dataset load_edge_list(const std::string& path, const std::string& feature_path = "",
                              const std::string& label_path = "") {
  std::ifstream in(path);
  if (!in) throw ParseError("edge file not found: " + path);

  Dataset ds;
  Graph& g = ds.graph;

  int64_t n_feat_rows = 0;
  if (!feature_path.empty()) {
    auto [d, data] = load_features(feature_path);
    g.feat_dim = d;
    g.features = data;
    n_feat_rows = static_cast<int64_t>(data->size()) / d;
  }

  std::unordered_map<std::string, NodeId> id_of;
  auto intern = [&](const std::string& token, int64_t line_no) -> NodeId {
    if (n_feat_rows > 0) {
      int64_t v = 0;
      if (!detail::parse_dense_int(token, v) || v >= n_feat_rows)
        throw ParseError(path + ":" + std::to_string(line_no) + ": node id `" + token +
                         "` is not a valid index into the " + std::to_string(n_feat_rows) +
                         "-row feature matrix");
      return static_cast<NodeId>(v);
    }
    auto [it, inserted] = id_of.emplace(token, static_cast<NodeId>(ds.id_names.size()));
    if (inserted) ds.id_names.push_back(token);
    return it->second;
  };

  std::string line;
  int64_t line_no = 0;
  std::vector<Edge> raw;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_fields(line);
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty())
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected `head<TAB>tail[<TAB>type]`, got `" + line + "`");
    const NodeId h = intern(fields[0], line_no);
    const NodeId t = intern(fields[1], line_no);
    if (h == t) continue;  // raw self-loops dropped; the model adds its own self-loop path
    raw.emplace_back(h, t);
  }

  g.node_count = n_feat_rows > 0 ? n_feat_rows : static_cast<int64_t>(ds.id_names.size());
  if (n_feat_rows > 0) {
    ds.id_names.resize(g.node_count);
    for (int64_t i = 0; i < g.node_count; ++i) ds.id_names[i] = std::to_string(i);
  }

  std::sort(raw.begin(), raw.end());
  raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
  g.edges = std::move(raw);
  g.rebuild_adjacency();

  if (!label_path.empty()) {
    std::ifstream lin(label_path);
    if (!lin) throw ParseError("label file not found: " + label_path);
    ds.labels.type_of.assign(g.node_count, -1);
    std::unordered_map<std::string, NodeId> node_lookup;
    if (n_feat_rows == 0)
      for (size_t i = 0; i < ds.id_names.size(); ++i)
        node_lookup.emplace(ds.id_names[i], static_cast<NodeId>(i));
    std::unordered_map<std::string, int32_t> type_ids;
    std::vector<std::pair<std::string, std::string>> rows;
    int64_t lno = 0;
    while (std::getline(lin, line)) {
      ++lno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto fields = detail::split_fields(line);
      if (fields.size() != 2)
        throw ParseError(label_path + ":" + std::to_string(lno) +
                         ": expected `node_id<TAB>type_label`");
      rows.push_back({fields[0], fields[1]});
    }
    // Deterministic type ids: lexicographic over label names.
    std::vector<std::string> names;
    for (auto& [node, label] : rows) names.push_back(label);
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    for (size_t i = 0; i < names.size(); ++i) type_ids[names[i]] = static_cast<int32_t>(i);
    ds.labels.type_names = names;
    for (auto& [node, label] : rows) {
      NodeId v;
      if (n_feat_rows > 0) {
        int64_t x = 0;
        if (!detail::parse_dense_int(node, x) || x >= g.node_count)
          throw ParseError(label_path + ": unknown node id `" + node + "`");
        v = static_cast<NodeId>(x);
      } else {
        auto it = node_lookup.find(node);
        if (it == node_lookup.end())
          throw ParseError(label_path + ": node id `" + node + "` not present in edge list");
        v = it->second;
      }
      ds.labels.type_of[v] = type_ids[label];
    }
  }
  return ds;
}

inline void write_id_map(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write id map: " + path);
  for (size_t i = 0; i < ds.id_names.size(); ++i) out << ds.id_names[i] << '\t' << i << '\n';
}

// ---------------------------------------------------------------------------
// Splitting and triplet sampling
// ---------------------------------------------------------------------------

inline LinkSplit split_links(std::shared_ptr<const Graph> g, double r_train, double r_val,
                             double r_test, uint64_t seed) {
  if (std::abs(r_train + r_val + r_test - 1.0) > 1e-9)
    throw ConfigError("split_links: ratios must sum to 1, got " + std::to_string(r_train) + "," +
                      std::to_string(r_val) + "," + std::to_string(r_test));
  if (r_train < 0 || r_val < 0 || r_test < 0)
    throw ConfigError("split_links: ratios must be nonnegative");

  const int64_t m = static_cast<int64_t>(g->edges.size());
  std::vector<int64_t> perm(m);
  for (int64_t i = 0; i < m; ++i) perm[i] = i;
  Rng rng = derive_stream(seed, "split");
  rng.shuffle(perm);

  const int64_t n_train = static_cast<int64_t>(std::floor(r_train * m));
  const int64_t n_val = static_cast<int64_t>(std::floor(r_val * m));

  LinkSplit split;
  split.full = g;
  for (int64_t i = 0; i < m; ++i) {
    const Edge& e = g->edges[perm[i]];
    if (i < n_train)
      split.train_edges.push_back(e);
    else if (i < n_train + n_val)
      split.val_edges.push_back(e);
    else
      split.test_edges.push_back(e);
  }
  split.train_graph.node_count = g->node_count;
  split.train_graph.feat_dim = g->feat_dim;
  split.train_graph.features = g->features;
  split.train_graph.edges = split.train_edges;
  split.train_graph.rebuild_adjacency();
  return split;
}

// Draws (a,b) from the train edges and c uniformly from all nodes, redrawing
// while c == a or (a,c) is an edge anywhere in the full graph. After 100
// rejections (complete neighborhoods) any c != a is accepted.
inline std::vector<Triplet> sample_triplets(const LinkSplit& split, int64_t batch_size, Rng& rng,
                                            const std::function<void(const std::string&)>& warn = {}) {
  if (batch_size < 1) throw ContractError("sample_triplets: batch_size must be >= 1");
  if (split.train_edges.empty()) throw ContractError("sample_triplets: no training edges");
  const int64_t n = split.full->node_count;

  std::vector<Triplet> out;
  out.reserve(batch_size);
  for (int64_t i = 0; i < batch_size; ++i) {
    const Edge& e = split.train_edges[rng.uniform_int(split.train_edges.size())];
    NodeId c = -1;
    bool clean = false;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const NodeId cand = static_cast<NodeId>(rng.uniform_int(n));
      if (cand == e.first || split.full->has_edge(e.first, cand)) continue;
      c = cand;
      clean = true;
      break;
    }
    if (!clean) {
      if (warn) warn("negative sampling: anchor " + std::to_string(e.first) +
                     " neighbors every node; accepting a linked negative");
      do {
        c = static_cast<NodeId>(rng.uniform_int(n));
      } while (c == e.first);
    }
    out.push_back({e.first, e.second, c});
  }
  return out;
}

// ---------------------------------------------------------------------------
// BFS subsampling (desk-scale experiments)
// ---------------------------------------------------------------------------

inline Dataset bfs_subgraph(const Dataset& ds, int64_t target_nodes, uint64_t seed) {
  const Graph& g = ds.graph;
  target_nodes = std::min<int64_t>(target_nodes, g.node_count);
  Rng rng = derive_stream(seed, "bfs");

  std::vector<NodeId> picked;
  std::vector<char> visited(g.node_count, 0);
  std::deque<NodeId> queue;
  while (static_cast<int64_t>(picked.size()) < target_nodes) {
    if (queue.empty()) {
      NodeId s;
      do {
        s = static_cast<NodeId>(rng.uniform_int(g.node_count));
      } while (visited[s]);
      visited[s] = 1;
      queue.push_back(s);
      picked.push_back(s);
    }
    const NodeId v = queue.front();
    queue.pop_front();
    for (NodeId u : g.adjacency[v]) {
      if (visited[u] || static_cast<int64_t>(picked.size()) >= target_nodes) continue;
      visited[u] = 1;
      queue.push_back(u);
      picked.push_back(u);
    }
  }

  std::vector<NodeId> dense(g.node_count, -1);
  for (size_t i = 0; i < picked.size(); ++i) dense[picked[i]] = static_cast<NodeId>(i);

  Dataset sub;
  sub.graph.node_count = target_nodes;
  for (const auto& [h, t] : g.edges)
    if (dense[h] >= 0 && dense[t] >= 0) sub.graph.edges.emplace_back(dense[h], dense[t]);
  sub.graph.rebuild_adjacency();

  if (g.has_features()) {
    auto feats = std::make_shared<std::vector<double>>(target_nodes * g.feat_dim);
    for (int64_t i = 0; i < target_nodes; ++i)
      std::copy(g.feature_row(picked[i]), g.feature_row(picked[i]) + g.feat_dim,
                feats->data() + i * g.feat_dim);
    sub.graph.feat_dim = g.feat_dim;
    sub.graph.features = feats;
  }
  if (!ds.labels.empty()) {
    sub.labels.type_names = ds.labels.type_names;
    sub.labels.type_of.resize(target_nodes);
    for (int64_t i = 0; i < target_nodes; ++i) sub.labels.type_of[i] = ds.labels.type_of[picked[i]];
  }
  sub.id_names.resize(target_nodes);
  for (int64_t i = 0; i < target_nodes; ++i)
    sub.id_names[i] = picked[i] < static_cast<NodeId>(ds.id_names.size())
                          ? ds.id_names[picked[i]]
                          : std::to_string(picked[i]);
  return sub;
}

}  // namespace lhgnn
