#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lhgnn/errors.hpp"
#include "lhgnn/graph.hpp"
#include "lhgnn/rng.hpp"

namespace lhgnn {

// A truncated random-walk path. nodes = [target, ..., context terminal].
// The self-loop is the distinguished zero-length path [v].
struct Path {
  std::vector<NodeId> nodes;
  bool is_self_loop = false;
  int64_t length() const { return is_self_loop ? 0 : static_cast<int64_t>(nodes.size()) - 1; }
  NodeId target() const { return nodes.front(); }
  NodeId context() const { return nodes.back(); }
};

// All sampled paths for one target, self-loop included (always first).
// Duplicate terminals stay as separate entries, one per path.
struct ContextSet {
  NodeId target = 0;
  std::vector<Path> paths;
};

inline double decay_weight(const Path& p, double lambda) {
  if (lambda <= 0.0) throw ConfigError("decay_weight: lambda must be positive");
  return std::exp(-lambda * static_cast<double>(p.length()));
}

// N uniform random walks of L_max hops starting at v. Isolated nodes yield
// an empty list (their context set is just the self-loop).
inline std::vector<std::vector<NodeId>> sample_walks(const Graph& g, NodeId v, int64_t n_walks,
                                                     int64_t l_max, Rng& rng) {
  if (l_max < 1) throw ConfigError("sample_walks: L_max must be >= 1");
  if (g.degree(v) == 0) return {};
  std::vector<std::vector<NodeId>> walks(n_walks);
  for (auto& walk : walks) {
    walk.reserve(l_max + 1);
    walk.push_back(v);
    NodeId cur = v;
    for (int64_t step = 0; step < l_max; ++step) {
      const auto& nbrs = g.adjacency[cur];
      cur = nbrs[rng.uniform_int(nbrs.size())];
      walk.push_back(cur);
    }
  }
  return walks;
}

// Keeps a uniformly drawn prefix of 1..L hops; the prefix end becomes the
// context node.
inline Path truncate(const std::vector<NodeId>& walk, Rng& rng) {
  if (walk.size() < 2) throw ContractError("truncate: walk must have at least one hop");
  const int64_t hops = static_cast<int64_t>(walk.size()) - 1;
  const int64_t keep = 1 + static_cast<int64_t>(rng.uniform_int(hops));
  Path p;
  p.nodes.assign(walk.begin(), walk.begin() + keep + 1);
  return p;
}

inline ContextSet build_context_set(const Graph& g, NodeId v, int64_t n_walks, int64_t l_max,
                                    Rng& rng) {
  ContextSet ctx;
  ctx.target = v;
  Path self;
  self.nodes = {v};
  self.is_self_loop = true;
  ctx.paths.push_back(std::move(self));
  for (const auto& walk : sample_walks(g, v, n_walks, l_max, rng))
    ctx.paths.push_back(truncate(walk, rng));
  return ctx;
}

// ---------------------------------------------------------------------------
// Bulk per-node path store
// ---------------------------------------------------------------------------
//
// Paths are sampled once per run and reused across epochs. Structurally
// identical paths from one target are merged with a multiplicity so the
// batched forward touches each distinct path once; the math is unchanged
// because every per-path quantity is a function of the node sequence alone.

struct NodePaths {
  std::vector<NodeId> flat;      // concatenated node sequences, target included
  std::vector<int32_t> offsets;  // n_unique + 1 into flat
  std::vector<int32_t> mult;     // multiplicity per unique path
  int64_t total = 0;             // sum of mult (= N for non-isolated targets)
  int64_t n_unique() const { return static_cast<int64_t>(mult.size()); }
};

struct PathSet {
  uint64_t seed = 0;
  int32_t n_walks = 0;
  int32_t l_max = 0;
  bool all_prefixes = false;
  std::vector<NodePaths> per_node;
};

namespace detail {

inline NodePaths compress_paths(std::vector<std::vector<NodeId>> seqs) {
  std::sort(seqs.begin(), seqs.end());
  NodePaths np;
  np.offsets.push_back(0);
  for (size_t i = 0; i < seqs.size(); ++i) {
    if (i > 0 && seqs[i] == seqs[i - 1]) {
      np.mult.back()++;
    } else {
      np.flat.insert(np.flat.end(), seqs[i].begin(), seqs[i].end());
      np.offsets.push_back(static_cast<int32_t>(np.flat.size()));
      np.mult.push_back(1);
    }
  }
  np.total = static_cast<int64_t>(seqs.size());
  return np;
}

}  // namespace detail

// Samples P_v for every node. Per-node streams are derived from (seed, node),
// so the result is independent of worker scheduling. With all_prefixes set,
// every prefix of each walk becomes a path instead of one sampled length
// (the non-default reading of truncation, kept as an experiment).
inline PathSet build_path_set(const Graph& g, int64_t n_walks, int64_t l_max, uint64_t seed,
                              int workers = 1, bool all_prefixes = false) {
  PathSet ps;
  ps.seed = seed;
  ps.n_walks = static_cast<int32_t>(n_walks);
  ps.l_max = static_cast<int32_t>(l_max);
  ps.all_prefixes = all_prefixes;
  ps.per_node.resize(g.node_count);

  auto work = [&](int64_t begin, int64_t end) {
    for (int64_t v = begin; v < end; ++v) {
      Rng rng = derive_stream(seed, "paths", static_cast<uint64_t>(v));
      auto walks = sample_walks(g, static_cast<NodeId>(v), n_walks, l_max, rng);
      std::vector<std::vector<NodeId>> seqs;
      seqs.reserve(all_prefixes ? walks.size() * l_max : walks.size());
      for (const auto& walk : walks) {
        if (all_prefixes) {
          for (int64_t keep = 1; keep + 1 <= static_cast<int64_t>(walk.size()); ++keep)
            seqs.emplace_back(walk.begin(), walk.begin() + keep + 1);
        } else {
          seqs.push_back(truncate(walk, rng).nodes);
        }
      }
      ps.per_node[v] = detail::compress_paths(std::move(seqs));
    }
  };

  if (workers <= 1) {
    work(0, g.node_count);
  } else {
    std::vector<std::thread> pool;
    const int64_t stride = (g.node_count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int64_t begin = w * stride;
      const int64_t end = std::min<int64_t>(g.node_count, begin + stride);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  return ps;
}

// ---------------------------------------------------------------------------
// Binary path cache
// ---------------------------------------------------------------------------

namespace detail {
constexpr uint32_t kPathCacheMagic = 0x4c484750;  // "LHGP"
constexpr uint32_t kPathCacheVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
bool get(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return bool(in);
}
}  // namespace detail

inline void save_path_cache(const PathSet& ps, const Graph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write path cache: " + path);
  using namespace detail;
  put(out, kPathCacheMagic);
  put(out, kPathCacheVersion);
  put(out, ps.seed);
  put(out, ps.n_walks);
  put(out, ps.l_max);
  put(out, static_cast<uint8_t>(ps.all_prefixes));
  put(out, g.node_count);
  put(out, static_cast<int64_t>(g.edges.size()));
  for (const auto& np : ps.per_node) {
    put(out, static_cast<int32_t>(np.n_unique()));
    put(out, static_cast<int32_t>(np.total));
    put(out, static_cast<int32_t>(np.flat.size()));
    out.write(reinterpret_cast<const char*>(np.offsets.data()),
              static_cast<std::streamsize>(np.offsets.size() * sizeof(int32_t)));
    out.write(reinterpret_cast<const char*>(np.mult.data()),
              static_cast<std::streamsize>(np.mult.size() * sizeof(int32_t)));
    out.write(reinterpret_cast<const char*>(np.flat.data()),
              static_cast<std::streamsize>(np.flat.size() * sizeof(NodeId)));
  }
}

// Returns the cached set only when (seed, N, L_max, graph shape) all match.
inline std::optional<PathSet> load_path_cache(const Graph& g, int64_t n_walks, int64_t l_max,
                                              uint64_t seed, bool all_prefixes,
                                              const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  using namespace detail;
  uint32_t magic = 0, version = 0;
  uint64_t cseed = 0;
  int32_t cn = 0, cl = 0;
  uint8_t cap = 0;
  int64_t nodes = 0, edges = 0;
  if (!get(in, magic) || magic != kPathCacheMagic) return std::nullopt;
  if (!get(in, version) || version != kPathCacheVersion) return std::nullopt;
  get(in, cseed);
  get(in, cn);
  get(in, cl);
  get(in, cap);
  get(in, nodes);
  if (!get(in, edges)) return std::nullopt;
  if (cseed != seed || cn != n_walks || cl != l_max || bool(cap) != all_prefixes ||
      nodes != g.node_count || edges != static_cast<int64_t>(g.edges.size()))
    return std::nullopt;

  PathSet ps;
  ps.seed = seed;
  ps.n_walks = cn;
  ps.l_max = cl;
  ps.all_prefixes = all_prefixes;
  ps.per_node.resize(g.node_count);
  for (auto& np : ps.per_node) {
    int32_t uniq = 0, total = 0, flat = 0;
    if (!get(in, uniq) || !get(in, total) || !get(in, flat)) return std::nullopt;
    np.total = total;
    np.offsets.resize(uniq + 1);
    np.mult.resize(uniq);
    np.flat.resize(flat);
    in.read(reinterpret_cast<char*>(np.offsets.data()),
            static_cast<std::streamsize>(np.offsets.size() * sizeof(int32_t)));
    in.read(reinterpret_cast<char*>(np.mult.data()),
            static_cast<std::streamsize>(np.mult.size() * sizeof(int32_t)));
    in.read(reinterpret_cast<char*>(np.flat.data()),
            static_cast<std::streamsize>(np.flat.size() * sizeof(NodeId)));
    if (!in) return std::nullopt;
  }
  return ps;
}

}  // namespace lhgnn
