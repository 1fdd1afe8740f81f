#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "lhgnn/eval.hpp"
#include "lhgnn/graph.hpp"
#include "lhgnn/ops.hpp"
#include "lhgnn/optimizer.hpp"
#include "lhgnn/rng.hpp"

namespace lhgnn {

// Surrogate types from clustering: node types are cluster ids, edge types
// the Cartesian product of the endpoint node types.
struct PseudoTypes {
  int32_t k = 1;
  std::vector<int32_t> node_type;  // empty means single-type
  int64_t edge_type(NodeId h, NodeId t) const {
    if (node_type.empty()) return 0;
    return static_cast<int64_t>(node_type[h]) * k + node_type[t];
  }
  int64_t n_edge_types() const { return static_cast<int64_t>(k) * k; }
};

struct KmeansResult {
  PseudoTypes types;
  std::vector<double> centroids;  // k x d
  std::vector<double> inertia;    // within-cluster sum of squares per iteration
};

// Lloyd's algorithm with k-means++ seeding; at most 100 iterations or until
// the largest centroid shift drops below 1e-6. An emptied cluster is
// reseeded at the point farthest from its assigned centroid.
inline KmeansResult kmeans(const std::vector<double>& data, int64_t n, int64_t d, int32_t k,
                           uint64_t seed) {
  if (k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (n < k) throw ConfigError("kmeans: fewer points than clusters");
  Rng rng = derive_stream(seed, "kmeans");

  auto dist2 = [&](const double* a, const double* b) {
    double acc = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double r = a[j] - b[j];
      acc += r * r;
    }
    return acc;
  };

  KmeansResult res;
  res.types.k = k;
  res.centroids.assign(static_cast<size_t>(k) * d, 0.0);

  // k-means++ seeding.
  std::vector<double> best_d2(n, 1e300);
  int64_t first = static_cast<int64_t>(rng.uniform_int(n));
  std::copy(data.begin() + first * d, data.begin() + (first + 1) * d, res.centroids.begin());
  for (int32_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      best_d2[i] = std::min(best_d2[i], dist2(data.data() + i * d,
                                              res.centroids.data() + (c - 1) * d));
      total += best_d2[i];
    }
    double pick = rng.uniform() * total;
    int64_t chosen = n - 1;
    for (int64_t i = 0; i < n; ++i) {
      pick -= best_d2[i];
      if (pick <= 0.0) {
        chosen = i;
        break;
      }
    }
    std::copy(data.begin() + chosen * d, data.begin() + (chosen + 1) * d,
              res.centroids.begin() + static_cast<size_t>(c) * d);
  }

  res.types.node_type.assign(n, 0);
  std::vector<double> sums(static_cast<size_t>(k) * d);
  std::vector<int64_t> counts(k);
  for (int iter = 0; iter < 100; ++iter) {
    double inertia = 0.0;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (int64_t i = 0; i < n; ++i) {
      int32_t best = 0;
      double bd = 1e300;
      for (int32_t c = 0; c < k; ++c) {
        const double dd = dist2(data.data() + i * d, res.centroids.data() + c * d);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      res.types.node_type[i] = best;
      inertia += bd;
      counts[best]++;
      for (int64_t j = 0; j < d; ++j) sums[best * d + j] += data[i * d + j];
    }
    res.inertia.push_back(inertia);

    double shift = 0.0;
    for (int32_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Reseed at the point farthest from its current centroid.
        int64_t far = 0;
        double fd = -1.0;
        for (int64_t i = 0; i < n; ++i) {
          const double dd =
              dist2(data.data() + i * d, res.centroids.data() + res.types.node_type[i] * d);
          if (dd > fd) {
            fd = dd;
            far = i;
          }
        }
        std::copy(data.begin() + far * d, data.begin() + (far + 1) * d,
                  res.centroids.begin() + static_cast<size_t>(c) * d);
        shift = 1e300;  // force another iteration
        continue;
      }
      double moved = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        const double next = sums[c * d + j] / static_cast<double>(counts[c]);
        const double delta = next - res.centroids[c * d + j];
        moved += delta * delta;
        res.centroids[c * d + j] = next;
      }
      shift = std::max(shift, std::sqrt(moved));
    }
    if (shift < 1e-6) break;
  }
  return res;
}

inline void save_pseudo_types(const PseudoTypes& types, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write pseudo types: " + path);
  for (size_t v = 0; v < types.node_type.size(); ++v) out << v << '\t' << types.node_type[v] << '\n';
}

inline PseudoTypes load_pseudo_types(const std::string& path, int64_t node_count) {
  std::ifstream in(path);
  if (!in) throw ParseError("pseudo type file not found: " + path);
  PseudoTypes types;
  types.node_type.assign(node_count, 0);
  int64_t v = 0;
  int32_t c = 0, max_c = 0;
  while (in >> v >> c) {
    if (v < 0 || v >= node_count) throw ParseError(path + ": node id out of range");
    types.node_type[v] = c;
    max_c = std::max(max_c, c);
  }
  types.k = max_c + 1;
  return types;
}

// ---------------------------------------------------------------------------
// TransE
// ---------------------------------------------------------------------------

struct TransEConfig {
  int64_t dim = 200;
  double lr = 0.005;
  double margin = 0.2;
  int64_t batch_size = 256;
  int64_t max_epochs = 50;
  int64_t patience = 5;
  uint64_t seed = 1;
};

struct TransEModel {
  Tensor entities;   // n x d, rows L2-normalized after each update
  Tensor relations;  // R x d
  PseudoTypes types;
};

inline double transe_score(const TransEModel& model, NodeId x, NodeId y) {
  const int64_t d = model.entities.cols();
  const double* hx = model.entities.data() + int64_t(x) * d;
  const double* hy = model.entities.data() + int64_t(y) * d;
  const double* r = model.relations.data() + model.types.edge_type(x, y) * d;
  double acc = 0.0;
  for (int64_t j = 0; j < d; ++j) {
    const double v = hx[j] + r[j] - hy[j];
    acc += v * v;
  }
  return -std::sqrt(acc);
}

inline RankingMetrics transe_evaluate(const TransEModel& model,
                                      const std::vector<EvalQuery>& queries) {
  RankingMetrics out;
  out.ranks.resize(queries.size());
  std::vector<double> scores(10);
  for (size_t i = 0; i < queries.size(); ++i) {
    const EvalQuery& q = queries[i];
    scores[0] = transe_score(model, q.anchor, q.true_node);
    for (int c = 1; c < 10; ++c) scores[c] = transe_score(model, q.anchor, q.negatives[c - 1]);
    out.ranks[i] = rank_of_true(q, scores);
  }
  out.map = map_metric(out.ranks);
  out.ndcg = ndcg_metric(out.ranks);
  return out;
}

struct TransEOutcome {
  TransEModel model;
  std::vector<double> epoch_loss;
  double best_val_map = -1.0;
  int64_t epochs_run = 0;
};

// Same triplet margin loss and scoring as the main model, with the pairwise
// link encoding replaced by a per-edge-type relation embedding. Relation
// rows for Cartesian types never realized by a training edge stay frozen at
// zero.
inline TransEOutcome transe_train(const LinkSplit& split, const PseudoTypes& pseudo,
                                  const TransEConfig& cfg,
                                  const std::function<void(const std::string&)>& progress =
                                      [](const std::string&) {}) {
  const int64_t n = split.full->node_count;
  const int64_t n_rel = pseudo.n_edge_types();
  const int64_t d = cfg.dim;

  TransEOutcome out;
  out.model.types = pseudo;
  Rng init_rng = derive_stream(cfg.seed, "transe_init");
  out.model.entities = Tensor(n, d, true);
  const double bound = 6.0 / std::sqrt(static_cast<double>(d));
  for (int64_t i = 0; i < out.model.entities.size(); ++i)
    out.model.entities.data()[i] = (2.0 * init_rng.uniform() - 1.0) * bound;

  std::vector<char> seen(n_rel, 0);
  for (const auto& [h, t] : split.train_edges) seen[pseudo.edge_type(h, t)] = 1;
  out.model.relations = Tensor(n_rel, d, true);
  for (int64_t r = 0; r < n_rel; ++r) {
    if (!seen[r]) continue;  // zero-initialized and frozen
    for (int64_t j = 0; j < d; ++j)
      out.model.relations.data()[r * d + j] = (2.0 * init_rng.uniform() - 1.0) * bound;
  }

  auto normalize_entities = [&]() {
    double* e = out.model.entities.data();
    for (int64_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int64_t j = 0; j < d; ++j) acc += e[i * d + j] * e[i * d + j];
      const double norm = std::sqrt(acc);
      if (norm > 0.0)
        for (int64_t j = 0; j < d; ++j) e[i * d + j] /= norm;
    }
  };
  normalize_entities();

  Optimizer opt({out.model.entities, out.model.relations}, OptimizerKind::kAdam, cfg.lr);
  Rng triplet_rng = derive_stream(cfg.seed, "transe_triplets");
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(split.train_edges.size()) + cfg.batch_size - 1) / cfg.batch_size;

  const bool has_val = !split.val_edges.empty();
  std::vector<EvalQuery> val_queries;
  if (has_val) val_queries = build_queries(*split.full, split.val_edges, cfg.seed);

  Tensor best_entities, best_relations;
  int64_t bad_evals = 0;
  for (int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double loss_acc = 0.0;
    for (int64_t step = 0; step < steps_per_epoch; ++step) {
      auto triplets = sample_triplets(split, cfg.batch_size, triplet_rng);
      const int64_t t = static_cast<int64_t>(triplets.size());
      auto ia = std::make_shared<std::vector<int64_t>>(t);
      auto ib = std::make_shared<std::vector<int64_t>>(t);
      auto ic = std::make_shared<std::vector<int64_t>>(t);
      auto rab = std::make_shared<std::vector<int64_t>>(t);
      auto rac = std::make_shared<std::vector<int64_t>>(t);
      for (int64_t i = 0; i < t; ++i) {
        (*ia)[i] = triplets[i].a;
        (*ib)[i] = triplets[i].b;
        (*ic)[i] = triplets[i].c;
        (*rab)[i] = pseudo.edge_type(triplets[i].a, triplets[i].b);
        (*rac)[i] = pseudo.edge_type(triplets[i].a, triplets[i].c);
      }
      Tape tape;
      Tensor h_a = ops::gather_rows(&tape, out.model.entities, ia);
      Tensor h_b = ops::gather_rows(&tape, out.model.entities, ib);
      Tensor h_c = ops::gather_rows(&tape, out.model.entities, ic);
      Tensor r_ab = ops::gather_rows(&tape, out.model.relations, rab);
      Tensor r_ac = ops::gather_rows(&tape, out.model.relations, rac);
      Tensor d_ab = ops::rows_l2_norm(&tape, ops::add(&tape, ops::sub(&tape, h_a, h_b), r_ab));
      Tensor d_ac = ops::rows_l2_norm(&tape, ops::add(&tape, ops::sub(&tape, h_a, h_c), r_ac));
      Tensor hinge = ops::max_with_zero(
          &tape, ops::add_scalar(&tape, ops::sub(&tape, d_ab, d_ac), cfg.margin));
      Tensor loss =
          ops::scale_by_scalar(&tape, ops::sum(&tape, hinge), 1.0 / static_cast<double>(t));
      const double loss_value = loss.value();
      if (!std::isfinite(loss_value)) throw NumericError("transe: non-finite loss");

      out.model.entities.zero_grad();
      out.model.relations.zero_grad();
      tape.backward(loss);
      // Frozen relation rows: clear any gradient picked up through negative
      // pairs whose Cartesian type never occurs among train edges.
      double* rg = out.model.relations.grad();
      for (int64_t r = 0; r < n_rel; ++r)
        if (!seen[r]) std::fill(rg + r * d, rg + (r + 1) * d, 0.0);
      opt.step();
      normalize_entities();
      loss_acc += loss_value;
    }
    out.epoch_loss.push_back(loss_acc / static_cast<double>(steps_per_epoch));
    out.epochs_run = epoch;

    if (has_val) {
      RankingMetrics metrics = transe_evaluate(out.model, val_queries);
      std::ostringstream line;
      line.precision(6);
      line << "transe epoch " << epoch << " loss " << out.epoch_loss.back() << " val_map "
           << metrics.map;
      progress(line.str());
      if (metrics.map > out.best_val_map) {
        out.best_val_map = metrics.map;
        best_entities = Tensor(n, d);
        std::copy(out.model.entities.data(), out.model.entities.data() + n * d,
                  best_entities.data());
        best_relations = Tensor(n_rel, d);
        std::copy(out.model.relations.data(), out.model.relations.data() + n_rel * d,
                  best_relations.data());
        bad_evals = 0;
      } else if (++bad_evals > cfg.patience) {
        break;
      }
    }
  }
  if (has_val && best_entities.size() > 0) {
    std::copy(best_entities.data(), best_entities.data() + best_entities.size(),
              out.model.entities.data());
    std::copy(best_relations.data(), best_relations.data() + best_relations.size(),
              out.model.relations.data());
  }
  return out;
}

}  // namespace lhgnn
