#pragma once

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

#include "lhgnn/graph.hpp"
#include "lhgnn/link_model.hpp"
#include "lhgnn/model.hpp"
#include "lhgnn/rng.hpp"

namespace lhgnn {

// One ranking query: the held-out edge (anchor, true_node) plus 9 sampled
// negatives that are not linked to the anchor anywhere in the full graph.
struct EvalQuery {
  NodeId anchor;
  NodeId true_node;
  std::vector<NodeId> negatives;  // exactly 9, all candidates distinct
};

inline std::vector<EvalQuery> build_queries(const Graph& full, const std::vector<Edge>& held_out,
                                            uint64_t seed) {
  if (held_out.empty()) throw ContractError("build_queries: empty held-out edge list");
  std::vector<EvalQuery> queries;
  queries.reserve(held_out.size());
  for (size_t i = 0; i < held_out.size(); ++i) {
    const auto& [a, b] = held_out[i];
    const int64_t eligible = full.node_count - full.degree(a) - 1;
    if (eligible < 9)
      throw ContractError("build_queries: anchor " + std::to_string(a) +
                          " has fewer than 9 eligible negatives");
    Rng rng = derive_stream(seed, "eval_neg", i);
    EvalQuery q;
    q.anchor = a;
    q.true_node = b;
    while (q.negatives.size() < 9) {
      const NodeId c = static_cast<NodeId>(rng.uniform_int(full.node_count));
      if (c == a || c == b || full.has_edge(a, c)) continue;
      if (std::find(q.negatives.begin(), q.negatives.end(), c) != q.negatives.end()) continue;
      q.negatives.push_back(c);
    }
    queries.push_back(std::move(q));
  }
  return queries;
}

// 1-based rank of the true node among the 10 candidates, higher score first,
// ties broken by ascending candidate id. scores[0] belongs to the true node,
// scores[1..9] to the negatives.
inline int rank_of_true(const EvalQuery& q, const std::vector<double>& scores) {
  if (scores.size() != 10) throw ContractError("rank_of_true: expected 10 scores");
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("rank_of_true: non-finite score");
  int rank = 1;
  for (size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[0] ||
        (scores[i] == scores[0] && q.negatives[i - 1] < q.true_node))
      ++rank;
  }
  return rank;
}

// Single-relevant-item forms: AP = 1/rank (so MAP is mean reciprocal rank)
// and NDCG = 1/log2(rank+1), averaged over queries.
inline double map_metric(const std::vector<int>& ranks) {
  if (ranks.empty()) throw ContractError("map_metric: no ranks");
  double acc = 0.0;
  for (int r : ranks) acc += 1.0 / static_cast<double>(r);
  return acc / static_cast<double>(ranks.size());
}

inline double ndcg_metric(const std::vector<int>& ranks) {
  if (ranks.empty()) throw ContractError("ndcg_metric: no ranks");
  double acc = 0.0;
  for (int r : ranks) acc += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  return acc / static_cast<double>(ranks.size());
}

struct RankingMetrics {
  double map = 0.0;
  double ndcg = 0.0;
  std::vector<int> ranks;
};

// Scores every query with the model's translational scorer over final-layer
// embeddings (rows of h/s indexed by node id). Queries are independent, so
// the optional worker pool writes ranks into fixed slots.
inline RankingMetrics evaluate_ranking(const ModelParams& params, const Tensor& h, const Tensor& s,
                                       const std::vector<EvalQuery>& queries, Variant variant,
                                       int workers = 1) {
  RankingMetrics out;
  out.ranks.resize(queries.size());
  const int64_t dh = h.cols();
  const bool encode = uses_link_encoder(variant);

  auto run = [&](size_t begin, size_t end) {
    std::vector<double> s_pair(dh);
    std::vector<double> scores(10);
    for (size_t i = begin; i < end; ++i) {
      const EvalQuery& q = queries[i];
      const double* h_a = h.data() + int64_t(q.anchor) * dh;
      const double* s_a = s.data() + int64_t(q.anchor) * s.cols();
      for (int cand = 0; cand < 10; ++cand) {
        const NodeId y = cand == 0 ? q.true_node : q.negatives[cand - 1];
        const double* h_y = h.data() + int64_t(y) * dh;
        if (encode) {
          encode_link_row(params, s_a, s.data() + int64_t(y) * s.cols(), s_pair.data());
          scores[cand] = score_link(h_a, h_y, s_pair.data(), dh);
        } else {
          scores[cand] = score_link(h_a, h_y, nullptr, dh);
        }
      }
      out.ranks[i] = rank_of_true(q, scores);
    }
  };

  if (workers <= 1) {
    run(0, queries.size());
  } else {
    std::vector<std::thread> pool;
    const size_t stride = (queries.size() + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const size_t begin = w * stride, end = std::min(queries.size(), begin + stride);
      if (begin < end) pool.emplace_back(run, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  out.map = map_metric(out.ranks);
  out.ndcg = ndcg_metric(out.ranks);
  return out;
}

// ---------------------------------------------------------------------------
// Node type classification probe
// ---------------------------------------------------------------------------

struct ProbeSplit {
  std::vector<NodeId> train_nodes, test_nodes;
};

// Per-type stratified 60/40 split over labeled nodes.
inline ProbeSplit probe_split(const ProbeLabels& labels, uint64_t seed) {
  const int32_t n_types = static_cast<int32_t>(labels.type_names.size());
  ProbeSplit split;
  Rng rng = derive_stream(seed, "probe_split");
  for (int32_t t = 0; t < n_types; ++t) {
    std::vector<NodeId> members;
    for (size_t v = 0; v < labels.type_of.size(); ++v)
      if (labels.type_of[v] == t) members.push_back(static_cast<NodeId>(v));
    rng.shuffle(members);
    const size_t n_train = static_cast<size_t>(std::llround(0.6 * members.size()));
    for (size_t i = 0; i < members.size(); ++i)
      (i < n_train ? split.train_nodes : split.test_nodes).push_back(members[i]);
  }
  return split;
}

struct ProbeResult {
  double macro_f = 0.0;
  double accuracy = 0.0;
  std::vector<int32_t> predictions;  // aligned with the test node list
};

namespace detail {

struct ConfusionStats {
  double macro_f = 0.0;
  double accuracy = 0.0;
};

inline ConfusionStats scores_from_confusion(const std::vector<int64_t>& confusion, int32_t k,
                                            int64_t total) {
  double correct = 0.0;
  for (int32_t c = 0; c < k; ++c) correct += static_cast<double>(confusion[c * k + c]);
  double f_sum = 0.0;
  int32_t classes = 0;
  for (int32_t c = 0; c < k; ++c) {
    int64_t tp = confusion[c * k + c], fp = 0, fn = 0, support = 0;
    for (int32_t o = 0; o < k; ++o) {
      if (o != c) {
        fp += confusion[o * k + c];
        fn += confusion[c * k + o];
      }
      support += confusion[c * k + o];
    }
    if (support == 0) continue;  // class absent from the test split
    ++classes;
    const double precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
    const double recall = double(tp) / double(support);
    f_sum += precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return {classes > 0 ? f_sum / classes : 0.0, total > 0 ? correct / double(total) : 0.0};
}

}  // namespace detail

// Multinomial logistic regression on concat(h_v, s_v), trained in-repo by
// full-batch gradient descent with an L2 penalty of 1e-4 for 500 epochs.
inline ProbeResult node_type_probe(const Tensor& h, const Tensor& s, const ProbeLabels& labels,
                                   const ProbeSplit& split) {
  const int32_t k = static_cast<int32_t>(labels.type_names.size());
  if (k < 2) throw ContractError("node_type_probe: need at least two classes");
  const int64_t dh = h.cols(), ds = s.cols(), d = dh + ds;
  const int64_t m = static_cast<int64_t>(split.train_nodes.size());

  std::vector<int64_t> class_count(k, 0);
  for (NodeId v : split.train_nodes) class_count[labels.type_of[v]]++;
  for (int32_t c = 0; c < k; ++c)
    if (class_count[c] == 0)
      throw ContractError("node_type_probe: class `" + labels.type_names[c] +
                          "` absent from the train split");

  auto feature_of = [&](NodeId v, std::vector<double>& row) {
    std::copy(h.data() + int64_t(v) * dh, h.data() + int64_t(v) * dh + dh, row.begin());
    std::copy(s.data() + int64_t(v) * ds, s.data() + int64_t(v) * ds + ds, row.begin() + dh);
  };

  // Standardize inputs from train statistics; the dims have very different
  // scales (normalized h vs raw LeakyReLU s).
  std::vector<double> mean(d, 0.0), inv_std(d, 0.0);
  std::vector<double> row(d);
  std::vector<double> x(m * d);
  for (int64_t i = 0; i < m; ++i) {
    feature_of(split.train_nodes[i], row);
    for (int64_t j = 0; j < d; ++j) {
      x[i * d + j] = row[j];
      mean[j] += row[j];
    }
  }
  for (int64_t j = 0; j < d; ++j) mean[j] /= double(m);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < d; ++j) inv_std[j] += (x[i * d + j] - mean[j]) * (x[i * d + j] - mean[j]);
  for (int64_t j = 0; j < d; ++j) {
    const double var = inv_std[j] / double(m);
    inv_std[j] = var > 1e-12 ? 1.0 / std::sqrt(var) : 0.0;
  }
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < d; ++j) x[i * d + j] = (x[i * d + j] - mean[j]) * inv_std[j];

  constexpr double kL2 = 1e-4;
  constexpr int kEpochs = 500;
  constexpr double kLr = 0.5;
  std::vector<double> w(k * d, 0.0), b(k, 0.0);
  std::vector<double> logits(k), probs(k), gw(k * d), gb(k);

  for (int epoch = 0; epoch < kEpochs; ++epoch) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (int64_t i = 0; i < m; ++i) {
      const double* xi = x.data() + i * d;
      double mx = -1e300;
      for (int32_t c = 0; c < k; ++c) {
        double acc = b[c];
        const double* wc = w.data() + c * d;
        for (int64_t j = 0; j < d; ++j) acc += wc[j] * xi[j];
        logits[c] = acc;
        mx = std::max(mx, acc);
      }
      double z = 0.0;
      for (int32_t c = 0; c < k; ++c) z += (probs[c] = std::exp(logits[c] - mx));
      const int32_t y = labels.type_of[split.train_nodes[i]];
      for (int32_t c = 0; c < k; ++c) {
        const double delta = probs[c] / z - (c == y ? 1.0 : 0.0);
        double* gwc = gw.data() + c * d;
        for (int64_t j = 0; j < d; ++j) gwc[j] += delta * xi[j];
        gb[c] += delta;
      }
    }
    const double inv_m = 1.0 / double(m);
    for (int32_t c = 0; c < k; ++c) {
      double* wc = w.data() + c * d;
      const double* gwc = gw.data() + c * d;
      for (int64_t j = 0; j < d; ++j) wc[j] -= kLr * (gwc[j] * inv_m + kL2 * wc[j]);
      b[c] -= kLr * gb[c] * inv_m;
    }
  }

  ProbeResult res;
  std::vector<int64_t> confusion(k * k, 0);
  for (NodeId v : split.test_nodes) {
    feature_of(v, row);
    int32_t best = 0;
    double best_score = -1e300;
    for (int32_t c = 0; c < k; ++c) {
      double acc = b[c];
      const double* wc = w.data() + c * d;
      for (int64_t j = 0; j < d; ++j) acc += wc[j] * (row[j] - mean[j]) * inv_std[j];
      if (acc > best_score) {
        best_score = acc;
        best = c;
      }
    }
    res.predictions.push_back(best);
    confusion[labels.type_of[v] * k + best]++;
  }
  const auto stats = detail::scores_from_confusion(confusion, k, split.test_nodes.size());
  res.macro_f = stats.macro_f;
  res.accuracy = stats.accuracy;
  return res;
}

// Macro-F and accuracy of the constant majority-class predictor on the test
// nodes; the probe has to beat this.
inline detail::ConfusionStats majority_baseline(const ProbeLabels& labels,
                                                const ProbeSplit& split) {
  const int32_t k = static_cast<int32_t>(labels.type_names.size());
  std::vector<int64_t> train_count(k, 0);
  for (NodeId v : split.train_nodes) train_count[labels.type_of[v]]++;
  const int32_t majority = static_cast<int32_t>(
      std::max_element(train_count.begin(), train_count.end()) - train_count.begin());
  std::vector<int64_t> confusion(k * k, 0);
  for (NodeId v : split.test_nodes) confusion[labels.type_of[v] * k + majority]++;
  return detail::scores_from_confusion(confusion, k, split.test_nodes.size());
}

}  // namespace lhgnn
