#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lhgnn/checkpoint.hpp"
#include "lhgnn/config.hpp"
#include "lhgnn/eval.hpp"
#include "lhgnn/link_model.hpp"
#include "lhgnn/model.hpp"
#include "lhgnn/optimizer.hpp"
#include "lhgnn/path_sampler.hpp"

namespace lhgnn {

struct TrainReport {
  std::vector<double> epoch_loss;   // mean batch loss
  std::vector<double> epoch_secs;   // training steps only, validation excluded
  std::vector<double> val_map, val_ndcg;
  std::vector<double> step_loss;
  std::vector<double> step_mean_gamma_norm, step_mean_beta_norm;
  int64_t convergence_epoch = -1;  // 1-based epoch of the best validation MAP
  double best_val_map = -1.0;
  std::string best_checkpoint_path;
  int64_t epochs_run = 0;
};

struct TrainOutcome {
  ModelParams params;  // best-validation parameters
  TrainReport report;
  PathSet paths;
};

struct InferenceResult {
  Tensor h;  // node_count x d_h, rows indexed by node id
  Tensor s;  // node_count x d_s
};

inline ModelParams clone_params(const ModelParams& src) {
  ModelParams dst;
  dst.dims = src.dims;
  dst.leaky_slope = src.leaky_slope;
  dst.has_entity_emb = src.has_entity_emb;
  auto copy = [](const Tensor& t) {
    Tensor c(t.rows(), t.cols(), t.requires_grad());
    std::copy(t.data(), t.data() + t.size(), c.data());
    return c;
  };
  for (const auto& lp : src.layers)
    dst.layers.push_back({copy(lp.w_s), copy(lp.b_s), copy(lp.w_gamma), copy(lp.b_gamma),
                          copy(lp.w_beta), copy(lp.b_beta), copy(lp.w_h), copy(lp.b_h)});
  dst.w_link = copy(src.w_link);
  dst.u_link = copy(src.u_link);
  dst.b_link = copy(src.b_link);
  if (src.has_entity_emb) dst.entity_emb = copy(src.entity_emb);
  return dst;
}

// Whole-graph inference over a prebuilt full plan (no tape).
inline InferenceResult infer_full(const ModelParams& params, const Graph& g,
                                  const BatchPlan& full_plan, Variant variant) {
  ForwardOut fwd = model_forward(nullptr, params, g, full_plan, variant);
  return {fwd.h_final(), fwd.s_final()};
}

inline InferenceResult infer_full(const ModelParams& params, const Graph& g, const PathSet& paths,
                                  double lambda, Variant variant) {
  BatchPlan plan = full_graph_plan(paths, g.node_count, params.dims.n_layers(), lambda);
  return infer_full(params, g, plan, variant);
}

namespace detail {

inline std::string param_norm_digest(ModelParams& params) {
  std::ostringstream out;
  out.precision(4);
  for (auto& [name, t] : params.named_tensors()) {
    double acc = 0.0;
    for (int64_t i = 0; i < t.size(); ++i) acc += t.data()[i] * t.data()[i];
    out << " " << name << "=" << std::sqrt(acc);
  }
  return out.str();
}

}  // namespace detail

// Algorithm-1 style training: sample a triplet batch, run the layered
// forward over the batch's reachable set, take the margin + FiLM loss, and
// step the optimizer. Validates MAP on the held-out edges every epoch and
// early-stops after `patience` non-improving evaluations, returning the
// best-MAP parameters.
inline TrainOutcome train(const TrainConfig& cfg, const LinkSplit& split,
                          const std::function<void(const std::string&)>& progress =
                              [](const std::string& line) { std::cout << line << "\n"; }) {
  cfg.validate();
  const Graph& g = split.train_graph;
  const Variant variant = variant_from_name(cfg.variant);

  ModelDims dims;
  dims.input_dim = g.has_features() ? g.feat_dim : cfg.entity_dim;
  dims.d_h.assign(cfg.n_layers, cfg.d_h);
  dims.d_s.assign(cfg.n_layers, cfg.d_s);
  ModelParams params =
      init_model(dims, cfg.seed, g.has_features() ? 0 : g.node_count, cfg.leaky_slope);

  std::vector<Tensor> opt_params;
  for (auto& [name, t] : params.named_tensors()) opt_params.push_back(t);
  Optimizer opt(opt_params, optimizer_from_name(cfg.optimizer), cfg.lr);

  PathSet paths = build_path_set(g, cfg.n_paths, cfg.l_max, cfg.seed,
                                 static_cast<int>(cfg.workers), cfg.all_prefixes);

  const bool has_val = !split.val_edges.empty();
  std::vector<EvalQuery> val_queries;
  if (has_val) val_queries = build_queries(*split.full, split.val_edges, cfg.seed);
  BatchPlan full_plan;
  bool full_plan_ready = false;

  Rng triplet_rng = derive_stream(cfg.seed, "triplets");
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(split.train_edges.size()) + cfg.batch_size - 1) / cfg.batch_size;

  TrainReport report;
  ModelParams best = clone_params(params);
  int64_t bad_evals = 0;
  int64_t global_step = 0;
  auto warn = [&](const std::string& msg) { progress("warning: " + msg); };

  for (int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.resample_paths && epoch > 1) {
      paths = build_path_set(g, cfg.n_paths, cfg.l_max, cfg.seed + static_cast<uint64_t>(epoch),
                             static_cast<int>(cfg.workers), cfg.all_prefixes);
      full_plan_ready = false;
    }

    const auto t0 = std::chrono::steady_clock::now();
    double loss_acc = 0.0;
    for (int64_t step = 0; step < steps_per_epoch; ++step, ++global_step) {
      auto triplets = sample_triplets(split, cfg.batch_size, triplet_rng, warn);
      std::vector<NodeId> targets;
      targets.reserve(triplets.size() * 3);
      for (const auto& t : triplets) {
        targets.push_back(t.a);
        targets.push_back(t.b);
        targets.push_back(t.c);
      }
      BatchPlan plan =
          build_batch_plan(paths, g.node_count, std::move(targets), cfg.n_layers, cfg.lambda);

      Tape tape;
      ForwardOut fwd = model_forward(&tape, params, g, plan, variant);
      Tensor task = task_loss(&tape, params, fwd, plan, triplets, cfg.alpha, variant);
      Tensor film = film_reg(&tape, fwd);
      Tensor loss = total_loss(&tape, task, film, cfg.mu);

      const double loss_value = loss.value();
      if (!std::isfinite(loss_value))
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + " batch " + std::to_string(step) +
                           " (lr=" + std::to_string(cfg.lr) +
                           "); parameter norms:" + detail::param_norm_digest(params));

      params.zero_grad();
      tape.backward(loss);
      opt.step();

      loss_acc += loss_value;
      report.step_loss.push_back(loss_value);
      double gsum = 0.0, bsum = 0.0, count = 0.0;
      for (size_t l = 0; l < fwd.gamma_norm_sum.size(); ++l) {
        gsum += fwd.gamma_norm_sum[l].value();
        bsum += fwd.beta_norm_sum[l].value();
        for (double mlt : *plan.layers[l].mult) count += mlt;
      }
      report.step_mean_gamma_norm.push_back(count > 0 ? gsum / count : 0.0);
      report.step_mean_beta_norm.push_back(count > 0 ? bsum / count : 0.0);
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    const double epoch_loss =
        steps_per_epoch > 0 ? loss_acc / static_cast<double>(steps_per_epoch) : 0.0;
    report.epoch_loss.push_back(epoch_loss);
    report.epoch_secs.push_back(secs);
    report.epochs_run = epoch;

    double val_map = std::nan("");
    if (has_val) {
      if (!full_plan_ready) {
        full_plan = full_graph_plan(paths, g.node_count, cfg.n_layers, cfg.lambda);
        full_plan_ready = true;
      }
      InferenceResult inf = infer_full(params, g, full_plan, variant);
      RankingMetrics metrics = evaluate_ranking(params, inf.h, inf.s, val_queries, variant,
                                                static_cast<int>(cfg.workers));
      report.val_map.push_back(metrics.map);
      report.val_ndcg.push_back(metrics.ndcg);
      val_map = metrics.map;
    }

    {
      std::ostringstream line;
      line.precision(6);
      line << "epoch " << epoch << " loss " << epoch_loss << " val_map "
           << (has_val ? val_map : 0.0) << " secs " << secs;
      progress(line.str());
    }

    if (has_val) {
      if (val_map > report.best_val_map) {
        report.best_val_map = val_map;
        report.convergence_epoch = epoch;
        best = clone_params(params);
        bad_evals = 0;
      } else {
        ++bad_evals;
        if (bad_evals > cfg.patience) break;
      }
    } else {
      report.convergence_epoch = epoch;
      best = clone_params(params);
    }
  }

  TrainOutcome out;
  out.params = std::move(best);
  out.report = std::move(report);
  out.paths = std::move(paths);
  return out;
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

struct AblationResult {
  std::string variant;
  double test_map = 0.0, test_ndcg = 0.0;
  double val_map = 0.0;
  TrainReport report;
};

inline AblationResult run_ablation(TrainConfig cfg, const LinkSplit& split,
                                   const std::string& variant_name,
                                   const std::function<void(const std::string&)>& progress =
                                       [](const std::string&) {}) {
  cfg.variant = variant_name;
  TrainOutcome outcome = train(cfg, split, progress);
  const Variant variant = variant_from_name(variant_name);
  InferenceResult inf =
      infer_full(outcome.params, split.train_graph, outcome.paths, cfg.lambda, variant);
  auto queries = build_queries(*split.full, split.test_edges, cfg.seed);
  RankingMetrics metrics = evaluate_ranking(outcome.params, inf.h, inf.s, queries, variant,
                                            static_cast<int>(cfg.workers));
  AblationResult res;
  res.variant = variant_name;
  res.test_map = metrics.map;
  res.test_ndcg = metrics.ndcg;
  res.val_map = outcome.report.best_val_map;
  res.report = std::move(outcome.report);
  return res;
}

// ---------------------------------------------------------------------------
// Scaling measurement
// ---------------------------------------------------------------------------

struct ScalingRow {
  int64_t nodes = 0;
  int64_t edges = 0;
  double secs_per_epoch = 0.0;
  int64_t epochs = 0;
};

// Times training epochs on BFS subgraphs of increasing size at fixed N and
// L_max. Reports the last measured epoch (the first one pays allocation
// warmup).
inline std::vector<ScalingRow> measure_scaling(const Dataset& base,
                                               const std::vector<int64_t>& sizes, TrainConfig cfg,
                                               int64_t epochs_to_time = 2,
                                               const std::function<void(const std::string&)>&
                                                   progress = [](const std::string&) {}) {
  std::vector<ScalingRow> rows;
  cfg.max_epochs = epochs_to_time;
  cfg.patience = epochs_to_time + 1;  // never early-stop inside the window
  for (int64_t size : sizes) {
    Dataset sub = bfs_subgraph(base, size, cfg.seed);
    auto g = std::make_shared<Graph>(sub.graph);
    LinkSplit split = split_links(g, 0.8, 0.1, 0.1, cfg.seed);
    TrainOutcome outcome = train(cfg, split, progress);
    ScalingRow row;
    row.nodes = sub.graph.node_count;
    row.edges = static_cast<int64_t>(sub.graph.edges.size());
    row.secs_per_epoch = outcome.report.epoch_secs.back();
    row.epochs = outcome.report.epochs_run;
    rows.push_back(row);
    std::ostringstream line;
    line << "scaling nodes " << row.nodes << " edges " << row.edges << " secs_per_epoch "
         << row.secs_per_epoch << " epochs " << row.epochs;
    progress(line.str());
  }
  return rows;
}

}  // namespace lhgnn
