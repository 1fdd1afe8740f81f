#include <doctest.h>

#include <cmath>

#include "lhgnn/grad_check.hpp"
#include "lhgnn/link_model.hpp"
#include "lhgnn/model.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace lhgnn;

namespace {

ModelParams toy_params(int64_t input_dim, int64_t d_h, int64_t d_s, int64_t layers,
                       uint64_t seed) {
  ModelDims dims;
  dims.input_dim = input_dim;
  dims.d_h.assign(layers, d_h);
  dims.d_s.assign(layers, d_s);
  return init_model(dims, seed);
}

}  // namespace

TEST_CASE("semantic encode: zero weights give zero semantics") {
  Dataset ds = testutil::toy6();
  PathSet paths = build_path_set(ds.graph, 4, 2, 5);
  ModelParams params = toy_params(6, 5, 3, 1, 1);
  for (int64_t i = 0; i < params.layers[0].w_s.size(); ++i) params.layers[0].w_s.data()[i] = 0.0;

  BatchPlan plan = full_graph_plan(paths, 6, 1, 0.1);
  ForwardOut fwd = model_forward(nullptr, params, ds.graph, plan, Variant::kFull);
  for (int64_t i = 0; i < fwd.s[1].size(); ++i) CHECK(fwd.s[1].data()[i] == 0.0);
}

TEST_CASE("semantic encode: identity block passes nonnegative inputs through") {
  Dataset ds = testutil::toy6();
  auto feats = std::make_shared<std::vector<double>>(*ds.graph.features);
  for (auto& x : *feats) x = std::abs(x);  // nonnegative so LeakyReLU is identity
  ds.graph.features = feats;

  PathSet paths = build_path_set(ds.graph, 4, 2, 5);
  ModelParams params = toy_params(6, 5, 3, 1, 1);
  auto& ws = params.layers[0].w_s;  // 3 x 6 identity block
  for (int64_t i = 0; i < ws.size(); ++i) ws.data()[i] = 0.0;
  for (int64_t i = 0; i < 3; ++i) ws.at(i, i) = 1.0;

  BatchPlan plan = full_graph_plan(paths, 6, 1, 0.1);
  ForwardOut fwd = model_forward(nullptr, params, ds.graph, plan, Variant::kFull);
  for (int64_t v = 0; v < 6; ++v)
    for (int64_t j = 0; j < 3; ++j)
      CHECK(fwd.s[1].at(v, j) == doctest::Approx(ds.graph.feature_row(v)[j]));
}

TEST_CASE("identity FiLM: zero generators modulate nothing") {
  Dataset ds = testutil::toy6();
  PathSet paths = build_path_set(ds.graph, 6, 3, 5);
  ModelParams params = toy_params(6, 5, 3, 2, 3);
  for (auto& lp : params.layers)
    for (Tensor* t : {&lp.w_gamma, &lp.b_gamma, &lp.w_beta, &lp.b_beta})
      for (int64_t i = 0; i < t->size(); ++i) t->data()[i] = 0.0;

  BatchPlan plan = full_graph_plan(paths, 6, 2, 0.1);
  ForwardOut with_film = model_forward(nullptr, params, ds.graph, plan, Variant::kFull);
  ForwardOut no_film = model_forward(nullptr, params, ds.graph, plan, Variant::kNoPersonalization);
  for (int64_t i = 0; i < with_film.h_final().size(); ++i)
    CHECK(with_film.h_final().data()[i] == doctest::Approx(no_film.h_final().data()[i]).epsilon(1e-12));
  CHECK(with_film.gamma_norm_sum[0].value() == 0.0);
  CHECK(with_film.beta_norm_sum[0].value() == 0.0);
}

TEST_CASE("constant gamma doubles the context message") {
  // One node with one neighbor; constant gamma = 1 (via bias), beta = 0.
  Graph g;
  g.node_count = 2;
  g.edges = {{0, 1}};
  g.rebuild_adjacency();
  auto feats = std::make_shared<std::vector<double>>(std::vector<double>{2.0, 0.0, 0.0, 2.0});
  g.feat_dim = 2;
  g.features = feats;

  PathSet paths = build_path_set(g, 1, 1, 7);
  ModelParams params = toy_params(2, 2, 2, 1, 1);
  auto zero = [](Tensor& t) {
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = 0.0;
  };
  zero(params.layers[0].w_gamma);
  zero(params.layers[0].w_beta);
  zero(params.layers[0].b_beta);
  params.layers[0].b_gamma.data()[0] = 1.0;
  params.layers[0].b_gamma.data()[1] = 1.0;

  // Identity update so h1 is the normalized context.
  zero(params.layers[0].w_h);
  params.layers[0].w_h.at(0, 0) = 1.0;
  params.layers[0].w_h.at(1, 1) = 1.0;
  zero(params.layers[0].b_h);

  const double lambda = 1e-9;  // decay ~ 1
  BatchPlan plan = full_graph_plan(paths, 2, 1, lambda);
  ForwardOut fwd = model_forward(nullptr, params, g, plan, Variant::kFull);
  // Node 0: ctx = (h0 + 2*h1) / 2 = ([2,0] + [0,4]) / 2 = [1,2], normalized.
  const double norm = std::sqrt(1.0 + 4.0);
  CHECK(fwd.h_final().at(0, 0) == doctest::Approx(1.0 / norm).epsilon(1e-7));
  CHECK(fwd.h_final().at(0, 1) == doctest::Approx(2.0 / norm).epsilon(1e-7));
}

TEST_CASE("single-node graph: layer is self-loop only") {
  Graph g;
  g.node_count = 1;
  g.rebuild_adjacency();
  auto feats = std::make_shared<std::vector<double>>(std::vector<double>{0.5, -0.25, 1.0});
  g.feat_dim = 3;
  g.features = feats;

  PathSet paths = build_path_set(g, 5, 2, 3);
  ModelParams params = toy_params(3, 4, 2, 1, 11);
  BatchPlan plan = full_graph_plan(paths, 1, 1, 0.1);
  ForwardOut fwd = model_forward(nullptr, params, g, plan, Variant::kFull);

  // h1 = normalize(LeakyReLU(W_h h0 + b_h)).
  std::vector<double> h0 = {0.5, -0.25, 1.0};
  auto expect = oracle::matvec(params.layers[0].w_h, h0);
  oracle::add_bias_lrelu(expect, params.layers[0].b_h, params.leaky_slope);
  double norm = 0.0;
  for (double x : expect) norm += x * x;
  norm = std::sqrt(norm);
  for (int64_t j = 0; j < 4; ++j)
    CHECK(fwd.h_final().at(0, j) == doctest::Approx(expect[j] / norm).epsilon(1e-12));
}

TEST_CASE("6-node toy graph matches the plain-loop oracle within 1e-10") {
  Dataset ds = testutil::toy6(6);
  PathSet paths = build_path_set(ds.graph, 5, 3, 17);
  ModelParams params = toy_params(6, 8, 4, 2, 29);

  const double lambda = 0.1;
  BatchPlan plan = full_graph_plan(paths, 6, 2, lambda);
  for (Variant variant : {Variant::kFull, Variant::kNoPersonalization}) {
    ForwardOut fwd = model_forward(nullptr, params, ds.graph, plan, variant);
    auto layers = oracle::forward(ds.graph, params, paths, lambda, uses_film(variant));
    for (int64_t l = 1; l <= 2; ++l) {
      for (int64_t v = 0; v < 6; ++v) {
        for (int64_t j = 0; j < 8; ++j)
          CHECK(std::abs(fwd.h[l].at(v, j) - layers[l - 1].h[v][j]) < 1e-10);
        for (int64_t j = 0; j < 4; ++j)
          CHECK(std::abs(fwd.s[l].at(v, j) - layers[l - 1].s[v][j]) < 1e-10);
      }
    }
  }
}

TEST_CASE("mini-batch plan agrees with the full-graph forward") {
  Dataset ds = testutil::toy6(6);
  PathSet paths = build_path_set(ds.graph, 5, 3, 17);
  ModelParams params = toy_params(6, 8, 4, 2, 29);

  BatchPlan full = full_graph_plan(paths, 6, 2, 0.1);
  ForwardOut ffull = model_forward(nullptr, params, ds.graph, full, Variant::kFull);

  BatchPlan mini = build_batch_plan(paths, 6, {1, 4}, 2, 0.1);
  ForwardOut fmini = model_forward(nullptr, params, ds.graph, mini, Variant::kFull);
  for (NodeId v : {1, 4}) {
    const int64_t row = mini.final_row(v);
    for (int64_t j = 0; j < 8; ++j)
      CHECK(fmini.h_final().at(row, j) == doctest::Approx(ffull.h_final().at(v, j)).epsilon(1e-12));
  }
}

TEST_CASE("two layers produce the configured output shapes") {
  Dataset ds = testutil::toy6(6);
  PathSet paths = build_path_set(ds.graph, 4, 2, 3);
  ModelParams params = toy_params(6, 32, 10, 2, 5);
  BatchPlan plan = full_graph_plan(paths, 6, 2, 0.1);
  ForwardOut fwd = model_forward(nullptr, params, ds.graph, plan, Variant::kFull);
  CHECK(fwd.h_final().rows() == 6);
  CHECK(fwd.h_final().cols() == 32);
  CHECK(fwd.s_final().rows() == 6);
  CHECK(fwd.s_final().cols() == 10);
}

TEST_CASE("row norms are 1 after per-layer normalization; outputs finite") {
  Dataset ds = testutil::toy6(6);
  PathSet paths = build_path_set(ds.graph, 6, 4, 23);
  ModelParams params = toy_params(6, 8, 4, 2, 31);
  BatchPlan plan = full_graph_plan(paths, 6, 2, 0.1);
  ForwardOut fwd = model_forward(nullptr, params, ds.graph, plan, Variant::kFull);
  for (int64_t l = 1; l <= 2; ++l) {
    CHECK(fwd.h[l].all_finite());
    for (int64_t v = 0; v < 6; ++v) {
      double norm = 0.0;
      for (int64_t j = 0; j < 8; ++j) norm += fwd.h[l].at(v, j) * fwd.h[l].at(v, j);
      CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("permutation equivariance: relabeled graph permutes the embeddings") {
  Dataset ds = testutil::toy6(5);
  PathSet paths = build_path_set(ds.graph, 5, 3, 13);
  ModelParams params = toy_params(5, 7, 3, 2, 41);
  BatchPlan plan = full_graph_plan(paths, 6, 2, 0.1);
  ForwardOut base = model_forward(nullptr, params, ds.graph, plan, Variant::kFull);

  // Relabel via pi, mapping the path set through the permutation.
  const std::vector<NodeId> pi = {3, 5, 0, 2, 4, 1};
  Dataset perm;
  perm.graph.node_count = 6;
  for (const auto& [h, t] : ds.graph.edges) perm.graph.edges.emplace_back(pi[h], pi[t]);
  perm.graph.rebuild_adjacency();
  auto feats = std::make_shared<std::vector<double>>(6 * 5);
  for (int64_t v = 0; v < 6; ++v)
    std::copy(ds.graph.feature_row(v), ds.graph.feature_row(v) + 5, feats->data() + pi[v] * 5);
  perm.graph.feat_dim = 5;
  perm.graph.features = feats;

  PathSet perm_paths;
  perm_paths.seed = paths.seed;
  perm_paths.n_walks = paths.n_walks;
  perm_paths.l_max = paths.l_max;
  perm_paths.per_node.resize(6);
  for (int64_t v = 0; v < 6; ++v) {
    NodePaths np = paths.per_node[v];
    for (auto& node : np.flat) node = pi[node];
    perm_paths.per_node[pi[v]] = std::move(np);
  }

  BatchPlan pplan = full_graph_plan(perm_paths, 6, 2, 0.1);
  ForwardOut pout = model_forward(nullptr, params, perm.graph, pplan, Variant::kFull);
  for (int64_t v = 0; v < 6; ++v)
    for (int64_t j = 0; j < 7; ++j)
      CHECK(pout.h_final().at(pi[v], j) == doctest::Approx(base.h_final().at(v, j)).epsilon(1e-12));
}

TEST_CASE("gradients of the full pipeline match finite differences") {
  Dataset ds = testutil::toy6(5);
  PathSet paths = build_path_set(ds.graph, 4, 3, 61);
  ModelParams params = toy_params(5, 6, 3, 2, 67);
  BatchPlan plan = full_graph_plan(paths, 6, 2, 0.1);
  std::vector<Triplet> triplets = {{0, 1, 3}, {2, 3, 5}, {4, 5, 2}};

  auto loss_fn = [&](Tape* tape) {
    params.zero_grad();
    ForwardOut fwd = model_forward(tape, params, ds.graph, plan, Variant::kFull);
    Tensor task = task_loss(tape, params, fwd, plan, triplets, 0.2, Variant::kFull);
    Tensor film = film_reg(tape, fwd);
    return total_loss(tape, task, film, 1e-3);
  };
  std::vector<Tensor> tensors;
  for (auto& [name, t] : params.named_tensors()) tensors.push_back(t);
  CHECK(grad_check(loss_fn, tensors, 1e-5) < 1e-4);
}

TEST_CASE("entity-embedding inputs also get correct gradients") {
  Dataset ds = testutil::toy6(4);
  Graph g = ds.graph;
  g.feat_dim = 0;
  g.features = nullptr;  // featureless: learnable entity vectors

  PathSet paths = build_path_set(g, 3, 2, 71);
  ModelDims dims;
  dims.input_dim = 4;
  dims.d_h = {5, 5};
  dims.d_s = {3, 3};
  ModelParams params = init_model(dims, 73, g.node_count);
  BatchPlan plan = full_graph_plan(paths, 6, 2, 0.1);
  std::vector<Triplet> triplets = {{1, 2, 4}, {5, 0, 3}};

  auto loss_fn = [&](Tape* tape) {
    params.zero_grad();
    ForwardOut fwd = model_forward(tape, params, g, plan, Variant::kFull);
    Tensor task = task_loss(tape, params, fwd, plan, triplets, 0.2, Variant::kFull);
    return total_loss(tape, task, film_reg(tape, fwd), 1e-3);
  };
  std::vector<Tensor> tensors;
  for (auto& [name, t] : params.named_tensors()) tensors.push_back(t);
  CHECK(grad_check(loss_fn, tensors, 1e-5) < 1e-4);
}
