// Command-line frontend: prepare | train | eval | ablate | probe | baseline
// | scaling. All randomness flows from --seed; every artifact embeds the
// config fingerprint, and eval refuses checkpoints whose fingerprint does
// not match the provided configuration.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lhgnn/baselines.hpp"
#include "lhgnn/checkpoint.hpp"
#include "lhgnn/config.hpp"
#include "lhgnn/eval.hpp"
#include "lhgnn/report.hpp"
#include "lhgnn/synth.hpp"
#include "lhgnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace lhgnn;

namespace {

struct DataArgs {
  std::string edges, features, labels;
  std::string ratios = "0.8,0.1,0.1";
  std::string out_dir = "out";
  std::string config_file;
};

struct Ratios {
  double train, val, test;
};

Ratios parse_ratios(const std::string& s) {
  Ratios r{};
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> r.train >> c1 >> r.val >> c2 >> r.test) || c1 != ',' || c2 != ',')
    throw ConfigError("--ratios expects `train,val,test`, got `" + s + "`");
  return r;
}

void add_data_options(CLI::App* cmd, DataArgs& data, bool need_edges = true) {
  auto* e = cmd->add_option("--edges", data.edges, "edge list (head<TAB>tail per line)");
  if (need_edges) e->required();
  cmd->add_option("--features", data.features, "feature matrix file");
  cmd->add_option("--labels", data.labels, "node type labels (probe only)");
  cmd->add_option("--ratios", data.ratios, "train,val,test split fractions");
  cmd->add_option("--out", data.out_dir, "output directory");
  cmd->add_option("--config", data.config_file, "key = value config file");
}

struct ConfigFlags {
  TrainConfig values;
  CLI::App* cmd = nullptr;

  void attach(CLI::App* c, bool with_variant = true) {
    cmd = c;
    if (with_variant)
      c->add_option("--variant", values.variant,
                    "full | no_link_encoder | no_personalization | neither");
    c->add_option("--seed", values.seed, "master seed");
    c->add_option("--layers", values.n_layers, "LHGNN layers");
    c->add_option("--d-h", values.d_h, "primary embedding dim");
    c->add_option("--d-s", values.d_s, "semantic embedding dim");
    c->add_option("--paths", values.n_paths, "random walks per node (N)");
    c->add_option("--l-max", values.l_max, "max walk length");
    c->add_option("--lambda", values.lambda, "path decay rate");
    c->add_option("--alpha", values.alpha, "triplet margin");
    c->add_option("--mu", values.mu, "FiLM constraint weight");
    c->add_option("--batch-size", values.batch_size, "triplets per step");
    c->add_option("--lr", values.lr, "learning rate");
    c->add_option("--optimizer", values.optimizer, "adam | sgd");
    c->add_option("--max-epochs", values.max_epochs, "epoch budget");
    c->add_option("--patience", values.patience, "early-stopping patience");
    c->add_option("--entity-dim", values.entity_dim, "learnable input dim (featureless)");
    c->add_option("--workers", values.workers, "parallel workers (sampling/eval)");
    c->add_flag("--resample-paths", values.resample_paths, "resample P_v every epoch");
    c->add_flag("--all-prefixes", values.all_prefixes, "expand all walk prefixes");
  }

  // Precedence: flags > config file > defaults.
  TrainConfig resolve(const std::string& config_file) const {
    TrainConfig cfg;
    if (!config_file.empty())
      for (const auto& [k, v] : parse_config_file(config_file)) apply_config_entry(cfg, k, v);
    auto take = [&](const std::string& flag, auto member) {
      if (cmd->count(flag)) cfg.*member = values.*member;
    };
    take("--seed", &TrainConfig::seed);
    take("--layers", &TrainConfig::n_layers);
    take("--d-h", &TrainConfig::d_h);
    take("--d-s", &TrainConfig::d_s);
    take("--paths", &TrainConfig::n_paths);
    take("--l-max", &TrainConfig::l_max);
    take("--lambda", &TrainConfig::lambda);
    take("--alpha", &TrainConfig::alpha);
    take("--mu", &TrainConfig::mu);
    take("--batch-size", &TrainConfig::batch_size);
    take("--lr", &TrainConfig::lr);
    take("--optimizer", &TrainConfig::optimizer);
    take("--max-epochs", &TrainConfig::max_epochs);
    take("--patience", &TrainConfig::patience);
    take("--entity-dim", &TrainConfig::entity_dim);
    take("--workers", &TrainConfig::workers);
    if (cmd->count("--variant")) cfg.variant = values.variant;
    if (cmd->count("--resample-paths")) cfg.resample_paths = values.resample_paths;
    if (cmd->count("--all-prefixes")) cfg.all_prefixes = values.all_prefixes;
    if (const char* env = std::getenv("LHGNN_WORKERS"); env && !cmd->count("--workers"))
      cfg.workers = std::atoll(env);
    cfg.validate();
    return cfg;
  }
};

std::string resolve_out_dir(const DataArgs& data) {
  if (const char* env = std::getenv("LHGNN_OUT"); env && data.out_dir == "out") return env;
  return data.out_dir;
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty() || fs::exists(path)) return;
  throw ConfigError("file for " + flag + " not found: " + path + " (generate a dataset with " +
                    "lhgnn-synth or point " + flag + " at an existing file)");
}

Dataset load_data(const DataArgs& data) {
  require_file(data.edges, "--edges");
  require_file(data.features, "--features");
  require_file(data.labels, "--labels");
  return load_edge_list(data.edges, data.features, data.labels);
}

LinkSplit make_split(const Dataset& ds, const DataArgs& data, uint64_t seed) {
  const Ratios r = parse_ratios(data.ratios);
  auto g = std::make_shared<Graph>(ds.graph);
  return split_links(g, r.train, r.val, r.test, seed);
}

void write_edge_file(const std::vector<Edge>& edges, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  for (const auto& [h, t] : edges) out << h << '\t' << t << '\n';
}

Json base_report(const DataArgs& data, const TrainConfig& cfg) {
  Json j;
  j["dataset"] = data.edges;
  j["variant"] = cfg.variant;
  j["seed"] = cfg.seed;
  j["config_fingerprint"] = fingerprint_hex(config_fingerprint(cfg));
  return j;
}

// ---------------------------------------------------------------------------

int cmd_prepare(const DataArgs& data, const ConfigFlags& flags, bool with_path_cache) {
  const TrainConfig cfg = flags.resolve(data.config_file);
  Dataset ds = load_data(data);
  LinkSplit split = make_split(ds, data, cfg.seed);

  const std::string dir = resolve_out_dir(data);
  fs::create_directories(dir);
  write_id_map(ds, dir + "/id_map.tsv");
  write_edge_file(split.train_edges, dir + "/split_train.tsv");
  write_edge_file(split.val_edges, dir + "/split_val.tsv");
  write_edge_file(split.test_edges, dir + "/split_test.tsv");

  Json manifest = base_report(data, cfg);
  manifest["nodes"] = ds.graph.node_count;
  manifest["edges"] = ds.graph.edges.size();
  manifest["train_edges"] = split.train_edges.size();
  manifest["val_edges"] = split.val_edges.size();
  manifest["test_edges"] = split.test_edges.size();
  manifest["ratios"] = data.ratios;
  write_json(manifest, dir + "/manifest.json");

  if (with_path_cache) {
    PathSet paths = build_path_set(split.train_graph, cfg.n_paths, cfg.l_max, cfg.seed,
                                   static_cast<int>(cfg.workers), cfg.all_prefixes);
    save_path_cache(paths, split.train_graph, dir + "/paths.bin");
  }
  std::cout << "prepared " << dir << ": " << split.train_edges.size() << "/"
            << split.val_edges.size() << "/" << split.test_edges.size() << " edges\n";
  return 0;
}

int cmd_train(const DataArgs& data, const ConfigFlags& flags) {
  const TrainConfig cfg = flags.resolve(data.config_file);
  Dataset ds = load_data(data);
  LinkSplit split = make_split(ds, data, cfg.seed);
  const std::string dir = resolve_out_dir(data);
  fs::create_directories(dir);

  TrainOutcome outcome = train(cfg, split);
  const std::string ckpt_path = dir + "/best.ckpt";
  save_checkpoint(outcome.params, config_fingerprint(cfg), cfg.seed, ckpt_path);
  save_config(cfg, dir + "/config.used");

  Json report = base_report(data, cfg);
  report["epoch_loss"] = outcome.report.epoch_loss;
  report["val_map"] = outcome.report.val_map;
  report["val_ndcg"] = outcome.report.val_ndcg;
  report["epoch_secs"] = outcome.report.epoch_secs;
  report["convergence_epoch"] = outcome.report.convergence_epoch;
  report["best_val_map"] = outcome.report.best_val_map;
  report["checkpoint"] = ckpt_path;
  write_json(report, dir + "/train_report.json");
  svg::line_chart(dir + "/loss_curve.svg", "training loss",
                  {{"loss", outcome.report.epoch_loss}});
  if (!outcome.report.val_map.empty())
    svg::line_chart(dir + "/val_map.svg", "validation MAP", {{"map", outcome.report.val_map}});
  std::cout << "checkpoint " << ckpt_path << " best_val_map " << outcome.report.best_val_map
            << "\n";
  return 0;
}

int cmd_eval(const DataArgs& data, const ConfigFlags& flags, const std::string& ckpt_path,
             const std::string& which_split) {
  const TrainConfig cfg = flags.resolve(data.config_file);
  require_file(ckpt_path, "--checkpoint");
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const uint64_t want = config_fingerprint(cfg);
  if (ckpt.config_fingerprint != want) {
    std::cerr << "refusing to evaluate: checkpoint fingerprint " +
                     fingerprint_hex(ckpt.config_fingerprint) + " != config fingerprint " +
                     fingerprint_hex(want) + "\n";
    return 1;
  }

  Dataset ds = load_data(data);
  LinkSplit split = make_split(ds, data, cfg.seed);
  const auto& held_out = which_split == "val" ? split.val_edges : split.test_edges;
  if (which_split != "val" && which_split != "test")
    throw ConfigError("--split must be val or test, got " + which_split);

  const Variant variant = variant_from_name(cfg.variant);
  PathSet paths = build_path_set(split.train_graph, cfg.n_paths, cfg.l_max, cfg.seed,
                                 static_cast<int>(cfg.workers), cfg.all_prefixes);
  InferenceResult inf = infer_full(ckpt.params, split.train_graph, paths, cfg.lambda, variant);
  auto queries = build_queries(*split.full, held_out, cfg.seed);
  RankingMetrics metrics = evaluate_ranking(ckpt.params, inf.h, inf.s, queries, variant,
                                            static_cast<int>(cfg.workers));

  const std::string dir = resolve_out_dir(data);
  fs::create_directories(dir);
  Json report = base_report(data, cfg);
  report["split"] = which_split;
  report["map"] = metrics.map;
  report["ndcg"] = metrics.ndcg;
  report["queries"] = queries.size();
  write_json(report, dir + "/eval_" + which_split + ".json");
  svg::bar_chart(dir + "/metrics_" + which_split + ".svg", "ranking metrics",
                 {{"map", metrics.map}, {"ndcg", metrics.ndcg}});
  std::cout << "map " << metrics.map << " ndcg " << metrics.ndcg << "\n";
  return 0;
}

int cmd_ablate(const DataArgs& data, const ConfigFlags& flags, const std::string& variant) {
  TrainConfig cfg = flags.resolve(data.config_file);
  cfg.variant = variant;
  (void)variant_from_name(variant);  // validate early
  Dataset ds = load_data(data);
  LinkSplit split = make_split(ds, data, cfg.seed);

  AblationResult res = run_ablation(cfg, split, variant,
                                    [](const std::string& line) { std::cout << line << "\n"; });
  const std::string dir = resolve_out_dir(data);
  fs::create_directories(dir);
  Json report = base_report(data, cfg);
  report["variant"] = res.variant;
  report["map"] = res.test_map;
  report["ndcg"] = res.test_ndcg;
  report["best_val_map"] = res.val_map;
  write_json(report, dir + "/ablate_" + variant + ".json");
  std::cout << "variant " << variant << " test_map " << res.test_map << " test_ndcg "
            << res.test_ndcg << "\n";
  return 0;
}

int cmd_probe(const DataArgs& data, const ConfigFlags& flags, const std::string& ckpt_path) {
  const TrainConfig cfg = flags.resolve(data.config_file);
  require_file(ckpt_path, "--checkpoint");
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.config_fingerprint != config_fingerprint(cfg)) {
    std::cerr << "refusing to probe: checkpoint fingerprint " +
                     fingerprint_hex(ckpt.config_fingerprint) + " != config fingerprint " +
                     fingerprint_hex(config_fingerprint(cfg)) + "\n";
    return 1;
  }
  Dataset ds = load_data(data);
  if (ds.labels.empty()) throw ConfigError("probe needs --labels");
  LinkSplit split = make_split(ds, data, cfg.seed);

  const Variant variant = variant_from_name(cfg.variant);
  PathSet paths = build_path_set(split.train_graph, cfg.n_paths, cfg.l_max, cfg.seed,
                                 static_cast<int>(cfg.workers), cfg.all_prefixes);
  InferenceResult inf = infer_full(ckpt.params, split.train_graph, paths, cfg.lambda, variant);
  ProbeSplit psplit = probe_split(ds.labels, cfg.seed);
  ProbeResult res = node_type_probe(inf.h, inf.s, ds.labels, psplit);
  auto baseline = majority_baseline(ds.labels, psplit);

  const std::string dir = resolve_out_dir(data);
  fs::create_directories(dir);
  Json report = base_report(data, cfg);
  report["macro_f"] = res.macro_f;
  report["accuracy"] = res.accuracy;
  report["majority_macro_f"] = baseline.macro_f;
  report["majority_accuracy"] = baseline.accuracy;
  write_json(report, dir + "/probe.json");
  std::cout << "macro_f " << res.macro_f << " accuracy " << res.accuracy << "\n";
  return 0;
}

int cmd_baseline(const DataArgs& data, const ConfigFlags& flags, int64_t pseudo_k,
                 const std::string& pseudo_file) {
  const TrainConfig cfg = flags.resolve(data.config_file);
  Dataset ds = load_data(data);
  LinkSplit split = make_split(ds, data, cfg.seed);

  TransEConfig tcfg;
  tcfg.dim = cfg.entity_dim;
  tcfg.lr = 0.005;
  tcfg.margin = 0.2;
  tcfg.batch_size = cfg.batch_size;
  tcfg.max_epochs = cfg.max_epochs;
  tcfg.patience = cfg.patience;
  tcfg.seed = cfg.seed;

  PseudoTypes pseudo;  // single type unless K > 1
  std::string name = "TransE";
  if (pseudo_k > 1) {
    name = "TransE-" + std::to_string(pseudo_k);
    if (!pseudo_file.empty() && fs::exists(pseudo_file)) {
      pseudo = load_pseudo_types(pseudo_file, ds.graph.node_count);
    } else if (ds.graph.has_features()) {
      pseudo = kmeans(*ds.graph.features, ds.graph.node_count, ds.graph.feat_dim,
                      static_cast<int32_t>(pseudo_k), cfg.seed)
                   .types;
    } else {
      // Featureless: cluster the single-type model's entity embeddings.
      std::cout << "no features; training single-type model for clustering\n";
      TransEOutcome base = transe_train(split, PseudoTypes{}, tcfg);
      std::vector<double> emb(base.model.entities.data(),
                              base.model.entities.data() + base.model.entities.size());
      pseudo = kmeans(emb, ds.graph.node_count, tcfg.dim, static_cast<int32_t>(pseudo_k),
                      cfg.seed)
                   .types;
    }
    if (!pseudo_file.empty() && !fs::exists(pseudo_file)) save_pseudo_types(pseudo, pseudo_file);
  }

  TransEOutcome out = transe_train(split, pseudo, tcfg,
                                   [](const std::string& line) { std::cout << line << "\n"; });
  auto queries = build_queries(*split.full, split.test_edges, cfg.seed);
  RankingMetrics metrics = transe_evaluate(out.model, queries);

  const std::string dir = resolve_out_dir(data);
  fs::create_directories(dir);
  Json report = base_report(data, cfg);
  report["model"] = name;
  report["pseudo_k"] = pseudo_k;
  report["map"] = metrics.map;
  report["ndcg"] = metrics.ndcg;
  write_json(report, dir + "/baseline_" + name + ".json");
  std::cout << name << " test_map " << metrics.map << " test_ndcg " << metrics.ndcg << "\n";
  return 0;
}

int cmd_scaling(const DataArgs& data, const ConfigFlags& flags, const std::string& sizes_arg,
                int64_t epochs_to_time) {
  const TrainConfig cfg = flags.resolve(data.config_file);
  Dataset ds = load_data(data);

  std::vector<int64_t> sizes;
  std::istringstream in(sizes_arg);
  std::string token;
  while (std::getline(in, token, ',')) sizes.push_back(std::stoll(token));
  if (sizes.empty()) throw ConfigError("--sizes expects a comma list of node counts");

  auto rows = measure_scaling(ds, sizes, cfg, epochs_to_time,
                              [](const std::string& line) { std::cout << line << "\n"; });
  const std::string dir = resolve_out_dir(data);
  fs::create_directories(dir);
  Json report = base_report(data, cfg);
  report["rows"] = Json::array();
  printf("%10s %10s %14s %8s\n", "nodes", "edges", "secs/epoch", "epochs");
  for (const auto& row : rows) {
    printf("%10lld %10lld %14.3f %8lld\n", static_cast<long long>(row.nodes),
           static_cast<long long>(row.edges), row.secs_per_epoch,
           static_cast<long long>(row.epochs));
    report["rows"].push_back({{"nodes", row.nodes},
                              {"edges", row.edges},
                              {"secs_per_epoch", row.secs_per_epoch},
                              {"epochs", row.epochs}});
  }
  write_json(report, dir + "/scaling.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  linalg::init_single_thread();
  CLI::App app{"link prediction on latent heterogeneous graphs"};
  app.require_subcommand(1);

  DataArgs data;
  ConfigFlags flags;
  bool with_path_cache = false;
  std::string ckpt_path, which_split = "test", variant = "full", baseline_model = "transe";
  std::string sizes_arg = "5000,10000,20000", pseudo_file;
  int64_t pseudo_k = 1, epochs_to_time = 2;

  auto* prepare = app.add_subcommand("prepare", "split a dataset and cache artifacts");
  auto* train_cmd = app.add_subcommand("train", "train the model");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* ablate = app.add_subcommand("ablate", "train and evaluate an ablation variant");
  auto* probe = app.add_subcommand("probe", "node type classification probe");
  auto* baseline = app.add_subcommand("baseline", "translational baselines");
  auto* scaling = app.add_subcommand("scaling", "per-epoch timing across BFS subgraphs");

  for (CLI::App* cmd : {prepare, train_cmd, eval_cmd, ablate, probe, baseline, scaling})
    add_data_options(cmd, data);
  // One subcommand runs per invocation, so the flag bundle can be shared.
  CLI::App* active = nullptr;
  for (CLI::App* cmd : {prepare, train_cmd, eval_cmd, ablate, probe, baseline, scaling})
    cmd->callback([&active, cmd]() { active = cmd; });

  prepare->add_flag("--path-cache", with_path_cache, "also write the path cache");
  eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint to evaluate")->required();
  eval_cmd->add_option("--split", which_split, "val | test");
  probe->add_option("--checkpoint", ckpt_path, "checkpoint to probe")->required();
  ablate->add_option("--variant", variant,
                     "full | no_link_encoder | no_personalization | neither")
      ->required();
  baseline->add_option("model", baseline_model, "baseline model (transe)");
  baseline->add_option("--pseudo-k", pseudo_k, "pseudo-type cluster count (1 = single type)");
  baseline->add_option("--pseudo-types", pseudo_file, "pseudo-type file to reuse or write");
  scaling->add_option("--sizes", sizes_arg, "comma list of BFS subgraph sizes");
  scaling->add_option("--epochs", epochs_to_time, "epochs to time per size");

  ConfigFlags prepare_f, train_f, eval_f, ablate_f, probe_f, baseline_f, scaling_f;
  prepare_f.attach(prepare);
  train_f.attach(train_cmd);
  eval_f.attach(eval_cmd);
  ablate_f.attach(ablate, /*with_variant=*/false);
  probe_f.attach(probe);
  baseline_f.attach(baseline);
  scaling_f.attach(scaling);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (active == prepare) return cmd_prepare(data, prepare_f, with_path_cache);
    if (active == train_cmd) return cmd_train(data, train_f);
    if (active == eval_cmd) return cmd_eval(data, eval_f, ckpt_path, which_split);
    if (active == ablate) return cmd_ablate(data, ablate_f, variant);
    if (active == probe) return cmd_probe(data, probe_f, ckpt_path);
    if (active == baseline) {
      if (baseline_model != "transe")
        throw ConfigError("unknown baseline model: " + baseline_model);
      return cmd_baseline(data, baseline_f, pseudo_k, pseudo_file);
    }
    if (active == scaling) return cmd_scaling(data, scaling_f, sizes_arg, epochs_to_time);
    throw ConfigError("no subcommand selected");
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
