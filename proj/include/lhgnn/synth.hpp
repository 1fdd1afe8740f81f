#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "lhgnn/graph.hpp"
#include "lhgnn/rng.hpp"

namespace lhgnn {

// Bibliographic-style latent heterogeneous graph generator. Three hidden
// node types (paper / author / venue) partitioned into many small latent
// fields; papers link to a few same-field authors (preferential within the
// field) and one venue. Features are bag-of-words-like: a type signature
// block plus a noisy field topic direction. The edge file lists both
// directions of every link, matching how bibliographic edge lists ship.
struct SynthSpec {
  int64_t nodes = 18405;
  int64_t links = 33973;  // undirected; the edge file carries 2x records
  int64_t feat_dim = 334;
  int32_t fields = 360;
  double frac_paper = 0.778;
  double frac_author = 0.20;  // venues take the remainder
  double cross_field = 0.05;  // chance an author link leaves the field
  double venue_noise = 0.05;  // chance the venue is drawn globally
  double noise = 0.25;        // feature noise sigma
  double topic_gain = 1.0;
  uint64_t seed = 7;
};

namespace detail {
constexpr int32_t kPaper = 0, kAuthor = 1, kVenue = 2;
constexpr int64_t kTypeBlock = 8;  // per-type signature dims at the tail
}  // namespace detail

inline Dataset generate_synthetic(const SynthSpec& spec) {
  using namespace detail;
  Rng rng = derive_stream(spec.seed, "synth");
  const int64_t n = spec.nodes;

  // Hidden types, shuffled so ids carry no type information.
  const int64_t n_paper = static_cast<int64_t>(std::llround(spec.frac_paper * n));
  const int64_t n_author = static_cast<int64_t>(std::llround(spec.frac_author * n));
  std::vector<int32_t> type_of(n, kVenue);
  std::fill(type_of.begin(), type_of.begin() + n_paper, kPaper);
  std::fill(type_of.begin() + n_paper, type_of.begin() + n_paper + n_author, kAuthor);
  rng.shuffle(type_of);

  std::vector<int32_t> field_of(n);
  for (int64_t v = 0; v < n; ++v)
    field_of[v] = static_cast<int32_t>(rng.uniform_int(spec.fields));

  std::vector<std::vector<NodeId>> field_authors(spec.fields), field_venues(spec.fields);
  std::vector<NodeId> papers, authors, venues;
  for (int64_t v = 0; v < n; ++v) {
    if (type_of[v] == kPaper) papers.push_back(static_cast<NodeId>(v));
    if (type_of[v] == kAuthor) {
      authors.push_back(static_cast<NodeId>(v));
      field_authors[field_of[v]].push_back(static_cast<NodeId>(v));
    }
    if (type_of[v] == kVenue) {
      venues.push_back(static_cast<NodeId>(v));
      field_venues[field_of[v]].push_back(static_cast<NodeId>(v));
    }
  }

  // Preferential within-field author choice: draw from the occurrence list
  // so prolific authors keep accumulating papers.
  std::vector<std::vector<NodeId>> field_author_occurrences(spec.fields);
  auto pick_author = [&](int32_t field) -> NodeId {
    if (rng.uniform() < spec.cross_field || field_authors[field].empty())
      return authors[rng.uniform_int(authors.size())];
    auto& occ = field_author_occurrences[field];
    NodeId a;
    if (!occ.empty() && rng.uniform() < 0.5)
      a = occ[rng.uniform_int(occ.size())];
    else
      a = field_authors[field][rng.uniform_int(field_authors[field].size())];
    occ.push_back(a);
    return a;
  };
  auto pick_venue = [&](int32_t field) -> NodeId {
    if (rng.uniform() < spec.venue_noise || field_venues[field].empty())
      return venues[rng.uniform_int(venues.size())];
    return field_venues[field][rng.uniform_int(field_venues[field].size())];
  };

  std::set<Edge> links;  // undirected, stored with paper-ish endpoint first
  auto add_link = [&](NodeId x, NodeId y) {
    if (x == y) return false;
    return links.insert({std::min(x, y), std::max(x, y)}).second;
  };

  for (NodeId p : papers) {
    const double roll = rng.uniform();
    const int k_authors = roll < 0.68 ? 1 : (roll < 0.95 ? 2 : 3);
    for (int i = 0; i < k_authors; ++i) add_link(p, pick_author(field_of[p]));
    add_link(p, pick_venue(field_of[p]));
  }

  // Every author and venue participates in at least one link.
  {
    std::vector<int64_t> degree(n, 0);
    for (const auto& [x, y] : links) {
      degree[x]++;
      degree[y]++;
    }
    for (int64_t v = 0; v < n; ++v) {
      if (degree[v] > 0 || type_of[v] == kPaper) continue;
      for (int attempt = 0; attempt < 64; ++attempt) {
        const NodeId p = papers[rng.uniform_int(papers.size())];
        if (add_link(static_cast<NodeId>(v), p)) break;
      }
    }
  }

  // Trim or top up to the exact link budget.
  while (static_cast<int64_t>(links.size()) > spec.links) {
    auto it = links.begin();
    std::advance(it, rng.uniform_int(links.size()));
    links.erase(it);
  }
  while (static_cast<int64_t>(links.size()) < spec.links) {
    const NodeId p = papers[rng.uniform_int(papers.size())];
    add_link(p, pick_author(field_of[p]));
  }

  Dataset ds;
  ds.graph.node_count = n;
  for (const auto& [x, y] : links) {
    ds.graph.edges.emplace_back(x, y);
    ds.graph.edges.emplace_back(y, x);
  }
  std::sort(ds.graph.edges.begin(), ds.graph.edges.end());
  ds.graph.rebuild_adjacency();

  // Features: type signature at the tail, sparse nonnegative field topic up
  // front, Gaussian noise, clipped at zero.
  const int64_t type_block = std::clamp<int64_t>(spec.feat_dim / 8, 2, kTypeBlock);
  const int64_t topic_dims = spec.feat_dim - 3 * type_block;
  if (topic_dims < 4) throw ConfigError("generate_synthetic: feat_dim too small");
  std::vector<std::vector<std::pair<int32_t, double>>> field_topic(spec.fields);
  Rng topic_rng = derive_stream(spec.seed, "synth_topics");
  for (int32_t f = 0; f < spec.fields; ++f) {
    for (int k = 0; k < 10; ++k)
      field_topic[f].push_back({static_cast<int32_t>(topic_rng.uniform_int(topic_dims)),
                                0.5 + topic_rng.uniform()});
  }
  auto feats = std::make_shared<std::vector<double>>(n * spec.feat_dim, 0.0);
  Rng feat_rng = derive_stream(spec.seed, "synth_features");
  for (int64_t v = 0; v < n; ++v) {
    double* row = feats->data() + v * spec.feat_dim;
    const double personal = 0.7 + 0.6 * feat_rng.uniform();
    const double gain = spec.topic_gain * (type_of[v] == kVenue ? 1.5 : 1.0) * personal;
    for (const auto& [dim, weight] : field_topic[field_of[v]]) row[dim] += gain * weight;
    const int64_t block = topic_dims + type_of[v] * type_block;
    for (int64_t j = 0; j < type_block; ++j) row[block + j] += 1.0;
    for (int64_t j = 0; j < spec.feat_dim; ++j)
      row[j] = std::max(0.0, row[j] + feat_rng.gaussian() * spec.noise);
  }
  ds.graph.feat_dim = spec.feat_dim;
  ds.graph.features = feats;

  ds.labels.type_names = {"author", "paper", "venue"};
  ds.labels.type_of.resize(n);
  for (int64_t v = 0; v < n; ++v)
    ds.labels.type_of[v] = type_of[v] == kPaper ? 1 : (type_of[v] == kAuthor ? 0 : 2);

  ds.id_names.resize(n);
  for (int64_t v = 0; v < n; ++v) ds.id_names[v] = std::to_string(v);
  return ds;
}

// Writes edges.tsv (both directions, provenance type column), features.txt
// and labels.tsv under dir (which must exist).
inline void write_dataset(const Dataset& ds, const std::string& dir) {
  {
    std::ofstream out(dir + "/edges.tsv");
    if (!out) throw ParseError("cannot write " + dir + "/edges.tsv");
    for (const auto& [h, t] : ds.graph.edges) {
      out << h << '\t' << t;
      if (!ds.labels.empty())
        out << '\t' << ds.labels.type_names[ds.labels.type_of[h]][0]
            << ds.labels.type_names[ds.labels.type_of[t]][0];
      out << '\n';
    }
  }
  if (ds.graph.has_features()) {
    std::ofstream out(dir + "/features.txt");
    if (!out) throw ParseError("cannot write " + dir + "/features.txt");
    out << ds.graph.node_count << ' ' << ds.graph.feat_dim << '\n';
    out.precision(6);
    for (int64_t v = 0; v < ds.graph.node_count; ++v) {
      const double* row = ds.graph.feature_row(static_cast<NodeId>(v));
      for (int64_t j = 0; j < ds.graph.feat_dim; ++j) out << row[j] << (j + 1 < ds.graph.feat_dim ? ' ' : '\n');
    }
  }
  if (!ds.labels.empty()) {
    std::ofstream out(dir + "/labels.tsv");
    if (!out) throw ParseError("cannot write " + dir + "/labels.tsv");
    for (int64_t v = 0; v < ds.graph.node_count; ++v)
      out << v << '\t' << ds.labels.type_names[ds.labels.type_of[v]] << '\n';
  }
}

}  // namespace lhgnn
