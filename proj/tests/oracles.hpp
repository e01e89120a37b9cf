#pragma once

// Independent reference implementations and random instance generators
// shared by the unit and acceptance tests. Nothing here calls the library
// code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "x2g/kb.hpp"
#include "x2g/tabular.hpp"
#include "x2g/x2graph.hpp"

namespace oracle {

struct Instance {
  x2g::TabularDataset table;
  std::vector<std::pair<std::string, std::string>> kb_pairs;  // raw, may repeat or self-loop
  x2g::KnowledgeBase kb;
  x2g::ConversionConfig config;
};

/// Random (table, KB, config) with D <= max_d columns and N <= max_n rows.
/// Values include exact zeros; KB pairs include duplicates, reversals,
/// self-loops and names absent from the table.
inline Instance random_instance(std::mt19937_64& rng, std::size_t max_d = 30,
                                std::size_t max_n = 20) {
  Instance inst;
  auto uni = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  const std::size_t pool = 40;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < pool; ++k) names.push_back("f" + std::to_string(k * 7919 % 1000));
  std::shuffle(names.begin(), names.end(), rng);
  const std::size_t d = uni(1, max_d), n = uni(0, max_n);
  for (std::size_t j = 0; j < d; ++j) inst.table.columns.push_back({names[j], x2g::ColumnKind::numeric});
  inst.table.raw.assign(d, {});
  inst.table.class_names = {"a", "b", "c"};
  std::normal_distribution<double> nd(0.0, 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    inst.table.labels.push_back(static_cast<std::uint32_t>(uni(0, 2)));
    for (std::size_t j = 0; j < d; ++j)
      inst.table.values.push_back(uni(0, 3) == 0 ? 0.0 : (uni(0, 9) == 0 ? -0.0 : nd(rng)));
  }
  // KB draws endpoints from a window overlapping the table's columns
  const std::size_t lo = uni(0, d - 1), hi = std::min(pool, lo + uni(1, 25));
  const std::size_t m = uni(0, 60);
  for (std::size_t e = 0; e < m; ++e) {
    auto pick = [&] { return uni(0, 4) == 0 ? names[uni(0, pool - 1)] : names[uni(lo, hi - 1)]; };
    const auto a = pick();
    const auto b = uni(0, 9) == 0 ? a : pick();
    inst.kb_pairs.emplace_back(a, b);
  }
  inst.kb = x2g::KnowledgeBase::from_pairs("rand", inst.kb_pairs);
  inst.config.node_pruning = uni(0, 1) == 1;
  inst.config.id_indexing = uni(0, 1) == 1;
  return inst;
}

/// Algorithm 1, set-based and quadratic: intersect names, add every eligible
/// feature in sorted order as (index, value), then test every node pair
/// against the raw KB pair list.
inline x2g::GraphDataset convert(const x2g::TabularDataset& table,
                                 const std::vector<std::pair<std::string, std::string>>& kb_pairs,
                                 const x2g::ConversionConfig& config) {
  std::set<std::string> kb_names;
  std::set<std::set<std::string>> kb_edges;
  for (const auto& [u, v] : kb_pairs) {
    if (u == v) continue;
    kb_names.insert(u);
    kb_names.insert(v);
    kb_edges.insert({u, v});
  }
  std::set<std::string> shared;
  for (const auto& c : table.columns)
    if (kb_names.count(c.name)) shared.insert(c.name);
  std::vector<std::string> s(shared.begin(), shared.end());

  x2g::GraphDataset out;
  out.vocabulary = x2g::FeatureVocabulary(s);
  out.class_names = table.class_names;
  out.config = config;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    x2g::SampleGraph g;
    g.label = table.labels[i];
    g.vocab_size = static_cast<std::uint32_t>(s.size());
    std::vector<std::string> node_names;
    for (std::uint32_t j = 0; j < s.size(); ++j) {
      double v = 0;
      for (std::size_t c = 0; c < table.cols(); ++c)
        if (table.columns[c].name == s[j]) v = table.at(i, c);
      if (config.node_pruning && v == 0.0) continue;
      g.node_index.push_back(j);
      g.node_value.push_back(v);
      node_names.push_back(s[j]);
    }
    for (std::uint32_t p = 0; p < node_names.size(); ++p)
      for (std::uint32_t q = p + 1; q < node_names.size(); ++q)
        if (kb_edges.count({node_names[p], node_names[q]})) g.edges.emplace_back(p, q);
    out.graphs.push_back(std::move(g));
  }
  return out;
}

/// Dense D^-1/2 (A + I) D^-1/2 for n nodes.
inline std::vector<std::vector<double>> normalized_adjacency(std::size_t n,
                                                             const std::vector<x2g::Edge>& edges) {
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) a[i][i] = 1.0;
  for (auto [u, v] : edges) {
    a[u][v] += 1.0;
    a[v][u] += 1.0;
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a[i][j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i][j] /= std::sqrt(deg[i] * deg[j]);
  return a;
}

/// AUC by exhaustive pair counting: P(score_pos > score_neg) + 0.5 P(tie).
inline double pair_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& pos) {
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (pos[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace oracle
