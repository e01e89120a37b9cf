#pragma once

// Row-to-graph conversion. Each row becomes a graph whose nodes are the
// eligible cells of the KB-covered columns, encoded as (feature index,
// value), and whose edges are the KB relations among the surviving nodes.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "x2g/common.hpp"
#include "x2g/kb.hpp"
#include "x2g/tabular.hpp"

namespace x2g {

struct ConversionConfig {
  bool node_pruning = false;  ///< drop cells whose value is exactly 0.0
  bool id_indexing = true;    ///< consumed by the model's embedding branch

  bool operator==(const ConversionConfig&) const = default;
};

/// One converted row. Nodes are in ascending feature-index order; edges index
/// node positions, are stored once as (a, b) with a < b, and are sorted.
struct SampleGraph {
  std::vector<std::uint32_t> node_index;
  std::vector<double> node_value;
  std::vector<Edge> edges;
  std::uint32_t label = 0;
  std::uint32_t vocab_size = 0;

  std::size_t num_nodes() const { return node_index.size(); }
  std::size_t num_edges() const { return edges.size(); }

  bool operator==(const SampleGraph&) const = default;
};

struct GraphDataset {
  FeatureVocabulary vocabulary;
  std::vector<SampleGraph> graphs;
  std::vector<std::string> class_names;
  ConversionConfig config;
  std::string kb_name;

  std::size_t size() const { return graphs.size(); }
  std::size_t num_classes() const { return class_names.size(); }

  std::vector<std::uint32_t> labels() const {
    std::vector<std::uint32_t> out;
    out.reserve(graphs.size());
    for (const auto& g : graphs) out.push_back(g.label);
    return out;
  }

  bool operator==(const GraphDataset&) const = default;
};

inline bool is_node_eligible(double value, const ConversionConfig& config) {
  return !config.node_pruning || value != 0.0;
}

/// Throws FormatError if `g` breaks the SampleGraph invariants.
inline void validate_graph(const SampleGraph& g) {
  if (g.node_index.size() != g.node_value.size())
    throw FormatError("graph node arrays differ in length");
  for (std::size_t k = 0; k < g.node_index.size(); ++k) {
    if (g.node_index[k] >= g.vocab_size)
      throw FormatError("node feature index out of vocabulary range");
    if (k > 0 && g.node_index[k] <= g.node_index[k - 1])
      throw FormatError("node feature indices not strictly increasing");
  }
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [a, b] = g.edges[e];
    if (a >= b || b >= g.node_index.size())
      throw FormatError("edge endpoints invalid");
    if (e > 0 && g.edges[e] <= g.edges[e - 1])
      throw FormatError("edges not sorted or duplicated");
  }
}

namespace detail {

// `pos` is scratch of size >= vocab_size.
inline SampleGraph convert_row_with(std::span<const double> values,
                                    std::uint32_t vocab_size,
                                    std::span<const Edge> kb_edges,
                                    const ConversionConfig& config,
                                    std::uint32_t label,
                                    std::vector<std::uint32_t>& pos) {
  constexpr std::uint32_t absent = UINT32_MAX;
  SampleGraph g;
  g.label = label;
  g.vocab_size = vocab_size;
  pos.assign(vocab_size, absent);
  for (std::uint32_t j = 0; j < vocab_size; ++j) {
    const double v = values[j];
    if (!is_node_eligible(v, config)) continue;
    pos[j] = static_cast<std::uint32_t>(g.node_index.size());
    g.node_index.push_back(j);
    g.node_value.push_back(v);
  }
  // kb_edges sorted by (a, b) and pos is monotone, so output stays sorted
  for (const auto& [a, b] : kb_edges) {
    const auto pa = pos[a], pb = pos[b];
    if (pa != absent && pb != absent) g.edges.emplace_back(pa, pb);
  }
  return g;
}

}  // namespace detail

/// `values[j]` is the row's value for vocabulary feature j.
inline SampleGraph convert_row(std::span<const double> values,
                               const FeatureVocabulary& vocab,
                               std::span<const Edge> kb_edges,
                               const ConversionConfig& config, std::uint32_t label) {
  if (values.size() < vocab.size())
    throw UsageError("convert_row: row shorter than the vocabulary");
  std::vector<std::uint32_t> pos;
  return detail::convert_row_with(values, static_cast<std::uint32_t>(vocab.size()),
                                  kb_edges, config, label, pos);
}

inline GraphDataset convert_table(const TabularDataset& ds, const KnowledgeBase& kb,
                                  const ConversionConfig& config) {
  if (ds.has_pending_categories())
    throw SchemaError("convert_table: one-hot encode categorical columns first");
  auto names = ds.column_names();
  GraphDataset out;
  out.vocabulary = intersect(names, kb);
  out.class_names = ds.class_names;
  out.config = config;
  out.kb_name = kb.name;
  if (out.vocabulary.size() == 0 && ds.rows() > 0)
    warn("dataset columns and KB '" + kb.name + "' share no features; graphs are empty");

  const auto edges = restrict_edges(kb, out.vocabulary);
  const auto vocab_size = static_cast<std::uint32_t>(out.vocabulary.size());
  std::vector<std::size_t> column_of(vocab_size);
  {
    std::unordered_map<std::string_view, std::size_t> col;
    col.reserve(names.size());
    for (std::size_t j = 0; j < names.size(); ++j) col.emplace(names[j], j);
    for (std::uint32_t k = 0; k < vocab_size; ++k)
      column_of[k] = col.at(out.vocabulary.names[k]);
  }

  out.graphs.resize(ds.rows());
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(worker_count(), ds.rows()));
  parallel_for(workers, [&](std::size_t w) {
    std::vector<double> values(vocab_size);
    std::vector<std::uint32_t> pos;
    for (std::size_t i = w; i < ds.rows(); i += workers) {
      auto row = ds.row(i);
      for (std::uint32_t k = 0; k < vocab_size; ++k) values[k] = row[column_of[k]];
      out.graphs[i] = detail::convert_row_with(values, vocab_size, edges, config,
                                               ds.labels[i], pos);
    }
  });
  return out;
}

/// Inverse of convert_row over the vocabulary; features without a node read
/// as 0.0 (the pruning rule).
inline std::vector<double> reconstruct_row(const SampleGraph& g,
                                           const FeatureVocabulary& vocab) {
  if (g.vocab_size != vocab.size())
    throw SchemaError("graph vocabulary size " + std::to_string(g.vocab_size) +
                      " does not match vocabulary of size " +
                      std::to_string(vocab.size()));
  std::vector<double> row(vocab.size(), 0.0);
  for (std::size_t k = 0; k < g.num_nodes(); ++k) row[g.node_index[k]] = g.node_value[k];
  return row;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr std::string_view kGraphMagic = "X2GD";
inline constexpr std::uint32_t kGraphFormatVersion = 1;

inline void write_graph_dataset(const GraphDataset& ds, std::ostream& os) {
  os.write(kGraphMagic.data(), kGraphMagic.size());
  bin::put_u32(os, kGraphFormatVersion);
  bin::put_u64(os, ds.vocabulary.size());
  for (const auto& n : ds.vocabulary.names) bin::put_str(os, n);
  bin::put_u8(os, ds.config.node_pruning ? 1 : 0);
  bin::put_u8(os, ds.config.id_indexing ? 1 : 0);
  bin::put_u64(os, ds.class_names.size());
  for (const auto& c : ds.class_names) bin::put_str(os, c);
  bin::put_str(os, ds.kb_name);
  bin::put_u64(os, ds.graphs.size());
  for (const auto& g : ds.graphs) {
    bin::put_u64(os, g.num_nodes());
    bin::put_u64(os, g.num_edges());
    bin::put_u32(os, g.label);
    for (auto j : g.node_index) bin::put_u32(os, j);
    for (auto v : g.node_value) bin::put_f64(os, v);
    for (const auto& [a, b] : g.edges) {
      bin::put_u32(os, a);
      bin::put_u32(os, b);
    }
  }
}

inline GraphDataset read_graph_dataset(std::istream& is) {
  bin::expect_magic(is, kGraphMagic);
  if (auto v = bin::get_u32(is); v != kGraphFormatVersion)
    throw FormatError("unsupported graph dataset version " + std::to_string(v));
  GraphDataset ds;
  const auto vocab_n = bin::get_u64(is);
  std::vector<std::string> names;
  names.reserve(vocab_n);
  for (std::uint64_t k = 0; k < vocab_n; ++k) names.push_back(bin::get_str(is));
  if (!std::is_sorted(names.begin(), names.end()) ||
      std::adjacent_find(names.begin(), names.end()) != names.end())
    throw FormatError("vocabulary is not sorted and unique");
  ds.vocabulary = FeatureVocabulary(std::move(names));
  ds.config.node_pruning = bin::get_u8(is) != 0;
  ds.config.id_indexing = bin::get_u8(is) != 0;
  const auto classes = bin::get_u64(is);
  for (std::uint64_t c = 0; c < classes; ++c) ds.class_names.push_back(bin::get_str(is));
  ds.kb_name = bin::get_str(is);
  const auto count = bin::get_u64(is);
  ds.graphs.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    SampleGraph g;
    g.vocab_size = static_cast<std::uint32_t>(vocab_n);
    const auto n = bin::get_u64(is);
    const auto m = bin::get_u64(is);
    if (n > vocab_n) throw FormatError("graph has more nodes than the vocabulary");
    g.label = bin::get_u32(is);
    if (g.label >= classes) throw FormatError("graph label out of range");
    g.node_index.resize(n);
    g.node_value.resize(n);
    for (auto& j : g.node_index) j = bin::get_u32(is);
    for (auto& v : g.node_value) v = bin::get_f64(is);
    if (m > n * (n == 0 ? 0 : n - 1) / 2) throw FormatError("edge count out of range");
    g.edges.resize(m);
    for (auto& [a, b] : g.edges) {
      a = bin::get_u32(is);
      b = bin::get_u32(is);
    }
    validate_graph(g);
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

inline void save_graph_dataset(const GraphDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write graph dataset: " + path);
  write_graph_dataset(ds, os);
  if (!os) throw IoError("write failed: " + path);
}

inline GraphDataset load_graph_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open graph dataset: " + path);
  return read_graph_dataset(is);
}

inline std::string serialize(const GraphDataset& ds) {
  std::ostringstream os(std::ios::binary);
  write_graph_dataset(ds, os);
  return std::move(os).str();
}

}  // namespace x2g
