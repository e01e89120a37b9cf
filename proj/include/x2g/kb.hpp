#pragma once

// Knowledge bases: undirected, unweighted feature-relation graphs loaded from
// tab-separated edge lists, and their intersection with dataset columns.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "x2g/common.hpp"

namespace x2g {

using Edge = std::pair<std::uint32_t, std::uint32_t>;

/// Undirected feature graph. `features` is sorted and unique; each edge is
/// stored once as (a, b) with a < b indexing into `features`, edges sorted.
struct KnowledgeBase {
  std::string name;
  std::vector<std::string> features;
  std::vector<Edge> edges;

  std::size_t num_nodes() const { return features.size(); }
  std::size_t num_edges() const { return edges.size(); }

  bool operator==(const KnowledgeBase&) const = default;

  /// Builds a KB from name pairs. Self-loops are dropped and reversed or
  /// repeated pairs collapse. `extra_nodes` adds features with no edges.
  static KnowledgeBase from_pairs(
      std::string name, std::span<const std::pair<std::string, std::string>> pairs,
      std::span<const std::string> extra_nodes = {}) {
    KnowledgeBase kb;
    kb.name = std::move(name);
    std::vector<std::string> names(extra_nodes.begin(), extra_nodes.end());
    names.reserve(names.size() + 2 * pairs.size());
    for (const auto& [u, v] : pairs) {
      if (u == v) continue;
      names.push_back(u);
      names.push_back(v);
    }
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    kb.features = std::move(names);
    std::unordered_map<std::string_view, std::uint32_t> id;
    id.reserve(kb.features.size());
    for (std::uint32_t k = 0; k < kb.features.size(); ++k) id.emplace(kb.features[k], k);
    kb.edges.reserve(pairs.size());
    for (const auto& [u, v] : pairs) {
      if (u == v) continue;
      std::uint32_t a = id.at(u), b = id.at(v);
      if (a > b) std::swap(a, b);
      kb.edges.emplace_back(a, b);
    }
    kb.normalize_edges();
    return kb;
  }

  /// Sorts and deduplicates edges; drops self-loops; orients a < b.
  void normalize_edges() {
    for (auto& e : edges)
      if (e.first > e.second) std::swap(e.first, e.second);
    std::erase_if(edges, [](const Edge& e) { return e.first == e.second; });
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }

  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> deg(features.size(), 0);
    for (const auto& [a, b] : edges) {
      ++deg[a];
      ++deg[b];
    }
    return deg;
  }

  std::vector<std::pair<std::string, std::string>> name_pairs() const {
    std::vector<std::pair<std::string, std::string>> out;
    out.reserve(edges.size());
    for (const auto& [a, b] : edges) out.emplace_back(features[a], features[b]);
    return out;
  }
};

/// Sorted intersection of dataset column names with KB features.
struct FeatureVocabulary {
  std::vector<std::string> names;
  std::map<std::string, std::uint32_t, std::less<>> index_of;

  explicit FeatureVocabulary(std::vector<std::string> sorted_names = {})
      : names(std::move(sorted_names)) {
    for (std::uint32_t k = 0; k < names.size(); ++k) index_of.emplace(names[k], k);
  }

  std::size_t size() const { return names.size(); }
  bool operator==(const FeatureVocabulary& o) const { return names == o.names; }
};

struct KbStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::map<std::size_t, std::size_t> degree_histogram;  // degree -> node count
};

namespace detail {

inline bool is_directed_directive(std::string_view comment) {
  while (!comment.empty() && (comment.front() == ' ' || comment.front() == '\t'))
    comment.remove_prefix(1);
  return comment.starts_with("directed");
}

}  // namespace detail

/// Reads `u<TAB>v` lines. `#` lines are comments, except the directives
/// `#node<TAB>name` (declares an isolated feature) and `# directed`
/// (rejected: only undirected relations are supported).
inline KnowledgeBase parse_edge_list(std::istream& in, std::string name) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::string> nodes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::string_view body(line);
      body.remove_prefix(1);
      if (body.starts_with("node\t")) {
        body.remove_prefix(5);
        if (body.empty() || body.find('\t') != std::string_view::npos)
          throw FormatError("line " + std::to_string(line_no) +
                            ": malformed #node directive");
        nodes.emplace_back(body);
      } else if (detail::is_directed_directive(body)) {
        throw FormatError("line " + std::to_string(line_no) +
                          ": directed knowledge bases are not supported");
      }
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
      throw FormatError("line " + std::to_string(line_no) +
                        ": expected 'u<TAB>v', got '" + line + "'");
    if (line.find('\t', tab + 1) != std::string::npos)
      throw FormatError("line " + std::to_string(line_no) +
                        ": weighted or multi-column edge lists are not supported");
    pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return KnowledgeBase::from_pairs(std::move(name), pairs, nodes);
}

inline KnowledgeBase load_edge_list(const std::string& path, std::string name) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge list: " + path);
  return parse_edge_list(in, std::move(name));
}

/// Name derived from a path: file stem.
inline std::string kb_name_from_path(const std::string& path) {
  auto slash = path.find_last_of('/');
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  auto dot = base.find_last_of('.');
  return dot == std::string::npos || dot == 0 ? base : base.substr(0, dot);
}

inline void write_edge_list(const KnowledgeBase& kb, std::ostream& os) {
  os << "# kb: " << kb.name << '\n';
  auto deg = kb.degrees();
  for (std::size_t k = 0; k < kb.features.size(); ++k)
    if (deg[k] == 0) os << "#node\t" << kb.features[k] << '\n';
  for (const auto& [a, b] : kb.edges)
    os << kb.features[a] << '\t' << kb.features[b] << '\n';
}

inline void write_edge_list(const KnowledgeBase& kb, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write edge list: " + path);
  write_edge_list(kb, os);
}

inline FeatureVocabulary intersect(std::span<const std::string> columns,
                                   const KnowledgeBase& kb) {
  std::vector<std::string> cols(columns.begin(), columns.end());
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  std::vector<std::string> common;
  std::set_intersection(cols.begin(), cols.end(), kb.features.begin(),
                        kb.features.end(), std::back_inserter(common));
  return FeatureVocabulary(std::move(common));
}

/// KB edges with both endpoints in `vocab`, remapped to vocabulary indices.
/// Output pairs satisfy a < b and are sorted.
inline std::vector<Edge> restrict_edges(const KnowledgeBase& kb,
                                        const FeatureVocabulary& vocab) {
  constexpr std::uint32_t absent = UINT32_MAX;
  std::vector<std::uint32_t> to_vocab(kb.features.size(), absent);
  // both lists are sorted: merge
  std::size_t i = 0, j = 0;
  while (i < kb.features.size() && j < vocab.names.size()) {
    int c = kb.features[i].compare(vocab.names[j]);
    if (c < 0) {
      ++i;
    } else if (c > 0) {
      ++j;
    } else {
      to_vocab[i] = static_cast<std::uint32_t>(j);
      ++i;
      ++j;
    }
  }
  std::vector<Edge> out;
  for (const auto& [a, b] : kb.edges) {
    const auto va = to_vocab[a], vb = to_vocab[b];
    if (va == absent || vb == absent || va == vb) continue;
    out.emplace_back(std::min(va, vb), std::max(va, vb));
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline KbStats kb_stats(const KnowledgeBase& kb) {
  KbStats s;
  s.nodes = kb.num_nodes();
  s.edges = kb.num_edges();
  for (auto d : kb.degrees()) ++s.degree_histogram[d];
  return s;
}

}  // namespace x2g
