#pragma once

// Synthetic (table, KB, labels) triples with a planted signal. Each class
// owns a block of signal features that form a clique in the true KB. Part of
// the class signal is a plain mean shift; the rest (hop_coupling) is carried
// only by the sign agreement of a class's signal features, so the marginal
// distribution of every feature is the same for all classes on that part.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "x2g/common.hpp"
#include "x2g/kb.hpp"
#include "x2g/tabular.hpp"

namespace x2g {

struct SynthSpec {
  std::size_t n_samples = 400;
  std::size_t n_features = 600;
  std::size_t n_classes = 3;
  double kb_edge_density = 0.01;
  std::size_t signal_features = 5;  ///< per class
  double signal_strength = 1.0;
  double hop_coupling = 0.7;
  double noise_std = 1.0;
  double zero_fraction = 0.0;  ///< cells forced to exactly 0
  /// Zeros only on background cells, at a rate that keeps the overall
  /// fraction at zero_fraction (CNV-style: signal features always vary).
  bool zero_background_only = false;
  std::uint64_t seed = 0;

  bool operator==(const SynthSpec&) const = default;

  void validate() const {
    if (n_classes < 2) throw UsageError("synth: need at least 2 classes");
    if (n_samples < n_classes) throw UsageError("synth: fewer samples than classes");
    if (signal_features * n_classes > n_features)
      throw UsageError("synth: signal_features * n_classes exceeds n_features");
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!unit(kb_edge_density) || !unit(hop_coupling) || !unit(zero_fraction))
      throw UsageError("synth: densities and fractions must lie in [0, 1]");
    if (zero_background_only &&
        zero_fraction * static_cast<double>(n_features) >
            static_cast<double>(n_features - signal_features * n_classes))
      throw UsageError("synth: too few background features for zero_fraction");
    if (!(noise_std >= 0.0) || !(signal_strength >= 0.0))
      throw UsageError("synth: noise_std and signal_strength must be nonnegative");
  }
};

inline nlohmann::json to_json(const SynthSpec& s) {
  return {{"n_samples", s.n_samples},         {"n_features", s.n_features},
          {"n_classes", s.n_classes},         {"kb_edge_density", s.kb_edge_density},
          {"signal_features", s.signal_features}, {"signal_strength", s.signal_strength},
          {"hop_coupling", s.hop_coupling},   {"noise_std", s.noise_std},
          {"zero_fraction", s.zero_fraction}, {"zero_background_only", s.zero_background_only},
          {"seed", s.seed}};
}

/// Missing fields keep their defaults; unknown fields are rejected.
inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  for (const auto& [key, v] : j.items()) {
    if (key == "n_samples") s.n_samples = v.get<std::size_t>();
    else if (key == "n_features") s.n_features = v.get<std::size_t>();
    else if (key == "n_classes") s.n_classes = v.get<std::size_t>();
    else if (key == "kb_edge_density") s.kb_edge_density = v.get<double>();
    else if (key == "signal_features") s.signal_features = v.get<std::size_t>();
    else if (key == "signal_strength") s.signal_strength = v.get<double>();
    else if (key == "hop_coupling") s.hop_coupling = v.get<double>();
    else if (key == "noise_std") s.noise_std = v.get<double>();
    else if (key == "zero_fraction") s.zero_fraction = v.get<double>();
    else if (key == "zero_background_only") s.zero_background_only = v.get<bool>();
    else if (key == "seed") s.seed = v.get<std::uint64_t>();
    else throw FormatError("synth spec: unknown field '" + key + "'");
  }
  return s;
}

struct SynthResult {
  TabularDataset table;
  KnowledgeBase kb;
  std::vector<std::string> truth;                        ///< all signal features, sorted
  std::vector<std::vector<std::string>> truth_by_class;  ///< planted features per class
};

inline std::string synth_feature_name(std::size_t j, std::size_t n_features) {
  std::string digits = std::to_string(j);
  const std::size_t width = std::max<std::size_t>(4, std::to_string(n_features - 1).size());
  return "g" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

namespace detail {

inline std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

}  // namespace detail

/// Adds `count` random edges absent from `kb` (fewer if the graph fills up).
inline KnowledgeBase add_noise_edges(const KnowledgeBase& kb, std::size_t count,
                                     std::uint64_t seed) {
  KnowledgeBase out = kb;
  const std::size_t n = kb.num_nodes();
  const std::size_t possible = n < 2 ? 0 : n * (n - 1) / 2;
  count = std::min(count, possible - std::min(possible, kb.num_edges()));
  std::unordered_set<std::uint64_t> present;
  for (const auto& [a, b] : kb.edges) present.insert(detail::edge_key(a, b));
  std::mt19937_64 rng(derive_seed(seed, 0x6e6f697365ULL));
  std::uniform_int_distribution<std::uint32_t> pick(0, n == 0 ? 0 : static_cast<std::uint32_t>(n - 1));
  std::size_t added = 0;
  while (added < count) {
    const auto a = pick(rng), b = pick(rng);
    if (a == b || !present.insert(detail::edge_key(a, b)).second) continue;
    out.edges.emplace_back(std::min(a, b), std::max(a, b));
    ++added;
  }
  out.normalize_edges();
  return out;
}

/// Degree-preserving rewiring: 10 |E| attempted double-edge swaps
/// (a-b, c-d) -> (a-d, c-b) or (a-c, b-d), rejecting self-loops and
/// duplicate edges.
inline KnowledgeBase scramble_kb(const KnowledgeBase& kb, std::uint64_t seed) {
  KnowledgeBase out = kb;
  out.name = kb.name + "-scrambled";
  auto& edges = out.edges;
  if (edges.size() < 2) return out;
  std::unordered_set<std::uint64_t> present;
  for (const auto& [a, b] : edges) present.insert(detail::edge_key(a, b));
  std::mt19937_64 rng(derive_seed(seed, 0x7363726dULL));
  std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
  std::bernoulli_distribution flip(0.5);
  const std::size_t attempts = 10 * edges.size();
  for (std::size_t t = 0; t < attempts; ++t) {
    const std::size_t i = pick(rng), k = pick(rng);
    if (i == k) continue;
    auto [a, b] = edges[i];
    auto [c, d] = edges[k];
    if (flip(rng)) std::swap(c, d);
    // new edges a-d and c-b
    if (a == d || c == b) continue;
    const auto e1 = detail::edge_key(a, d), e2 = detail::edge_key(c, b);
    if (e1 == e2 || present.count(e1) || present.count(e2)) continue;
    present.erase(detail::edge_key(a, b));
    present.erase(detail::edge_key(c, d));
    present.insert(e1);
    present.insert(e2);
    edges[i] = {std::min(a, d), std::max(a, d)};
    edges[k] = {std::min(c, b), std::max(c, b)};
  }
  out.normalize_edges();
  return out;
}

/// Generates the table, the true KB and the planted features.
///
/// Sample i of class y gets, on top of N(0, noise_std) background:
///   +(1 - h) s on every signal feature of class y, and
///   +/- h s on the signal features of every class c, with one shared sign
///   per block when c == y and independent signs per feature otherwise.
/// The KB holds the within-class signal cliques plus random edges up to
/// kb_edge_density of all feature pairs.
inline SynthResult generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_samples, d = spec.n_features, C = spec.n_classes;
  const std::size_t sf = spec.signal_features;
  std::mt19937_64 rng(derive_seed(spec.seed, 0x73796e7468ULL));

  std::vector<std::uint32_t> perm(d);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::uint32_t>> signal(C);
  for (std::size_t c = 0; c < C; ++c) {
    signal[c].assign(perm.begin() + static_cast<std::ptrdiff_t>(c * sf),
                     perm.begin() + static_cast<std::ptrdiff_t>((c + 1) * sf));
    std::sort(signal[c].begin(), signal[c].end());
  }

  std::vector<std::uint8_t> is_signal(d, 0);
  for (const auto& block : signal)
    for (auto j : block) is_signal[j] = 1;
  double zero_rate = spec.zero_fraction;
  if (spec.zero_background_only)
    zero_rate = d == C * sf ? 0.0
                            : spec.zero_fraction * static_cast<double>(d) / static_cast<double>(d - C * sf);

  SynthResult out;
  auto& t = out.table;
  for (std::size_t j = 0; j < d; ++j) t.columns.push_back({synth_feature_name(j, d), ColumnKind::numeric});
  t.raw.assign(d, {});
  for (std::size_t c = 0; c < C; ++c) t.class_names.push_back("c" + std::to_string(c));
  t.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.labels[i] = static_cast<std::uint32_t>(i % C);
  std::shuffle(t.labels.begin(), t.labels.end(), rng);

  t.values.assign(n * d, 0.0);
  const double s = spec.signal_strength, h = spec.hop_coupling;
  parallel_for(n, [&](std::size_t i) {
    std::mt19937_64 r(derive_seed(spec.seed, 0x726f77ULL, i));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::bernoulli_distribution coin(0.5), zero(std::min(1.0, zero_rate));
    double* row = t.values.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) row[j] = spec.noise_std * noise(r);
    const std::uint32_t y = t.labels[i];
    for (auto j : signal[y]) row[j] += (1.0 - h) * s;
    for (std::size_t c = 0; c < C; ++c) {
      const double shared = coin(r) ? 1.0 : -1.0;
      for (auto j : signal[c]) {
        const double sign = c == y ? shared : (coin(r) ? 1.0 : -1.0);
        row[j] += sign * h * s;
      }
    }
    if (spec.zero_fraction > 0.0)
      for (std::size_t j = 0; j < d; ++j)
        if (zero(r) && !(spec.zero_background_only && is_signal[j])) row[j] = 0.0;
  });

  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t a = 0; a < sf; ++a)
      for (std::size_t b = a + 1; b < sf; ++b)
        pairs.emplace_back(t.columns[signal[c][a]].name, t.columns[signal[c][b]].name);
  const auto names = t.column_names();
  out.kb = KnowledgeBase::from_pairs("synth", pairs, names);
  const double possible = static_cast<double>(d) * static_cast<double>(d - 1) / 2.0;
  const auto target = static_cast<std::size_t>(std::llround(spec.kb_edge_density * possible));
  if (target > out.kb.num_edges())
    out.kb = add_noise_edges(out.kb, target - out.kb.num_edges(), derive_seed(spec.seed, 0x6b62ULL));
  out.kb.name = "synth";

  for (std::size_t c = 0; c < C; ++c) {
    std::vector<std::string> f;
    for (auto j : signal[c]) f.push_back(t.columns[j].name);
    out.truth.insert(out.truth.end(), f.begin(), f.end());
    out.truth_by_class.push_back(std::move(f));
  }
  std::sort(out.truth.begin(), out.truth.end());
  return out;
}

inline nlohmann::json truth_to_json(const SynthResult& r) {
  return {{"signal_features", r.truth}, {"by_class", r.truth_by_class}};
}

}  // namespace x2g
