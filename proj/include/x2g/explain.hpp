#pragma once

// Soft edge-mask explanations of single-graph predictions and their
// aggregation into per-feature importance counts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "x2g/common.hpp"
#include "x2g/eval.hpp"
#include "x2g/gnn.hpp"
#include "x2g/x2graph.hpp"

namespace x2g {

enum class MaskOptimizer : std::uint8_t { gradient_descent, adam };

struct ExplainConfig {
  std::size_t steps = 100;
  double lambda_sparse = 0.005;
  double lambda_entropy = 0.1;
  double lr = 0.01;
  double init_logit = 0.0;
  MaskOptimizer optimizer = MaskOptimizer::gradient_descent;
};

struct EdgeMask {
  std::vector<double> logits;

  std::size_t size() const { return logits.size(); }
  bool empty() const { return logits.empty(); }

  std::vector<double> values() const {
    std::vector<double> out(logits.size());
    for (std::size_t e = 0; e < logits.size(); ++e) out[e] = 1.0 / (1.0 + std::exp(-logits[e]));
    return out;
  }
};

/// Optimizes a per-edge mask so the masked graph (edge messages scaled by
/// sigmoid(logit)) keeps the full graph's predicted class. The objective is
/// CE(masked, predicted) + lambda_sparse * mean(m) + lambda_entropy * mean(H(m)).
/// Model parameters are never written.
inline EdgeMask explain_graph(const GraphModel& model, const SampleGraph& g,
                              const ExplainConfig& cfg = {}) {
  EdgeMask mask;
  const std::size_t m = g.num_edges();
  if (m == 0) return mask;
  mask.logits.assign(m, cfg.init_logit);
  const auto full = forward(model, g).probabilities;
  const auto target = static_cast<std::uint32_t>(
      std::max_element(full.begin(), full.end()) - full.begin());
  const double inv_m = 1.0 / static_cast<double>(m);

  std::vector<double> adam_m(m, 0.0), adam_v(m, 0.0);
  Tensor weight(1, m);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    weight.data = mask.values();
    Tape tape;
    const auto w = tape.parameter(weight);
    const auto logits = record_logits(tape, model, g, w, nullptr, true);
    tape.backward(tape.softmax_cross_entropy(logits, target));
    auto grad = tape.grad(w);
    for (std::size_t e = 0; e < m; ++e) {
      const double s = std::clamp(weight.data[e], 1e-12, 1.0 - 1e-12);
      // d/ds of the regularizers, then chain through the sigmoid
      const double d_reg = cfg.lambda_sparse * inv_m +
                           cfg.lambda_entropy * inv_m * std::log((1.0 - s) / s);
      grad[e] = (grad[e] + d_reg) * s * (1.0 - s);
    }
    if (cfg.optimizer == MaskOptimizer::gradient_descent) {
      for (std::size_t e = 0; e < m; ++e) mask.logits[e] -= cfg.lr * grad[e];
    } else {
      const double t = static_cast<double>(step + 1);
      const double c1 = 1.0 - std::pow(0.9, t), c2 = 1.0 - std::pow(0.999, t);
      for (std::size_t e = 0; e < m; ++e) {
        adam_m[e] = 0.9 * adam_m[e] + 0.1 * grad[e];
        adam_v[e] = 0.999 * adam_v[e] + 0.001 * grad[e] * grad[e];
        mask.logits[e] -= cfg.lr * (adam_m[e] / c1) / (std::sqrt(adam_v[e] / c2) + 1e-8);
      }
    }
  }
  return mask;
}

/// Indices of the ceil(fraction * |E|) highest-mask edges, ascending.
/// Equal mask values are ranked by edge index.
inline std::vector<std::size_t> top_edges(const EdgeMask& mask, double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw UsageError("top_edges: fraction must be in (0, 1]");
  if (mask.empty()) return {};
  const std::size_t k = std::min<std::size_t>(
      mask.size(),
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(mask.size()) - 1e-9)));
  std::vector<std::size_t> order(mask.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return mask.logits[a] > mask.logits[b];
  });
  order.resize(std::max<std::size_t>(k, 1));
  std::sort(order.begin(), order.end());
  return order;
}

/// `g` with only the listed edges kept.
inline SampleGraph keep_edges(const SampleGraph& g, std::span<const std::size_t> keep) {
  SampleGraph out = g;
  out.edges.clear();
  for (auto e : keep) out.edges.push_back(g.edges.at(e));
  return out;
}

struct Fidelity {
  bool argmax_agrees = true;
  double distance = 0.0;  ///< total variation between the two predictions
};

/// Compares the prediction on the top-`fraction` subgraph with the full one.
inline Fidelity fidelity(const GraphModel& model, const SampleGraph& g, const EdgeMask& mask,
                         double fraction) {
  if (mask.size() != g.num_edges()) throw UsageError("fidelity: mask does not match graph");
  if (fraction >= 1.0 || g.num_edges() == 0) return {};
  const auto full = predict_proba(model, g);
  const auto sub = predict_proba(model, keep_edges(g, top_edges(mask, fraction)));
  Fidelity f;
  f.argmax_agrees = argmax_rows({full})[0] == argmax_rows({sub})[0];
  for (std::size_t c = 0; c < full.size(); ++c) f.distance += std::abs(full[c] - sub[c]);
  f.distance *= 0.5;
  return f;
}

struct SampleExplanation {
  std::size_t sample = 0;
  std::uint32_t predicted = 0;
  std::size_t num_edges = 0;
  std::vector<std::string> selected_features;  ///< endpoints of the top edges
  Fidelity fidelity;
};

struct ImportanceReport {
  std::vector<std::pair<std::string, double>> ranking;  ///< descending, ties by name
  std::vector<SampleExplanation> samples;
  double importance_fraction = 0, fidelity_fraction = 0;
  double agreement_rate = 0, mean_distance = 0;
  std::size_t edgeless = 0;  ///< samples explained by node values alone
};

/// Features from the top features of `report`, in rank order.
inline std::vector<std::string> top_features(const ImportanceReport& report, std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, report.ranking.size()); ++i)
    out.push_back(report.ranking[i].first);
  return out;
}

/// Counts, over the graphs `idx`, how often each feature is an endpoint of a
/// selected (top-`fraction`) edge. Fidelity is measured at
/// `fidelity_fraction` on the same masks.
inline ImportanceReport feature_importance(const GraphModel& model, const GraphDataset& graphs,
                                           std::span<const std::size_t> idx, double fraction,
                                           const ExplainConfig& cfg = {},
                                           double fidelity_fraction = 0.2) {
  ImportanceReport rep;
  rep.importance_fraction = fraction;
  rep.fidelity_fraction = fidelity_fraction;
  rep.samples.resize(idx.size());
  parallel_for(idx.size(), [&](std::size_t k) {
    const auto& g = graphs.graphs.at(idx[k]);
    auto& s = rep.samples[k];
    s.sample = idx[k];
    s.num_edges = g.num_edges();
    s.predicted = argmax_rows({predict_proba(model, g)})[0];
    const auto mask = explain_graph(model, g, cfg);
    if (mask.empty()) return;
    std::vector<std::uint32_t> nodes;
    for (auto e : top_edges(mask, fraction)) {
      nodes.push_back(g.edges[e].first);
      nodes.push_back(g.edges[e].second);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    for (auto v : nodes) s.selected_features.push_back(graphs.vocabulary.names[g.node_index[v]]);
    s.fidelity = fidelity(model, g, mask, fidelity_fraction);
  });

  std::map<std::string, double> counts;
  std::size_t explained = 0, agree = 0;
  double dist = 0;
  for (const auto& s : rep.samples) {
    if (s.num_edges == 0) {
      ++rep.edgeless;
      continue;
    }
    for (const auto& f : s.selected_features) counts[f] += 1.0;
    ++explained;
    agree += s.fidelity.argmax_agrees ? 1 : 0;
    dist += s.fidelity.distance;
  }
  if (explained > 0) {
    rep.agreement_rate = static_cast<double>(agree) / static_cast<double>(explained);
    rep.mean_distance = dist / static_cast<double>(explained);
  }
  rep.ranking.assign(counts.begin(), counts.end());
  std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return rep;
}

inline nlohmann::json to_json(const ImportanceReport& r) {
  nlohmann::json ranking = nlohmann::json::array();
  for (const auto& [name, score] : r.ranking) ranking.push_back({{"feature", name}, {"score", score}});
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : r.samples)
    samples.push_back({{"sample", s.sample},
                       {"predicted", s.predicted},
                       {"num_edges", s.num_edges},
                       {"selected_features", s.selected_features},
                       {"argmax_agrees", s.fidelity.argmax_agrees},
                       {"distance", s.fidelity.distance}});
  return {{"importance_fraction", r.importance_fraction},
          {"fidelity_fraction", r.fidelity_fraction},
          {"agreement_rate", r.agreement_rate},
          {"mean_distance", r.mean_distance},
          {"edgeless_samples", r.edgeless},
          {"ranking", ranking},
          {"samples", samples}};
}

}  // namespace x2g
