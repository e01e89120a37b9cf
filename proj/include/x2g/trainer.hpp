#pragma once

// Training harness: stratified k-fold splits, training-set oversampling,
// node/edge subsampling, Adam with a cosine-annealed learning rate, early
// stopping on validation macro F1, random hyperparameter search and the
// trainable late-fusion matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "x2g/common.hpp"
#include "x2g/eval.hpp"
#include "x2g/gnn.hpp"
#include "x2g/x2graph.hpp"

namespace x2g {

// ---------------------------------------------------------------------------
// Folds

struct FoldSplit {
  std::size_t fold_id = 0;
  std::vector<std::size_t> train, val, test;

  bool operator==(const FoldSplit&) const = default;
};

/// Stratified k folds. Each class is shuffled and dealt round-robin into the
/// folds, continuing where the previous class stopped, so fold sizes differ
/// by at most one. Split i tests on fold i, validates on fold (i+1) mod k and
/// trains on the rest.
inline std::vector<FoldSplit> make_folds(std::span<const std::uint32_t> labels,
                                         std::size_t k, std::uint64_t seed) {
  if (k < 2) throw UsageError("make_folds: k must be at least 2");
  std::map<std::uint32_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(derive_seed(seed, 0x666f6c64ULL));
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t slot = 0;
  for (auto& [c, idx] : by_class) {
    if (idx.size() < k)
      throw UsageError("make_folds: class " + std::to_string(c) + " has " +
                       std::to_string(idx.size()) + " samples, fewer than k=" +
                       std::to_string(k));
    std::shuffle(idx.begin(), idx.end(), rng);
    for (auto i : idx) folds[slot++ % k].push_back(i);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  std::vector<FoldSplit> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    out[i].fold_id = i;
    out[i].test = folds[i];
    out[i].val = folds[(i + 1) % k];
    for (std::size_t j = 0; j < k; ++j)
      if (j != i && j != (i + 1) % k)
        out[i].train.insert(out[i].train.end(), folds[j].begin(), folds[j].end());
    std::sort(out[i].train.begin(), out[i].train.end());
  }
  return out;
}

inline nlohmann::json to_json(const FoldSplit& s) {
  return {{"fold_id", s.fold_id}, {"train", s.train}, {"val", s.val}, {"test", s.test}};
}

inline FoldSplit fold_split_from_json(const nlohmann::json& j) {
  FoldSplit s;
  s.fold_id = j.at("fold_id").get<std::size_t>();
  s.train = j.at("train").get<std::vector<std::size_t>>();
  s.val = j.at("val").get<std::vector<std::size_t>>();
  s.test = j.at("test").get<std::vector<std::size_t>>();
  return s;
}

// ---------------------------------------------------------------------------
// Oversampling and augmentation

/// Returns `train` followed by extra draws (with replacement) from each
/// minority class until every class present matches the majority count.
inline std::vector<std::size_t> oversample(std::span<const std::size_t> train,
                                           std::span<const std::uint32_t> labels,
                                           std::uint64_t seed) {
  if (train.empty()) throw UsageError("oversample: empty training set");
  std::map<std::uint32_t, std::vector<std::size_t>> by_class;
  for (auto i : train) by_class[labels[i]].push_back(i);
  std::size_t majority = 0;
  for (const auto& [c, idx] : by_class) majority = std::max(majority, idx.size());
  std::vector<std::size_t> out(train.begin(), train.end());
  std::mt19937_64 rng(derive_seed(seed, 0x6f76657273ULL));
  for (const auto& [c, idx] : by_class) {
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    for (std::size_t r = idx.size(); r < majority; ++r) out.push_back(idx[pick(rng)]);
  }
  return out;
}

/// Keeps a uniform random subset of at most `max_nodes` nodes (dropping edges
/// that lose an endpoint), then at most `max_edges` edges. Node order stays
/// canonical.
inline SampleGraph augment(const SampleGraph& g, std::size_t max_nodes,
                           std::size_t max_edges, std::uint64_t seed) {
  if (max_nodes == 0 || max_edges == 0)
    throw UsageError("augment: caps must be positive");
  if (g.num_nodes() <= max_nodes && g.num_edges() <= max_edges) return g;
  std::mt19937_64 rng(derive_seed(seed, 0x61756700ULL));
  SampleGraph out;
  out.label = g.label;
  out.vocab_size = g.vocab_size;
  if (g.num_nodes() > max_nodes) {
    std::vector<std::uint32_t> positions(g.num_nodes());
    std::iota(positions.begin(), positions.end(), 0u);
    // partial Fisher-Yates, then restore canonical order
    for (std::size_t i = 0; i < max_nodes; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, positions.size() - 1);
      std::swap(positions[i], positions[pick(rng)]);
    }
    positions.resize(max_nodes);
    std::sort(positions.begin(), positions.end());
    std::vector<std::uint32_t> remap(g.num_nodes(), UINT32_MAX);
    for (std::uint32_t k = 0; k < positions.size(); ++k) {
      remap[positions[k]] = k;
      out.node_index.push_back(g.node_index[positions[k]]);
      out.node_value.push_back(g.node_value[positions[k]]);
    }
    for (const auto& [a, b] : g.edges)
      if (remap[a] != UINT32_MAX && remap[b] != UINT32_MAX)
        out.edges.emplace_back(remap[a], remap[b]);
  } else {
    out.node_index = g.node_index;
    out.node_value = g.node_value;
    out.edges = g.edges;
  }
  if (out.edges.size() > max_edges) {
    std::vector<std::size_t> keep(out.edges.size());
    std::iota(keep.begin(), keep.end(), 0);
    for (std::size_t i = 0; i < max_edges; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, keep.size() - 1);
      std::swap(keep[i], keep[pick(rng)]);
    }
    keep.resize(max_edges);
    std::sort(keep.begin(), keep.end());
    std::vector<Edge> edges;
    edges.reserve(max_edges);
    for (auto e : keep) edges.push_back(out.edges[e]);
    out.edges = std::move(edges);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimization

/// lr(t) = lr_min + (lr_max - lr_min) (1 + cos(pi t / period)) / 2
inline double cosine_lr(std::size_t t, std::size_t period, double lr_max, double lr_min) {
  if (period == 0) return lr_max;
  constexpr double pi = 3.14159265358979323846;
  const double phase = static_cast<double>(t) / static_cast<double>(period);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(pi * phase));
}

class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Tensor* const> params, const std::vector<std::vector<double>>& grads,
            double lr) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& data = params[p]->data;
      const auto& g = grads[p];
      for (std::size_t i = 0; i < data.size(); ++i) {
        m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g[i];
        v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g[i] * g[i];
        data[i] -= lr * (m_[p][i] / c1) / (std::sqrt(v_[p][i] / c2) + eps_);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double lr_max = 1e-3;
  double lr_min = 0.0;
  std::size_t schedule_period = 0;  ///< 0: anneal over `epochs`
  std::size_t patience = 20;
  std::size_t aug_max_nodes = 6400;
  std::size_t aug_max_edges = 3200;
  std::uint64_t seed = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void validate() const {
    if (epochs == 0 || batch_size == 0 || aug_max_nodes == 0 || aug_max_edges == 0)
      throw UsageError("epochs, batch size and augmentation caps must be positive");
    if (!(lr_max > 0.0) || lr_min < 0.0) throw UsageError("learning rates must be positive");
    if (patience == 0 || patience > epochs)
      throw UsageError("patience must be in 1..epochs");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0, train_loss = 0;
  double val_accuracy = 0, val_macro_f1 = 0, val_macro_auc = 0;
};

struct History {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_macro_f1 = -1.0;
  bool stopped_early = false;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"lr", r.lr},
          {"train_loss", r.train_loss},
          {"val_accuracy", r.val_accuracy},
          {"val_macro_f1", r.val_macro_f1},
          {"val_macro_auc", detail::number_or_null(r.val_macro_auc)}};
}

template <class Model>
struct TrainResult {
  Model model;
  History history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch training of any model exposing `parameters()`.
///
/// `loss_grad(model, sample, aug_seed)` returns the per-sample gradient;
/// `predict(model, sample)` returns class probabilities. Per-sample gradients
/// are summed in batch order, so results do not depend on the worker count.
/// Returns the parameters of the epoch with the best validation macro F1
/// (earliest on ties).
template <class Model, class LossGrad, class Predict>
TrainResult<Model> fit(Model model, std::span<const std::uint32_t> labels,
                       std::size_t num_classes, const FoldSplit& split,
                       const TrainConfig& cfg, LossGrad&& loss_grad, Predict&& predict,
                       const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const auto order0 = oversample(split.train, labels, derive_seed(cfg.seed, 1));
  std::vector<std::uint32_t> val_labels;
  for (auto i : split.val) val_labels.push_back(labels[i]);

  Adam adam(cfg.beta1, cfg.beta2, cfg.eps);
  TrainResult<Model> result{model, {}};
  const std::size_t period = cfg.schedule_period ? cfg.schedule_period : cfg.epochs;
  std::vector<GradientBundle> slots;
  std::vector<std::vector<double>> val_probs(split.val.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, period, cfg.lr_max, cfg.lr_min);
    auto order = order0;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 2, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      slots.assign(end - start, {});
      parallel_for(end - start, [&](std::size_t k) {
        const std::size_t pos = start + k;
        slots[k] = loss_grad(model, order[pos],
                             derive_seed(cfg.seed, 3 + epoch, pos));
      });
      GradientBundle total;
      for (auto& s : slots) total.add(s);
      if (!std::isfinite(total.loss))
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) +
                              ", batch starting at " + std::to_string(start));
      loss_sum += total.loss;
      total.scale(1.0 / static_cast<double>(end - start));
      auto params = model.parameters();
      adam.step(params, total.grads, lr);
    }

    parallel_for(split.val.size(),
                 [&](std::size_t k) { val_probs[k] = predict(model, split.val[k]); });
    for (const auto& p : val_probs)
      if (!std::all_of(p.begin(), p.end(), [](double x) { return std::isfinite(x); }))
        throw DivergenceError("non-finite validation output at epoch " + std::to_string(epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (!split.val.empty()) {
      auto report = evaluate_outputs(val_probs, val_labels, num_classes, false);
      rec.val_accuracy = report.accuracy;
      rec.val_macro_f1 = report.macro_f1;
      rec.val_macro_auc = report.macro_auc;
    }
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_macro_f1 > result.history.best_val_macro_f1) {
      result.history.best_val_macro_f1 = rec.val_macro_f1;
      result.history.best_epoch = epoch;
      result.model = model;
    } else if (epoch - result.history.best_epoch > cfg.patience) {
      result.history.stopped_early = true;
      break;
    }
  }
  return result;
}

inline TrainResult<GraphModel> train_model(const GraphDataset& graphs, const FoldSplit& split,
                                           const ArchDescriptor& arch, const TrainConfig& cfg,
                                           const EpochCallback& on_epoch = {}) {
  auto model = GraphModel::init(arch, static_cast<std::uint32_t>(graphs.vocabulary.size()),
                                static_cast<std::uint32_t>(graphs.num_classes()),
                                derive_seed(cfg.seed, 0x696e6974ULL));
  const auto labels = graphs.labels();
  auto loss_grad = [&](const GraphModel& m, std::size_t i, std::uint64_t aug_seed) {
    const auto& g = graphs.graphs[i];
    if (g.num_nodes() <= cfg.aug_max_nodes && g.num_edges() <= cfg.aug_max_edges)
      return backward(m, g);
    const auto sub = augment(g, cfg.aug_max_nodes, cfg.aug_max_edges, aug_seed);
    return backward(m, sub);
  };
  auto predict = [&](const GraphModel& m, std::size_t i) {
    return predict_proba(m, graphs.graphs[i]);
  };
  return fit(std::move(model), labels, graphs.num_classes(), split, cfg, loss_grad, predict,
             on_epoch);
}

struct MlpSpec {
  std::vector<std::uint32_t> hidden{64};
  Activation activation = Activation::relu;
};

/// Trains the MLP baseline on dense rows (one per sample).
inline TrainResult<MlpBaseline> train_mlp(const std::vector<std::vector<double>>& rows,
                                          std::span<const std::uint32_t> labels,
                                          std::size_t num_classes, const FoldSplit& split,
                                          const MlpSpec& spec, const TrainConfig& cfg,
                                          const EpochCallback& on_epoch = {}) {
  if (rows.empty()) throw UsageError("train_mlp: no rows");
  auto model = MlpBaseline::init(static_cast<std::uint32_t>(rows[0].size()), spec.hidden,
                                 static_cast<std::uint32_t>(num_classes), spec.activation,
                                 derive_seed(cfg.seed, 0x696e6974ULL));
  auto loss_grad = [&](const MlpBaseline& m, std::size_t i, std::uint64_t) {
    return mlp_backward(m, rows[i], labels[i]);
  };
  auto predict = [&](const MlpBaseline& m, std::size_t i) {
    return mlp_forward(m, rows[i]).probabilities;
  };
  return fit(std::move(model), labels, num_classes, split, cfg, loss_grad, predict, on_epoch);
}

/// Dense rows over the vocabulary, recovered from the graphs.
inline std::vector<std::vector<double>> dense_rows(const GraphDataset& graphs) {
  std::vector<std::vector<double>> rows;
  rows.reserve(graphs.size());
  for (const auto& g : graphs.graphs) rows.push_back(reconstruct_row(g, graphs.vocabulary));
  return rows;
}

/// Class probabilities for graphs `idx`, in order.
inline std::vector<std::vector<double>> predict_many(const GraphModel& model,
                                                     const GraphDataset& graphs,
                                                     std::span<const std::size_t> idx) {
  std::vector<std::vector<double>> out(idx.size());
  parallel_for(idx.size(), [&](std::size_t k) {
    out[k] = predict_proba(model, graphs.graphs[idx[k]]);
  });
  return out;
}

inline EvalReport evaluate(const GraphModel& model, const GraphDataset& graphs,
                           std::span<const std::size_t> idx) {
  std::vector<std::uint32_t> truth;
  for (auto i : idx) truth.push_back(graphs.graphs[i].label);
  return evaluate_outputs(predict_many(model, graphs, idx), truth, graphs.num_classes());
}

// ---------------------------------------------------------------------------
// Random search

struct SearchSpace {
  std::vector<int> widths{32, 64, 128, 256, 512, 1024};
  int min_layers = 1, max_layers = 4;
  std::vector<LayerKind> kinds{LayerKind::gcn, LayerKind::mean_agg};
  std::vector<Activation> activations{Activation::relu, Activation::gelu};
  std::vector<Norm> norms{Norm::none, Norm::layer};
  double lr_low = 1e-4, lr_high = 1e-2;  ///< sampled log-uniformly
};

struct Trial {
  std::size_t index = 0;
  ArchDescriptor arch;
  double lr = 0;
  double score = 0;
};

struct SearchResult {
  Trial best;
  std::vector<Trial> trials;
};

inline nlohmann::json to_json(const Trial& t) {
  return {{"trial", t.index}, {"arch", t.arch.to_string()}, {"lr", t.lr}, {"score", t.score}};
}

/// Samples `budget` configurations uniformly from `space` and returns the
/// one with the highest objective (earliest on ties).
/// `objective(arch, lr)` returns a validation score.
template <class Objective>
SearchResult random_search(const SearchSpace& space, std::size_t budget, Objective&& objective,
                           std::uint64_t seed, const ArchDescriptor& base = {}) {
  if (budget == 0) throw UsageError("random_search: budget must be at least 1");
  if (space.widths.empty() || space.kinds.empty() || space.activations.empty() ||
      space.norms.empty() || space.min_layers > space.max_layers)
    throw UsageError("random_search: empty search space");
  std::mt19937_64 rng(derive_seed(seed, 0x736561726368ULL));
  auto pick = [&](const auto& v) {
    std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
    return v[d(rng)];
  };
  SearchResult out;
  for (std::size_t t = 0; t < budget; ++t) {
    Trial trial;
    trial.index = t;
    trial.arch = base;
    trial.arch.width = pick(space.widths);
    trial.arch.layers = std::uniform_int_distribution<int>(space.min_layers, space.max_layers)(rng);
    trial.arch.kind = pick(space.kinds);
    trial.arch.activation = pick(space.activations);
    trial.arch.norm = pick(space.norms);
    const double lo = std::log(space.lr_low), hi = std::log(space.lr_high);
    trial.lr = lo == hi ? space.lr_low
                        : std::exp(std::uniform_real_distribution<double>(lo, hi)(rng));
    trial.score = objective(trial.arch, trial.lr);
    if (t == 0 || trial.score > out.best.score) out.best = trial;
    out.trials.push_back(trial);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Late fusion

/// Per-model, per-class weights: fused_j = sum_i w(i, j) * o_i[j].
struct FusionMatrix {
  std::size_t models = 0, classes = 0;
  std::vector<double> w;  ///< row-major models x classes

  FusionMatrix() = default;
  FusionMatrix(std::size_t m, std::size_t c, double fill) : models(m), classes(c), w(m * c, fill) {}

  double& at(std::size_t i, std::size_t j) { return w[i * classes + j]; }
  double at(std::size_t i, std::size_t j) const { return w[i * classes + j]; }
};

/// `outputs[i]` is component i's score vector for one sample.
inline std::vector<double> fuse_scores(const FusionMatrix& W,
                                       const std::vector<std::vector<double>>& outputs) {
  if (outputs.size() != W.models) throw UsageError("fuse_scores: model count mismatch");
  std::vector<double> fused(W.classes, 0.0);
  for (std::size_t i = 0; i < W.models; ++i) {
    if (outputs[i].size() != W.classes) throw UsageError("fuse_scores: class count mismatch");
    for (std::size_t j = 0; j < W.classes; ++j) fused[j] += W.at(i, j) * outputs[i][j];
  }
  return fused;
}

/// Reorders [model][sample][class] into per-sample blocks and checks alignment.
inline std::vector<std::vector<std::vector<double>>> by_sample(
    const std::vector<std::vector<std::vector<double>>>& outputs) {
  if (outputs.empty()) return {};
  const std::size_t n = outputs[0].size();
  const std::size_t c = n ? outputs[0][0].size() : 0;
  for (const auto& m : outputs) {
    if (m.size() != n) throw UsageError("fusion: component outputs have different sample counts");
    for (const auto& row : m)
      if (row.size() != c) throw UsageError("fusion: component outputs have different class counts");
  }
  std::vector<std::vector<std::vector<double>>> out(n);
  for (std::size_t s = 0; s < n; ++s)
    for (const auto& m : outputs) out[s].push_back(m[s]);
  return out;
}

/// softmax(fused scores) for every sample; `outputs` is [model][sample][class].
inline std::vector<std::vector<double>> fuse_probabilities(
    const FusionMatrix& W, const std::vector<std::vector<std::vector<double>>>& outputs) {
  std::vector<std::vector<double>> out;
  for (const auto& sample : by_sample(outputs))
    out.push_back(Tape::softmax(fuse_scores(W, sample)));
  return out;
}

struct FusionConfig {
  std::size_t steps = 500;
  double lr = 0.05;
};

/// Full-batch Adam on the mean cross-entropy of softmax(fused scores),
/// starting from W = 1/models everywhere. `outputs` is [model][sample][class].
inline FusionMatrix train_fusion(const std::vector<std::vector<std::vector<double>>>& outputs,
                                 std::span<const std::uint32_t> labels,
                                 const FusionConfig& cfg = {}) {
  if (outputs.size() < 2) throw UsageError("train_fusion: need at least 2 component models");
  const auto samples = by_sample(outputs);
  if (samples.size() != labels.size())
    throw UsageError("train_fusion: outputs and labels are misaligned");
  if (samples.empty()) throw UsageError("train_fusion: no samples");
  const std::size_t m = outputs.size(), c = samples[0][0].size();
  FusionMatrix W(m, c, 1.0 / static_cast<double>(m));
  Tensor param(m, c, W.w);
  Adam adam;
  std::vector<Tensor*> params{&param};
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    W.w = param.data;
    std::vector<std::vector<double>> grad{std::vector<double>(m * c, 0.0)};
    for (std::size_t s = 0; s < samples.size(); ++s) {
      auto p = Tape::softmax(fuse_scores(W, samples[s]));
      for (std::size_t j = 0; j < c; ++j) {
        const double dz = (p[j] - (labels[s] == j ? 1.0 : 0.0)) * inv_n;
        for (std::size_t i = 0; i < m; ++i) grad[0][i * c + j] += dz * samples[s][i][j];
      }
    }
    adam.step(params, grad, cfg.lr);
  }
  W.w = param.data;
  return W;
}

inline nlohmann::json to_json(const FusionMatrix& W) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < W.models; ++i) {
    std::vector<double> r(W.w.begin() + static_cast<std::ptrdiff_t>(i * W.classes),
                          W.w.begin() + static_cast<std::ptrdiff_t>((i + 1) * W.classes));
    rows.push_back(r);
  }
  return {{"models", W.models}, {"classes", W.classes}, {"weights", rows}};
}

}  // namespace x2g
