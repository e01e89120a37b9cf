#pragma once

// Graph classifier over converted rows and the dense MLP baseline.
//
// Node k of a graph is projected to width d as
//   [ embed[index_k] (d/2) , value_k * value_weight + value_bias (d/2) ],
// followed by 1-4 message-passing layers (GCN or mean aggregation), optional
// layer normalization, an activation, mean pooling and a linear head.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "x2g/common.hpp"
#include "x2g/tensor.hpp"
#include "x2g/x2graph.hpp"

namespace x2g {

enum class LayerKind : std::uint8_t { gcn = 0, mean_agg = 1 };
enum class Activation : std::uint8_t { relu = 0, gelu = 1 };
enum class Norm : std::uint8_t { none = 0, layer = 1 };

inline std::string_view to_string(LayerKind k) { return k == LayerKind::gcn ? "gcn" : "sage"; }
inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }
inline std::string_view to_string(Norm n) { return n == Norm::none ? "none" : "layer"; }

/// Architecture, written `kind:layers:width:activation[:norm]`, for example
/// `gcn:2:128:gelu` or `sage:3:32:relu:layer`.
struct ArchDescriptor {
  LayerKind kind = LayerKind::gcn;
  int layers = 2;
  int width = 128;
  Activation activation = Activation::gelu;
  Norm norm = Norm::none;
  bool id_indexing = true;
  bool value_bias = true;

  bool operator==(const ArchDescriptor&) const = default;

  std::string to_string() const {
    std::string s = std::string(x2g::to_string(kind)) + ":" + std::to_string(layers) + ":" +
                    std::to_string(width) + ":" + std::string(x2g::to_string(activation));
    if (norm == Norm::layer) s += ":layer";
    return s;
  }

  void validate() const {
    if (layers < 1 || layers > 4) throw UsageError("layer count must be in 1..4");
    if (width < 2 || width % 2 != 0) throw UsageError("width d must be a positive even integer");
  }

  static ArchDescriptor parse(std::string_view spec) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : spec) {
      if (c == ':') {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    parts.push_back(cur);
    if (parts.size() < 4 || parts.size() > 5)
      throw UsageError("architecture must look like kind:layers:width:activation[:norm]");
    ArchDescriptor a;
    if (parts[0] == "gcn") a.kind = LayerKind::gcn;
    else if (parts[0] == "sage" || parts[0] == "mean") a.kind = LayerKind::mean_agg;
    else throw UsageError("unknown layer kind '" + parts[0] + "'");
    try {
      a.layers = std::stoi(parts[1]);
      a.width = std::stoi(parts[2]);
    } catch (const std::exception&) {
      throw UsageError("layer count and width must be integers");
    }
    if (parts[3] == "relu") a.activation = Activation::relu;
    else if (parts[3] == "gelu") a.activation = Activation::gelu;
    else throw UsageError("unknown activation '" + parts[3] + "'");
    if (parts.size() == 5) {
      if (parts[4] == "layer") a.norm = Norm::layer;
      else if (parts[4] == "none") a.norm = Norm::none;
      else throw UsageError("unknown normalization '" + parts[4] + "'");
    }
    a.validate();
    return a;
  }
};

struct NodeProjection {
  Tensor embed;         ///< vocab_size x d/2
  Tensor value_weight;  ///< 1 x d/2
  Tensor value_bias;    ///< 1 x d/2
};

struct MessageLayer {
  Tensor weight;      ///< d x d (self weight for mean aggregation)
  Tensor bias;        ///< 1 x d
  Tensor weight_nbr;  ///< d x d, mean aggregation only
  Tensor gamma;       ///< 1 x d, layer norm only
  Tensor beta;        ///< 1 x d, layer norm only
};

/// Per-parameter gradients aligned with `parameters()`, plus the loss.
struct GradientBundle {
  double loss = 0.0;
  std::vector<std::vector<double>> grads;

  void add(const GradientBundle& o) {
    loss += o.loss;
    if (grads.empty()) {
      grads = o.grads;
      return;
    }
    for (std::size_t p = 0; p < grads.size(); ++p)
      for (std::size_t i = 0; i < grads[p].size(); ++i) grads[p][i] += o.grads[p][i];
  }

  void scale(double s) {
    loss *= s;
    for (auto& g : grads)
      for (auto& x : g) x *= s;
  }
};

namespace detail {

inline void fill_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& x : t.data) x = u(rng);
}

inline Tape::Var activate(Tape& tape, Tape::Var x, Activation a) {
  return a == Activation::relu ? tape.relu(x) : tape.gelu(x);
}

}  // namespace detail

class GraphModel {
 public:
  ArchDescriptor arch;
  std::uint32_t vocab_size = 0;
  std::uint32_t num_classes = 0;
  std::uint64_t seed = 0;
  NodeProjection projection;
  std::vector<MessageLayer> layers;
  Tensor head_weight;  ///< d x C
  Tensor head_bias;    ///< 1 x C

  /// Seeded initialization: matrices U(-sqrt(1/fan_in), sqrt(1/fan_in)),
  /// embedding rows N(0, 1/sqrt(d/2)), biases 0, layer-norm gain 1.
  static GraphModel init(const ArchDescriptor& arch, std::uint32_t vocab_size,
                         std::uint32_t num_classes, std::uint64_t seed) {
    arch.validate();
    if (num_classes < 2) throw UsageError("model needs at least 2 classes");
    GraphModel m;
    m.arch = arch;
    m.vocab_size = vocab_size;
    m.num_classes = num_classes;
    m.seed = seed;
    const std::size_t d = static_cast<std::size_t>(arch.width), half = d / 2;
    std::mt19937_64 rng(derive_seed(seed, 0x6d6f64656cULL));
    m.projection.embed = Tensor(vocab_size, half);
    std::normal_distribution<double> emb(0.0, 1.0 / std::sqrt(static_cast<double>(half)));
    for (auto& x : m.projection.embed.data) x = emb(rng);
    m.projection.value_weight = Tensor(1, half);
    detail::fill_uniform(m.projection.value_weight, 1.0, rng);
    m.projection.value_bias = Tensor(1, half);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (int l = 0; l < arch.layers; ++l) {
      MessageLayer layer;
      layer.weight = Tensor(d, d);
      detail::fill_uniform(layer.weight, bound, rng);
      layer.bias = Tensor(1, d);
      if (arch.kind == LayerKind::mean_agg) {
        layer.weight_nbr = Tensor(d, d);
        detail::fill_uniform(layer.weight_nbr, bound, rng);
      }
      if (arch.norm == Norm::layer) {
        layer.gamma = Tensor(1, d, 1.0);
        layer.beta = Tensor(1, d);
      }
      m.layers.push_back(std::move(layer));
    }
    m.head_weight = Tensor(d, num_classes);
    detail::fill_uniform(m.head_weight, bound, rng);
    m.head_bias = Tensor(1, num_classes);
    return m;
  }

  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out{&projection.embed, &projection.value_weight};
    if (arch.value_bias) out.push_back(&projection.value_bias);
    for (const auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
      if (arch.kind == LayerKind::mean_agg) out.push_back(&l.weight_nbr);
      if (arch.norm == Norm::layer) {
        out.push_back(&l.gamma);
        out.push_back(&l.beta);
      }
    }
    out.push_back(&head_weight);
    out.push_back(&head_bias);
    return out;
  }

  std::vector<Tensor*> parameters() {
    auto c = std::as_const(*this).parameters();
    std::vector<Tensor*> out;
    out.reserve(c.size());
    for (auto* p : c) out.push_back(const_cast<Tensor*>(p));
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->size();
    return n;
  }

  bool operator==(const GraphModel& o) const {
    if (!(arch == o.arch) || vocab_size != o.vocab_size || num_classes != o.num_classes ||
        seed != o.seed)
      return false;
    auto a = parameters(), b = o.parameters();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!(*a[i] == *b[i])) return false;
    return true;
  }
};

struct ForwardResult {
  std::vector<double> logits;
  std::vector<double> probabilities;
};

namespace detail {

// Node features [embed[j] | v * w + b]; the embedding half is zero without id indexing.
inline Tape::Var record_projection(Tape& tape, const SampleGraph& g, Tape::Var embed,
                                   Tape::Var value_w, std::optional<Tape::Var> value_b,
                                   bool id_indexing, std::size_t half) {
  const std::size_t n = g.num_nodes();
  for (auto j : g.node_index)
    if (j >= tape.value(embed).rows()) throw SchemaError("node feature index out of range");
  Tape::Var id_part = id_indexing ? tape.gather_rows(embed, g.node_index)
                                  : tape.constant(Tensor(n, half));
  Tape::Var value_part = tape.matmul(tape.constant(Tensor(n, 1, g.node_value)), value_w);
  if (value_b) value_part = tape.add_row(value_part, *value_b);
  return tape.concat_cols(id_part, value_part);
}

}  // namespace detail

/// The n x d node feature matrix of `g`.
inline Tensor project_nodes(const SampleGraph& g, const NodeProjection& p, bool id_indexing,
                            bool value_bias = true) {
  Tape tape;
  std::optional<Tape::Var> b;
  if (value_bias) b = tape.frozen(p.value_bias);
  const auto h = detail::record_projection(tape, g, tape.frozen(p.embed),
                                           tape.frozen(p.value_weight), b, id_indexing,
                                           p.value_weight.cols());
  return tape.value(h);
}

/// Records the model on `tape` for graph `g` and returns the 1 x C logits.
/// `edge_weight` (1 x |E|) scales each edge's messages. If `params` is
/// non-null it receives the tape variables aligned with parameters().
/// `freeze` records the parameters as constants (no parameter gradients).
/// `g` must outlive any backward pass on the tape.
inline Tape::Var record_logits(Tape& tape, const GraphModel& model, const SampleGraph& g,
                               std::optional<Tape::Var> edge_weight = std::nullopt,
                               std::vector<Tape::Var>* params = nullptr,
                               bool freeze = false) {
  if (g.vocab_size != model.vocab_size)
    throw SchemaError("graph vocabulary size " + std::to_string(g.vocab_size) +
                      " does not match model vocabulary size " +
                      std::to_string(model.vocab_size));
  const auto& arch = model.arch;
  const std::size_t half = static_cast<std::size_t>(arch.width) / 2;

  std::vector<Tape::Var> pv;
  for (const Tensor* p : model.parameters())
    pv.push_back(freeze ? tape.frozen(*p) : tape.parameter(*p));
  std::size_t next = 0;
  auto take = [&] { return pv[next++]; };

  const auto embed = take();
  const auto value_w = take();
  std::optional<Tape::Var> value_b;
  if (arch.value_bias) value_b = take();

  Tape::Var h = detail::record_projection(tape, g, embed, value_w, value_b, arch.id_indexing, half);

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto w = take();
    const auto b = take();
    Tape::Var z;
    if (arch.kind == LayerKind::gcn) {
      z = tape.matmul(tape.gcn_propagate(h, g.edges, edge_weight), w);
    } else {
      const auto w_nbr = take();
      z = tape.add(tape.matmul(h, w),
                   tape.matmul(tape.mean_neighbors(h, g.edges, edge_weight), w_nbr));
    }
    z = tape.add_row(z, b);
    if (arch.norm == Norm::layer) {
      const auto gamma = take();
      const auto beta = take();
      z = tape.layer_norm(z, gamma, beta);
    }
    h = detail::activate(tape, z, arch.activation);
  }
  const auto head_w = take();
  const auto head_b = take();
  auto logits = tape.add_row(tape.matmul(tape.mean_rows(h), head_w), head_b);
  if (params) *params = std::move(pv);
  return logits;
}

inline ForwardResult forward(const GraphModel& model, const SampleGraph& g) {
  Tape tape;
  auto z = record_logits(tape, model, g);
  ForwardResult r;
  r.logits = tape.value(z).data;
  r.probabilities = Tape::softmax(r.logits);
  return r;
}

/// Cross-entropy loss of `g` under its stored label (or `label`) and the
/// gradient with respect to every parameter.
inline GradientBundle backward(const GraphModel& model, const SampleGraph& g,
                               std::optional<std::uint32_t> label = std::nullopt) {
  Tape tape;
  std::vector<Tape::Var> pv;
  auto z = record_logits(tape, model, g, std::nullopt, &pv);
  auto loss = tape.softmax_cross_entropy(z, label.value_or(g.label));
  tape.backward(loss);
  GradientBundle out;
  out.loss = tape.value(loss).data[0];
  out.grads.reserve(pv.size());
  for (auto v : pv) out.grads.push_back(tape.grad(v));
  return out;
}

inline std::vector<double> predict_proba(const GraphModel& model, const SampleGraph& g) {
  return forward(model, g).probabilities;
}

inline double sample_loss(const GraphModel& model, const SampleGraph& g) {
  Tape tape;
  auto z = record_logits(tape, model, g);
  return tape.value(tape.softmax_cross_entropy(z, g.label)).data[0];
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::string_view kModelMagic = "X2GM";
inline constexpr std::uint32_t kModelFormatVersion = 1;

inline void write_checkpoint(const GraphModel& m, std::ostream& os) {
  os.write(kModelMagic.data(), kModelMagic.size());
  bin::put_u32(os, kModelFormatVersion);
  bin::put_str(os, m.arch.to_string());
  bin::put_u8(os, static_cast<std::uint8_t>(m.arch.kind));
  bin::put_u32(os, static_cast<std::uint32_t>(m.arch.layers));
  bin::put_u32(os, static_cast<std::uint32_t>(m.arch.width));
  bin::put_u8(os, static_cast<std::uint8_t>(m.arch.activation));
  bin::put_u8(os, static_cast<std::uint8_t>(m.arch.norm));
  bin::put_u8(os, m.arch.id_indexing ? 1 : 0);
  bin::put_u8(os, m.arch.value_bias ? 1 : 0);
  bin::put_u32(os, m.vocab_size);
  bin::put_u32(os, m.num_classes);
  bin::put_u64(os, m.seed);
  auto params = m.parameters();
  bin::put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Tensor* p : params) {
    bin::put_u64(os, p->rows());
    bin::put_u64(os, p->cols());
    for (double x : p->data) bin::put_f64(os, x);
  }
}

inline GraphModel read_checkpoint(std::istream& is) {
  bin::expect_magic(is, kModelMagic);
  if (auto v = bin::get_u32(is); v != kModelFormatVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  const std::string descriptor = bin::get_str(is);
  ArchDescriptor a;
  const auto kind = bin::get_u8(is);
  if (kind > 1) throw FormatError("checkpoint: bad layer kind");
  a.kind = static_cast<LayerKind>(kind);
  a.layers = static_cast<int>(bin::get_u32(is));
  a.width = static_cast<int>(bin::get_u32(is));
  const auto act = bin::get_u8(is);
  const auto norm = bin::get_u8(is);
  if (act > 1 || norm > 1) throw FormatError("checkpoint: bad activation or norm");
  a.activation = static_cast<Activation>(act);
  a.norm = static_cast<Norm>(norm);
  a.id_indexing = bin::get_u8(is) != 0;
  a.value_bias = bin::get_u8(is) != 0;
  try {
    a.validate();
  } catch (const UsageError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  if (descriptor != a.to_string()) throw FormatError("checkpoint: descriptor mismatch");
  const auto vocab = bin::get_u32(is);
  const auto classes = bin::get_u32(is);
  const auto seed = bin::get_u64(is);
  if (classes < 2) throw FormatError("checkpoint: fewer than 2 classes");
  GraphModel m = GraphModel::init(a, vocab, classes, seed);
  auto params = m.parameters();
  if (bin::get_u32(is) != params.size()) throw FormatError("checkpoint: parameter count");
  for (Tensor* p : params) {
    const auto r = bin::get_u64(is), c = bin::get_u64(is);
    if (r != p->rows() || c != p->cols()) throw FormatError("checkpoint: tensor shape");
    for (auto& x : p->data) x = bin::get_f64(is);
  }
  return m;
}

inline void save_checkpoint(const GraphModel& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  write_checkpoint(m, os);
  if (!os) throw IoError("write failed: " + path);
}

inline GraphModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  return read_checkpoint(is);
}

inline std::string serialize(const GraphModel& m) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(m, os);
  return std::move(os).str();
}

// ---------------------------------------------------------------------------
// MLP baseline over the raw row restricted to the vocabulary

class MlpBaseline {
 public:
  std::uint32_t input_dim = 0;
  std::vector<std::uint32_t> hidden;
  std::uint32_t num_classes = 0;
  Activation activation = Activation::relu;
  std::vector<Tensor> weights;  ///< layer l: in x out
  std::vector<Tensor> biases;   ///< layer l: 1 x out

  static MlpBaseline init(std::uint32_t input_dim, std::vector<std::uint32_t> hidden,
                          std::uint32_t num_classes, Activation act, std::uint64_t seed) {
    if (num_classes < 2) throw UsageError("MLP needs at least 2 classes");
    MlpBaseline m;
    m.input_dim = input_dim;
    m.hidden = std::move(hidden);
    m.num_classes = num_classes;
    m.activation = act;
    std::mt19937_64 rng(derive_seed(seed, 0x6d6c70ULL));
    std::vector<std::uint32_t> dims{input_dim};
    dims.insert(dims.end(), m.hidden.begin(), m.hidden.end());
    dims.push_back(num_classes);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      Tensor w(dims[l], dims[l + 1]);
      detail::fill_uniform(w, 1.0 / std::sqrt(std::max<double>(1.0, dims[l])), rng);
      m.weights.push_back(std::move(w));
      m.biases.emplace_back(1, dims[l + 1]);
    }
    return m;
  }

  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }

  bool operator==(const MlpBaseline&) const = default;
};

inline Tape::Var record_logits(Tape& tape, const MlpBaseline& m, std::span<const double> row,
                               std::vector<Tape::Var>* params = nullptr) {
  if (row.size() != m.input_dim) throw SchemaError("MLP input width mismatch");
  std::vector<Tape::Var> pv;
  for (const Tensor* p : m.parameters()) pv.push_back(tape.parameter(*p));
  Tape::Var h = tape.constant(Tensor(1, row.size(), std::vector<double>(row.begin(), row.end())));
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    h = tape.add_row(tape.matmul(h, pv[2 * l]), pv[2 * l + 1]);
    if (l + 1 < m.weights.size()) h = detail::activate(tape, h, m.activation);
  }
  if (params) *params = std::move(pv);
  return h;
}

inline ForwardResult mlp_forward(const MlpBaseline& m, std::span<const double> row) {
  Tape tape;
  auto z = record_logits(tape, m, row);
  ForwardResult r;
  r.logits = tape.value(z).data;
  r.probabilities = Tape::softmax(r.logits);
  return r;
}

inline GradientBundle mlp_backward(const MlpBaseline& m, std::span<const double> row,
                                   std::uint32_t label) {
  Tape tape;
  std::vector<Tape::Var> pv;
  auto z = record_logits(tape, m, row, &pv);
  auto loss = tape.softmax_cross_entropy(z, label);
  tape.backward(loss);
  GradientBundle out;
  out.loss = tape.value(loss).data[0];
  for (auto v : pv) out.grads.push_back(tape.grad(v));
  return out;
}

}  // namespace x2g
