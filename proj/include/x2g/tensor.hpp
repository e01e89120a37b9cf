#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// A Tape records values and a backward closure per operation. Parameters
// enter as external leaves (no copy); after backward() their gradients are
// read with Tape::grad(). A tape is single-use and single-threaded; build one
// per sample and per worker.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "x2g/common.hpp"
#include "x2g/kb.hpp"

namespace x2g {

/// Rank-2 tensor (vectors are 1 x n). `grad` is empty unless populated.
struct Tensor {
  std::vector<std::size_t> shape{0, 0};
  std::vector<double> data;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape{rows, cols}, data(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
      : shape{rows, cols}, data(std::move(values)) {
    if (data.size() != rows * cols) throw UsageError("tensor data/shape mismatch");
  }

  std::size_t rows() const { return shape[0]; }
  std::size_t cols() const { return shape[1]; }
  std::size_t size() const { return data.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool operator==(const Tensor& o) const { return shape == o.shape && data == o.data; }
};

namespace kernel {

// out[n x m] += a[n x k] * b[k x m]
inline void gemm_acc(const double* a, const double* b, double* out, std::size_t n,
                     std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out + i * m;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ai[p];
      if (s == 0.0) continue;
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += s * bp[j];
    }
  }
}

// out[n x k] += g[n x m] * b[k x m]^T
inline void gemm_nt_acc(const double* g, const double* b, double* out, std::size_t n,
                        std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* gi = g + i * m;
    double* o = out + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * m;
      double s = 0;
      for (std::size_t j = 0; j < m; ++j) s += gi[j] * bp[j];
      o[p] += s;
    }
  }
}

// out[k x m] += a[n x k]^T * g[n x m]
inline void gemm_tn_acc(const double* a, const double* g, double* out, std::size_t n,
                        std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    const double* gi = g + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ai[p];
      if (s == 0.0) continue;
      double* o = out + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += s * gi[j];
    }
  }
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0;
  for (std::size_t j = 0; j < n; ++j) s += a[j] * b[j];
  return s;
}

inline void axpy(double s, const double* x, double* y, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] += s * x[j];
}

}  // namespace kernel

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

/// tanh approximation of GELU.
inline double gelu(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * x * (1.0 + t);
}

inline double gelu_derivative(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

class Tape {
 public:
  struct Var {
    std::uint32_t id = 0;
  };

  Tape() { nodes_.reserve(64); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t) {
    Node n;
    n.own = std::move(t);
    return push(std::move(n));
  }

  /// External leaf; `t` must outlive the tape.
  Var parameter(const Tensor& t) {
    Node n;
    n.ext = &t;
    n.requires_grad = true;
    return push(std::move(n));
  }

  /// External leaf that takes no gradient; `t` must outlive the tape.
  Var frozen(const Tensor& t) {
    Node n;
    n.ext = &t;
    return push(std::move(n));
  }

  const Tensor& value(Var v) const { return val(v.id); }

  /// Gradient of the last backward() target w.r.t. v; zeros if unreached.
  std::vector<double> grad(Var v) const {
    const auto& g = nodes_[v.id].grad;
    return g.empty() ? std::vector<double>(val(v.id).size(), 0.0) : g;
  }

  /// Adds this node's gradient into `sink` (which must have matching size).
  void accumulate_grad(Var v, std::span<double> sink) const {
    const auto& g = nodes_[v.id].grad;
    if (g.empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) sink[i] += g[i];
  }

  std::size_t size() const { return nodes_.size(); }

  // --- operations -------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor& A = val(a.id);
    const Tensor& B = val(b.id);
    if (A.cols() != B.rows()) throw UsageError("matmul: inner dimensions differ");
    Tensor out(A.rows(), B.cols());
    kernel::gemm_acc(A.data.data(), B.data.data(), out.data.data(), A.rows(), A.cols(),
                     B.cols());
    return op(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
      const Tensor& A = t.val(a.id);
      const Tensor& B = t.val(b.id);
      const auto& G = t.nodes_[self].grad;
      if (t.nodes_[a.id].requires_grad)
        kernel::gemm_nt_acc(G.data(), B.data.data(), t.acc(a.id).data(), A.rows(),
                            A.cols(), B.cols());
      if (t.nodes_[b.id].requires_grad)
        kernel::gemm_tn_acc(A.data.data(), G.data(), t.acc(b.id).data(), A.rows(),
                            A.cols(), B.cols());
    });
  }

  /// a[n x m] + row[1 x m] broadcast over rows.
  Var add_row(Var a, Var row) {
    const Tensor& A = val(a.id);
    const Tensor& R = val(row.id);
    if (R.rows() != 1 || R.cols() != A.cols()) throw UsageError("add_row: shape mismatch");
    Tensor out = A;
    out.grad.clear();
    for (std::size_t i = 0; i < A.rows(); ++i)
      for (std::size_t j = 0; j < A.cols(); ++j) out(i, j) += R.data[j];
    return op(std::move(out), {a, row}, [a, row](Tape& t, std::uint32_t self) {
      const auto& G = t.nodes_[self].grad;
      const std::size_t m = t.val(row.id).cols();
      const std::size_t n = m == 0 ? 0 : G.size() / m;
      if (t.nodes_[a.id].requires_grad) {
        auto& ga = t.acc(a.id);
        for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i];
      }
      if (t.nodes_[row.id].requires_grad) {
        auto& gr = t.acc(row.id);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) gr[j] += G[i * m + j];
      }
    });
  }

  Var add(Var a, Var b) {
    const Tensor& A = val(a.id);
    const Tensor& B = val(b.id);
    if (!A.same_shape(B)) throw UsageError("add: shape mismatch");
    Tensor out = A;
    out.grad.clear();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
    return op(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
      const auto& G = t.nodes_[self].grad;
      for (Var v : {a, b}) {
        if (!t.nodes_[v.id].requires_grad) continue;
        auto& gv = t.acc(v.id);
        for (std::size_t i = 0; i < G.size(); ++i) gv[i] += G[i];
      }
    });
  }

  /// out[k] = table[idx[k]]
  Var gather_rows(Var table, std::span<const std::uint32_t> idx) {
    const Tensor& T = val(table.id);
    const std::size_t m = T.cols();
    Tensor out(idx.size(), m);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] >= T.rows()) throw UsageError("gather_rows: index out of range");
      std::copy_n(T.data.data() + idx[k] * m, m, out.data.data() + k * m);
    }
    return op(std::move(out), {table}, [table, idx](Tape& t, std::uint32_t self) {
      const auto& G = t.nodes_[self].grad;
      auto& gt = t.acc(table.id);
      const std::size_t m = t.val(table.id).cols();
      for (std::size_t k = 0; k < idx.size(); ++k)
        for (std::size_t j = 0; j < m; ++j) gt[idx[k] * m + j] += G[k * m + j];
    });
  }

  Var concat_cols(Var a, Var b) {
    const Tensor& A = val(a.id);
    const Tensor& B = val(b.id);
    if (A.rows() != B.rows()) throw UsageError("concat_cols: row counts differ");
    const std::size_t n = A.rows(), ma = A.cols(), mb = B.cols();
    Tensor out(n, ma + mb);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(A.data.data() + i * ma, ma, out.data.data() + i * (ma + mb));
      std::copy_n(B.data.data() + i * mb, mb, out.data.data() + i * (ma + mb) + ma);
    }
    return op(std::move(out), {a, b}, [a, b, n, ma, mb](Tape& t, std::uint32_t self) {
      const auto& G = t.nodes_[self].grad;
      if (t.nodes_[a.id].requires_grad) {
        auto& ga = t.acc(a.id);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < ma; ++j) ga[i * ma + j] += G[i * (ma + mb) + j];
      }
      if (t.nodes_[b.id].requires_grad) {
        auto& gb = t.acc(b.id);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < mb; ++j)
            gb[i * mb + j] += G[i * (ma + mb) + ma + j];
      }
    });
  }

  Var relu(Var a) {
    relu_inputs_.push_back(a.id);
    Tensor out = val(a.id);
    out.grad.clear();
    for (auto& x : out.data) x = x > 0.0 ? x : 0.0;
    return op(std::move(out), {a}, [a](Tape& t, std::uint32_t self) {
      const auto& G = t.nodes_[self].grad;
      const auto& X = t.val(a.id).data;
      auto& ga = t.acc(a.id);
      for (std::size_t i = 0; i < G.size(); ++i)
        if (X[i] > 0.0) ga[i] += G[i];
    });
  }

  Var gelu(Var a) {
    Tensor out = val(a.id);
    out.grad.clear();
    for (auto& x : out.data) x = x2g::gelu(x);
    return op(std::move(out), {a}, [a](Tape& t, std::uint32_t self) {
      const auto& G = t.nodes_[self].grad;
      const auto& X = t.val(a.id).data;
      auto& ga = t.acc(a.id);
      for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * gelu_derivative(X[i]);
    });
  }

  /// Row-wise layer normalization over the feature dimension.
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5) {
    const Tensor& X = val(x.id);
    const std::size_t n = X.rows(), m = X.cols();
    const Tensor& Gm = val(gamma.id);
    const Tensor& Bt = val(beta.id);
    if (Gm.cols() != m || Bt.cols() != m) throw UsageError("layer_norm: shape mismatch");
    Tensor out(n, m);
    std::vector<double> xhat(n * m), inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* r = X.data.data() + i * m;
      double mu = 0;
      for (std::size_t j = 0; j < m; ++j) mu += r[j];
      mu /= static_cast<double>(m);
      double var = 0;
      for (std::size_t j = 0; j < m; ++j) var += (r[j] - mu) * (r[j] - mu);
      var /= static_cast<double>(m);
      inv_std[i] = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < m; ++j) {
        xhat[i * m + j] = (r[j] - mu) * inv_std[i];
        out(i, j) = Gm.data[j] * xhat[i * m + j] + Bt.data[j];
      }
    }
    return op(std::move(out), {x, gamma, beta},
              [x, gamma, beta, n, m, xhat = std::move(xhat),
               inv_std = std::move(inv_std)](Tape& t, std::uint32_t self) {
                const auto& G = t.nodes_[self].grad;
                const auto& Gm = t.val(gamma.id).data;
                if (t.nodes_[gamma.id].requires_grad) {
                  auto& gg = t.acc(gamma.id);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) gg[j] += G[i * m + j] * xhat[i * m + j];
                }
                if (t.nodes_[beta.id].requires_grad) {
                  auto& gb = t.acc(beta.id);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) gb[j] += G[i * m + j];
                }
                if (!t.nodes_[x.id].requires_grad) return;
                auto& gx = t.acc(x.id);
                const double inv_m = 1.0 / static_cast<double>(m);
                for (std::size_t i = 0; i < n; ++i) {
                  double mean_g = 0, mean_gx = 0;
                  for (std::size_t j = 0; j < m; ++j) {
                    const double gh = G[i * m + j] * Gm[j];
                    mean_g += gh;
                    mean_gx += gh * xhat[i * m + j];
                  }
                  mean_g *= inv_m;
                  mean_gx *= inv_m;
                  for (std::size_t j = 0; j < m; ++j) {
                    const double gh = G[i * m + j] * Gm[j];
                    gx[i * m + j] += inv_std[i] * (gh - mean_g - xhat[i * m + j] * mean_gx);
                  }
                }
              });
  }

  /// Symmetric-normalized propagation with self-loops:
  /// out = D^-1/2 (A + I) D^-1/2 h, where A holds each undirected edge in
  /// both directions and D is the degree matrix of A + I. With `weight`
  /// (1 x |E|) edge e contributes w_e to A and to both endpoint degrees.
  Var gcn_propagate(Var h, std::span<const Edge> edges,
                    std::optional<Var> weight = std::nullopt) {
    const Tensor& H = val(h.id);
    const std::size_t n = H.rows(), m = H.cols();
    std::vector<double> w(edges.size(), 1.0);
    if (weight) {
      const Tensor& W = val(weight->id);
      if (W.size() != edges.size()) throw UsageError("gcn_propagate: weight size mismatch");
      w = W.data;
    }
    std::vector<double> deg(n, 1.0);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      deg[edges[e].first] += w[e];
      deg[edges[e].second] += w[e];
    }
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = 1.0 / std::sqrt(deg[i]);
    Tensor out(n, m);
    for (std::size_t i = 0; i < n; ++i)
      kernel::axpy(s[i] * s[i], H.data.data() + i * m, out.data.data() + i * m, m);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto [a, b] = edges[e];
      const double c = w[e] * s[a] * s[b];
      kernel::axpy(c, H.data.data() + b * m, out.data.data() + a * m, m);
      kernel::axpy(c, H.data.data() + a * m, out.data.data() + b * m, m);
    }
    std::vector<Var> inputs{h};
    if (weight) inputs.push_back(*weight);
    return op(std::move(out), inputs,
              [h, edges, weight, n, m, w = std::move(w), deg = std::move(deg),
               s = std::move(s)](Tape& t, std::uint32_t self) {
                const auto& G = t.nodes_[self].grad;
                const auto& H = t.val(h.id).data;
                if (t.nodes_[h.id].requires_grad) {
                  auto& gh = t.acc(h.id);  // the operator is symmetric
                  for (std::size_t i = 0; i < n; ++i)
                    kernel::axpy(s[i] * s[i], G.data() + i * m, gh.data() + i * m, m);
                  for (std::size_t e = 0; e < edges.size(); ++e) {
                    const auto [a, b] = edges[e];
                    const double c = w[e] * s[a] * s[b];
                    kernel::axpy(c, G.data() + b * m, gh.data() + a * m, m);
                    kernel::axpy(c, G.data() + a * m, gh.data() + b * m, m);
                  }
                }
                if (!weight || !t.nodes_[weight->id].requires_grad) return;
                auto& gw = t.acc(weight->id);
                std::vector<double> gs(n, 0.0);
                for (std::size_t i = 0; i < n; ++i)
                  gs[i] = 2.0 * s[i] * kernel::dot(G.data() + i * m, H.data() + i * m, m);
                for (std::size_t e = 0; e < edges.size(); ++e) {
                  const auto [a, b] = edges[e];
                  const double q = kernel::dot(G.data() + a * m, H.data() + b * m, m) +
                                   kernel::dot(G.data() + b * m, H.data() + a * m, m);
                  gw[e] += s[a] * s[b] * q;
                  gs[a] += w[e] * s[b] * q;
                  gs[b] += w[e] * s[a] * q;
                }
                // d s_i / d deg_i = -1/2 deg_i^-3/2
                for (std::size_t i = 0; i < n; ++i) gs[i] *= -0.5 * s[i] / deg[i];
                for (std::size_t e = 0; e < edges.size(); ++e)
                  gw[e] += gs[edges[e].first] + gs[edges[e].second];
              });
  }

  /// out_i = (1/|N(i)|) sum_{j in N(i)} w_e h_j, zero for isolated nodes.
  /// |N(i)| counts edges, not weights.
  Var mean_neighbors(Var h, std::span<const Edge> edges,
                     std::optional<Var> weight = std::nullopt) {
    const Tensor& H = val(h.id);
    const std::size_t n = H.rows(), m = H.cols();
    std::vector<double> w(edges.size(), 1.0);
    if (weight) {
      const Tensor& W = val(weight->id);
      if (W.size() != edges.size()) throw UsageError("mean_neighbors: weight size mismatch");
      w = W.data;
    }
    std::vector<double> inv_cnt(n, 0.0);
    for (const auto& [a, b] : edges) {
      inv_cnt[a] += 1.0;
      inv_cnt[b] += 1.0;
    }
    for (auto& c : inv_cnt) c = c > 0.0 ? 1.0 / c : 0.0;
    Tensor out(n, m);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto [a, b] = edges[e];
      kernel::axpy(w[e] * inv_cnt[a], H.data.data() + b * m, out.data.data() + a * m, m);
      kernel::axpy(w[e] * inv_cnt[b], H.data.data() + a * m, out.data.data() + b * m, m);
    }
    std::vector<Var> inputs{h};
    if (weight) inputs.push_back(*weight);
    return op(std::move(out), inputs,
              [h, edges, weight, m, w = std::move(w),
               inv_cnt = std::move(inv_cnt)](Tape& t, std::uint32_t self) {
                const auto& G = t.nodes_[self].grad;
                const auto& H = t.val(h.id).data;
                if (t.nodes_[h.id].requires_grad) {
                  auto& gh = t.acc(h.id);
                  for (std::size_t e = 0; e < edges.size(); ++e) {
                    const auto [a, b] = edges[e];
                    kernel::axpy(w[e] * inv_cnt[a], G.data() + a * m, gh.data() + b * m, m);
                    kernel::axpy(w[e] * inv_cnt[b], G.data() + b * m, gh.data() + a * m, m);
                  }
                }
                if (!weight || !t.nodes_[weight->id].requires_grad) return;
                auto& gw = t.acc(weight->id);
                for (std::size_t e = 0; e < edges.size(); ++e) {
                  const auto [a, b] = edges[e];
                  gw[e] += inv_cnt[a] * kernel::dot(G.data() + a * m, H.data() + b * m, m) +
                           inv_cnt[b] * kernel::dot(G.data() + b * m, H.data() + a * m, m);
                }
              });
  }

  /// Column-wise mean over rows -> 1 x m; zero vector when there are no rows.
  Var mean_rows(Var h) {
    const Tensor& H = val(h.id);
    const std::size_t n = H.rows(), m = H.cols();
    Tensor out(1, m);
    if (n > 0) {
      for (std::size_t i = 0; i < n; ++i)
        kernel::axpy(1.0, H.data.data() + i * m, out.data.data(), m);
      for (auto& x : out.data) x /= static_cast<double>(n);
    }
    return op(std::move(out), {h}, [h, n, m](Tape& t, std::uint32_t self) {
      if (n == 0) return;
      const auto& G = t.nodes_[self].grad;
      auto& gh = t.acc(h.id);
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) kernel::axpy(inv, G.data(), gh.data() + i * m, m);
    });
  }

  /// Softmax cross-entropy of a 1 x C logit row against `label` -> 1 x 1.
  Var softmax_cross_entropy(Var logits, std::uint32_t label) {
    const Tensor& Z = val(logits.id);
    if (Z.rows() != 1 || label >= Z.cols())
      throw UsageError("softmax_cross_entropy: bad logits or label");
    auto p = softmax(Z.data);
    const double loss = -std::log(std::max(p[label], 1e-300));
    Tensor out(1, 1, loss);
    return op(std::move(out), {logits},
              [logits, label, p = std::move(p)](Tape& t, std::uint32_t self) {
                const double g = t.nodes_[self].grad[0];
                auto& gz = t.acc(logits.id);
                for (std::size_t c = 0; c < p.size(); ++c)
                  gz[c] += g * (p[c] - (c == label ? 1.0 : 0.0));
              });
  }

  static std::vector<double> softmax(std::span<const double> z) {
    std::vector<double> p(z.begin(), z.end());
    if (p.empty()) return p;
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0;
    for (auto& x : p) {
      x = std::exp(x - mx);
      sum += x;
    }
    for (auto& x : p) x /= sum;
    return p;
  }

  /// Seeds d(out)/d(out) = 1 for a 1 x 1 output and runs the recorded
  /// backward closures in reverse order.
  void backward(Var out) {
    if (val(out.id).size() != 1) throw UsageError("backward: output must be scalar");
    acc(out.id)[0] += 1.0;
    for (std::size_t k = out.id + 1; k-- > 0;) {
      auto& node = nodes_[k];
      if (node.back && !node.grad.empty()) node.back(*this, static_cast<std::uint32_t>(k));
    }
  }

  /// Sign pattern of every ReLU input recorded so far. Gradient checks use it
  /// to skip perturbations that cross a kink.
  std::vector<char> activation_pattern() const {
    std::vector<char> out;
    for (auto id : relu_inputs_)
      for (double x : val(id).data) out.push_back(x > 0.0 ? 1 : 0);
    return out;
  }

 private:
  struct Node {
    Tensor own;
    const Tensor* ext = nullptr;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void(Tape&, std::uint32_t)> back;
  };

  const Tensor& val(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.own;
  }

  std::vector<double>& acc(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(val(id).size(), 0.0);
    return n.grad;
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  template <class Back>
  Var op(Tensor out, std::initializer_list<Var> inputs, Back&& back) {
    return op(std::move(out), std::vector<Var>(inputs), std::forward<Back>(back));
  }

  template <class Back>
  Var op(Tensor out, const std::vector<Var>& inputs, Back&& back) {
    Node n;
    n.own = std::move(out);
    for (Var v : inputs) n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    if (n.requires_grad) n.back = std::forward<Back>(back);
    return push(std::move(n));
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> relu_inputs_;
};

}  // namespace x2g
