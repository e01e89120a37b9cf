#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "oracles.hpp"
#include "x2g/tensor.hpp"

using namespace x2g;

namespace {

Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor t(r, c);
  for (auto& x : t.data) x = nd(rng);
  return t;
}

// Scalar probe: L = sum(out .* R) for a fixed random R, so dL/dout = R.
using Build = std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>;

double probe_loss(const std::vector<Tensor>& inputs, const Build& build, const Tensor& r) {
  Tape tape;
  std::vector<Tape::Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.parameter(t));
  const auto& out = tape.value(build(tape, vars)).data;
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r.data[i];
  return s;
}

// Max error between tape gradients and central differences, relative to
// max(|a|, |n|, 1e-2). The floor keeps rounding noise (~1e-10 absolute) on
// near-zero gradients from reading as a large relative error.
double op_gradcheck(std::vector<Tensor> inputs, const Build& build, std::mt19937_64& rng) {
  Tensor r;
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Tape::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.parameter(t));
    auto out = build(tape, vars);
    const std::size_t n = tape.value(out).rows(), m = tape.value(out).cols();
    r = random_tensor(rng, n, m);
    // sum(out .* R) as sum_i out[i] . R[i], one gathered row at a time
    std::vector<std::vector<std::uint32_t>> rows(n);
    Tape::Var total = tape.constant(Tensor(1, 1));
    for (std::size_t i = 0; i < n; ++i) {
      rows[i] = {static_cast<std::uint32_t>(i)};
      Tensor ri(m, 1);
      for (std::size_t j = 0; j < m; ++j) ri.data[j] = r(i, j);
      auto term = tape.matmul(tape.gather_rows(out, rows[i]), tape.constant(std::move(ri)));
      total = tape.add(total, term);
    }
    tape.backward(total);
    for (auto v : vars) analytic.push_back(tape.grad(v));
  }
  const double eps = 1e-6;
  double worst = 0;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    for (std::size_t i = 0; i < inputs[p].size(); ++i) {
      const double orig = inputs[p].data[i];
      inputs[p].data[i] = orig + eps;
      const double up = probe_loss(inputs, build, r);
      inputs[p].data[i] = orig - eps;
      const double down = probe_loss(inputs, build, r);
      inputs[p].data[i] = orig;
      const double num = (up - down) / (2 * eps);
      const double a = analytic[p][i];
      worst = std::max(worst, std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-2}));
    }
  }
  return worst;
}

std::vector<Edge> random_edges(std::mt19937_64& rng, std::size_t n) {
  std::vector<Edge> e;
  for (std::uint32_t a = 0; a < n; ++a)
    for (std::uint32_t b = a + 1; b < n; ++b)
      if (rng() % 3 == 0) e.emplace_back(a, b);
  return e;
}

}  // namespace

TEST(Tensor, ShapeChecks) {
  EXPECT_THROW(Tensor(2, 2, std::vector<double>{1, 2, 3}), UsageError);
  Tensor t(2, 3, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t(1, 2), 1.5);
}

TEST(Tape, MatmulValuesAndShapeError) {
  Tape tape;
  auto a = tape.constant(Tensor(2, 2, {1, 2, 3, 4}));
  auto b = tape.constant(Tensor(2, 1, {5, 6}));
  EXPECT_EQ(tape.value(tape.matmul(a, b)).data, (std::vector<double>{17, 39}));
  EXPECT_THROW(tape.matmul(b, b), UsageError);
}

TEST(Tape, GatherRowsRejectsOutOfRange) {
  Tape tape;
  Tensor t(2, 2);
  auto v = tape.parameter(t);
  std::vector<std::uint32_t> idx{2};
  EXPECT_THROW(tape.gather_rows(v, idx), UsageError);
}

TEST(Tape, SoftmaxSumsToOne) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    auto z = random_tensor(rng, 1, 1 + rng() % 6);
    for (auto& x : z.data) x *= 30;
    auto p = Tape::softmax(z.data);
    double s = 0;
    for (double x : p) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Tape, FrozenLeafTakesNoGradient) {
  Tensor w(1, 1, 2.0), x(1, 1, 3.0);
  Tape tape;
  auto wv = tape.parameter(w);
  auto xv = tape.frozen(x);
  auto y = tape.matmul(xv, wv);
  tape.backward(y);
  EXPECT_EQ(tape.grad(wv), (std::vector<double>{3.0}));
  EXPECT_EQ(tape.grad(xv), (std::vector<double>{0.0}));
}

TEST(Tape, GcnPropagateMatchesDenseOracle) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng() % 8, m = 1 + rng() % 3;
    auto h = random_tensor(rng, n, m);
    auto edges = random_edges(rng, n);
    Tape tape;
    auto out = tape.value(tape.gcn_propagate(tape.constant(h), edges));
    auto a = oracle::normalized_adjacency(n, edges);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double want = 0;
        for (std::size_t k = 0; k < n; ++k) want += a[i][k] * h(k, j);
        EXPECT_NEAR(out(i, j), want, 1e-12);
      }
  }
}

TEST(Tape, MeanNeighborsStarCenter) {
  // center 0 with leaves holding 2 and 4
  Tape tape;
  auto h = tape.constant(Tensor(3, 1, {7, 2, 4}));
  std::vector<Edge> edges{{0, 1}, {0, 2}};
  auto out = tape.value(tape.mean_neighbors(h, edges));
  EXPECT_EQ(out.data, (std::vector<double>{3, 7, 7}));
}

TEST(Tape, MeanRowsOfEmptyIsZero) {
  Tape tape;
  auto out = tape.value(tape.mean_rows(tape.constant(Tensor(0, 3))));
  EXPECT_EQ(out.data, (std::vector<double>(3, 0.0)));
}

TEST(Tape, GeluDerivativeMatchesDifferences) {
  for (double x = -4; x <= 4; x += 0.37) {
    const double num = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
    EXPECT_NEAR(gelu_derivative(x), num, 1e-8);
  }
  EXPECT_EQ(gelu(0.0), 0.0);
}

TEST(Tape, ScalarOutputRequiredForBackward) {
  Tensor w(2, 2, 1.0);
  Tape tape;
  auto v = tape.parameter(w);
  EXPECT_THROW(tape.backward(v), UsageError);
}

TEST(TapeGradients, EveryOpMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 25; ++t) {
    const std::size_t n = 1 + rng() % 6, m = 1 + rng() % 4, k = 1 + rng() % 3;
    const auto edges = random_edges(rng, n);
    std::vector<std::uint32_t> idx;
    for (std::size_t i = 0; i < n; ++i) idx.push_back(static_cast<std::uint32_t>(rng() % 4));
    auto H = random_tensor(rng, n, m);
    auto W = random_tensor(rng, m, k);
    auto B = random_tensor(rng, 1, m);
    auto E = random_tensor(rng, 1, edges.size());
    for (auto& x : E.data) x = 0.2 + std::abs(x);  // positive weights keep degrees > 0
    auto T = random_tensor(rng, 4, m);
    auto gamma = random_tensor(rng, 1, m), beta = random_tensor(rng, 1, m);

    const double tol = 1e-6;
    EXPECT_LT(op_gradcheck({H, W}, [](Tape& tp, auto v) { return tp.matmul(v[0], v[1]); }, rng), tol);
    EXPECT_LT(op_gradcheck({H, B}, [](Tape& tp, auto v) { return tp.add_row(v[0], v[1]); }, rng), tol);
    EXPECT_LT(op_gradcheck({H, H}, [](Tape& tp, auto v) { return tp.add(v[0], v[1]); }, rng), tol);
    EXPECT_LT(op_gradcheck({T}, [&](Tape& tp, auto v) { return tp.gather_rows(v[0], idx); }, rng), tol);
    EXPECT_LT(op_gradcheck({H, W}, [&](Tape& tp, auto v) {
      return tp.concat_cols(v[0], tp.matmul(v[0], v[1]));
    }, rng), tol);
    EXPECT_LT(op_gradcheck({H}, [](Tape& tp, auto v) { return tp.gelu(v[0]); }, rng), tol);
    EXPECT_LT(op_gradcheck({H}, [](Tape& tp, auto v) { return tp.mean_rows(v[0]); }, rng), tol);
    EXPECT_LT(op_gradcheck({H}, [&](Tape& tp, auto v) { return tp.gcn_propagate(v[0], edges); }, rng), tol);
    EXPECT_LT(op_gradcheck({H}, [&](Tape& tp, auto v) { return tp.mean_neighbors(v[0], edges); }, rng), tol);
    if (!edges.empty()) {
      EXPECT_LT(op_gradcheck({H, E}, [&](Tape& tp, auto v) {
        return tp.gcn_propagate(v[0], edges, v[1]);
      }, rng), tol);
      EXPECT_LT(op_gradcheck({H, E}, [&](Tape& tp, auto v) {
        return tp.mean_neighbors(v[0], edges, v[1]);
      }, rng), tol);
    }
    if (m >= 2) {
      EXPECT_LT(op_gradcheck({H, gamma, beta}, [](Tape& tp, auto v) {
        return tp.layer_norm(v[0], v[1], v[2]);
      }, rng), 1e-5);
    }
    auto Z = random_tensor(rng, 1, k + 1);
    const auto label = static_cast<std::uint32_t>(rng() % (k + 1));
    EXPECT_LT(op_gradcheck({Z}, [&](Tape& tp, auto v) {
      return tp.softmax_cross_entropy(v[0], label);
    }, rng), tol);
  }
}

TEST(TapeGradients, ReluAwayFromKink) {
  Tensor h(1, 4, {-2.0, -0.5, 0.5, 3.0});
  Tape tape;
  auto v = tape.parameter(h);
  auto r = tape.relu(v);
  auto s = tape.matmul(r, tape.constant(Tensor(4, 1, 1.0)));
  tape.backward(s);
  EXPECT_EQ(tape.grad(v), (std::vector<double>{0, 0, 1, 1}));
  EXPECT_EQ(tape.activation_pattern(), (std::vector<char>{0, 0, 1, 1}));
}
