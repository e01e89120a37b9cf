// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Pass criterion numbers as arguments to run a subset.

#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "x2g/eval.hpp"
#include "x2g/experiment.hpp"
#include "x2g/explain.hpp"
#include "x2g/gnn.hpp"
#include "x2g/synth.hpp"
#include "x2g/trainer.hpp"
#include "x2g/x2graph.hpp"

namespace fs = std::filesystem;
using namespace x2g;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(X2G_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------- 1, 2, 3

Outcome conversion_oracle() {
  std::mt19937_64 rng(1001);
  const auto t0 = Clock::now();
  std::size_t mismatches = 0;
  for (int t = 0; t < 500; ++t) {
    auto inst = oracle::random_instance(rng, 30, 20);
    auto got = convert_table(inst.table, inst.kb, inst.config);
    auto want = oracle::convert(inst.table, inst.kb_pairs, inst.config);
    if (!(got.vocabulary == want.vocabulary) || got.graphs != want.graphs) ++mismatches;
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 10.0, fmt("500 instances, %zu mismatches, %.2fs", mismatches, s)};
}

Outcome permutation_invariance() {
  std::mt19937_64 rng(1002);
  std::size_t byte_diffs = 0;
  double max_logit_diff = 0.0;
  for (int t = 0; t < 100; ++t) {
    auto inst = oracle::random_instance(rng);
    std::vector<std::size_t> perm(inst.table.cols());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto a = convert_table(inst.table, inst.kb, inst.config);
    const auto b = convert_table(permute_columns(inst.table, perm), inst.kb, inst.config);
    if (serialize(a) != serialize(b)) ++byte_diffs;

    auto arch = gradcheck::random_arch(rng);
    arch.id_indexing = inst.config.id_indexing;
    auto model = GraphModel::init(arch, static_cast<std::uint32_t>(a.vocabulary.size()), 3, rng());
    gradcheck::jitter(model, rng);
    std::istringstream ckpt(serialize(model));
    const auto fixed = read_checkpoint(ckpt);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto la = forward(fixed, a.graphs[i]).logits;
      const auto lb = forward(fixed, b.graphs[i]).logits;
      for (std::size_t c = 0; c < la.size(); ++c)
        max_logit_diff = std::max(max_logit_diff, std::abs(la[c] - lb[c]));
    }
  }
  return {byte_diffs == 0 && max_logit_diff <= 1e-12,
          fmt("100 instances, %zu byte differences, max logit diff %.3g", byte_diffs, max_logit_diff)};
}

Outcome round_trip() {
  std::mt19937_64 rng(1003);
  std::size_t rows = 0, bad = 0;
  for (int t = 0; t < 100; ++t) {
    auto inst = oracle::random_instance(rng);
    const auto ds = convert_table(inst.table, inst.kb, inst.config);
    std::vector<std::size_t> col_of;
    for (const auto& name : ds.vocabulary.names)
      for (std::size_t c = 0; c < inst.table.cols(); ++c)
        if (inst.table.columns[c].name == name) col_of.push_back(c);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      ++rows;
      const auto back = reconstruct_row(ds.graphs[i], ds.vocabulary);
      bool same = back.size() == col_of.size();
      for (std::size_t k = 0; same && k < col_of.size(); ++k) {
        const double want = inst.table.at(i, col_of[k]);
        // pruned cells come back as +0.0; unpruned ones keep their exact bits
        const double expect = (inst.config.node_pruning && want == 0.0) ? 0.0 : want;
        same = std::memcmp(&back[k], &expect, sizeof(double)) == 0;
      }
      if (!same) ++bad;
    }
  }
  return {bad == 0, fmt("%zu rows over 100 instances, %zu not restored", rows, bad)};
}

// ---------------------------------------------------------------- 4

Outcome gradient_check() {
  std::mt19937_64 rng(1004);
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  std::set<std::string> configs;
  for (int t = 0; t < 200; ++t) {
    auto arch = gradcheck::random_arch(rng);
    // cycle through every kind x activation x norm x id combination
    arch.kind = t % 2 ? LayerKind::gcn : LayerKind::mean_agg;
    arch.activation = (t / 2) % 2 ? Activation::relu : Activation::gelu;
    arch.norm = (t / 4) % 2 ? Norm::layer : Norm::none;
    arch.id_indexing = (t / 8) % 2;
    configs.insert(arch.to_string().substr(0, 4) + std::string(to_string(arch.activation)) +
                   (arch.norm == Norm::layer ? "L" : "") + (arch.id_indexing ? "I" : ""));
    const std::uint32_t vocab = 2 + rng() % 12, classes = 2 + rng() % 3;
    auto model = GraphModel::init(arch, vocab, classes, rng());
    gradcheck::jitter(model, rng);
    auto g = gradcheck::random_graph(rng, vocab, 10, classes);
    const auto r = gradcheck::check_graph(model, g);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
  }
  const double s = seconds_since(t0);
  return {worst < 1e-3 && s < 60.0 && configs.size() == 16,
          fmt("200 instances, %zu configurations, %zu coordinates, max rel error %.3g, %.2fs",
              configs.size(), checked, worst, s)};
}

// ---------------------------------------------------------------- 5

Outcome metric_oracles() {
  std::vector<std::string> failed;
  auto near = [&](double got, double want, const char* what) {
    if (!(std::abs(got - want) <= 1e-9)) failed.push_back(fmt("%s %.12g != %.12g", what, got, want));
  };
  const ConfusionMatrix cm{{20, 5}, {10, 15}};
  near(cohen_kappa(cm), 0.4, "kappa");
  near(macro_f1(cm), 23.0 / 33.0, "macro_f1");

  const std::vector<std::uint32_t> truth{0, 0, 1, 1, 2, 2};
  const std::vector<std::vector<double>> probs{{0.7, 0.2, 0.1}, {0.3, 0.6, 0.1}, {0.2, 0.5, 0.3},
                                               {0.1, 0.8, 0.1}, {0.1, 0.2, 0.7}, {0.5, 0.1, 0.4}};
  const auto ovr = roc_auc_ovr(probs, truth, 3, false);
  near(ovr.macro, 11.0 / 12.0, "macro_auc");
  const auto rep = evaluate_outputs(probs, truth, 3);
  near(rep.kappa, 0.5, "kappa6");
  near(rep.macro_f1, 59.0 / 90.0, "macro_f1_6");
  const std::vector<double> ap_want{5.0 / 6.0, 5.0 / 6.0, 1.0};
  for (std::size_t c = 0; c < 3; ++c) near(rep.average_precision[c], ap_want[c], "ap");
  {
    std::vector<double> s{0.9, 0.8, 0.3, 0.1}, worst{0.9, 0.1};
    std::vector<std::uint8_t> pos{1, 1, 0, 0}, last{0, 1};
    near(pr_curve_ap(s, pos).average_precision, 1.0, "ap_perfect");
    near(pr_curve_ap(worst, last).average_precision, 0.5, "ap_worst");
    std::vector<double> s2{0.9, 0.4, 0.7, 0.1};
    near(*roc_auc(s2, pos), 0.75, "auc_hand");
  }

  std::mt19937_64 rng(1005);
  std::size_t compared = 0, exact = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<double> s(n);
    std::vector<std::uint8_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 16) / 8.0;
      pos[i] = rng() % 2;
    }
    pos[0] = 1;
    pos[1] = 0;
    ++compared;
    if (*roc_auc(s, pos) == oracle::pair_auc(s, pos)) ++exact;
  }
  if (exact != compared) failed.push_back(fmt("auc oracle %zu/%zu exact", exact, compared));
  std::string detail = fmt("hand examples and %zu/%zu random AUC sets exact", exact, compared);
  for (const auto& f : failed) detail += "; " + f;
  return {failed.empty(), detail};
}

// ---------------------------------------------------------------- 6, 8, 9

// Planted-signal task shared by criteria 6 to 9. Density and strength are
// lowered/raised from the generator defaults so a 60-epoch run separates
// the true KB from its rewiring at N=400, D=600.
SynthSpec planted_spec(std::uint64_t seed) {
  SynthSpec s;
  s.n_samples = 400;
  s.n_features = 600;
  s.n_classes = 3;
  s.hop_coupling = 0.7;
  s.kb_edge_density = 0.003;
  s.signal_strength = 5.0;
  s.seed = seed;
  return s;
}

TrainConfig planted_train(std::uint64_t seed) {
  TrainConfig c;
  c.epochs = 60;
  c.patience = 60;
  c.batch_size = 16;
  c.lr_max = 3e-3;
  c.seed = seed;
  return c;
}

const char* kPlantedArch = "sage:2:32:gelu";
constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct Component {
  GraphDataset graphs;
  GraphModel model;
  std::vector<std::vector<double>> val, test;
  double test_auc = 0;
};

struct PlantedSeed {
  SynthResult data;
  FoldSplit split;
  std::vector<std::uint32_t> val_labels, test_labels;
  std::map<std::string, Component> components;
  std::optional<double> mlp_auc;
};

std::map<std::uint64_t, PlantedSeed> planted_cache;

PlantedSeed& planted(std::uint64_t seed) {
  auto it = planted_cache.find(seed);
  if (it != planted_cache.end()) return it->second;
  PlantedSeed p;
  p.data = generate(planted_spec(seed));
  p.split = make_folds(p.data.table.labels, 5, seed)[0];
  for (auto i : p.split.val) p.val_labels.push_back(p.data.table.labels[i]);
  for (auto i : p.split.test) p.test_labels.push_back(p.data.table.labels[i]);
  return planted_cache.emplace(seed, std::move(p)).first->second;
}

Component& component(std::uint64_t seed, const std::string& variant) {
  auto& p = planted(seed);
  auto it = p.components.find(variant);
  if (it != p.components.end()) return it->second;
  KnowledgeBase kb = p.data.kb;
  if (variant == "scrambled") kb = scramble_kb(p.data.kb, seed);
  if (variant == "noisy") kb = add_noise_edges(p.data.kb, p.data.kb.num_edges(), seed);
  const auto t0 = Clock::now();
  Component c;
  c.graphs = convert_table(p.data.table, kb, {});
  c.model = train_model(c.graphs, p.split, ArchDescriptor::parse(kPlantedArch), planted_train(seed)).model;
  c.val = predict_many(c.model, c.graphs, p.split.val);
  c.test = predict_many(c.model, c.graphs, p.split.test);
  c.test_auc = evaluate_outputs(c.test, p.test_labels, 3).macro_auc;
  std::cerr << fmt("  seed %llu %-9s macro AUC %.3f (%.0fs)\n", static_cast<unsigned long long>(seed),
                   variant.c_str(), c.test_auc, seconds_since(t0));
  return p.components.emplace(variant, std::move(c)).first->second;
}

double mlp_auc(std::uint64_t seed) {
  auto& p = planted(seed);
  if (p.mlp_auc) return *p.mlp_auc;
  const auto& graphs = component(seed, "true").graphs;
  const auto rows = dense_rows(graphs);
  const auto trained = train_mlp(rows, graphs.labels(), 3, p.split, MlpSpec{}, planted_train(seed));
  std::vector<std::vector<double>> probs;
  for (auto i : p.split.test) probs.push_back(mlp_forward(trained.model, rows[i]).probabilities);
  p.mlp_auc = evaluate_outputs(probs, p.test_labels, 3).macro_auc;
  std::cerr << fmt("  seed %llu mlp       macro AUC %.3f\n", static_cast<unsigned long long>(seed), *p.mlp_auc);
  return *p.mlp_auc;
}

Outcome inductive_bias() {
  std::vector<double> t, s, m;
  for (auto seed : kSeeds) {
    t.push_back(component(seed, "true").test_auc);
    s.push_back(component(seed, "scrambled").test_auc);
    m.push_back(mlp_auc(seed));
  }
  const double mt = mean(t), ms = mean(s), mm = mean(m);
  return {mt >= 0.85 && mt - ms >= 0.05 && mt - mm >= 0.05,
          fmt("mean macro AUC true %.3f, scrambled %.3f, mlp %.3f", mt, ms, mm)};
}

Outcome fusion_non_degradation() {
  // Passthrough: weights selecting model 0 reproduce its outputs exactly.
  bool passthrough = true;
  {
    std::mt19937_64 rng(1008);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<std::vector<std::vector<double>>> outs(3, std::vector<std::vector<double>>(20));
    for (auto& model : outs)
      for (auto& row : model) {
        row.resize(4);
        double z = 0;
        for (auto& x : row) z += (x = u(rng));
        for (auto& x : row) x /= z;
      }
    FusionMatrix W(3, 4, 0.0);
    for (std::size_t c = 0; c < 4; ++c) W.at(0, c) = 1.0;
    const auto samples = by_sample(outs);
    for (std::size_t i = 0; i < samples.size(); ++i)
      passthrough = passthrough && fuse_scores(W, samples[i]) == outs[0][i];
  }
  std::vector<double> fused_auc, best_component;
  for (auto seed : kSeeds) {
    auto& p = planted(seed);
    std::vector<std::vector<std::vector<double>>> val, test;
    double best = 0;
    for (const char* v : {"true", "noisy", "scrambled"}) {
      const auto& c = component(seed, v);
      val.push_back(c.val);
      test.push_back(c.test);
      best = std::max(best, c.test_auc);
    }
    const auto W = train_fusion(val, p.val_labels);
    fused_auc.push_back(evaluate_outputs(fuse_probabilities(W, test), p.test_labels, 3).macro_auc);
    best_component.push_back(best);
    std::cerr << fmt("  seed %llu fused     macro AUC %.3f\n", static_cast<unsigned long long>(seed),
                     fused_auc.back());
  }
  const double mf = mean(fused_auc), mb = mean(best_component);
  return {passthrough && mf >= mb - 0.01,
          fmt("passthrough %s, mean fused macro AUC %.3f vs best component %.3f",
              passthrough ? "exact" : "differs", mf, mb)};
}

Outcome explainer_recovery() {
  std::size_t recovered = 0;
  std::vector<double> agreement;
  for (auto seed : kSeeds) {
    auto& p = planted(seed);
    const auto& c = component(seed, "true");
    const auto rep = feature_importance(c.model, c.graphs, p.split.test, 0.05, ExplainConfig{}, 0.2);
    const auto top = top_features(rep, 5);
    const std::set<std::string> truth(p.data.truth.begin(), p.data.truth.end());
    const auto hits = std::count_if(top.begin(), top.end(), [&](const auto& f) { return truth.count(f); });
    if (top.size() == 5 && hits == 5) ++recovered;
    agreement.push_back(rep.agreement_rate);
    std::cerr << fmt("  seed %llu explainer top-5 planted %ld/5, agreement %.3f\n",
                     static_cast<unsigned long long>(seed), static_cast<long>(hits), rep.agreement_rate);
  }
  const double ma = mean(agreement);
  return {recovered >= 4 && ma >= 0.8,
          fmt("top-5 all planted in %zu/5 seeds, mean agreement at 0.2 %.3f", recovered, ma)};
}

// ---------------------------------------------------------------- 7

// 30% exact zeros, placed on background cells as CNV "no variation" codes,
// with node pruning on; only the index encoding differs between arms.
Outcome ablation_direction() {
  std::vector<double> on, off;
  for (auto seed : kSeeds) {
    auto spec = planted_spec(seed);
    spec.zero_fraction = 0.3;
    spec.zero_background_only = true;
    const auto data = generate(spec);
    const auto split = make_folds(data.table.labels, 5, seed)[0];
    for (bool id : {true, false}) {
      const auto t0 = Clock::now();
      const auto graphs = convert_table(data.table, data.kb, {true, id});
      auto arch = ArchDescriptor::parse(kPlantedArch);
      arch.id_indexing = id;
      const auto model = train_model(graphs, split, arch, planted_train(seed)).model;
      const double auc = evaluate(model, graphs, split.test).macro_auc;
      (id ? on : off).push_back(auc);
      std::cerr << fmt("  seed %llu id %-3s    macro AUC %.3f (%.0fs)\n",
                       static_cast<unsigned long long>(seed), id ? "on" : "off", auc, seconds_since(t0));
    }
  }
  const double a = mean(on), b = mean(off);
  return {a - b >= 0.03, fmt("mean macro AUC id on %.3f, id off %.3f, gap %.3f", a, b, a - b)};
}

// ---------------------------------------------------------------- 10

Outcome determinism_and_formats() {
  const fs::path dir = fs::temp_directory_path() / "x2g_acceptance_10";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const std::string& n) { return (dir / n).string(); };
  SynthSpec spec;
  spec.n_samples = 90;
  spec.n_features = 60;
  spec.kb_edge_density = 0.05;
  spec.signal_strength = 3.0;
  write_json(to_json(spec), p("spec.json"));

  std::vector<std::string> failed;
  auto same = [&](const std::string& a, const std::string& b) {
    const auto x = slurp(p(a)), y = slurp(p(b));
    if (x.empty() || x != y) failed.push_back(a + " vs " + b);
  };
  for (const std::string r : {"1", "2"}) {
    int rc = run_cli("synth --spec " + p("spec.json") + " --seed 7 --out-table " + p("t" + r + ".csv") +
                     " --out-kb " + p("kb" + r + ".tsv"));
    rc |= run_cli("convert --table " + p("t1.csv") + " --kb " + p("kb1.tsv") + " --prune-zeros --out " +
                  p("d" + r + ".x2g"));
    rc |= run_cli("train --data " + p("d1.x2g") + " --folds 3 --fold-id 1 --arch gcn:2:8:gelu --epochs 5 "
                  "--patience 5 --batch-size 8 --lr 0.01 --seed 11 --out " + p("m" + r + ".ckpt") +
                  " --history " + p("h" + r + ".jsonl"));
    rc |= run_cli("evaluate --model " + p("m1.ckpt") + " --data " + p("d1.x2g") +
                  " --split test --folds 3 --fold-id 1 --seed 11 --out " + p("e" + r + ".json"));
    if (rc != 0) failed.push_back("cli run " + r + " failed");
  }
  for (const char* stem : {"t%s.csv", "kb%s.tsv", "d%s.x2g", "m%s.ckpt", "h%s.jsonl", "e%s.json"})
    same(fmt(stem, "1"), fmt(stem, "2"));

  // file round trips: read then rewrite reproduces the bytes
  if (failed.empty()) {
    const auto ds = load_graph_dataset(p("d1.x2g"));
    if (serialize(ds) != slurp(p("d1.x2g"))) failed.push_back("dataset round trip");
    const auto model = load_checkpoint(p("m1.ckpt"));
    if (serialize(model) != slurp(p("m1.ckpt"))) failed.push_back("checkpoint round trip");
  }
  std::mt19937_64 rng(1010);
  for (int t = 0; t < 50; ++t) {
    const auto inst = oracle::random_instance(rng);
    const auto ds = convert_table(inst.table, inst.kb, inst.config);
    std::istringstream is(serialize(ds));
    if (serialize(read_graph_dataset(is)) != serialize(ds)) failed.push_back("random dataset round trip");
    auto model = GraphModel::init(gradcheck::random_arch(rng), 1 + rng() % 20, 2 + rng() % 3, rng());
    gradcheck::jitter(model, rng);
    std::istringstream ms(serialize(model));
    if (serialize(read_checkpoint(ms)) != serialize(model)) failed.push_back("random checkpoint round trip");
  }
  fs::remove_all(dir);
  std::string detail = "synth/convert/train/evaluate reruns and round trips";
  for (const auto& f : failed) detail += "; mismatch " + f;
  return {failed.empty(), detail};
}

// ---------------------------------------------------------------- 11

Outcome scale_smoke() {
  const fs::path dir = fs::temp_directory_path() / "x2g_acceptance_11";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::size_t rows = 1000, cols = 20000, edges = 50000;
  auto name = [](std::size_t j) { return "G" + std::to_string(j); };
  {
    std::ofstream os(dir / "table.csv");
    for (std::size_t j = 0; j < cols; ++j) os << name(j) << ',';
    os << "label\n";
    std::mt19937_64 rng(1011);
    std::uniform_int_distribution<int> v(-3, 3);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) os << v(rng) << ',';
      os << (i % 3) << '\n';
    }
  }
  {
    // 20000 table genes plus 2000 KB-only names
    std::ofstream os(dir / "kb.tsv");
    std::mt19937_64 rng(1012);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    while (seen.size() < edges) {
      std::size_t a = rng() % (cols + 2000), b = rng() % (cols + 2000);
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      if (seen.emplace(a, b).second) os << name(a) << '\t' << name(b) << '\n';
    }
  }
  const auto t0 = Clock::now();
  const pid_t pid = fork();
  if (pid == 0) {
    const std::string out = (dir / "out.x2g").string(), table = (dir / "table.csv").string(),
                      kb = (dir / "kb.tsv").string();
    execl(X2G_CLI_PATH, X2G_CLI_PATH, "-q", "convert", "--table", table.c_str(), "--kb", kb.c_str(),
          "--prune-zeros", "--out", out.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  int status = 0;
  rusage usage{};
  wait4(pid, &status, 0, &usage);
  const double s = seconds_since(t0);
  const double gb = static_cast<double>(usage.ru_maxrss) / (1024.0 * 1024.0);  // ru_maxrss is KiB
  const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
  std::size_t graphs = 0;
  if (ok) graphs = load_graph_dataset((dir / "out.x2g").string()).size();
  fs::remove_all(dir);
  return {ok && graphs == rows && s < 60.0 && gb < 4.0,
          fmt("1000 x 20000 table, 50000-edge KB: exit %d, %zu graphs, %.1fs, peak RSS %.2f GB",
              WIFEXITED(status) ? WEXITSTATUS(status) : -1, graphs, s, gb)};
}

}  // namespace

int main(int argc, char** argv) {
  set_quiet(true);
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, conversion_oracle},     {2, permutation_invariance}, {3, round_trip},
      {4, gradient_check},        {5, metric_oracles},         {6, inductive_bias},
      {7, ablation_direction},    {8, fusion_non_degradation}, {9, explainer_recovery},
      {10, determinism_and_formats}, {11, scale_smoke}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    std::cerr << "criterion " << id << " ...\n";
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
