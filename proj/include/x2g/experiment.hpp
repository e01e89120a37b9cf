#pragma once

// Cross-validated experiment orchestration: table -> folds -> per-fold
// conversion, training and evaluation for each KB -> optional late fusion
// -> fold-averaged summary. Per-fold artifacts make a run resumable.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "x2g/common.hpp"
#include "x2g/eval.hpp"
#include "x2g/gnn.hpp"
#include "x2g/kb.hpp"
#include "x2g/tabular.hpp"
#include "x2g/trainer.hpp"
#include "x2g/x2graph.hpp"

namespace x2g {

namespace fs = std::filesystem;

inline void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},           {"batch_size", c.batch_size},
          {"lr_max", c.lr_max},           {"lr_min", c.lr_min},
          {"schedule_period", c.schedule_period}, {"patience", c.patience},
          {"aug_max_nodes", c.aug_max_nodes}, {"aug_max_edges", c.aug_max_edges},
          {"seed", c.seed},               {"beta1", c.beta1},
          {"beta2", c.beta2},             {"eps", c.eps}};
}

/// Missing fields keep their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("lr_max", c.lr_max);
  get("lr_min", c.lr_min);
  get("schedule_period", c.schedule_period);
  get("patience", c.patience);
  get("aug_max_nodes", c.aug_max_nodes);
  get("aug_max_edges", c.aug_max_edges);
  get("seed", c.seed);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("eps", c.eps);
  return c;
}

struct ExperimentManifest {
  std::string table;                ///< CSV path
  std::optional<std::string> schema;
  std::string label_col = "label";
  std::vector<std::string> kbs;     ///< edge-list paths; >= 2 enables fusion
  ConversionConfig conversion;
  bool standardize = false;         ///< z-score with train-fold statistics
  ArchDescriptor arch;
  TrainConfig train;
  FusionConfig fusion;
  std::size_t folds = 10;
  std::vector<std::size_t> fold_ids;  ///< empty: all folds
  bool mlp_baseline = false;
  std::uint64_t seed = 0;
  std::string out_dir = "x2g-run";

  void validate() const {
    if (table.empty()) throw UsageError("manifest: 'table' is required");
    if (kbs.empty()) throw UsageError("manifest: at least one KB is required");
    for (const auto& p : kbs)
      if (!fs::exists(p)) throw IoError("manifest: KB file not found: " + p);
    if (!fs::exists(table)) throw IoError("manifest: table not found: " + table);
    if (schema && !fs::exists(*schema)) throw IoError("manifest: schema not found: " + *schema);
    if (folds < 2) throw UsageError("manifest: folds must be at least 2");
    for (auto k : fold_ids)
      if (k >= folds) throw UsageError("manifest: fold id " + std::to_string(k) + " out of range");
    arch.validate();
    train.validate();
  }
};

/// Relative paths in the manifest resolve against `base`.
inline ExperimentManifest manifest_from_json(const nlohmann::json& j, const fs::path& base = {}) {
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return (q.is_relative() && !base.empty() ? base / q : q).string();
  };
  try {
    ExperimentManifest m;
    m.table = resolve(j.at("table").get<std::string>());
    if (j.contains("schema")) m.schema = resolve(j.at("schema").get<std::string>());
    if (j.contains("label_col")) m.label_col = j.at("label_col").get<std::string>();
    for (const auto& p : j.at("kbs")) m.kbs.push_back(resolve(p.get<std::string>()));
    if (j.contains("node_pruning")) m.conversion.node_pruning = j.at("node_pruning").get<bool>();
    if (j.contains("id_indexing")) m.conversion.id_indexing = j.at("id_indexing").get<bool>();
    if (j.contains("standardize")) m.standardize = j.at("standardize").get<bool>();
    if (j.contains("arch")) m.arch = ArchDescriptor::parse(j.at("arch").get<std::string>());
    m.arch.id_indexing = m.conversion.id_indexing;
    if (j.contains("train")) m.train = train_config_from_json(j.at("train"));
    if (j.contains("fusion")) {
      const auto& f = j.at("fusion");
      if (f.contains("steps")) m.fusion.steps = f.at("steps").get<std::size_t>();
      if (f.contains("lr")) m.fusion.lr = f.at("lr").get<double>();
    }
    if (j.contains("folds")) m.folds = j.at("folds").get<std::size_t>();
    if (j.contains("fold_ids")) m.fold_ids = j.at("fold_ids").get<std::vector<std::size_t>>();
    if (j.contains("mlp_baseline")) m.mlp_baseline = j.at("mlp_baseline").get<bool>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train.seed = m.seed;
    if (j.contains("out_dir")) m.out_dir = resolve(j.at("out_dir").get<std::string>());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

inline ExperimentManifest load_manifest(const std::string& path) {
  return manifest_from_json(read_json(path), fs::path(path).parent_path());
}

struct ExperimentSummary {
  std::vector<std::string> components;  ///< KB names (plus "mlp" when enabled)
  std::vector<AggregateReport> component_reports;
  std::optional<AggregateReport> fusion;
  std::size_t folds_run = 0;
};

inline nlohmann::json to_json(const ExperimentSummary& s) {
  nlohmann::json comps = nlohmann::json::object();
  for (std::size_t i = 0; i < s.components.size(); ++i)
    comps[s.components[i]] = to_json(s.component_reports[i]);
  nlohmann::json j{{"folds_run", s.folds_run}, {"components", comps}};
  j["fusion"] = s.fusion ? to_json(*s.fusion) : nlohmann::json(nullptr);
  return j;
}

inline void write_history(const History& h, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  for (const auto& r : h.epochs) os << to_json(r).dump() << '\n';
}

inline nlohmann::json outputs_to_json(const std::vector<std::size_t>& idx,
                                      const std::vector<std::vector<double>>& probs,
                                      const std::vector<std::uint32_t>& labels) {
  return {{"samples", idx}, {"probabilities", probs}, {"labels", labels}};
}

namespace detail {

struct ComponentOutputs {
  std::vector<std::vector<double>> val, test;
};

inline TabularDataset load_experiment_table(const ExperimentManifest& m) {
  CsvOptions opt;
  opt.label_col = m.label_col;
  if (m.schema) opt.schema = load_schema(*m.schema);
  auto ds = load_csv(m.table, opt);
  if (ds.has_pending_categories()) ds = one_hot_encode(ds);
  return ds;
}

inline std::string unique_component_name(std::string name, const std::vector<std::string>& taken) {
  if (name.empty()) name = "kb";
  std::string candidate = name;
  for (int k = 2; std::find(taken.begin(), taken.end(), candidate) != taken.end(); ++k)
    candidate = name + "-" + std::to_string(k);
  return candidate;
}

}  // namespace detail

/// Runs the manifest. A fold whose headline report already exists is loaded
/// instead of recomputed; any other fold is recomputed in full. Training is
/// deterministic, so a resumed run matches an uninterrupted one.
inline ExperimentSummary run_experiment(const ExperimentManifest& m) {
  m.validate();
  const fs::path out(m.out_dir);
  fs::create_directories(out);
  write_json({{"table", m.table},
              {"kbs", m.kbs},
              {"arch", m.arch.to_string()},
              {"node_pruning", m.conversion.node_pruning},
              {"id_indexing", m.conversion.id_indexing},
              {"standardize", m.standardize},
              {"folds", m.folds},
              {"seed", m.seed},
              {"train", to_json(m.train)}},
             out / "manifest.resolved.json");

  const auto table = detail::load_experiment_table(m);
  std::vector<KnowledgeBase> kbs;
  std::vector<std::string> names;
  for (const auto& p : m.kbs) {
    kbs.push_back(load_edge_list(p, kb_name_from_path(p)));
    names.push_back(detail::unique_component_name(kbs.back().name, names));
  }
  const bool fused = kbs.size() >= 2;
  const bool single = kbs.size() == 1 && !m.mlp_baseline;

  const auto splits = make_folds(table.labels, m.folds, m.seed);
  std::vector<std::size_t> ids = m.fold_ids;
  if (ids.empty())
    for (std::size_t k = 0; k < m.folds; ++k) ids.push_back(k);

  ExperimentSummary summary;
  summary.components = names;
  if (m.mlp_baseline) summary.components.push_back("mlp");
  std::vector<std::vector<EvalReport>> per_component(summary.components.size());
  std::vector<EvalReport> fusion_reports;

  for (auto k : ids) {
    const auto& split = splits[k];
    const fs::path fold_dir = out / ("fold" + std::to_string(k));
    fs::create_directories(fold_dir);
    write_json(to_json(split), fold_dir / "split.json");
    auto component_dir = [&](const std::string& name) {
      return single ? fold_dir : fold_dir / name;
    };

    const bool done = fs::exists(fold_dir / "report.json") &&
                      std::all_of(summary.components.begin(), summary.components.end(),
                                  [&](const std::string& c) {
                                    return fs::exists(component_dir(c) / "report.json");
                                  });
    if (done) {
      for (std::size_t c = 0; c < summary.components.size(); ++c)
        per_component[c].push_back(
            eval_report_from_json(read_json(component_dir(summary.components[c]) / "report.json")));
      if (fused) fusion_reports.push_back(eval_report_from_json(read_json(fold_dir / "report.json")));
      ++summary.folds_run;
      continue;
    }

    const auto fold_table = m.standardize ? z_score(table, split.train).first : table;
    std::vector<std::uint32_t> val_labels, test_labels;
    for (auto i : split.val) val_labels.push_back(table.labels[i]);
    for (auto i : split.test) test_labels.push_back(table.labels[i]);

    std::vector<detail::ComponentOutputs> outputs;
    for (std::size_t c = 0; c < kbs.size(); ++c) {
      const auto dir = component_dir(names[c]);
      fs::create_directories(dir);
      const auto graphs = convert_table(fold_table, kbs[c], m.conversion);
      TrainConfig cfg = m.train;
      cfg.seed = derive_seed(m.seed, k, c);
      auto trained = train_model(graphs, split, m.arch, cfg);
      save_checkpoint(trained.model, (dir / "model.ckpt").string());
      write_history(trained.history, dir / "history.jsonl");
      detail::ComponentOutputs o;
      o.val = predict_many(trained.model, graphs, split.val);
      o.test = predict_many(trained.model, graphs, split.test);
      write_json(outputs_to_json(split.val, o.val, val_labels), dir / "val_outputs.json");
      write_json(outputs_to_json(split.test, o.test, test_labels), dir / "test_outputs.json");
      auto report = evaluate_outputs(o.test, test_labels, table.num_classes());
      write_json(to_json(report), dir / "report.json");
      per_component[c].push_back(std::move(report));
      outputs.push_back(std::move(o));
    }

    if (m.mlp_baseline) {
      const auto graphs = convert_table(fold_table, kbs[0], m.conversion);
      const auto rows = dense_rows(graphs);
      const auto labels = graphs.labels();
      TrainConfig cfg = m.train;
      cfg.seed = derive_seed(m.seed, k, 0x6d6c70ULL);
      auto trained = train_mlp(rows, labels, graphs.num_classes(), split, MlpSpec{}, cfg);
      std::vector<std::vector<double>> probs;
      for (auto i : split.test) probs.push_back(mlp_forward(trained.model, rows[i]).probabilities);
      const auto dir = fold_dir / "mlp";
      fs::create_directories(dir);
      write_history(trained.history, dir / "history.jsonl");
      auto report = evaluate_outputs(probs, test_labels, table.num_classes());
      write_json(to_json(report), dir / "report.json");
      per_component.back().push_back(std::move(report));
    }

    if (fused) {
      std::vector<std::vector<std::vector<double>>> val_out, test_out;
      for (const auto& o : outputs) {
        val_out.push_back(o.val);
        test_out.push_back(o.test);
      }
      const auto W = train_fusion(val_out, val_labels, m.fusion);
      write_json(to_json(W), fold_dir / "fusion.json");
      auto report = evaluate_outputs(fuse_probabilities(W, test_out), test_labels,
                                     table.num_classes());
      write_json(to_json(report), fold_dir / "report.json");
      fusion_reports.push_back(std::move(report));
    } else if (!single) {
      // headline report is the single KB model's
      write_json(to_json(per_component[0].back()), fold_dir / "report.json");
    }
    ++summary.folds_run;
  }

  for (const auto& reps : per_component) summary.component_reports.push_back(aggregate(reps));
  if (fused) summary.fusion = aggregate(fusion_reports);
  write_json(to_json(summary), out / "summary.json");
  return summary;
}

}  // namespace x2g
