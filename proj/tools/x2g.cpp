// x2g: command-line front end for conversion, training, evaluation,
// fusion, explanation and cross-validated experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "x2g.hpp"

namespace {

using namespace x2g;
using nlohmann::json;

struct DataOpts {
  std::string table, kb, schema, label_col = "label";
};

struct SplitOpts {
  std::size_t folds = 10;
  std::optional<std::size_t> fold_id;
  std::string split = "all";
};

struct TrainOpts {
  TrainConfig cfg;
  std::string arch = "gcn:2:128:gelu";
};

void add_train_flags(CLI::App* app, TrainOpts& t) {
  app->add_option("--arch", t.arch, "kind:layers:width:activation[:layer]")->capture_default_str();
  app->add_option("--epochs", t.cfg.epochs)->capture_default_str();
  app->add_option("--batch-size", t.cfg.batch_size)->capture_default_str();
  app->add_option("--lr", t.cfg.lr_max, "peak learning rate")->capture_default_str();
  app->add_option("--lr-min", t.cfg.lr_min)->capture_default_str();
  app->add_option("--period", t.cfg.schedule_period, "cosine period in epochs (0: epochs)");
  app->add_option("--patience", t.cfg.patience)->capture_default_str();
  app->add_option("--aug-max-nodes", t.cfg.aug_max_nodes)->capture_default_str();
  app->add_option("--aug-max-edges", t.cfg.aug_max_edges)->capture_default_str();
}

void add_split_flags(CLI::App* app, SplitOpts& s, bool need_fold) {
  app->add_option("--folds", s.folds, "number of stratified folds")->capture_default_str();
  auto* f = app->add_option("--fold-id", s.fold_id, "fold to use");
  if (need_fold) f->required();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << text;
  if (!os) throw IoError("write failed: " + path);
}

void emit_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-")
    std::cout << j.dump(2) << '\n';
  else
    write_json(j, path);
}

ArchDescriptor arch_for(const TrainOpts& t, const GraphDataset& ds) {
  auto a = ArchDescriptor::parse(t.arch);
  a.id_indexing = ds.config.id_indexing;
  return a;
}

FoldSplit fold_for(const GraphDataset& ds, const SplitOpts& s, std::uint64_t seed) {
  const auto labels = ds.labels();
  const auto folds = make_folds(labels, s.folds, seed);
  const auto k = s.fold_id.value_or(0);
  if (k >= folds.size()) throw UsageError("--fold-id must be below --folds");
  return folds[k];
}

/// Indices for --split {all,train,val,test}; fold-based splits need a fold id and seed.
std::vector<std::size_t> split_indices(const GraphDataset& ds, const SplitOpts& s,
                                       std::optional<std::uint64_t> seed) {
  if (s.split == "all") {
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  if (s.split != "train" && s.split != "val" && s.split != "test") {
    if (!fs::exists(s.split))
      throw UsageError("--split must be all, train, val, test or a fold JSON file: " + s.split);
    return fold_split_from_json(read_json(s.split)).test;
  }
  if (!s.fold_id || !seed) throw UsageError("--split " + s.split + " needs --fold-id and --seed");
  const auto f = fold_for(ds, s, *seed);
  if (s.split == "train") return f.train;
  if (s.split == "val") return f.val;
  return f.test;
}

std::string report_csv(const EvalReport& r, const std::vector<std::string>& classes) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "metric,value\n"
     << "num_samples," << r.num_samples << "\naccuracy," << r.accuracy << "\nmacro_auc,"
     << r.macro_auc << "\nmacro_f1," << r.macro_f1 << "\nkappa," << r.kappa << '\n';
  os << "class,precision,recall,f1,average_precision,auc,support\n";
  for (std::size_t c = 0; c < r.precision.size(); ++c) {
    os << (c < classes.size() ? classes[c] : std::to_string(c)) << ',' << r.precision[c] << ','
       << r.recall[c] << ',' << r.f1[c] << ',' << r.average_precision[c] << ',';
    if (r.auc[c]) os << *r.auc[c];
    os << ',' << r.support[c] << '\n';
  }
  return os.str();
}

std::string fmt_summary(const MetricSummary& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f +/- %.4f", s.mean, s.stddev);
  return buf;
}

// --- subcommands -----------------------------------------------------------

int cmd_convert(const DataOpts& d, const std::string& kb_name, bool prune, bool no_id,
                const std::string& out) {
  CsvOptions opt;
  opt.label_col = d.label_col;
  if (!d.schema.empty()) opt.schema = load_schema(d.schema);
  auto table = load_csv(d.table, opt);
  if (table.has_pending_categories()) table = one_hot_encode(table);
  const auto kb = load_edge_list(d.kb, kb_name.empty() ? kb_name_from_path(d.kb) : kb_name);
  ConversionConfig cfg;
  cfg.node_pruning = prune;
  cfg.id_indexing = !no_id;
  const auto graphs = convert_table(table, kb, cfg);
  save_graph_dataset(graphs, out);
  std::size_t nodes = 0, edges = 0;
  for (const auto& g : graphs.graphs) {
    nodes += g.num_nodes();
    edges += g.num_edges();
  }
  std::cerr << "converted " << graphs.size() << " rows over " << graphs.vocabulary.size()
            << " shared features (" << nodes << " nodes, " << edges << " edges) -> " << out
            << '\n';
  return 0;
}

int cmd_kb_stats(const std::string& path, bool as_json) {
  const auto kb = load_edge_list(path, kb_name_from_path(path));
  const auto s = kb_stats(kb);
  if (as_json) {
    json hist = json::object();
    for (const auto& [deg, count] : s.degree_histogram) hist[std::to_string(deg)] = count;
    std::cout << json{{"name", kb.name}, {"nodes", s.nodes}, {"edges", s.edges},
                      {"degree_histogram", hist}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << "kb\t" << kb.name << "\nnodes\t" << s.nodes << "\nedges\t" << s.edges << '\n';
    for (const auto& [deg, count] : s.degree_histogram)
      std::cout << "degree " << deg << '\t' << count << '\n';
  }
  return 0;
}

int cmd_synth(const std::string& spec_path, std::uint64_t seed, const std::string& out_table,
              const std::string& out_kb, const std::string& out_truth) {
  SynthSpec spec;
  if (!spec_path.empty()) spec = synth_spec_from_json(read_json(spec_path));
  spec.seed = seed;
  const auto r = generate(spec);
  write_csv(r.table, out_table);
  write_edge_list(r.kb, out_kb);
  if (!out_truth.empty()) {
    auto j = truth_to_json(r);
    j["spec"] = to_json(spec);
    write_json(j, out_truth);
  }
  return 0;
}

int cmd_train(const std::string& data, const SplitOpts& s, TrainOpts t, std::uint64_t seed,
              const std::string& out, const std::string& history_path) {
  const auto ds = load_graph_dataset(data);
  t.cfg.seed = seed;
  const auto split = fold_for(ds, s, seed);
  std::ofstream hist;
  if (!history_path.empty()) {
    hist.open(history_path);
    if (!hist) throw IoError("cannot write " + history_path);
  }
  auto on_epoch = [&](const EpochRecord& r) {
    const auto line = to_json(r).dump();
    if (hist.is_open())
      hist << line << '\n';
    else
      std::cout << line << '\n';
  };
  const auto result = train_model(ds, split, arch_for(t, ds), t.cfg, on_epoch);
  save_checkpoint(result.model, out);
  std::cerr << "best epoch " << result.history.best_epoch << ", val macro F1 "
            << result.history.best_val_macro_f1 << (result.history.stopped_early ? " (early stop)" : "")
            << " -> " << out << '\n';
  return 0;
}

int cmd_search(const std::string& data, const SplitOpts& s, TrainOpts t, std::uint64_t seed,
               std::size_t budget, const std::string& out, const std::string& trials_path) {
  const auto ds = load_graph_dataset(data);
  t.cfg.seed = seed;
  const auto split = fold_for(ds, s, seed);
  SearchSpace space;
  std::ofstream log;
  if (!trials_path.empty()) {
    log.open(trials_path);
    if (!log) throw IoError("cannot write " + trials_path);
  }
  std::size_t trial = 0;
  auto objective = [&](const ArchDescriptor& a, double lr) {
    TrainConfig cfg = t.cfg;
    cfg.lr_max = lr;
    cfg.seed = derive_seed(seed, trial++);
    auto arch = a;
    arch.id_indexing = ds.config.id_indexing;
    return train_model(ds, split, arch, cfg).history.best_val_macro_f1;
  };
  const auto result = random_search(space, budget, objective, seed);
  json trials = json::array();
  for (const auto& tr : result.trials) {
    trials.push_back(to_json(tr));
    if (log.is_open()) log << to_json(tr).dump() << '\n';
  }
  emit_json({{"best", to_json(result.best)}, {"trials", trials}}, out);
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data, const SplitOpts& s,
                 std::optional<std::uint64_t> seed, const std::string& out,
                 const std::string& csv) {
  const auto model = load_checkpoint(model_path);
  const auto ds = load_graph_dataset(data);
  const auto idx = split_indices(ds, s, seed);
  const auto report = evaluate(model, ds, idx);
  emit_json(to_json(report), out);
  if (!csv.empty()) write_text(csv, report_csv(report, ds.class_names));
  return 0;
}

int cmd_fuse(const std::vector<std::string>& models, const std::vector<std::string>& data,
             const SplitOpts& s, std::uint64_t seed, const FusionConfig& fcfg,
             const std::string& out, const std::string& report_path) {
  if (models.size() < 2) throw UsageError("fuse needs at least 2 --models");
  if (data.size() != 1 && data.size() != models.size())
    throw UsageError("give one --data file, or one per model");
  std::vector<std::vector<std::vector<double>>> val_out, test_out;
  std::vector<std::uint32_t> val_labels, test_labels;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto model = load_checkpoint(models[i]);
    const auto ds = load_graph_dataset(data.size() == 1 ? data[0] : data[i]);
    const auto split = fold_for(ds, s, seed);
    std::vector<std::uint32_t> vl, tl;
    for (auto k : split.val) vl.push_back(ds.graphs[k].label);
    for (auto k : split.test) tl.push_back(ds.graphs[k].label);
    if (i == 0) {
      val_labels = vl;
      test_labels = tl;
    } else if (vl != val_labels || tl != test_labels) {
      throw UsageError("fuse: datasets disagree on samples or labels");
    }
    val_out.push_back(predict_many(model, ds, split.val));
    test_out.push_back(predict_many(model, ds, split.test));
  }
  const auto W = train_fusion(val_out, val_labels, fcfg);
  const auto C = val_out[0].empty() ? 0 : val_out[0][0].size();
  const auto report = evaluate_outputs(fuse_probabilities(W, test_out), test_labels, C);
  json j = to_json(W);
  j["models"] = models;
  j["test_report"] = to_json(report, false);
  emit_json(j, out);
  if (!report_path.empty()) write_json(to_json(report), report_path);
  return 0;
}

int cmd_explain(const std::string& model_path, const std::string& data, const SplitOpts& s,
                std::optional<std::uint64_t> seed, double top_frac, double fidelity_frac,
                std::size_t max_samples, const ExplainConfig& ecfg, const std::string& out) {
  const auto model = load_checkpoint(model_path);
  const auto ds = load_graph_dataset(data);
  auto idx = split_indices(ds, s, seed);
  if (max_samples > 0 && idx.size() > max_samples) idx.resize(max_samples);
  const auto rep = feature_importance(model, ds, idx, top_frac, ecfg, fidelity_frac);
  emit_json(to_json(rep), out);
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<EvalReport> reports;
  for (const auto& p : inputs) reports.push_back(eval_report_from_json(read_json(p)));
  const auto agg = aggregate(reports);
  std::cout << "folds\t" << agg.folds << "\naccuracy\t" << fmt_summary(agg.accuracy)
            << "\nmacro_auc\t" << fmt_summary(agg.macro_auc) << "\nmacro_f1\t"
            << fmt_summary(agg.macro_f1) << "\nkappa\t" << fmt_summary(agg.kappa) << '\n';
  if (!out.empty()) write_json(to_json(agg), out);
  return 0;
}

int cmd_run(const std::string& manifest_path) {
  const auto summary = run_experiment(load_manifest(manifest_path));
  for (std::size_t i = 0; i < summary.components.size(); ++i)
    std::cout << summary.components[i] << "\tmacro_auc "
              << fmt_summary(summary.component_reports[i].macro_auc) << '\n';
  if (summary.fusion) std::cout << "fusion\tmacro_auc " << fmt_summary(summary.fusion->macro_auc) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"x2g: tabular rows to knowledge-graph samples, GNN training and evaluation"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress warnings");

  DataOpts data;
  SplitOpts split;
  TrainOpts train;
  std::optional<std::uint64_t> seed;
  std::string out, kb_name, history, trials, csv, report_out, spec_path, out_table, out_kb,
      out_truth, data_path, model_path, manifest;
  bool prune = false, no_id = false, as_json = false;
  std::size_t budget = 50, max_samples = 0;
  double top_frac = 0.2, fidelity_frac = 0.2;
  std::vector<std::string> models, datas, inputs;
  FusionConfig fusion;
  ExplainConfig explain;
  std::string optimizer = "gd";

  auto* convert = app.add_subcommand("convert", "convert a CSV table into graph samples");
  convert->add_option("--table", data.table, "CSV table")->required()->check(CLI::ExistingFile);
  convert->add_option("--kb", data.kb, "edge-list KB")->required()->check(CLI::ExistingFile);
  convert->add_option("--schema", data.schema, "name=kind lines")->check(CLI::ExistingFile);
  convert->add_option("--label-col", data.label_col)->capture_default_str();
  convert->add_option("--kb-name", kb_name, "defaults to the KB file stem");
  convert->add_flag("--node-pruning,--prune-zeros", prune, "drop nodes whose value is exactly 0");
  convert->add_flag("--no-id-indexing", no_id, "mark the dataset for value-only node encoding");
  convert->add_option("--out", out, "GraphDataset file")->required();

  auto* kb_stats_cmd = app.add_subcommand("kb-stats", "node, edge and degree counts of a KB");
  kb_stats_cmd->add_option("--kb,kb", data.kb)->required()->check(CLI::ExistingFile);
  kb_stats_cmd->add_flag("--json", as_json);
  auto* kb_group = app.add_subcommand("kb", "KB utilities");
  auto* kb_group_stats = kb_group->add_subcommand("stats", "same as kb-stats");
  kb_group_stats->add_option("--kb,kb", data.kb)->required()->check(CLI::ExistingFile);
  kb_group_stats->add_flag("--json", as_json);
  kb_group->require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a planted-signal table and KB");
  synth->add_option("--spec", spec_path, "SynthSpec JSON")->check(CLI::ExistingFile);
  synth->add_option("--seed", seed)->required();
  synth->add_option("--out-table", out_table)->required();
  synth->add_option("--out-kb", out_kb)->required();
  synth->add_option("--out-truth", out_truth);

  auto* train_cmd = app.add_subcommand("train", "train one model on one fold");
  train_cmd->add_option("--data", data_path, "GraphDataset file")->required()->check(CLI::ExistingFile);
  add_split_flags(train_cmd, split, false);
  add_train_flags(train_cmd, train);
  train_cmd->add_option("--seed", seed)->required();
  train_cmd->add_option("--out", out, "checkpoint path")->required();
  train_cmd->add_option("--history", history, "epoch records (default stdout)");

  auto* search = app.add_subcommand("search", "random hyperparameter search on one fold");
  search->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  add_split_flags(search, split, false);
  add_train_flags(search, train);
  search->add_option("--budget", budget)->capture_default_str();
  search->add_option("--seed", seed)->required();
  search->add_option("--out", out, "best config and trial log (default stdout)");
  search->add_option("--trials", trials, "line-delimited trial log");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "metrics of a checkpoint on a split");
  evaluate_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  add_split_flags(evaluate_cmd, split, false);
  evaluate_cmd->add_option("--split", split.split, "all, train, val, test or a fold JSON file (its test part)")->capture_default_str();
  evaluate_cmd->add_option("--seed", seed, "fold seed (needed for fold splits)");
  evaluate_cmd->add_option("--out", out, "report JSON (default stdout)");
  evaluate_cmd->add_option("--csv", csv, "also write a CSV summary");

  auto* fuse = app.add_subcommand("fuse", "train late-fusion weights on validation outputs");
  fuse->add_option("--models", models)->required();
  fuse->add_option("--data,--data-val", datas, "one GraphDataset, or one per model")->required();
  add_split_flags(fuse, split, true);
  fuse->add_option("--seed", seed, "fold seed")->required();
  fuse->add_option("--steps", fusion.steps)->capture_default_str();
  fuse->add_option("--lr", fusion.lr)->capture_default_str();
  fuse->add_option("--out", out, "fusion weights JSON (default stdout)");
  fuse->add_option("--report", report_out, "test-split report of the fused model");

  auto* explain_cmd = app.add_subcommand("explain", "edge-mask explanations and feature importance");
  explain_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  add_split_flags(explain_cmd, split, false);
  explain_cmd->add_option("--split", split.split)->capture_default_str();
  explain_cmd->add_option("--seed", seed, "fold seed (needed for fold splits)");
  explain_cmd->add_option("--top-frac", top_frac, "edge fraction selected per sample")->capture_default_str();
  explain_cmd->add_option("--fidelity-frac", fidelity_frac)->capture_default_str();
  explain_cmd->add_option("--max-samples", max_samples, "0: all");
  explain_cmd->add_option("--steps", explain.steps)->capture_default_str();
  explain_cmd->add_option("--lambda-sparse", explain.lambda_sparse)->capture_default_str();
  explain_cmd->add_option("--lambda-entropy", explain.lambda_entropy)->capture_default_str();
  explain_cmd->add_option("--mask-lr", explain.lr)->capture_default_str();
  explain_cmd->add_option("--optimizer", optimizer, "gd or adam")
      ->check(CLI::IsMember({"gd", "adam"}))
      ->capture_default_str();
  explain_cmd->add_option("--out", out, "importance JSON (default stdout)");

  auto* report = app.add_subcommand("report", "merge per-fold reports into mean +/- std");
  report->add_option("reports", inputs)->required()->check(CLI::ExistingFile);
  report->add_option("--out", out, "aggregate JSON");

  auto* run = app.add_subcommand("run", "run a cross-validated experiment manifest");
  run->add_option("--manifest,manifest", manifest)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  set_quiet(quiet);

  try {
    if (*convert) return cmd_convert(data, kb_name, prune, no_id, out);
    if (*kb_stats_cmd || *kb_group_stats) return cmd_kb_stats(data.kb, as_json);
    if (*synth) return cmd_synth(spec_path, *seed, out_table, out_kb, out_truth);
    if (*train_cmd) return cmd_train(data_path, split, train, *seed, out, history);
    if (*search) return cmd_search(data_path, split, train, *seed, budget, out, trials);
    if (*evaluate_cmd) return cmd_evaluate(model_path, data_path, split, seed, out, csv);
    if (*fuse) return cmd_fuse(models, datas, split, *seed, fusion, out, report_out);
    if (*explain_cmd) {
      explain.optimizer = optimizer == "adam" ? MaskOptimizer::adam : MaskOptimizer::gradient_descent;
      return cmd_explain(model_path, data_path, split, seed, top_frac, fidelity_frac, max_samples,
                         explain, out);
    }
    if (*report) return cmd_report(inputs, out);
    if (*run) return cmd_run(manifest);
  } catch (const Error& e) {
    std::cerr << "x2g: error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "x2g: error: " << e.what() << '\n';
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "x2g: error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "x2g: error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
