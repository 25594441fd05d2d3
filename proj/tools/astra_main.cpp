// astra: weak-supervision training CLI.
//
// Subcommands: stats (dataset/rule statistics), run (majority, labeled-only,
// self-train, or astra), sweep (rule-sparsity sweep), synth (generate the
// synthetic benchmark files).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "astra/config.hpp"
#include "astra/corpus.hpp"
#include "astra/eval.hpp"
#include "astra/selftrain.hpp"
#include "astra/sweep.hpp"
#include "astra/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace astra;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string dataset_dir;
  std::string rules_path;
  std::string labels_path;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_set = false;
  int seeds = 1;
  int jobs = 1;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_out) {
  cmd->add_option("--config", args.config_path, "JSON config (flat dotted keys)");
  cmd->add_option("--dataset-dir", args.dataset_dir, "dataset directory")->required();
  cmd->add_option("--rules", args.rules_path, "rules JSON (default <dataset-dir>/rules.json)");
  cmd->add_option("--labels", args.labels_path, "label space JSON (default <dataset-dir>/labels.json)");
  if (with_out)
    cmd->add_option("--out", args.out_dir, "output directory")->required();
  else
    cmd->add_option("--out", args.out_dir, "output directory (optional)");
  cmd->add_option("--seed", args.seed, "base seed")->each([&](const std::string&) {
    args.seed_set = true;
  });
  cmd->add_option("--seeds", args.seeds, "number of seeded runs (seed, seed+1, ...)");
  cmd->add_option("--jobs", args.jobs, "worker threads for sweep points");
  cmd->add_option("--set", args.sets, "override config key, e.g. --set student.lr=0.05");
}

config::Loaded load_config(const CommonArgs& args) {
  config::Loaded loaded;
  if (!args.config_path.empty()) loaded = config::load_file(args.config_path);
  for (const auto& kv : args.sets) {
    auto pos = kv.find('=');
    if (pos == std::string::npos)
      throw_usage("--set expects key=value, got '" + kv + "'");
    config::apply_override(loaded, kv.substr(0, pos), kv.substr(pos + 1));
  }
  if (args.seed_set) loaded.train.seed = args.seed;
  return loaded;
}

fs::path resolve(const std::string& explicit_path, const fs::path& dir,
                 const char* fallback) {
  if (!explicit_path.empty()) return explicit_path;
  return dir / fallback;
}

struct LoadedData {
  corpus::LabelSpace labels;
  std::vector<rules::RuleSpec> rule_specs;
  std::vector<rules::CompiledRule> compiled;
};

LoadedData load_data(const CommonArgs& args) {
  LoadedData d;
  fs::path dir = args.dataset_dir;
  if (!fs::exists(dir)) throw_data("dataset directory not found: " + dir.string());
  d.labels = corpus::LabelSpace::from_json_file(resolve(args.labels_path, dir, "labels.json"));
  d.rule_specs = rules::load_rules_json(resolve(args.rules_path, dir, "rules.json"), d.labels);
  for (const auto& spec : d.rule_specs)
    d.compiled.push_back(rules::compile_rule(spec, d.labels));
  return d;
}

// pool.jsonl + test.jsonl triggers the seeded split protocol; otherwise the
// four fixed partition files are used as-is (any labels on unlabeled.jsonl
// are moved into the sealed oracle store).
corpus::DatasetBundle load_bundle(const CommonArgs& args,
                                  const corpus::LabelSpace& labels,
                                  const selftrain::TrainConfig& cfg,
                                  uint64_t seed) {
  fs::path dir = args.dataset_dir;
  if (fs::exists(dir / "pool.jsonl")) {
    auto pool = corpus::load_jsonl(dir / "pool.jsonl", labels);
    auto bundle = corpus::make_splits(pool, seed, cfg.n_labeled, cfg.n_validation);
    bundle.test = corpus::load_jsonl(dir / "test.jsonl", labels);
    bundle.check_invariants();
    return bundle;
  }
  corpus::DatasetBundle bundle;
  bundle.split_mode = "fixed";
  bundle.labeled = corpus::load_jsonl(dir / "labeled.jsonl", labels);
  bundle.unlabeled = corpus::load_jsonl(dir / "unlabeled.jsonl", labels);
  bundle.validation = corpus::load_jsonl(dir / "validation.jsonl", labels);
  bundle.test = corpus::load_jsonl(dir / "test.jsonl", labels);
  for (auto& inst : bundle.unlabeled) {
    if (inst.gold_label) {
      bundle.unlabeled_oracle.put(inst.id, *inst.gold_label);
      inst.gold_label.reset();
    }
  }
  bundle.check_invariants();
  return bundle;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw_data("cannot write: " + path.string());
  out << text;
}

void write_config_snapshot(const fs::path& out_dir, const CommonArgs& args,
                           const selftrain::TrainConfig& cfg,
                           const std::string& command,
                           const std::string& method = "") {
  json doc = json::parse(config::to_json_string(cfg));
  doc["cli.command"] = command;
  if (!method.empty()) doc["cli.method"] = method;
  doc["cli.dataset_dir"] = args.dataset_dir;
  doc["cli.seeds"] = args.seeds;
  doc["cli.jobs"] = args.jobs;
  write_text(out_dir / "config.json", doc.dump(2) + "\n");
}

json record_to_json(const selftrain::IterationRecord& rec, uint64_t seed) {
  json r;
  r["seed"] = seed;
  r["iteration"] = rec.iteration;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v && std::isfinite(*v)) r[key] = *v;
  };
  put("student_val", rec.student_val);
  put("student_test", rec.student_test);
  put("teacher_val", rec.teacher_val);
  put("teacher_test", rec.teacher_test);
  put("student_loss", rec.student_loss);
  put("teacher_loss", rec.teacher_loss);
  r["seconds"] = rec.seconds;
  return r;
}

int cmd_stats(const CommonArgs& args) {
  auto loaded = load_config(args);
  auto data = load_data(args);
  auto bundle = load_bundle(args, data.labels, loaded.train, loaded.train.seed);
  auto summary = corpus::dataset_summary(bundle, data.labels);

  auto matrix = rules::build_firing_matrix(data.compiled, bundle.unlabeled,
                                           data.labels.k());
  std::vector<int> oracle;
  oracle.reserve(bundle.unlabeled.size());
  for (const auto& inst : bundle.unlabeled) {
    auto gold = bundle.unlabeled_oracle.lookup(inst.id);
    oracle.push_back(gold ? *gold : -1);
  }
  bool has_oracle = false;
  for (int g : oracle) {
    if (g >= 0) has_oracle = true;
  }
  auto cs = rules::coverage_stats(matrix, has_oracle ? std::span<const int>(oracle)
                                                     : std::span<const int>{});

  json doc;
  doc["split_mode"] = bundle.split_mode;
  doc["labeled"] = summary.n_labeled;
  doc["unlabeled"] = summary.n_unlabeled;
  doc["validation"] = summary.n_validation;
  doc["test"] = summary.n_test;
  doc["classes"] = summary.k;
  doc["rules"] = data.rule_specs.size();
  doc["coverage"] = cs.coverage;
  doc["overlap"] = cs.overlap;
  doc["overlap_with_student"] = selftrain::overlap_with_student(matrix, true);
  if (cs.majority_accuracy) doc["majority_accuracy"] = *cs.majority_accuracy;
  if (cs.majority_precision) doc["majority_precision"] = *cs.majority_precision;

  std::cout << "dataset            " << args.dataset_dir << "\n"
            << "split mode         " << bundle.split_mode << "\n"
            << "|D_L| / |D_U|      " << summary.n_labeled << " / "
            << summary.n_unlabeled << "\n"
            << "val / test         " << summary.n_validation << " / "
            << summary.n_test << "\n"
            << "classes / rules    " << summary.k << " / "
            << data.rule_specs.size() << "\n"
            << "rule coverage      " << cs.coverage * 100.0 << "%\n"
            << "rule overlap       " << cs.overlap * 100.0 << "%\n"
            << "overlap w/ student " << selftrain::overlap_with_student(matrix, true) * 100.0
            << "%\n";
  if (cs.majority_accuracy)
    std::cout << "majority accuracy  " << *cs.majority_accuracy * 100.0 << "%\n";
  if (cs.majority_precision)
    std::cout << "majority precision " << *cs.majority_precision * 100.0 << "%\n";
  std::cout << doc.dump(2) << std::endl;

  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    write_text(fs::path(args.out_dir) / "stats.json", doc.dump(2) + "\n");
    write_config_snapshot(args.out_dir, args, loaded.train, "stats");
  }
  return 0;
}

void warn_if_model_config(const config::Loaded& loaded) {
  for (const auto& key : loaded.keys) {
    if (key.rfind("student.", 0) == 0 || key.rfind("teacher.", 0) == 0 ||
        key == "lambda" || key.rfind("selftrain.", 0) == 0 ||
        key.rfind("ablation.", 0) == 0 || key == "pseudo_labels") {
      std::cerr << "warning: method=majority ignores model config key '" << key
                << "'\n";
    }
  }
}

int cmd_run(const std::string& method, const CommonArgs& args) {
  auto loaded = load_config(args);
  auto& cfg = loaded.train;
  cfg.validate();
  auto data = load_data(args);
  if (args.seeds < 1) throw_usage("--seeds must be >= 1");

  fs::create_directories(args.out_dir);
  write_config_snapshot(args.out_dir, args, cfg, "run", method);
  std::ofstream run_log(fs::path(args.out_dir) / "run.jsonl");
  if (!run_log) throw_data("cannot write run log in " + args.out_dir);

  if (method == "majority") warn_if_model_config(loaded);

  std::vector<uint64_t> seeds;
  for (int i = 0; i < args.seeds; ++i)
    seeds.push_back(cfg.seed + static_cast<uint64_t>(i));

  std::vector<double> final_test, final_val;
  std::vector<double> student_test, teacher_test;
  std::vector<int> best_iterations;
  std::string split_mode, schedule;
  double coverage = 0, overlap_rules = 0, overlap_student = 0;

  double best_seed_val = -std::numeric_limits<double>::infinity();
  std::optional<student::StudentModel> best_student;
  std::optional<teacher::RanTeacher> best_teacher;

  for (uint64_t seed : seeds) {
    selftrain::TrainConfig run_cfg = cfg;
    run_cfg.seed = seed;
    auto bundle = load_bundle(args, data.labels, run_cfg, seed);
    auto sink = [&](const selftrain::IterationRecord& rec) {
      run_log << record_to_json(rec, seed).dump() << "\n";
      run_log.flush();
    };

    selftrain::RunMetrics rm;
    if (method == "majority") {
      auto res = selftrain::run_majority(bundle, data.labels, data.compiled, run_cfg);
      rm = std::move(res.metrics);
      run_log << record_to_json(rm.iters[0], seed).dump() << "\n";
      run_log.flush();
    } else if (method == "labeled-only") {
      selftrain::TrainConfig lo_cfg = run_cfg;
      lo_cfg.max_iterations = 0;
      auto res = selftrain::run_astra(bundle, data.labels, data.compiled, lo_cfg, sink);
      rm = std::move(res.metrics);
      if (*rm.final_val > best_seed_val) {
        best_seed_val = *rm.final_val;
        best_student = std::move(res.student);
        best_teacher.reset();
      }
    } else if (method == "self-train") {
      auto res = selftrain::run_classic_selftrain(bundle, data.labels, run_cfg, sink);
      rm = std::move(res.metrics);
      if (*rm.final_val > best_seed_val) {
        best_seed_val = *rm.final_val;
        best_student = std::move(res.student);
        best_teacher.reset();
      }
    } else if (method == "astra") {
      auto res = selftrain::run_astra(bundle, data.labels, data.compiled, run_cfg, sink);
      rm = std::move(res.metrics);
      if (*rm.final_val > best_seed_val) {
        best_seed_val = *rm.final_val;
        best_student = std::move(res.student);
        best_teacher = std::move(res.teacher);
      }
    } else {
      throw_usage("unknown method '" + method +
                  "' (majority|labeled-only|self-train|astra)");
    }

    if (rm.final_test) final_test.push_back(*rm.final_test);
    if (rm.final_val) final_val.push_back(*rm.final_val);
    const auto& best_rec = rm.iters[static_cast<size_t>(rm.best_iteration)];
    if (best_rec.student_test) student_test.push_back(*best_rec.student_test);
    if (best_rec.teacher_test) teacher_test.push_back(*best_rec.teacher_test);
    best_iterations.push_back(rm.best_iteration);
    split_mode = rm.split_mode;
    schedule = rm.teacher_schedule;
    coverage = rm.coverage;
    overlap_rules = rm.overlap_rules;
    overlap_student = rm.overlap_with_student;
  }

  auto report = eval::MetricReport::from_values(cfg.metric, final_test);
  json summary;
  summary["method"] = method;
  summary["metric"] = cfg.metric;
  summary["split_mode"] = split_mode;
  summary["validation_model"] = cfg.validation_model;
  summary["teacher_schedule"] = schedule;
  summary["seeds"] = seeds;
  summary["best_iterations"] = best_iterations;
  summary["test"] = {{"per_seed", report.per_seed},
                     {"mean", report.mean},
                     {"std", report.stddev}};
  auto val_report = eval::MetricReport::from_values(cfg.metric, final_val);
  summary["validation"] = {{"per_seed", val_report.per_seed},
                           {"mean", val_report.mean},
                           {"std", val_report.stddev}};
  if (!student_test.empty()) {
    auto r = eval::MetricReport::from_values(cfg.metric, student_test);
    summary["student_test"] = {{"per_seed", r.per_seed}, {"mean", r.mean}, {"std", r.stddev}};
  }
  if (!teacher_test.empty()) {
    auto r = eval::MetricReport::from_values(cfg.metric, teacher_test);
    summary["teacher_test"] = {{"per_seed", r.per_seed}, {"mean", r.mean}, {"std", r.stddev}};
  }
  if (method != "majority") {
    summary["coverage"] = coverage;
    summary["overlap_rules"] = overlap_rules;
    summary["overlap_with_student"] = overlap_student;
  } else {
    summary["coverage"] = coverage;
    summary["overlap_rules"] = overlap_rules;
  }
  write_text(fs::path(args.out_dir) / "summary.json", summary.dump(2) + "\n");

  if (best_student)
    best_student->save_checkpoint(fs::path(args.out_dir) / "student.ckpt.json");
  if (best_teacher)
    best_teacher->save_checkpoint(fs::path(args.out_dir) / "teacher.ckpt.json");

  std::cout << "method " << method << ": " << cfg.metric << " mean "
            << report.mean << " std " << report.stddev << " over "
            << seeds.size() << " seed(s)\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& fractions_arg,
              int repeats) {
  auto loaded = load_config(args);
  auto& cfg = loaded.train;
  cfg.validate();
  auto data = load_data(args);

  std::vector<double> fractions;
  if (fractions_arg.empty()) {
    for (int i = 1; i <= 10; ++i) fractions.push_back(0.1 * i);  // decile grid
  } else {
    std::string token;
    std::istringstream in(fractions_arg);
    while (std::getline(in, token, ',')) {
      try {
        fractions.push_back(std::stod(token));
      } catch (const std::exception&) {
        throw_usage("sweep: bad fraction '" + token + "'");
      }
    }
  }
  for (double f : fractions) {
    if (!(f > 0.0) || f > 1.0) throw_usage("sweep: fractions must lie in (0, 1]");
  }

  auto bundle = load_bundle(args, data.labels, cfg, cfg.seed);
  auto result = eval::sparsity_sweep(bundle, data.labels, data.rule_specs,
                                     fractions, repeats, cfg, args.jobs);

  fs::create_directories(args.out_dir);
  write_config_snapshot(args.out_dir, args, cfg, "sweep");
  write_text(fs::path(args.out_dir) / "sweep.csv", eval::sweep_csv(result));
  json summary = json::array();
  for (const auto& s : result.summaries) {
    summary.push_back({{"fraction", s.fraction},
                       {"method", s.method},
                       {"metric", s.report.metric},
                       {"per_seed", s.report.per_seed},
                       {"mean", s.report.mean},
                       {"std", s.report.stddev}});
  }
  write_text(fs::path(args.out_dir) / "summary.json", summary.dump(2) + "\n");
  std::cout << "sweep: " << result.rows.size() << " rows over "
            << fractions.size() << " fraction(s)\n";
  return 0;
}

int cmd_synth(const std::string& out_dir, synth::SynthSpec spec, bool pool_mode) {
  auto data = synth::generate(spec);
  fs::path dir = out_dir;
  fs::create_directories(dir);

  json labels = json::array();
  for (const auto& name : data.labels.class_names) labels.push_back(name);
  write_text(dir / "labels.json", labels.dump(2) + "\n");

  json rules_doc = json::array();
  for (const auto& rule : data.rules) {
    rules_doc.push_back({{"name", rule.name},
                         {"kind", "keyword"},
                         {"pattern", rule.keywords},
                         {"label", data.labels.class_names[static_cast<size_t>(rule.label)]}});
  }
  write_text(dir / "rules.json", rules_doc.dump(2) + "\n");

  if (pool_mode) {
    // one labeled pool; run-time splits then draw D_L/val per seed
    std::vector<corpus::Instance> pool = data.bundle.labeled;
    for (const auto& inst : data.bundle.validation) pool.push_back(inst);
    for (auto inst : data.bundle.unlabeled) {
      auto gold = data.bundle.unlabeled_oracle.lookup(inst.id);
      if (gold) inst.gold_label = *gold;
      pool.push_back(std::move(inst));
    }
    corpus::write_jsonl(dir / "pool.jsonl", pool, data.labels);
  } else {
    corpus::write_jsonl(dir / "labeled.jsonl", data.bundle.labeled, data.labels);
    std::vector<corpus::Instance> unl = data.bundle.unlabeled;
    for (auto& inst : unl) {
      auto gold = data.bundle.unlabeled_oracle.lookup(inst.id);
      if (gold) inst.gold_label = *gold;  // oracle kept in-file; loader re-seals
    }
    corpus::write_jsonl(dir / "unlabeled.jsonl", unl, data.labels);
    corpus::write_jsonl(dir / "validation.jsonl", data.bundle.validation, data.labels);
  }
  corpus::write_jsonl(dir / "test.jsonl", data.bundle.test, data.labels);
  std::cout << "synthetic benchmark written to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"astra: weak-supervision self-training toolkit"};
  app.require_subcommand(1);

  CommonArgs stats_args, run_args, sweep_args;
  std::string method;
  std::string fractions_arg;
  int repeats = 3;

  auto* stats = app.add_subcommand("stats", "dataset and rule statistics");
  add_common(stats, stats_args, false);

  auto* run = app.add_subcommand("run", "train and evaluate one method");
  run->add_option("--method", method, "majority|labeled-only|self-train|astra")
      ->required();
  add_common(run, run_args, true);

  auto* sweep = app.add_subcommand("sweep", "rule-sparsity sweep");
  sweep->add_option("--fractions", fractions_arg,
                    "comma list, default 0.1..1.0 deciles");
  sweep->add_option("--repeats", repeats, "rule subsets per fraction");
  add_common(sweep, sweep_args, true);

  synth::SynthSpec synth_spec;
  std::string synth_out;
  bool synth_pool = false;
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic benchmark");
  synth_cmd->add_option("--out", synth_out, "output dataset dir")->required();
  synth_cmd->add_option("--classes", synth_spec.k, "number of classes");
  synth_cmd->add_option("--rules", synth_spec.n_rules, "number of keyword rules");
  synth_cmd->add_option("--labeled", synth_spec.n_labeled, "labeled count");
  synth_cmd->add_option("--unlabeled", synth_spec.n_unlabeled, "unlabeled count");
  synth_cmd->add_option("--validation", synth_spec.n_validation, "validation count");
  synth_cmd->add_option("--test", synth_spec.n_test, "test count");
  synth_cmd->add_option("--coverage", synth_spec.rule_coverage, "per-rule coverage");
  synth_cmd->add_option("--acc-lo", synth_spec.acc_lo, "min rule precision");
  synth_cmd->add_option("--acc-hi", synth_spec.acc_hi, "max rule precision");
  synth_cmd->add_option("--seed", synth_spec.seed, "generator seed");
  synth_cmd->add_flag("--pool", synth_pool, "write pool.jsonl instead of fixed splits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(stats)) return cmd_stats(stats_args);
    if (app.got_subcommand(run)) return cmd_run(method, run_args);
    if (app.got_subcommand(sweep)) return cmd_sweep(sweep_args, fractions_arg, repeats);
    if (app.got_subcommand(synth_cmd)) return cmd_synth(synth_out, synth_spec, synth_pool);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
