#include "vdd/pipeline.hpp"

#include "vdd/error.hpp"
#include "vdd/serialization.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace vdd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(Errc::Io, "cannot create directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
}

// Copy of the manifest whose entries carry absolute paths.
CorpusManifest absolute(const CorpusManifest& m) {
  CorpusManifest out = m;
  for (auto& e : out.entries) e.path = fs::absolute(m.resolve(e)).lexically_normal();
  out.base_dir.clear();
  return out;
}

CorpusManifest concat(const CorpusManifest& a, const CorpusManifest& b) {
  CorpusManifest out = a;
  out.entries.insert(out.entries.end(), b.entries.begin(), b.entries.end());
  return out;
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

CorpusManifest obtain_corpus(const RunConfig& config, const fs::path& run_dir, std::ostream& log) {
  const fs::path dir = run_dir / "corpus";
  log << "generating corpus: " << config.corpus.n_normal << " normal + " << config.corpus.n_pathol
      << " pathol in " << dir.string() << '\n';
  CorpusOptions opts;
  opts.rate_hz = config.corpus.rate_hz;
  gen_corpus(config.corpus.n_normal, config.corpus.n_pathol, config.seed, dir, opts);
  return load_manifest(dir / "manifest.csv");
}

json train_log_json(const TrainLog& log, double val_acc, const std::vector<double>& folds) {
  json j{{"train_loss", log.train_loss},
         {"validation_loss", log.validation_loss},
         {"best_epoch", log.best_epoch},
         {"validation_file_accuracy", val_acc}};
  if (!folds.empty()) j["kfold_mean_accuracy"] = folds;
  return j;
}

// Features are shared between detectors with the same front end.
std::string feature_key(const DetectorConfig& c) {
  return json{{"f", std::string(to_string(c.feature))}, {"s", c.snippet}, {"p", c.feature_params()}}.dump();
}

}  // namespace

RunConfig load_run_dir_config(const fs::path& run_dir) {
  const fs::path path = run_dir / "config.json";
  if (!fs::exists(path)) throw Error(Errc::FileNotFound, "not a run directory (no config.json): " + run_dir.string());
  return load_run_config(path);
}

TrainResult run_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  TrainResult result;
  std::optional<CorpusManifest> external;
  if (config.corpus.manifest) external = load_manifest(*config.corpus.manifest);
  result.run_dir = config.run_dir();
  ensure_dir(result.run_dir / "models");
  ensure_dir(result.run_dir / "splits");
  write_text(result.run_dir / "config.json", to_json(config).dump(2) + '\n');
  log << "run directory: " << result.run_dir.string() << '\n';

  const CorpusManifest corpus = absolute(external ? *external : obtain_corpus(config, result.run_dir, log));
  const DatasetSplit split = split_dataset(corpus, config.split);
  write_manifest(split.train, result.run_dir / "splits" / "train.csv");
  write_manifest(split.validation, result.run_dir / "splits" / "validation.csv");
  write_manifest(split.test, result.run_dir / "splits" / "test.csv");
  log << "split: " << split.train.entries.size() << " train, " << split.validation.entries.size()
      << " validation, " << split.test.entries.size() << " test files\n";

  std::map<std::string, std::pair<std::vector<FileFeatures>, std::vector<FileFeatures>>> feature_cache;
  const auto features_for = [&](const DetectorConfig& c) -> auto& {
    const std::string key = feature_key(c);
    auto it = feature_cache.find(key);
    if (it == feature_cache.end())
      it = feature_cache
               .emplace(key, std::pair{featurize(split.train, c, config.threads),
                                       featurize(split.validation, c, config.threads)})
               .first;
    return it->second;
  };

  EvalOptions eval_opts;
  eval_opts.tie = config.tie;
  eval_opts.threads = config.threads;

  // Detectors that own a CNN first, so heads can reuse them.
  std::vector<size_t> order;
  for (size_t i = 0; i < config.detectors.size(); ++i)
    if (config.detectors[i].share_cnn_with.empty()) order.push_back(i);
  for (size_t i = 0; i < config.detectors.size(); ++i)
    if (!config.detectors[i].share_cnn_with.empty()) order.push_back(i);

  std::map<std::string, Detector> trained;
  std::vector<TrainedModel> models(config.detectors.size());
  for (size_t i : order) {
    const DetectorEntry& entry = config.detectors[i];
    const std::string name = entry.config.display_name();
    auto& [train_f, val_f] = features_for(entry.config);
    TrainLog tlog;
    std::vector<double> fold_acc;
    Detector det;
    if (!entry.share_cnn_with.empty()) {
      log << "training " << name << " (SVM head on the CNN of " << entry.share_cnn_with << ")\n";
      det = with_svm_head(trained.at(entry.share_cnn_with), entry.config, train_f);
    } else if (entry.candidates.size() > 1 && config.kfold >= 2) {
      log << "training " << name << " (" << config.kfold << "-fold selection over " << entry.candidates.size()
          << " candidates)\n";
      std::vector<DetectorConfig> cands;
      for (const auto& tc : entry.candidates) {
        DetectorConfig c = entry.config;
        c.train = tc;
        cands.push_back(c);
      }
      std::vector<FileFeatures> all = train_f;
      all.insert(all.end(), val_f.begin(), val_f.end());
      SelectionResult sel =
          kfold_select(concat(split.train, split.validation), all, config.kfold, cands, config.seed, config.threads);
      fold_acc = sel.mean_fold_accuracy;
      log << "  selected candidate " << sel.best_index << " (mean fold accuracy "
          << fixed(fold_acc[sel.best_index]) << ")\n";
      det = std::move(sel.detector);
      det.config.name = entry.config.name;
    } else {
      DetectorConfig c = entry.config;
      if (entry.candidates.size() == 1) c.train = entry.candidates.front();
      log << "training " << name << '\n';
      det = train_detector(c, train_f, val_f, &tlog);
    }
    const EvalReport val = evaluate(det, split.validation, val_f, eval_opts);
    const fs::path path = result.run_dir / "models" / (name + ".vddm");
    save_detector(det, path);
    write_text(result.run_dir / "models" / (name + ".train.json"),
               train_log_json(tlog, val.file_accuracy, fold_acc).dump(2) + '\n');
    log << "  validation file accuracy " << fixed(val.file_accuracy) << ", snippet accuracy "
        << fixed(val.snippet_accuracy) << " -> " << path.string() << '\n';
    models[i] = {name, path, val.file_accuracy};
    trained.emplace(name, std::move(det));
  }
  result.models = std::move(models);
  return result;
}

ReportBundle run_attacks(const fs::path& run_dir, const AttackSelection& selection, int threads,
                         std::ostream& log) {
  for (const auto& name : selection.attacks)
    if (name != "fgsm" && name != "pgd" && name != "tone" && name != "pitch")
      throw Error(Errc::InvalidArgument, "unknown attack '" + name + "' (valid: fgsm, pgd, tone, pitch)");
  const RunConfig config = load_run_dir_config(run_dir);
  const std::vector<std::string> attacks = selection.attacks.empty() ? config.attacks.attacks : selection.attacks;
  if (attacks.empty()) throw Error(Errc::InvalidArgument, "no attacks selected");

  // Build and check every grid before any work starts.
  std::vector<std::pair<Scenario, std::vector<AttackConfig>>> plan;
  for (const auto& name : attacks) {
    std::vector<AttackConfig> grid = expand_grid(config.attacks, name, config.seed);
    if (grid.empty()) throw Error(Errc::InvalidArgument, "the " + name + " grid of the configuration is empty");
    const bool white = is_white_box(grid.front());
    const Scenario scenario =
        selection.scenario ? *selection.scenario : (white ? Scenario::White : config.attacks.black_box_scenario);
    for (const auto& a : grid) check_scenario(a, scenario);
    plan.emplace_back(scenario, std::move(grid));
  }

  std::vector<fs::path> model_paths = selection.models;
  if (model_paths.empty())
    for (const auto& d : config.detectors)
      model_paths.push_back(run_dir / "models" / (d.config.display_name() + ".vddm"));

  const CorpusManifest test = load_manifest(run_dir / "splits" / "test.csv");
  EvalOptions opts;
  opts.tie = config.tie;
  opts.threads = threads;

  ReportBundle bundle;
  json models_json = json::array();
  for (const auto& path : model_paths) {
    const Detector det = load_detector(path);
    const std::string name = det.config.display_name();
    log << "attacking " << name << '\n';
    const CleanRun clean = clean_run(det, test, opts);
    log << "  clean: file accuracy " << fixed(clean.report.file_accuracy) << ", TPR " << fixed(clean.report.tpr)
        << ", attacked set " << clean.attacked_files().size() << " files\n";
    std::vector<AttackOutcome> outcomes;
    for (const auto& [scenario, grid] : plan) {
      for (const auto& a : grid) {
        AttackOutcome o = run_attack(clean, a, scenario, opts);
        const auto [p1, p2] = attack_params(a);
        log << "  " << attack_name(a) << ' ' << p1 << (p2.empty() ? "" : " ") << p2 << " [" << to_string(scenario)
            << "]: TPR " << fixed(o.clean_tpr) << " -> " << fixed(o.attacked.tpr) << '\n';
        bundle.metrics.push_back(metrics_row(det, o));
        bundle.outcomes.emplace_back(name, o);
        outcomes.push_back(std::move(o));
      }
    }
    for (auto& row : boxplot_rows(det, clean, outcomes)) bundle.boxplots.push_back(std::move(row));
    models_json.push_back({{"name", name},
                           {"file", path.filename().generic_string()},
                           {"hybrid_gradient_surrogate", det.head.has_value()}});
  }

  bundle.run_manifest = json{{"tool_version", kToolVersion},
                             {"model_format_version", kModelFormatVersion},
                             {"config", to_json(config)},
                             {"config_hash", config_hash(config)},
                             {"attacks", attacks},
                             {"scenario_override",
                              selection.scenario ? json(std::string(to_string(*selection.scenario))) : json()},
                             {"models", models_json},
                             {"test_files", test.entries.size()},
                             {"load_peak_normalization", kLoadPeak},
                             {"tpr_positive_class", "normal"},
                             {"tie_break", config.tie == TieBreak::Pathol ? "pathol" : "normal"}};
  export_report(bundle, run_dir / "attack");
  return bundle;
}

void run_report(const fs::path& run_dir, std::ostream& out) {
  const fs::path metrics_path = run_dir / "attack" / "metrics.csv";
  if (!fs::exists(metrics_path))
    throw Error(Errc::FileNotFound, "no attack results in " + run_dir.string() + " (run the attack command first)");
  const std::vector<MetricsRow> rows = read_metrics_csv(metrics_path);
  if (rows.empty()) throw Error(Errc::InsufficientData, "metrics.csv has no rows: " + metrics_path.string());

  const fs::path dir = run_dir / "report";
  ensure_dir(dir);
  std::ostringstream tone, pitch, eps;
  tone << "detector,feature,scenario,frequency_hz,amplitude,clean_tpr,attacked_tpr\n";
  pitch << "detector,feature,scenario,steps,steps_per_octave,clean_tpr,attacked_tpr\n";
  eps << "detector,feature,attack,epsilon,iterations,clean_tpr,attacked_tpr\n";
  struct Worst {
    double clean = 0.0;
    double min_tpr = 2.0;
    std::string where;
  };
  std::vector<std::string> order;
  std::map<std::string, Worst> worst;
  for (const auto& r : rows) {
    const std::string tail = format_number(r.clean_tpr) + ',' + format_number(r.attacked_tpr) + '\n';
    const std::string head = r.detector + ',' + r.feature + ',';
    if (r.attack == "tone") tone << head << r.scenario << ',' << r.param1 << ',' << r.param2 << ',' << tail;
    else if (r.attack == "pitch") pitch << head << r.scenario << ',' << r.param1 << ',' << r.param2 << ',' << tail;
    else eps << head << r.attack << ',' << r.param1 << ',' << r.param2 << ',' << tail;
    if (!worst.count(r.detector)) order.push_back(r.detector);
    Worst& w = worst[r.detector];
    w.clean = r.clean_tpr;
    if (r.attacked_tpr < w.min_tpr) {
      w.min_tpr = r.attacked_tpr;
      w.where = r.attack + ' ' + r.param1 + (r.param2.empty() ? "" : " " + r.param2) + " [" + r.scenario + ']';
    }
  }
  write_text(dir / "fig_tone.csv", tone.str());
  write_text(dir / "fig_pitch.csv", pitch.str());
  write_text(dir / "fig_epsilon.csv", eps.str());
  const fs::path box = run_dir / "attack" / "boxplots.csv";
  if (fs::exists(box)) fs::copy_file(box, dir / "fig_boxplots.csv", fs::copy_options::overwrite_existing);

  std::ostringstream summary;
  summary << "detector                              clean_tpr  min_attacked_tpr  at\n";
  for (const auto& name : order) {
    const Worst& w = worst[name];
    char line[512];
    std::snprintf(line, sizeof line, "%-36s  %9.3f  %16.3f  %s\n", name.c_str(), w.clean, w.min_tpr, w.where.c_str());
    summary << line;
  }
  write_text(dir / "summary.txt", summary.str());
  out << summary.str() << "report written to " << dir.string() << '\n';
}

}  // namespace vdd
