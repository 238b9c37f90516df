// vdd: corpus generation, training, attack sweeps and report export.

#include "vdd/config.hpp"
#include "vdd/error.hpp"
#include "vdd/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

int exit_code(vdd::Errc code) {
  switch (code) {
    case vdd::Errc::InvalidArgument:
    case vdd::Errc::ScenarioMismatch:
      return kUsage;
    case vdd::Errc::NonFinite:
      return kInternal;
    default:
      return kData;
  }
}

// Options shared by train and attack: where the config comes from and what overrides it.
struct RunOptions {
  std::string config_path;
  std::string manifest;
  std::optional<uint64_t> seed;
  std::string out_root;
  int threads = 1;
  std::string feature;
  std::string preset;
  std::string classifier;
  std::optional<int> epochs;
  std::optional<int> kfold;

  void add_to(CLI::App* app, bool detector_flags) {
    app->add_option("--config", config_path, "JSON run configuration (defaults: the study's grids)")
        ->check(CLI::ExistingFile);
    app->add_option("--manifest", manifest, "corpus manifest CSV (otherwise a corpus is generated)");
    app->add_option("--seed", seed, "global seed");
    app->add_option("--out-root", out_root, "output root (also VDD_OUTPUT_ROOT)");
    app->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    if (!detector_flags) return;
    app->add_option("--feature", feature, "train a single detector with this feature: melspec | mfcc");
    app->add_option("--preset", preset, "snippet preset of the single detector: mobile | cnn");
    app->add_option("--classifier", classifier, "cnn | cnn-svm-linear | cnn-svm-rbf");
    app->add_option("--epochs", epochs, "CNN training epochs")->check(CLI::PositiveNumber);
    app->add_option("--kfold", kfold, "folds for candidate selection (0 disables)");
  }

  // Flags win over the config file, the environment wins over the file's output root.
  vdd::RunConfig resolve() const {
    vdd::RunConfig c = config_path.empty() ? vdd::default_run_config() : vdd::load_run_config(config_path);
    if (seed) {
      c.seed = *seed;
      c.split.seed = *seed;
      for (auto& d : c.detectors) {
        d.config.train.seed = *seed;
        for (auto& t : d.candidates) t.seed = *seed;
      }
    }
    if (!manifest.empty()) c.corpus.manifest = fs::absolute(manifest).lexically_normal();
    if (const char* env = std::getenv("VDD_OUTPUT_ROOT"); env && *env) c.output_root = env;
    if (!out_root.empty()) c.output_root = out_root;
    c.threads = threads;
    if (!feature.empty() || !preset.empty() || !classifier.empty()) {
      vdd::DetectorEntry e;
      e.config.feature = vdd::parse_feature_kind(feature.empty() ? "melspec" : feature);
      e.config.snippet = vdd::parse_preset(preset.empty() ? "cnn" : preset);
      e.config.classifier = vdd::parse_classifier_kind(classifier.empty() ? "cnn" : classifier);
      e.config.train.seed = c.seed;
      c.detectors = {e};
    }
    if (epochs)
      for (auto& d : c.detectors) {
        d.config.train.epochs = *epochs;
        for (auto& t : d.candidates) t.epochs = *epochs;
      }
    if (kfold) c.kfold = *kfold;
    c.validate();
    return c;
  }
};

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    size_t start = 0;
    while (start <= item.size()) {
      const size_t comma = item.find(',', start);
      const std::string part = item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!part.empty()) out.push_back(part);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial robustness study of voice disorder detectors"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic sustained-vowel corpus");
  int n_normal = 100, n_pathol = 100, rate = 25000;
  uint64_t gen_seed = 7;
  std::string gen_out;
  gen->add_option("--normal", n_normal, "normal files")->check(CLI::PositiveNumber);
  gen->add_option("--pathol", n_pathol, "pathological files")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "seed");
  gen->add_option("--rate", rate, "sample rate in Hz")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "split the corpus and train the configured detectors");
  RunOptions train_opts;
  train_opts.add_to(train, true);

  // attack
  auto* attack = app.add_subcommand("attack", "run attack grids against trained detectors");
  RunOptions attack_opts;
  attack_opts.add_to(attack, true);
  std::string attack_run, scenario;
  std::vector<std::string> attack_names, model_paths;
  attack->add_option("--run", attack_run, "run directory written by train")->check(CLI::ExistingDirectory);
  attack->add_option("--attack", attack_names, "fgsm, pgd, tone, pitch (repeatable or comma separated)");
  attack->add_option("--scenario", scenario, "white | black-file | black-snippet");
  attack->add_option("--model", model_paths, "model file(s) to attack instead of every model of the run")
      ->check(CLI::ExistingFile);

  // report
  auto* report = app.add_subcommand("report", "export per-figure CSVs and a summary from attack results");
  RunOptions report_opts;
  report_opts.add_to(report, true);
  std::string report_run;
  report->add_option("--run", report_run, "run directory")->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) {
      vdd::CorpusOptions opts;
      opts.rate_hz = rate;
      const auto m = vdd::gen_corpus(n_normal, n_pathol, gen_seed, gen_out, opts);
      std::cout << "manifest: " << (fs::path(gen_out) / "manifest.csv").string() << '\n'
                << "normal: " << m.count(vdd::Label::Normal) << '\n'
                << "pathol: " << m.count(vdd::Label::Pathol) << '\n';
      return kOk;
    }
    if (train->parsed()) {
      const vdd::RunConfig config = train_opts.resolve();
      const vdd::TrainResult r = vdd::run_train(config, std::cout);
      std::cout << "trained " << r.models.size() << " detector(s); run directory " << r.run_dir.string() << '\n';
      return kOk;
    }
    if (attack->parsed()) {
      const fs::path run = attack_run.empty() ? attack_opts.resolve().run_dir() : fs::path(attack_run);
      vdd::AttackSelection sel;
      sel.attacks = split_list(attack_names);
      if (!scenario.empty()) sel.scenario = vdd::parse_scenario(scenario);
      for (const auto& m : model_paths) sel.models.emplace_back(m);
      const vdd::ReportBundle bundle = vdd::run_attacks(run, sel, attack_opts.threads, std::cout);
      std::cout << "\ndetector,attack,param1,param2,scenario,clean_tpr,attacked_tpr\n";
      for (const auto& r : bundle.metrics)
        std::cout << r.detector << ',' << r.attack << ',' << r.param1 << ',' << r.param2 << ',' << r.scenario << ','
                  << vdd::format_number(r.clean_tpr) << ',' << vdd::format_number(r.attacked_tpr) << '\n';
      std::cout << "results written to " << (run / "attack").string() << '\n';
      return kOk;
    }
    if (report->parsed()) {
      const fs::path run = report_run.empty() ? report_opts.resolve().run_dir() : fs::path(report_run);
      vdd::run_report(run, std::cout);
      return kOk;
    }
  } catch (const vdd::Error& e) {
    std::cerr << "error [" << vdd::errc_name(e.code()) << "]: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}
