#pragma once

#include "vdd/attacks.hpp"
#include "vdd/corpus.hpp"
#include "vdd/detector.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vdd {

// ---------------------------------------------------------------------------
// Splits and model selection

struct SplitSpec {
  double train_frac = 0.70;
  double val_frac = 0.10;
  double test_frac = 0.20;
  uint64_t seed = 1;
  bool stratified = true;
};

struct DatasetSplit {
  CorpusManifest train;
  CorpusManifest validation;
  CorpusManifest test;
};

/// Stratified, seeded split. Files sharing a non-empty subject_id stay together.
DatasetSplit split_dataset(const CorpusManifest& manifest, const SplitSpec& spec);

/// Stratified, subject-grouped fold index (0..k-1) for every entry.
std::vector<int> kfold_assignment(const CorpusManifest& manifest, int k, uint64_t seed);

/// Loads and featurizes every file of the manifest for a detector configuration.
std::vector<FileFeatures> featurize(const CorpusManifest& manifest, const DetectorConfig& config, int threads = 1);

struct SelectionResult {
  size_t best_index = 0;
  std::vector<double> mean_fold_accuracy;  // per candidate
  Detector detector;                       // best candidate retrained on all data
};

/// k-fold cross-validation over candidate configurations (which must share feature
/// kind and snippet spec). Ties go to the lower index.
SelectionResult kfold_select(const CorpusManifest& manifest, std::span<const FileFeatures> features, int k,
                             std::span<const DetectorConfig> candidates, uint64_t seed, int threads = 1);

// ---------------------------------------------------------------------------
// Evaluation

struct FileRecord {
  std::string path;
  Label truth = Label::Normal;
  Label predicted = Label::Normal;
  double vote_fraction = 0.0;  // fraction of snippets voting pathological
  double mean_score = 0.0;
  std::vector<Label> snippet_labels;
  std::vector<double> snippet_scores;
};

struct EvalReport {
  double snippet_accuracy = 0.0;
  double file_accuracy = 0.0;
  double tpr = 0.0;  // positive class: normal
  std::vector<FileRecord> per_file;
  std::vector<double> per_snippet_scores;
};

struct EvalOptions {
  TieBreak tie = TieBreak::Pathol;
  Label positive = Label::Normal;
  int threads = 1;
};

/// Fraction of files whose truth is `positive` that are predicted `positive`
/// (0 when there are none).
double true_positive_rate(std::span<const FileRecord> files, Label positive = Label::Normal);

/// Builds a report from per-snippet decisions already stored in `files`.
EvalReport summarize(std::vector<FileRecord> files, const EvalOptions& options = {});

/// Clean evaluation of a detector on precomputed features (paths label the records).
EvalReport evaluate(const Detector& detector, const CorpusManifest& manifest, std::span<const FileFeatures> features,
                    const EvalOptions& options = {});
/// Loads, featurizes and evaluates the files.
EvalReport evaluate(const Detector& detector, const CorpusManifest& manifest, const EvalOptions& options = {});

// ---------------------------------------------------------------------------
// Attack experiments

enum class Scenario { White, BlackFile, BlackSnippet };

std::string_view to_string(Scenario s);
/// "white", "black-file", "black-snippet".
Scenario parse_scenario(std::string_view text);
/// Throws ScenarioMismatch when the attack cannot run in the scenario.
void check_scenario(const AttackConfig& attack, Scenario scenario);

/// Clean run that attack experiments start from.
struct CleanRun {
  const Detector* detector = nullptr;
  CorpusManifest manifest;
  std::vector<AudioClip> clips;  // loaded audio, manifest order
  std::vector<FileFeatures> features;
  EvalReport report;

  /// Indices of correctly classified normal files.
  std::vector<size_t> attacked_files() const;
};

CleanRun clean_run(const Detector& detector, const CorpusManifest& manifest, const EvalOptions& options = {});

struct AttackOutcome {
  AttackConfig attack;
  Scenario scenario = Scenario::White;
  EvalReport attacked;      // over the attacked set only
  EvalReport full;          // whole evaluated set, attacked files replaced
  double clean_tpr = 0.0;   // clean TPR over every normal file
  double mean_linf = 0.0;   // white-box: mean feature-domain L-inf per attacked snippet
  double max_linf = 0.0;
  double input_range = 0.0; // white-box: mean (max - min) of attacked clean inputs
};

AttackOutcome run_attack(const CleanRun& clean, const AttackConfig& attack, Scenario scenario,
                         const EvalOptions& options = {});

std::vector<AttackOutcome> run_attack_experiment(const CleanRun& clean, std::span<const AttackConfig> grid,
                                                 Scenario scenario, const EvalOptions& options = {});

// ---------------------------------------------------------------------------
// Statistics and export

struct BoxplotStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::vector<double> outliers;
};

/// Linear-interpolation quantile at position (n - 1) * p of the sorted data.
double quantile(std::vector<double> data, double p);

/// Whiskers reach the most extreme data within 1.5 IQR of the quartiles, but never
/// end inside the box.
BoxplotStats boxplot_stats(std::span<const double> scores);

struct MetricsRow {
  std::string detector;
  std::string feature;
  std::string snippet_preset;
  std::string attack;
  std::string param1;
  std::string param2;
  std::string scenario;
  double clean_tpr = 0.0;
  double attacked_tpr = 0.0;
  double snippet_acc = 0.0;
  double file_acc = 0.0;
};

MetricsRow metrics_row(const Detector& detector, const AttackOutcome& outcome);
/// (param1, param2) strings for an attack.
std::pair<std::string, std::string> attack_params(const AttackConfig& attack);

struct BoxplotRow {
  std::string group;
  BoxplotStats stats;
  size_t n = 0;
};

/// "clean-normal" / "clean-pathol" groups from correctly classified files plus
/// one group per attack outcome.
std::vector<BoxplotRow> boxplot_rows(const Detector& detector, const CleanRun& clean,
                                     std::span<const AttackOutcome> outcomes);

std::string format_number(double v);

void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);
void write_boxplot_csv(std::span<const BoxplotRow> rows, const std::filesystem::path& path);

/// Everything a run exports.
struct ReportBundle {
  std::vector<MetricsRow> metrics;
  std::vector<BoxplotRow> boxplots;
  std::vector<std::pair<std::string, AttackOutcome>> outcomes;  // detector name, outcome
  nlohmann::json run_manifest;
};

/// Writes metrics.csv, boxplots.csv, files.csv, perturbation.csv and run_manifest.json.
void export_report(const ReportBundle& bundle, const std::filesystem::path& out_dir);

}  // namespace vdd
