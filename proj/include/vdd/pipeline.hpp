#pragma once

#include "vdd/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace vdd {

// Run directory layout (all under RunConfig::run_dir()):
//   config.json            resolved configuration
//   corpus/                generated corpus when no manifest is configured
//   splits/{train,validation,test}.csv
//   models/<detector>.vddm + <detector>.train.json
//   attack/                export_report output
//   report/                per-figure CSVs and summary.txt

struct TrainedModel {
  std::string name;
  std::filesystem::path path;
  double validation_file_accuracy = 0.0;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::vector<TrainedModel> models;
};

/// Splits the corpus, trains every configured detector and saves the models.
TrainResult run_train(const RunConfig& config, std::ostream& log);

struct AttackSelection {
  std::vector<std::string> attacks;  // empty: the config's attack list
  std::optional<Scenario> scenario;  // unset: white for fgsm/pgd, the config's black-box scenario otherwise
  std::vector<std::filesystem::path> models;  // empty: every model of the run
};

/// Runs the attack grids against the test split and writes the report files.
/// Throws ScenarioMismatch when a selected attack cannot run in the requested scenario.
ReportBundle run_attacks(const std::filesystem::path& run_dir, const AttackSelection& selection, int threads,
                         std::ostream& log);

/// Turns attack/metrics.csv into per-figure CSVs and a text summary under report/.
void run_report(const std::filesystem::path& run_dir, std::ostream& out);

/// Config stored in a run directory by run_train.
RunConfig load_run_dir_config(const std::filesystem::path& run_dir);

}  // namespace vdd
