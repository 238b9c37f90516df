#pragma once

#include "vdd/attacks.hpp"
#include "vdd/detector.hpp"
#include "vdd/eval.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vdd {

struct CorpusSection {
  std::optional<std::filesystem::path> manifest;  // external corpus; otherwise generated
  int n_normal = 100;
  int n_pathol = 100;
  int rate_hz = 25000;
};

struct DetectorEntry {
  DetectorConfig config;
  std::vector<TrainConfig> candidates;  // k-fold candidates; empty means {config.train}
  std::string share_cnn_with;           // reuse another detector's CNN, train only the SVM head
};

/// Attack grids; the defaults are the study's grids.
struct AttackGrid {
  std::vector<std::string> attacks{"fgsm", "pgd", "tone", "pitch"};
  std::vector<double> fgsm_epsilons{0.001, 0.01, 0.1};
  std::vector<double> pgd_epsilons{0.001, 0.01, 0.1};
  int pgd_iterations = 10;
  double pgd_step_ratio = 0.25;
  bool pgd_random_start = false;
  std::vector<double> tone_freqs_hz{50, 75, 100, 125, 150};
  std::vector<double> tone_amplitudes{0.2, 0.3, 0.4, 0.8, 0.9};
  double tone_phase_rad = 0.0;
  std::vector<int> pitch_steps{-1, -2, -3, -4, -5};
  int steps_per_octave = 12;
  Scenario black_box_scenario = Scenario::BlackFile;
};

/// Expands one attack family ("fgsm", "pgd", "tone", "pitch") of the grid.
std::vector<AttackConfig> expand_grid(const AttackGrid& grid, const std::string& attack, uint64_t seed);

struct RunConfig {
  uint64_t seed = 7;
  CorpusSection corpus;
  SplitSpec split;
  int kfold = 5;
  std::vector<DetectorEntry> detectors;
  AttackGrid attacks;
  std::filesystem::path output_root = "runs";
  int threads = 1;
  TieBreak tie = TieBreak::Pathol;

  /// Throws InvalidArgument on inconsistent settings (unknown share target, bad grid, ...).
  void validate() const;
  /// Directory named after the configuration hash under output_root.
  std::filesystem::path run_dir() const;
};

/// The study's default experiment: eight detectors (mel/MFCC x four classifier setups).
RunConfig default_run_config();
std::vector<DetectorEntry> default_detectors(uint64_t seed);

/// Parses a JSON config; missing keys keep their defaults.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// 16 hex digits, FNV-1a over the canonical JSON of the config.
std::string config_hash(const RunConfig& config);

}  // namespace vdd
