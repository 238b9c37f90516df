#pragma once

#include "vdd/cnn.hpp"
#include "vdd/features.hpp"
#include "vdd/segmentation.hpp"
#include "vdd/svm.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vdd {

enum class ClassifierKind { Cnn, CnnSvmLinear, CnnSvmRbf };

std::string_view to_string(ClassifierKind kind);
/// "cnn", "cnn-svm-linear", "cnn-svm-rbf".
ClassifierKind parse_classifier_kind(std::string_view text);

/// Everything needed to build one detector from audio.
struct DetectorConfig {
  std::string name;
  FeatureKind feature = FeatureKind::MelSpec;
  SnippetSpec snippet = presets::kCnn;
  ClassifierKind classifier = ClassifierKind::Cnn;
  std::optional<FeatureParams> features;  // defaults_for(snippet.rate_hz) when unset
  CnnArchitecture architecture;           // input size is filled in from the features
  TrainConfig train;
  double svm_c = 1.0;
  double svm_gamma = 0.0;  // <= 0: scale heuristic
  int svm_epochs = 40;

  FeatureParams feature_params() const;
  /// "<feature>-<classifier>-<preset>" when `name` is empty.
  std::string display_name() const;
};

/// Per-row affine standardization (x - mean) / std.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // 1 / std

  static Standardizer fit_rows(std::span<const Eigen::MatrixXd> maps);
  static Standardizer fit_columns(const Eigen::MatrixXd& samples);  // one sample per row
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& map) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
};

/// Feature maps of every snippet of one file.
struct FileFeatures {
  std::vector<Eigen::MatrixXd> snippets;
  Label label = Label::Normal;
  bool padded = false;
};

/// Segments the clip and extracts one feature map per snippet.
FileFeatures compute_file_features(const AudioClip& clip, FeatureKind kind, const SnippetSpec& spec,
                                   const FeatureParams& params);

struct SnippetDecision {
  Label label;
  double score;  // higher means more pathological (CNN: P(pathol); SVM: decision value)
};

/// A trained detector: feature metadata, CNN, optional SVM head.
struct Detector {
  DetectorConfig config;
  FeatureParams feature_params;
  std::optional<Standardizer> input_norm;  // MFCC inputs only
  CnnModel cnn;
  std::optional<SvmModel> head;
  std::optional<Standardizer> embedding_norm;

  /// Model input for a raw feature map; rejects maps of the wrong kind or shape.
  Tensor input_tensor(const FeatureMap& map) const;
  Tensor input_tensor(const Eigen::MatrixXd& raw) const;

  SnippetDecision classify(const Tensor& input) const;
  /// Values below 0 / above 1 are valid only for MelSpec inputs.
  bool bounded_input() const { return config.feature == FeatureKind::MelSpec; }
};

/// Trains the CNN (and the SVM head on frozen embeddings, when configured).
Detector train_detector(const DetectorConfig& config, std::span<const FileFeatures> train,
                        std::span<const FileFeatures> validation = {}, TrainLog* log = nullptr);

/// Copy of `base` (its CNN frozen) with an SVM head of `config.classifier` kind
/// trained on the embeddings of `train`.
Detector with_svm_head(const Detector& base, const DetectorConfig& config, std::span<const FileFeatures> train);

inline constexpr uint32_t kModelFormatVersion = 1;

/// Versioned binary container: magic, version, JSON metadata, raw little-endian doubles.
void save_detector(const Detector& detector, const std::filesystem::path& path);
Detector load_detector(const std::filesystem::path& path);

/// Human-readable one-screen summary.
std::string detector_summary(const Detector& detector);

}  // namespace vdd
