#pragma once

#include "vdd/label.hpp"
#include "vdd/tensor.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace vdd {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Stride-1 valid 2-D convolution. `kernels` is out_ch x (in_ch * kh * kw),
/// i.e. the (out, in, kh, kw) kernel tensor flattened row-major.
struct ConvLayer {
  int in_channels = 1;
  int out_channels = 1;
  int kernel_h = 3;
  int kernel_w = 3;
  Eigen::MatrixXd kernels;
  Eigen::VectorXd bias;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
};

struct CnnArchitecture {
  int input_rows = 0;
  int input_cols = 0;
  std::array<int, 2> channels{8, 16};
  int kernel = 3;
  std::vector<int> hidden{64};  // widths of the hidden dense layers; output layer has 2 units
};

/// conv -> ReLU -> conv -> ReLU -> 2x2 max-pool -> dense (ReLU) ... -> dense -> 2 logits.
struct CnnModel {
  int input_rows = 0;
  int input_cols = 0;
  std::array<ConvLayer, 2> conv;
  std::vector<DenseLayer> dense;
  // Subtracted from every input value before the first convolution. Fixed, not
  // trained; centers inputs that live in [0,1].
  double input_offset = 0.0;

  static constexpr int kPool = 2;
  static constexpr int kClasses = 2;

  /// Zero-initialized model for the architecture.
  static CnnModel zeros(const CnnArchitecture& arch);

  std::vector<Eigen::Index> input_shape() const { return {1, input_rows, input_cols}; }
  /// Spatial size after each conv layer and after pooling.
  std::pair<int, int> conv_output(int layer) const;
  std::pair<int, int> pooled_output() const;
  int flat_features() const;
  int embedding_size() const;

  Eigen::Index parameter_count() const;
  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::VectorXd& flat);

  /// y += a * x over every parameter; shapes must match.
  void axpy(double a, const CnnModel& x);
  /// Throws ShapeMismatch when layer shapes do not chain to 2 logits.
  void validate() const;
  bool all_finite() const;
};

/// Activations recorded by the forward pass for the backward pass.
struct CnnCache {
  const CnnModel* model = nullptr;
  RowMatrixXd input;                // 1 x (rows*cols)
  std::array<RowMatrixXd, 2> cols;  // im2col, (in_ch*kh*kw) x (out_h*out_w)
  std::array<RowMatrixXd, 2> conv_pre;
  std::array<RowMatrixXd, 2> conv_act;  // channels x (h*w)
  RowMatrixXd pooled;
  std::vector<Eigen::Index> pool_argmax;  // flat index into conv_act[1] per pooled entry
  std::vector<Eigen::VectorXd> dense_in;  // input to each dense layer
  std::vector<Eigen::VectorXd> dense_pre;
};

struct CnnForward {
  Eigen::Vector2d logits;
  CnnCache cache;
};

struct CnnGradients {
  CnnModel params;  // same shapes as the model
  Tensor input;
  double loss = 0.0;
};

Eigen::Vector2d softmax(const Eigen::Vector2d& logits);
double cross_entropy(const Eigen::Vector2d& logits, Label true_label);

CnnForward cnn_forward(const CnnModel& model, const Tensor& input);

/// Softmax cross-entropy gradients w.r.t. every parameter and the input.
/// With `param_grads == false` only the input gradient is produced.
CnnGradients cnn_backward(const CnnModel& model, const CnnCache& cache, Label true_label,
                          bool param_grads = true);

/// Post-ReLU activations of the last hidden dense layer.
Eigen::VectorXd extract_embedding(const CnnModel& model, const Tensor& input);

/// Probability of the pathological class.
double pathol_probability(const CnnModel& model, const Tensor& input);

struct TrainConfig {
  double learning_rate = 0.03;
  int epochs = 12;
  int batch_size = 16;
  double weight_decay = 1e-4;
  uint64_t seed = 1;
};

struct LabeledTensor {
  Tensor input;
  Label label;
};

struct TrainLog {
  std::vector<double> train_loss;       // per epoch
  std::vector<double> validation_loss;  // per epoch, empty without validation data
  int best_epoch = -1;
};

/// He-uniform initialization driven by `seed`.
CnnModel init_cnn(const CnnArchitecture& arch, uint64_t seed);

/// Mini-batch SGD with seeded shuffling. With a validation set the model with the
/// lowest validation loss across epochs is returned.
CnnModel train_cnn(std::span<const LabeledTensor> data, const CnnArchitecture& arch,
                   const TrainConfig& config, std::span<const LabeledTensor> validation = {},
                   TrainLog* log = nullptr);

/// Continues training from `model` (no re-initialization).
CnnModel train_cnn_from(CnnModel model, std::span<const LabeledTensor> data, const TrainConfig& config,
                        std::span<const LabeledTensor> validation = {}, TrainLog* log = nullptr);

double mean_loss(const CnnModel& model, std::span<const LabeledTensor> data);

}  // namespace vdd
