#pragma once

#include "vdd/label.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace vdd {

enum class SvmKind { Linear, Rbf };

/// Binary SVM over embedding vectors. The positive side (+1) is the
/// pathological class; a decision value of exactly 0 counts as positive.
struct SvmModel {
  SvmKind kind = SvmKind::Linear;
  double C = 1.0;
  double bias = 0.0;
  // Linear
  Eigen::VectorXd weights;
  // Rbf
  double gamma = 1.0;
  Eigen::MatrixXd support_vectors;  // one vector per row
  Eigen::VectorXd dual_coef;        // y_i * alpha_i, each in [-C, C]
  std::vector<Eigen::Index> support_indices;

  Eigen::Index dimension() const;
};

struct LinearSvmConfig {
  double C = 1.0;
  int epochs = 40;
  uint64_t seed = 1;
};

struct RbfSvmConfig {
  double C = 1.0;
  double gamma = 0.0;  // <= 0 selects 1 / (dim * var(X))
  double tolerance = 1e-3;
  long max_iterations = 200000;
};

/// Hinge-loss (Pegasos-style) stochastic subgradient descent with a constant
/// bias feature. Rows of `x` are examples.
SvmModel train_svm_linear(const Eigen::MatrixXd& x, std::span<const Label> labels,
                          const LinearSvmConfig& config = {});

/// SMO with maximal-violating-pair selection until the KKT gap is below
/// `tolerance` or the iteration cap is hit.
SvmModel train_svm_rbf(const Eigen::MatrixXd& x, std::span<const Label> labels,
                       const RbfSvmConfig& config = {});

/// The "scale" gamma heuristic 1 / (dim * var(x)).
double scale_gamma(const Eigen::MatrixXd& x);

double svm_decision(const SvmModel& model, const Eigen::VectorXd& embedding);
Label svm_predict(const SvmModel& model, const Eigen::VectorXd& embedding);

}  // namespace vdd
