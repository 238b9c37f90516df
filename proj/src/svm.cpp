#include "vdd/svm.hpp"

#include "vdd/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>

namespace vdd {

namespace {

double sign_of(Label l) { return l == Label::Pathol ? 1.0 : -1.0; }

void check_training_set(const Eigen::MatrixXd& x, std::span<const Label> labels, const char* who) {
  if (x.rows() != static_cast<Eigen::Index>(labels.size()))
    throw Error(Errc::ShapeMismatch, std::string(who) + ": one label per row required");
  const auto pos = std::count(labels.begin(), labels.end(), Label::Pathol);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size()))
    throw Error(Errc::InsufficientData, std::string(who) + ": training data must contain both classes");
  if (!x.allFinite()) throw Error(Errc::NonFinite, std::string(who) + ": non-finite features");
}

// Kernel rows computed on demand with a bounded FIFO cache.
class KernelRows {
 public:
  KernelRows(const Eigen::MatrixXd& x, double gamma)
      : x_(x), gamma_(gamma), norms_(x.rowwise().squaredNorm()) {
    const double bytes = static_cast<double>(x.rows()) * sizeof(double);
    capacity_ = static_cast<size_t>(std::clamp(256.0 * 1024 * 1024 / bytes, 2.0, static_cast<double>(x.rows())));
  }

  const Eigen::VectorXd& row(Eigen::Index i) {
    if (auto it = rows_.find(i); it != rows_.end()) return it->second;
    if (rows_.size() >= capacity_) {
      rows_.erase(order_.front());
      order_.pop_front();
    }
    Eigen::VectorXd d = (norms_.array() + norms_[i]).matrix() - 2.0 * (x_ * x_.row(i).transpose());
    Eigen::VectorXd k = (-gamma_ * d.array().max(0.0)).exp();
    order_.push_back(i);
    return rows_.emplace(i, std::move(k)).first->second;
  }

 private:
  const Eigen::MatrixXd& x_;
  double gamma_;
  Eigen::VectorXd norms_;
  size_t capacity_;
  std::unordered_map<Eigen::Index, Eigen::VectorXd> rows_;
  std::deque<Eigen::Index> order_;
};

}  // namespace

Eigen::Index SvmModel::dimension() const {
  return kind == SvmKind::Linear ? weights.size() : support_vectors.cols();
}

double scale_gamma(const Eigen::MatrixXd& x) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  return var > 0.0 ? 1.0 / (static_cast<double>(x.cols()) * var) : 1.0;
}

SvmModel train_svm_linear(const Eigen::MatrixXd& x, std::span<const Label> labels, const LinearSvmConfig& config) {
  check_training_set(x, labels, "train_svm_linear");
  if (!(config.C > 0.0) || config.epochs <= 0)
    throw Error(Errc::InvalidArgument, "train_svm_linear: C and epochs must be positive");
  const Eigen::Index n = x.rows(), d = x.cols();
  const double lambda = 1.0 / (config.C * static_cast<double>(n));

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  long t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double y = sign_of(labels[static_cast<size_t>(i)]);
      const double margin = y * (x.row(i).dot(w) + b);
      w *= 1.0 - eta * lambda;
      b *= 1.0 - eta * lambda;
      if (margin < 1.0) {
        w += (eta * y) * x.row(i).transpose();
        b += eta * y;
      }
    }
  }
  SvmModel m;
  m.kind = SvmKind::Linear;
  m.C = config.C;
  m.weights = w;
  m.bias = b;
  return m;
}

SvmModel train_svm_rbf(const Eigen::MatrixXd& x, std::span<const Label> labels, const RbfSvmConfig& config) {
  check_training_set(x, labels, "train_svm_rbf");
  if (!(config.C > 0.0) || !(config.tolerance > 0.0))
    throw Error(Errc::InvalidArgument, "train_svm_rbf: C and tolerance must be positive");
  const Eigen::Index n = x.rows();
  const double gamma = config.gamma > 0.0 ? config.gamma : scale_gamma(x);
  const double C = config.C;

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = sign_of(labels[static_cast<size_t>(i)]);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);  // Q alpha - e
  KernelRows kernel(x, gamma);

  const auto in_up = [&](Eigen::Index t) { return (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0); };
  const auto in_low = [&](Eigen::Index t) { return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C); };

  for (long iter = 0; iter < config.max_iterations; ++iter) {
    Eigen::Index i = -1, j = -1;
    double g_max = -std::numeric_limits<double>::infinity();
    double g_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      const double v = -y[t] * grad[t];
      if (in_up(t) && v > g_max) {
        g_max = v;
        i = t;
      }
      if (in_low(t) && v < g_min) {
        g_min = v;
        j = t;
      }
    }
    if (i < 0 || j < 0 || g_max - g_min < config.tolerance) break;

    const Eigen::VectorXd& ki = kernel.row(i);
    const Eigen::VectorXd& kj = kernel.row(j);
    const double old_ai = alpha[i], old_aj = alpha[j];
    double quad = ki[i] + kj[j] - 2.0 * ki[j];
    if (quad <= 0.0) quad = 1e-12;

    // Two-variable subproblem along y_i d_i + y_j d_j = 0 (as in libsvm).
    if (y[i] != y[j]) {
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
      }
      if (diff > 0) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
      } else {
        if (alpha[j] > C) { alpha[j] = C; alpha[i] = C + diff; }
      }
    } else {
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
      } else {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
      }
      if (sum > C) {
        if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
      }
    }
    const double di = alpha[i] - old_ai, dj = alpha[j] - old_aj;
    // Q(:, t) = y_t * y .* K(:, t)
    grad.array() += y.array() * (y[i] * di * ki.array() + y[j] * dj * kj.array());
  }

  // Bias from free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  int n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] > 0.0 && alpha[t] < C) {
      sum_free += yg;
      ++n_free;
    } else if ((alpha[t] >= C && y[t] < 0) || (alpha[t] <= 0.0 && y[t] > 0)) {
      ub = std::min(ub, yg);
    } else {
      lb = std::max(lb, yg);
    }
  }
  const double rho = n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);

  SvmModel m;
  m.kind = SvmKind::Rbf;
  m.C = C;
  m.gamma = gamma;
  m.bias = -rho;
  for (Eigen::Index t = 0; t < n; ++t)
    if (alpha[t] > 0.0) m.support_indices.push_back(t);
  const auto n_sv = static_cast<Eigen::Index>(m.support_indices.size());
  m.support_vectors.resize(n_sv, x.cols());
  m.dual_coef.resize(n_sv);
  for (Eigen::Index s = 0; s < n_sv; ++s) {
    const Eigen::Index t = m.support_indices[static_cast<size_t>(s)];
    m.support_vectors.row(s) = x.row(t);
    m.dual_coef[s] = y[t] * alpha[t];
  }
  return m;
}

double svm_decision(const SvmModel& model, const Eigen::VectorXd& embedding) {
  if (embedding.size() != model.dimension())
    throw Error(Errc::ShapeMismatch, "svm_decision: embedding has dimension " + std::to_string(embedding.size()) +
                                         ", model expects " + std::to_string(model.dimension()));
  if (model.kind == SvmKind::Linear) return model.weights.dot(embedding) + model.bias;
  if (model.support_vectors.rows() == 0) return model.bias;
  const Eigen::VectorXd d2 = (model.support_vectors.rowwise() - embedding.transpose()).rowwise().squaredNorm();
  return model.dual_coef.dot((-model.gamma * d2.array()).exp().matrix()) + model.bias;
}

Label svm_predict(const SvmModel& model, const Eigen::VectorXd& embedding) {
  return svm_decision(model, embedding) >= 0.0 ? Label::Pathol : Label::Normal;
}

}  // namespace vdd
