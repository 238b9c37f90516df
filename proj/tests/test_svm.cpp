#include "vdd/error.hpp"
#include "vdd/svm.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace vdd;

namespace {

double accuracy(const SvmModel& m, const Eigen::MatrixXd& x, const std::vector<Label>& y) {
  double ok = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) ok += svm_predict(m, x.row(i).transpose()) == y[static_cast<size_t>(i)];
  return ok / static_cast<double>(x.rows());
}

void xor_data(Eigen::MatrixXd& x, std::vector<Label>& y) {
  std::mt19937 rng(2);
  std::normal_distribution<double> n(0.0, 0.1);
  x.resize(40, 2);
  y.clear();
  for (int i = 0; i < 40; ++i) {
    const int a = (i / 2) % 2, b = i % 2;
    x(i, 0) = (a ? 1.0 : -1.0) + n(rng);
    x(i, 1) = (b ? 1.0 : -1.0) + n(rng);
    y.push_back(a == b ? Label::Normal : Label::Pathol);
  }
}

// Best accuracy of any line, by exhaustive search over directions and offsets.
double best_linear_accuracy(const Eigen::MatrixXd& x, const std::vector<Label>& y) {
  double best = 0.0;
  for (int d = 0; d < 360; ++d) {
    const double th = d * std::numbers::pi / 180.0;
    const Eigen::Vector2d w(std::cos(th), std::sin(th));
    const Eigen::VectorXd proj = x * w;
    for (Eigen::Index k = -1; k < proj.size(); ++k) {
      const double b = k < 0 ? -proj.minCoeff() + 1.0 : -proj[k] + 1e-9;
      double ok = 0;
      for (Eigen::Index i = 0; i < proj.size(); ++i)
        ok += (proj[i] + b >= 0.0 ? Label::Pathol : Label::Normal) == y[static_cast<size_t>(i)];
      best = std::max(best, ok / static_cast<double>(proj.size()));
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("svm") {
  TEST_CASE("linear SVM separates separable data") {
    std::mt19937 rng(1);
    std::normal_distribution<double> n(0.0, 0.3);
    Eigen::MatrixXd x(60, 3);
    std::vector<Label> y;
    for (int i = 0; i < 60; ++i) {
      const bool pos = i % 2;
      for (int j = 0; j < 3; ++j) x(i, j) = (pos ? 1.5 : -1.5) + n(rng);
      y.push_back(pos ? Label::Pathol : Label::Normal);
    }
    const SvmModel m = train_svm_linear(x, y);
    CHECK(m.kind == SvmKind::Linear);
    CHECK(m.dimension() == 3);
    CHECK(accuracy(m, x, y) == 1.0);
    CHECK(m.weights.minCoeff() > 0.0);  // positive side is pathological
    const SvmModel again = train_svm_linear(x, y);
    CHECK(again.weights == m.weights);
    CHECK(again.bias == m.bias);
  }

  TEST_CASE("XOR: linear SVM is no better than the best line, RBF solves it") {
    Eigen::MatrixXd x;
    std::vector<Label> y;
    xor_data(x, y);
    const double ceiling = best_linear_accuracy(x, y);
    CHECK(ceiling == doctest::Approx(0.75).epsilon(0.05));
    CHECK(accuracy(train_svm_linear(x, y), x, y) <= ceiling + 1e-12);
    RbfSvmConfig cfg;
    cfg.C = 10.0;
    CHECK(accuracy(train_svm_rbf(x, y, cfg), x, y) == 1.0);
  }

  TEST_CASE("SMO reaches the dual optimum on a 4-point problem") {
    Eigen::MatrixXd x(4, 2);
    x << 0.0, 0.0, 1.0, 0.2, 0.1, 1.0, 0.9, 0.8;
    const std::vector<Label> labels{Label::Normal, Label::Pathol, Label::Pathol, Label::Normal};
    const Eigen::Vector4d y(-1, 1, 1, -1);
    RbfSvmConfig cfg;
    cfg.C = 2.0;
    cfg.gamma = 1.5;
    cfg.tolerance = 1e-6;
    const SvmModel m = train_svm_rbf(x, labels, cfg);

    Eigen::Matrix4d k;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) k(i, j) = std::exp(-cfg.gamma * (x.row(i) - x.row(j)).squaredNorm());
    const auto dual = [&](const Eigen::Vector4d& a) {
      const Eigen::Vector4d ya = a.cwiseProduct(y);
      return a.sum() - 0.5 * ya.dot(k * ya);
    };
    Eigen::Vector4d alpha = Eigen::Vector4d::Zero();
    for (size_t s = 0; s < m.support_indices.size(); ++s)
      alpha[m.support_indices[s]] = m.dual_coef[static_cast<Eigen::Index>(s)] * y[m.support_indices[s]];
    CHECK(alpha.minCoeff() >= -1e-12);
    CHECK(alpha.maxCoeff() <= cfg.C + 1e-12);
    CHECK(std::abs(alpha.dot(y)) < 1e-9);

    // Grid over alpha_0..alpha_2; alpha_3 follows from the equality constraint.
    const int steps = 80;
    double grid_best = -1e300;
    for (int a = 0; a <= steps; ++a)
      for (int b = 0; b <= steps; ++b)
        for (int c = 0; c <= steps; ++c) {
          Eigen::Vector4d g(cfg.C * a / steps, cfg.C * b / steps, cfg.C * c / steps, 0.0);
          g[3] = -(y[0] * g[0] + y[1] * g[1] + y[2] * g[2]) * y[3];
          if (g[3] < 0.0 || g[3] > cfg.C) continue;
          grid_best = std::max(grid_best, dual(g));
        }
    CHECK(dual(alpha) >= grid_best - 1e-6);
    CHECK(dual(alpha) <= grid_best + 0.05);  // the grid is within a few steps of the optimum
  }

  TEST_CASE("scale gamma heuristic") {
    Eigen::MatrixXd x(3, 2);
    x << 1, 2, 3, 4, 5, 6;
    const double mean = 3.5;
    double var = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) var += (x.data()[i] - mean) * (x.data()[i] - mean);
    var /= 6.0;
    CHECK(scale_gamma(x) == doctest::Approx(1.0 / (2.0 * var)));
  }

  TEST_CASE("decision zero counts as pathological") {
    SvmModel m;
    m.kind = SvmKind::Linear;
    m.weights = Eigen::VectorXd::Zero(2);
    m.bias = 0.0;
    CHECK(svm_decision(m, Eigen::VectorXd::Zero(2)) == 0.0);
    CHECK(svm_predict(m, Eigen::VectorXd::Zero(2)) == Label::Pathol);
    m.bias = -1e-12;
    CHECK(svm_predict(m, Eigen::VectorXd::Zero(2)) == Label::Normal);
  }

  TEST_CASE("training errors") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 2);
    const std::vector<Label> one_class(5, Label::Normal);
    CHECK_THROWS_AS(train_svm_linear(x, one_class), Error);
    CHECK_THROWS_AS(train_svm_rbf(x, one_class), Error);
    const std::vector<Label> short_labels(3, Label::Normal);
    CHECK_THROWS_AS(train_svm_linear(x, short_labels), Error);
    SvmModel m = train_svm_linear(x, std::vector<Label>{Label::Normal, Label::Pathol, Label::Normal, Label::Pathol,
                                                        Label::Normal});
    CHECK_THROWS_AS(svm_decision(m, Eigen::VectorXd::Zero(3)), Error);
  }
}
