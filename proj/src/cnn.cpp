#include "vdd/cnn.hpp"

#include "vdd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace vdd {

namespace {

RowMatrixXd im2col(const RowMatrixXd& act, int h, int w, const ConvLayer& layer) {
  const int out_h = h - layer.kernel_h + 1;
  const int out_w = w - layer.kernel_w + 1;
  RowMatrixXd col(layer.in_channels * layer.kernel_h * layer.kernel_w, out_h * out_w);
  Eigen::Index row = 0;
  for (int c = 0; c < layer.in_channels; ++c) {
    const double* src = act.row(c).data();
    for (int i = 0; i < layer.kernel_h; ++i) {
      for (int j = 0; j < layer.kernel_w; ++j, ++row) {
        double* dst = col.row(row).data();
        for (int y = 0; y < out_h; ++y) {
          const double* line = src + (y + i) * w + j;
          std::copy(line, line + out_w, dst + y * out_w);
        }
      }
    }
  }
  return col;
}

RowMatrixXd col2im(const RowMatrixXd& col, int h, int w, const ConvLayer& layer) {
  const int out_h = h - layer.kernel_h + 1;
  const int out_w = w - layer.kernel_w + 1;
  RowMatrixXd act = RowMatrixXd::Zero(layer.in_channels, h * w);
  Eigen::Index row = 0;
  for (int c = 0; c < layer.in_channels; ++c) {
    double* dst = act.row(c).data();
    for (int i = 0; i < layer.kernel_h; ++i) {
      for (int j = 0; j < layer.kernel_w; ++j, ++row) {
        const double* src = col.row(row).data();
        for (int y = 0; y < out_h; ++y) {
          double* line = dst + (y + i) * w + j;
          const double* s = src + y * out_w;
          for (int x = 0; x < out_w; ++x) line[x] += s[x];
        }
      }
    }
  }
  return act;
}

ConvLayer make_conv(int in_ch, int out_ch, int k) {
  ConvLayer layer{in_ch, out_ch, k, k, Eigen::MatrixXd::Zero(out_ch, in_ch * k * k),
                  Eigen::VectorXd::Zero(out_ch)};
  return layer;
}

template <typename F>
void for_each_param(CnnModel& m, F&& f) {
  for (auto& c : m.conv) {
    f(c.kernels);
    f(c.bias);
  }
  for (auto& d : m.dense) {
    f(d.weights);
    f(d.bias);
  }
}

template <typename F>
void for_each_param(const CnnModel& m, F&& f) {
  for (const auto& c : m.conv) {
    f(c.kernels);
    f(c.bias);
  }
  for (const auto& d : m.dense) {
    f(d.weights);
    f(d.bias);
  }
}

}  // namespace

CnnModel CnnModel::zeros(const CnnArchitecture& arch) {
  CnnModel m;
  m.input_rows = arch.input_rows;
  m.input_cols = arch.input_cols;
  m.conv[0] = make_conv(1, arch.channels[0], arch.kernel);
  m.conv[1] = make_conv(arch.channels[0], arch.channels[1], arch.kernel);
  if (m.input_rows < 2 * arch.kernel || m.input_cols < 2 * arch.kernel)
    throw Error(Errc::ShapeMismatch, "cnn: input " + std::to_string(arch.input_rows) + "x" +
                                         std::to_string(arch.input_cols) + " too small for the architecture");
  int width = m.flat_features();
  for (int h : arch.hidden) {
    m.dense.push_back({Eigen::MatrixXd::Zero(h, width), Eigen::VectorXd::Zero(h)});
    width = h;
  }
  m.dense.push_back({Eigen::MatrixXd::Zero(kClasses, width), Eigen::VectorXd::Zero(kClasses)});
  return m;
}

std::pair<int, int> CnnModel::conv_output(int layer) const {
  int h = input_rows, w = input_cols;
  for (int l = 0; l <= layer; ++l) {
    h -= conv[l].kernel_h - 1;
    w -= conv[l].kernel_w - 1;
  }
  return {h, w};
}

std::pair<int, int> CnnModel::pooled_output() const {
  const auto [h, w] = conv_output(1);
  return {h / kPool, w / kPool};
}

int CnnModel::flat_features() const {
  const auto [h, w] = pooled_output();
  return conv[1].out_channels * h * w;
}

int CnnModel::embedding_size() const {
  return dense.size() >= 2 ? static_cast<int>(dense[dense.size() - 2].weights.rows()) : flat_features();
}

Eigen::Index CnnModel::parameter_count() const {
  Eigen::Index n = 0;
  for_each_param(*this, [&](const auto& p) { n += p.size(); });
  return n;
}

Eigen::VectorXd CnnModel::flat_params() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index off = 0;
  for_each_param(*this, [&](const auto& p) {
    for (Eigen::Index i = 0; i < p.size(); ++i) flat[off + i] = p.data()[i];
    off += p.size();
  });
  return flat;
}

void CnnModel::set_flat_params(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count())
    throw Error(Errc::ShapeMismatch, "cnn: flat parameter vector has wrong length");
  Eigen::Index off = 0;
  for_each_param(*this, [&](auto& p) {
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = flat[off + i];
    off += p.size();
  });
}

void CnnModel::axpy(double a, const CnnModel& x) {
  for (int l = 0; l < 2; ++l) {
    conv[l].kernels += a * x.conv[l].kernels;
    conv[l].bias += a * x.conv[l].bias;
  }
  for (size_t l = 0; l < dense.size(); ++l) {
    dense[l].weights += a * x.dense[l].weights;
    dense[l].bias += a * x.dense[l].bias;
  }
}

void CnnModel::validate() const {
  const auto fail = [](const std::string& why) { return Error(Errc::ShapeMismatch, "cnn: " + why); };
  if (conv[0].in_channels != 1) throw fail("first convolution must take one input channel");
  if (conv[1].in_channels != conv[0].out_channels) throw fail("convolution channels do not chain");
  for (const auto& c : conv) {
    if (c.kernels.rows() != c.out_channels || c.kernels.cols() != c.in_channels * c.kernel_h * c.kernel_w ||
        c.bias.size() != c.out_channels)
      throw fail("convolution parameter shapes inconsistent");
  }
  const auto [ph, pw] = pooled_output();
  if (ph < 1 || pw < 1) throw fail("input too small for the architecture");
  if (dense.size() < 2) throw fail("need at least two dense layers");
  Eigen::Index width = flat_features();
  for (const auto& d : dense) {
    if (d.weights.cols() != width || d.bias.size() != d.weights.rows()) throw fail("dense layers do not chain");
    width = d.weights.rows();
  }
  if (width != kClasses) throw fail("output layer must have two units");
}

bool CnnModel::all_finite() const {
  bool ok = true;
  for_each_param(*this, [&](const auto& p) { ok = ok && p.allFinite(); });
  return ok;
}

Eigen::Vector2d softmax(const Eigen::Vector2d& logits) {
  const double m = logits.maxCoeff();
  const Eigen::Vector2d e = (logits.array() - m).exp();
  return e / e.sum();
}

double cross_entropy(const Eigen::Vector2d& logits, Label true_label) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits[class_index(true_label)];
}

namespace {

// Convolutions, ReLU and pooling; fills the cache up to `pooled`.
void conv_forward(const CnnModel& model, const Tensor& input, CnnCache& c) {
  if (input.shape != model.input_shape())
    throw Error(Errc::ShapeMismatch, "cnn_forward: input shape " + shape_string(input.shape) +
                                         " does not match model input " + shape_string(model.input_shape()));
  c.model = &model;
  c.input = Eigen::Map<const RowMatrixXd>(input.values.data(), 1, input.values.size());
  if (model.input_offset != 0.0) c.input.array() -= model.input_offset;

  int h = model.input_rows, w = model.input_cols;
  const RowMatrixXd* act = &c.input;
  for (int l = 0; l < 2; ++l) {
    const ConvLayer& layer = model.conv[l];
    c.cols[l] = im2col(*act, h, w, layer);
    c.conv_pre[l].noalias() = layer.kernels * c.cols[l];
    c.conv_pre[l].colwise() += layer.bias;
    c.conv_act[l] = c.conv_pre[l].cwiseMax(0.0);
    h -= layer.kernel_h - 1;
    w -= layer.kernel_w - 1;
    act = &c.conv_act[l];
  }

  const int ph = h / CnnModel::kPool, pw = w / CnnModel::kPool;
  const int channels = model.conv[1].out_channels;
  c.pooled.resize(channels, ph * pw);
  c.pool_argmax.resize(static_cast<size_t>(channels) * ph * pw);
  for (int ch = 0; ch < channels; ++ch) {
    const double* src = c.conv_act[1].row(ch).data();
    for (int y = 0; y < ph; ++y) {
      for (int x = 0; x < pw; ++x) {
        Eigen::Index best = (2 * y) * w + 2 * x;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const Eigen::Index idx = (2 * y + dy) * w + 2 * x + dx;
            if (src[idx] > src[best]) best = idx;
          }
        c.pooled(ch, y * pw + x) = src[best];
        c.pool_argmax[static_cast<size_t>(ch) * ph * pw + y * pw + x] = ch * (h * w) + best;
      }
    }
  }
}

// Backpropagates the gradient w.r.t. the pooled features through the convolutions.
void conv_backward(const CnnModel& model, const CnnCache& cache, const double* d_pooled, CnnModel* conv_acc,
                   Tensor* input_grad) {
  const auto [h1, w1] = model.conv_output(0);
  const auto [h2, w2] = model.conv_output(1);
  RowMatrixXd d_act = RowMatrixXd::Zero(model.conv[1].out_channels, h2 * w2);
  for (size_t i = 0; i < cache.pool_argmax.size(); ++i) d_act.data()[cache.pool_argmax[i]] += d_pooled[i];

  const std::array<std::pair<int, int>, 2> in_dims{std::pair{model.input_rows, model.input_cols},
                                                   std::pair{h1, w1}};
  for (int l = 1; l >= 0; --l) {
    const RowMatrixXd d_pre = d_act.cwiseProduct((cache.conv_pre[l].array() > 0.0).cast<double>().matrix());
    if (conv_acc) {
      conv_acc->conv[l].kernels.noalias() += d_pre * cache.cols[l].transpose();
      conv_acc->conv[l].bias += d_pre.rowwise().sum();
    }
    if (l == 0 && !input_grad) break;
    const RowMatrixXd d_col = model.conv[l].kernels.transpose() * d_pre;
    d_act = col2im(d_col, in_dims[l].first, in_dims[l].second, model.conv[l]);
  }
  if (input_grad)
    *input_grad = Tensor(model.input_shape(), Eigen::Map<const Eigen::VectorXd>(d_act.data(), d_act.size()));
}

}  // namespace

CnnForward cnn_forward(const CnnModel& model, const Tensor& input) {
  CnnForward out;
  CnnCache& c = out.cache;
  conv_forward(model, input, c);
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(c.pooled.data(), c.pooled.size());
  c.dense_in.clear();
  c.dense_pre.clear();
  for (size_t l = 0; l < model.dense.size(); ++l) {
    c.dense_in.push_back(x);
    Eigen::VectorXd pre = model.dense[l].bias;
    pre.noalias() += model.dense[l].weights * x;
    c.dense_pre.push_back(pre);
    x = l + 1 < model.dense.size() ? Eigen::VectorXd(pre.cwiseMax(0.0)) : pre;
  }
  out.logits = x;
  return out;
}

namespace {

// Zero-valued gradient holder with the model's shapes; dense weights stay empty
// until filled.
CnnModel gradient_skeleton(const CnnModel& model) {
  CnnModel g;
  g.input_rows = model.input_rows;
  g.input_cols = model.input_cols;
  for (int l = 0; l < 2; ++l) {
    g.conv[l] = model.conv[l];
    g.conv[l].kernels.setZero();
    g.conv[l].bias.setZero();
  }
  g.dense.resize(model.dense.size());
  return g;
}

// Backpropagates one example. Convolution gradients are added into conv_acc,
// the output delta of every dense layer is stored in dense_delta.
double backprop(const CnnModel& model, const CnnCache& cache, Label true_label, CnnModel* conv_acc,
                std::vector<Eigen::VectorXd>* dense_delta, Tensor* input_grad) {
  const Eigen::Vector2d logits = cache.dense_pre.back();
  const double loss = cross_entropy(logits, true_label);

  Eigen::VectorXd delta = softmax(logits);
  delta[class_index(true_label)] -= 1.0;
  if (dense_delta) dense_delta->assign(model.dense.size(), {});

  for (size_t l = model.dense.size(); l-- > 0;) {
    if (dense_delta) (*dense_delta)[l] = delta;
    Eigen::VectorXd back = model.dense[l].weights.transpose() * delta;
    if (l > 0) back = back.cwiseProduct((cache.dense_pre[l - 1].array() > 0.0).cast<double>().matrix());
    delta = std::move(back);
  }

  conv_backward(model, cache, delta.data(), conv_acc, input_grad);
  return loss;
}

void check_cache(const CnnModel& model, const CnnCache& cache) {
  if (cache.model != &model || cache.dense_pre.size() != model.dense.size() ||
      cache.input.size() != static_cast<Eigen::Index>(model.input_rows) * model.input_cols)
    throw Error(Errc::InvalidArgument, "cnn_backward: cache was not produced by this model");
}

}  // namespace

CnnGradients cnn_backward(const CnnModel& model, const CnnCache& cache, Label true_label, bool param_grads) {
  check_cache(model, cache);
  CnnGradients g;
  if (!param_grads) {
    g.loss = backprop(model, cache, true_label, nullptr, nullptr, &g.input);
    return g;
  }
  g.params = gradient_skeleton(model);
  std::vector<Eigen::VectorXd> deltas;
  g.loss = backprop(model, cache, true_label, &g.params, &deltas, &g.input);
  for (size_t l = 0; l < model.dense.size(); ++l) {
    g.params.dense[l].weights.noalias() = deltas[l] * cache.dense_in[l].transpose();
    g.params.dense[l].bias = deltas[l];
  }
  return g;
}

Eigen::VectorXd extract_embedding(const CnnModel& model, const Tensor& input) {
  const CnnForward f = cnn_forward(model, input);
  return f.cache.dense_in.back();
}

double pathol_probability(const CnnModel& model, const Tensor& input) {
  return softmax(cnn_forward(model, input).logits)[class_index(Label::Pathol)];
}

CnnModel init_cnn(const CnnArchitecture& arch, uint64_t seed) {
  CnnModel m = CnnModel::zeros(arch);
  std::mt19937_64 rng(seed);
  const auto fill = [&](Eigen::MatrixXd& w, double fan_in) {
    std::uniform_real_distribution<double> u(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  };
  for (auto& c : m.conv) fill(c.kernels, static_cast<double>(c.kernels.cols()));
  for (auto& d : m.dense) fill(d.weights, static_cast<double>(d.weights.cols()));
  return m;
}

double mean_loss(const CnnModel& model, std::span<const LabeledTensor> data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : data) total += cross_entropy(cnn_forward(model, ex.input).logits, ex.label);
  return total / static_cast<double>(data.size());
}

CnnModel train_cnn_from(CnnModel model, std::span<const LabeledTensor> data, const TrainConfig& config,
                        std::span<const LabeledTensor> validation, TrainLog* log) {
  if (data.empty()) throw Error(Errc::InsufficientData, "train_cnn: empty dataset");
  if (!(config.learning_rate >= 0.0) || config.epochs <= 0 || config.batch_size <= 0 || config.weight_decay < 0.0)
    throw Error(Errc::InvalidArgument, "train_cnn: invalid training configuration");
  model.validate();
  for (const auto& ex : data)
    if (ex.input.shape != model.input_shape())
      throw Error(Errc::ShapeMismatch, "train_cnn: inconsistent input shapes in dataset");

  TrainLog local;
  TrainLog& out = log ? *log : local;
  out = {};

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});

  CnnModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  const size_t n_dense = model.dense.size();
  std::vector<Eigen::MatrixXd> batch_in(n_dense);
  std::vector<CnnCache> caches(static_cast<size_t>(config.batch_size));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      const Eigen::Index bsz = static_cast<Eigen::Index>(end - start);
      CnnModel grad_sum = gradient_skeleton(model);
      batch_in[0].resize(model.dense[0].weights.cols(), bsz);
      for (size_t i = start; i < end; ++i) {
        CnnCache& c = caches[i - start];
        conv_forward(model, data[order[i]].input, c);
        batch_in[0].col(static_cast<Eigen::Index>(i - start)) =
            Eigen::Map<const Eigen::VectorXd>(c.pooled.data(), c.pooled.size());
      }
      // Dense layers run as one product per layer over the whole batch.
      std::vector<Eigen::MatrixXd> pre(n_dense);
      for (size_t l = 0; l < n_dense; ++l) {
        pre[l].noalias() = model.dense[l].weights * batch_in[l];
        pre[l].colwise() += model.dense[l].bias;
        if (l + 1 < n_dense) batch_in[l + 1] = pre[l].cwiseMax(0.0);
      }
      double batch_loss = 0.0;
      Eigen::MatrixXd delta(CnnModel::kClasses, bsz);
      for (Eigen::Index j = 0; j < bsz; ++j) {
        const Eigen::Vector2d logits = pre.back().col(j);
        const Label label = data[order[start + static_cast<size_t>(j)]].label;
        batch_loss += cross_entropy(logits, label);
        delta.col(j) = softmax(logits);
        delta(class_index(label), j) -= 1.0;
      }
      for (size_t l = n_dense; l-- > 0;) {
        grad_sum.dense[l].weights.noalias() = delta * batch_in[l].transpose();
        grad_sum.dense[l].bias = delta.rowwise().sum();
        Eigen::MatrixXd back = model.dense[l].weights.transpose() * delta;
        if (l > 0) back = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
        delta = std::move(back);
      }
      for (Eigen::Index j = 0; j < bsz; ++j)
        conv_backward(model, caches[static_cast<size_t>(j)], delta.col(j).data(), &grad_sum, nullptr);
      if (!std::isfinite(batch_loss))
        throw Error(Errc::NonFinite, "train_cnn: non-finite loss in epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batch) + " (examples " +
                                         std::to_string(start) + ".." + std::to_string(end - 1) + ")");
      epoch_loss += batch_loss;
      const double n = static_cast<double>(end - start);
      if (config.weight_decay > 0.0 && config.learning_rate > 0.0) {
        const double shrink = 1.0 - config.learning_rate * config.weight_decay;
        for (auto& c : model.conv) c.kernels *= shrink;
        for (auto& d : model.dense) d.weights *= shrink;
      }
      model.axpy(-config.learning_rate / n, grad_sum);
    }
    out.train_loss.push_back(epoch_loss / static_cast<double>(data.size()));
    if (!validation.empty()) {
      const double v = mean_loss(model, validation);
      out.validation_loss.push_back(v);
      if (v < best_val) {
        best_val = v;
        best = model;
        out.best_epoch = epoch;
      }
    }
  }
  if (validation.empty()) {
    out.best_epoch = config.epochs - 1;
    return model;
  }
  return best;
}

CnnModel train_cnn(std::span<const LabeledTensor> data, const CnnArchitecture& arch, const TrainConfig& config,
                   std::span<const LabeledTensor> validation, TrainLog* log) {
  return train_cnn_from(init_cnn(arch, config.seed), data, config, validation, log);
}

}  // namespace vdd
