#include "vdd/detector.hpp"

#include "vdd/error.hpp"
#include "vdd/serialization.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace vdd {

std::string_view to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::Cnn: return "cnn";
    case ClassifierKind::CnnSvmLinear: return "cnn-svm-linear";
    case ClassifierKind::CnnSvmRbf: return "cnn-svm-rbf";
  }
  return "cnn";
}

ClassifierKind parse_classifier_kind(std::string_view text) {
  if (text == "cnn") return ClassifierKind::Cnn;
  if (text == "cnn-svm-linear") return ClassifierKind::CnnSvmLinear;
  if (text == "cnn-svm-rbf") return ClassifierKind::CnnSvmRbf;
  throw Error(Errc::InvalidArgument, "unknown classifier '" + std::string(text) +
                                         "' (valid: cnn, cnn-svm-linear, cnn-svm-rbf)");
}

FeatureParams DetectorConfig::feature_params() const {
  return features ? *features : FeatureParams::defaults_for(snippet.rate_hz);
}

std::string DetectorConfig::display_name() const {
  if (!name.empty()) return name;
  return std::string(to_string(feature)) + "-" + std::string(to_string(classifier)) + "-" +
         std::string(preset_name(snippet));
}

Standardizer Standardizer::fit_rows(std::span<const Eigen::MatrixXd> maps) {
  if (maps.empty()) throw Error(Errc::InsufficientData, "standardizer: no maps");
  const Eigen::Index rows = maps.front().rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows), sq = Eigen::VectorXd::Zero(rows);
  double count = 0.0;
  for (const auto& m : maps) {
    sum += m.rowwise().sum();
    sq += m.array().square().matrix().rowwise().sum();
    count += static_cast<double>(m.cols());
  }
  Standardizer s;
  s.mean = sum / count;
  const Eigen::VectorXd var = (sq / count - s.mean.cwiseAbs2()).cwiseMax(0.0);
  s.scale = var.unaryExpr([](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; });
  return s;
}

Standardizer Standardizer::fit_columns(const Eigen::MatrixXd& samples) {
  Standardizer s;
  s.mean = samples.colwise().mean().transpose();
  const Eigen::VectorXd var = (samples.rowwise() - s.mean.transpose()).array().square().colwise().mean().transpose();
  s.scale = var.unaryExpr([](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; });
  return s;
}

Eigen::MatrixXd Standardizer::apply_rows(const Eigen::MatrixXd& map) const {
  return ((map.colwise() - mean).array().colwise() * scale.array()).matrix();
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& v) const {
  return (v - mean).cwiseProduct(scale);
}

FileFeatures compute_file_features(const AudioClip& clip, FeatureKind kind, const SnippetSpec& spec,
                                   const FeatureParams& params) {
  const Segmentation seg = segment(clip, spec);
  FileFeatures out;
  out.padded = seg.padded;
  out.snippets.reserve(seg.snippets.size());
  for (const auto& snippet : seg.snippets) out.snippets.push_back(extract_features(snippet, kind, params).values);
  return out;
}

Tensor Detector::input_tensor(const FeatureMap& map) const {
  if (map.kind != config.feature)
    throw Error(Errc::MetadataMismatch, "detector '" + config.display_name() + "' was trained on " +
                                            std::string(to_string(config.feature)) + " features, got " +
                                            std::string(to_string(map.kind)));
  if (map.params != feature_params || map.source_rate_hz != config.snippet.rate_hz)
    throw Error(Errc::MetadataMismatch, "feature parameters differ from those used at training");
  return input_tensor(map.values);
}

Tensor Detector::input_tensor(const Eigen::MatrixXd& raw) const {
  if (raw.rows() != cnn.input_rows || raw.cols() != cnn.input_cols)
    throw Error(Errc::ShapeMismatch, "feature map is " + std::to_string(raw.rows()) + "x" +
                                         std::to_string(raw.cols()) + ", detector expects " +
                                         std::to_string(cnn.input_rows) + "x" + std::to_string(cnn.input_cols));
  return Tensor::from_matrix(input_norm ? input_norm->apply_rows(raw) : raw);
}

SnippetDecision Detector::classify(const Tensor& input) const {
  if (!head) {
    const double p = pathol_probability(cnn, input);
    return {p > 0.5 ? Label::Pathol : Label::Normal, p};
  }
  Eigen::VectorXd e = extract_embedding(cnn, input);
  if (embedding_norm) e = embedding_norm->apply(e);
  const double d = svm_decision(*head, e);
  return {d >= 0.0 ? Label::Pathol : Label::Normal, d};
}

namespace {

std::vector<LabeledTensor> to_examples(const Detector& det, std::span<const FileFeatures> files) {
  std::vector<LabeledTensor> out;
  for (const auto& f : files)
    for (const auto& m : f.snippets) out.push_back({det.input_tensor(m), f.label});
  return out;
}

}  // namespace

Detector train_detector(const DetectorConfig& config, std::span<const FileFeatures> train,
                        std::span<const FileFeatures> validation, TrainLog* log) {
  if (train.empty() || train.front().snippets.empty())
    throw Error(Errc::InsufficientData, "train_detector: no training files");
  Detector det;
  det.config = config;
  det.feature_params = config.feature_params();
  det.config.features = det.feature_params;

  const Eigen::MatrixXd& first = train.front().snippets.front();
  CnnArchitecture arch = config.architecture;
  arch.input_rows = static_cast<int>(first.rows());
  arch.input_cols = static_cast<int>(first.cols());
  det.config.architecture = arch;
  det.cnn = CnnModel::zeros(arch);

  CnnModel init = init_cnn(arch, config.train.seed);
  if (config.feature == FeatureKind::Mfcc) {
    std::vector<Eigen::MatrixXd> maps;
    for (const auto& f : train) maps.insert(maps.end(), f.snippets.begin(), f.snippets.end());
    det.input_norm = Standardizer::fit_rows(maps);
  } else {
    // MelSpec maps stay in [0,1] (the attack domain); the model centers them
    // internally, which keeps SGD off the long plateau uncentered inputs cause.
    double sum = 0.0, count = 0.0;
    for (const auto& f : train)
      for (const auto& m : f.snippets) {
        sum += m.sum();
        count += static_cast<double>(m.size());
      }
    init.input_offset = sum / count;
  }

  const std::vector<LabeledTensor> train_set = to_examples(det, train);
  const std::vector<LabeledTensor> val_set = to_examples(det, validation);
  det.cnn = train_cnn_from(std::move(init), train_set, config.train, val_set, log);

  if (config.classifier != ClassifierKind::Cnn) return with_svm_head(det, config, train);
  return det;
}

Detector with_svm_head(const Detector& base, const DetectorConfig& config, std::span<const FileFeatures> train) {
  if (config.classifier == ClassifierKind::Cnn)
    throw Error(Errc::InvalidArgument, "with_svm_head: classifier kind has no SVM head");
  if (config.feature != base.config.feature || !(config.snippet == base.config.snippet))
    throw Error(Errc::MetadataMismatch, "with_svm_head: head and CNN disagree on features or snippet spec");
  Detector det = base;
  det.config.name = config.name;
  det.config.classifier = config.classifier;
  det.config.svm_c = config.svm_c;
  det.config.svm_gamma = config.svm_gamma;
  det.config.svm_epochs = config.svm_epochs;

  std::vector<Label> labels;
  std::vector<Eigen::VectorXd> rows;
  for (const auto& f : train)
    for (const auto& m : f.snippets) {
      rows.push_back(extract_embedding(det.cnn, det.input_tensor(m)));
      labels.push_back(f.label);
    }
  if (rows.empty()) throw Error(Errc::InsufficientData, "with_svm_head: no training snippets");
  Eigen::MatrixXd emb(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i) emb.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  det.embedding_norm = Standardizer::fit_columns(emb);
  for (Eigen::Index r = 0; r < emb.rows(); ++r)
    emb.row(r) = det.embedding_norm->apply(emb.row(r).transpose()).transpose();
  if (config.classifier == ClassifierKind::CnnSvmLinear) {
    det.head = train_svm_linear(emb, labels, {config.svm_c, config.svm_epochs, config.train.seed});
  } else {
    RbfSvmConfig rbf;
    rbf.C = config.svm_c;
    rbf.gamma = config.svm_gamma;
    det.head = train_svm_rbf(emb, labels, rbf);
  }
  return det;
}

// ---------------------------------------------------------------------------
// Model container

namespace {

constexpr char kMagic[8] = {'V', 'D', 'D', 'M', 'O', 'D', 'E', 'L'};

class Writer {
 public:
  void u32(uint32_t v) { raw(&v, sizeof v); }
  void u64(uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void bytes(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  template <typename Derived>
  void matrix(const Eigen::DenseBase<Derived>& m) {
    u64(static_cast<uint64_t>(m.rows()));
    u64(static_cast<uint64_t>(m.cols()));
    const Eigen::MatrixXd copy = m;
    for (Eigen::Index i = 0; i < copy.size(); ++i) f64(copy.data()[i]);
  }
  const std::string& data() const { return buf_; }

 private:
  void raw(const void* p, size_t n) {
    static_assert(std::endian::native == std::endian::little, "model files are little-endian");
    buf_.append(static_cast<const char*>(p), n);
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : buf_(std::move(data)) {}
  uint32_t u32() { uint32_t v; raw(&v, sizeof v); return v; }
  uint64_t u64() { uint64_t v; raw(&v, sizeof v); return v; }
  double f64() { double v; raw(&v, sizeof v); return v; }
  std::string bytes() {
    const uint64_t n = u64();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Eigen::MatrixXd matrix() {
    const uint64_t rows = u64(), cols = u64();
    if (rows > (1u << 30) || cols > (1u << 30)) throw corrupt("implausible matrix size");
    need(rows * cols * sizeof(double));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }
  Eigen::VectorXd vector() {
    Eigen::MatrixXd m = matrix();
    if (m.cols() != 1 && m.size() != 0) throw corrupt("expected a column vector");
    return Eigen::Map<Eigen::VectorXd>(m.data(), m.size());
  }
  void expect_end() const {
    if (pos_ != buf_.size()) throw corrupt("trailing bytes");
  }
  static Error corrupt(const std::string& why) { return Error(Errc::CorruptModel, "model file: " + why); }

 private:
  void need(uint64_t n) const {
    if (n > buf_.size() - pos_) throw corrupt("truncated");
  }
  void raw(void* p, size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::string buf_;
  size_t pos_ = 0;
};

void write_standardizer(Writer& w, const std::optional<Standardizer>& s) {
  w.u32(s ? 1 : 0);
  if (s) {
    w.matrix(s->mean);
    w.matrix(s->scale);
  }
}

std::optional<Standardizer> read_standardizer(Reader& r) {
  if (r.u32() == 0) return std::nullopt;
  Standardizer s;
  s.mean = r.vector();
  s.scale = r.vector();
  return s;
}

}  // namespace

void save_detector(const Detector& det, const std::filesystem::path& path) {
  nlohmann::json meta;
  meta["config"] = det.config;
  meta["feature_params"] = det.feature_params;
  meta["input_rows"] = det.cnn.input_rows;
  meta["input_cols"] = det.cnn.input_cols;
  meta["input_offset"] = det.cnn.input_offset;
  meta["head"] = det.head ? std::string(det.head->kind == SvmKind::Linear ? "linear" : "rbf") : "none";

  Writer w;
  w.bytes(std::string(kMagic, sizeof kMagic));
  w.u32(kModelFormatVersion);
  w.bytes(meta.dump());
  for (const auto& c : det.cnn.conv) {
    w.u32(static_cast<uint32_t>(c.in_channels));
    w.u32(static_cast<uint32_t>(c.out_channels));
    w.u32(static_cast<uint32_t>(c.kernel_h));
    w.u32(static_cast<uint32_t>(c.kernel_w));
    w.matrix(c.kernels);
    w.matrix(c.bias);
  }
  w.u64(det.cnn.dense.size());
  for (const auto& d : det.cnn.dense) {
    w.matrix(d.weights);
    w.matrix(d.bias);
  }
  write_standardizer(w, det.input_norm);
  write_standardizer(w, det.embedding_norm);
  w.u32(det.head ? 1 : 0);
  if (det.head) {
    const SvmModel& h = *det.head;
    w.u32(h.kind == SvmKind::Linear ? 0 : 1);
    w.f64(h.C);
    w.f64(h.bias);
    w.f64(h.gamma);
    w.matrix(h.weights);
    w.matrix(h.support_vectors);
    w.matrix(h.dual_coef);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write model file: " + path.string());
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw Error(Errc::Io, "write failed: " + path.string());
}

Detector load_detector(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, "cannot open model file: " + path.string());
  Reader r(std::string{std::istreambuf_iterator<char>(in), {}});

  Detector det;
  try {
    if (r.bytes() != std::string(kMagic, sizeof kMagic)) throw Reader::corrupt("bad magic");
    const uint32_t version = r.u32();
    if (version != kModelFormatVersion)
      throw Error(Errc::VersionMismatch, "model file version " + std::to_string(version) + ", expected " +
                                             std::to_string(kModelFormatVersion));
    const nlohmann::json meta = nlohmann::json::parse(r.bytes());
    det.config = meta.at("config").get<DetectorConfig>();
    det.feature_params = meta.at("feature_params").get<FeatureParams>();
    det.cnn.input_rows = meta.at("input_rows").get<int>();
    det.cnn.input_cols = meta.at("input_cols").get<int>();
    det.cnn.input_offset = meta.value("input_offset", 0.0);
    for (auto& c : det.cnn.conv) {
      c.in_channels = static_cast<int>(r.u32());
      c.out_channels = static_cast<int>(r.u32());
      c.kernel_h = static_cast<int>(r.u32());
      c.kernel_w = static_cast<int>(r.u32());
      c.kernels = r.matrix();
      c.bias = r.vector();
    }
    const uint64_t n_dense = r.u64();
    if (n_dense > 64) throw Reader::corrupt("implausible layer count");
    for (uint64_t l = 0; l < n_dense; ++l) {
      DenseLayer d;
      d.weights = r.matrix();
      d.bias = r.vector();
      det.cnn.dense.push_back(std::move(d));
    }
    det.input_norm = read_standardizer(r);
    det.embedding_norm = read_standardizer(r);
    if (r.u32() != 0) {
      SvmModel h;
      h.kind = r.u32() == 0 ? SvmKind::Linear : SvmKind::Rbf;
      h.C = r.f64();
      h.bias = r.f64();
      h.gamma = r.f64();
      h.weights = r.vector();
      h.support_vectors = r.matrix();
      h.dual_coef = r.vector();
      det.head = std::move(h);
    }
    r.expect_end();
    det.cnn.validate();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptModel, std::string("model file metadata: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::ShapeMismatch) throw Error(Errc::CorruptModel, e.what());
    throw;
  }
  return det;
}

std::string detector_summary(const Detector& det) {
  std::ostringstream s;
  const FeatureParams& p = det.feature_params;
  s << "detector     " << det.config.display_name() << '\n'
    << "feature      " << to_string(det.config.feature) << " (" << det.cnn.input_rows << " x "
    << det.cnn.input_cols << ", window " << p.window_ms << " ms, hop " << p.hop_ms << " ms, fft "
    << p.fft_size << ", mels " << p.n_mels << ", mfcc " << p.n_mfcc << ")\n"
    << "snippets     " << preset_name(det.config.snippet) << " (" << det.config.snippet.length_ms << " ms, overlap "
    << det.config.snippet.overlap_ms << " ms, " << det.config.snippet.rate_hz << " Hz)\n"
    << "classifier   " << to_string(det.config.classifier) << '\n'
    << "conv         " << det.cnn.conv[0].out_channels << ", " << det.cnn.conv[1].out_channels << " channels, "
    << det.cnn.conv[0].kernel_h << "x" << det.cnn.conv[0].kernel_w << " kernels\n"
    << "dense        ";
  for (size_t l = 0; l < det.cnn.dense.size(); ++l)
    s << (l ? " -> " : "") << det.cnn.dense[l].weights.cols() << "x" << det.cnn.dense[l].weights.rows();
  s << "\nparameters   " << det.cnn.parameter_count() << '\n'
    << "seed         " << det.config.train.seed << '\n';
  if (det.head) {
    s << "svm head     " << (det.head->kind == SvmKind::Linear ? "linear" : "rbf") << ", C " << det.head->C;
    if (det.head->kind == SvmKind::Rbf) s << ", gamma " << det.head->gamma << ", " << det.head->dual_coef.size() << " SVs";
    s << '\n';
  }
  return s.str();
}

}  // namespace vdd
