#include "subtomo/neuralnet.hpp"
#include "subtomo/format.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "subtomo/datasets.hpp"
#include "subtomo/error.hpp"

namespace subtomo {

namespace {

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

// Column-wise log-softmax.
Eigen::MatrixXd log_softmax_cols(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) out.col(j) = log_softmax(logits.col(j));
  return out;
}

}  // namespace

MlpModel::MlpModel(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
  if (dims_.size() < 2) throw InvalidArgument("an MLP needs at least input and output sizes");
  for (int d : dims_)
    if (d < 1) throw InvalidDimension("layer sizes must be positive");
  if (dims_.back() < 2) throw InvalidArgument("an MLP needs at least 2 classes");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    weights_.push_back(Eigen::MatrixXd::Zero(dims_[l + 1], dims_[l]));
    biases_.push_back(Eigen::VectorXd::Zero(dims_[l + 1]));
  }
}

MlpModel MlpModel::he_initialized(std::vector<int> layer_dims, Rng& rng) {
  MlpModel model(std::move(layer_dims));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < model.weights_.size(); ++l) {
    const double scale = std::sqrt(2.0 / model.dims_[l]);
    auto& w = model.weights_[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = scale * normal(rng);
  }
  return model;
}

std::string MlpModel::describe() const {
  std::ostringstream os;
  os << "mlp(";
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "-" : "") << dims_[i];
  os << ")";
  return os.str();
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l)
    n += static_cast<std::size_t>(dims_[l]) * dims_[l + 1] + dims_[l + 1];
  return n;
}

Eigen::VectorXd MlpModel::logits(const Eigen::VectorXd& x, Cache& cache) const {
  cache.inputs.resize(weights_.size());
  cache.preacts.resize(weights_.size());
  Eigen::VectorXd h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    cache.inputs[l] = h;
    cache.preacts[l] = weights_[l] * h + biases_[l];
    if (l + 1 < weights_.size())
      h = cache.preacts[l].cwiseMax(0.0);
    else
      h = cache.preacts[l];
  }
  return h;
}

Eigen::VectorXd MlpModel::logits(const Eigen::VectorXd& x) const {
  Eigen::VectorXd h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = weights_[l] * h + biases_[l];
    if (l + 1 < weights_.size()) h = h.cwiseMax(0.0);
  }
  return h;
}

Eigen::VectorXd MlpModel::backprop_to_input(const Cache& cache,
                                            const Eigen::VectorXd& logit_delta) const {
  Eigen::VectorXd delta = logit_delta;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    if (l + 1 < weights_.size())
      delta = (cache.preacts[l].array() > 0.0).select(delta, 0.0);
    delta = weights_[l].transpose() * delta;
  }
  return delta;
}

Eigen::VectorXd MlpModel::do_log_probabilities(const Eigen::VectorXd& x) const {
  return log_softmax(logits(x));
}

LossAndGradient MlpModel::do_loss_and_input_gradient(const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& target) const {
  Cache cache;
  const Eigen::VectorXd logp = log_softmax(logits(x, cache));
  LossAndGradient out;
  out.loss = cross_entropy_from_logs(logp, target);
  const Eigen::VectorXd delta = logp.array().exp() * target.sum() - target.array();
  out.gradient = backprop_to_input(cache, delta);
  return out;
}

double MlpModel::loss_and_parameter_gradient(const Eigen::MatrixXd& inputs,
                                             std::span<const int> labels, double l2,
                                             ParameterGradient& grad) const {
  const Eigen::Index batch = inputs.rows();
  if (batch == 0 || static_cast<std::size_t>(batch) != labels.size())
    throw InvalidArgument("batch inputs and labels disagree");
  if (inputs.cols() != ambient_dim()) throw InvalidDimension("batch has wrong input dimension");

  const std::size_t layers = weights_.size();
  std::vector<Eigen::MatrixXd> acts(layers + 1);
  std::vector<Eigen::MatrixXd> pre(layers);
  acts[0] = inputs.transpose();
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = (weights_[l] * acts[l]).colwise() + biases_[l];
    acts[l + 1] = (l + 1 < layers) ? relu(pre[l]) : pre[l];
  }
  const Eigen::MatrixXd logp = log_softmax_cols(acts[layers]);

  double loss = 0.0;
  Eigen::MatrixXd delta = logp.array().exp();
  for (Eigen::Index j = 0; j < batch; ++j) {
    const int y = labels[j];
    if (y < 0 || y >= class_count()) throw InvalidArgument("label out of range");
    loss -= logp(y, j);
    delta(y, j) -= 1.0;
  }
  loss /= static_cast<double>(batch);
  delta /= static_cast<double>(batch);

  grad.weights.resize(layers);
  grad.biases.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    grad.weights[l] = delta * acts[l].transpose();
    grad.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = weights_[l].transpose() * delta;
      delta = (pre[l - 1].array() > 0.0).select(delta, 0.0);
    }
  }
  if (l2 > 0.0) {
    for (std::size_t l = 0; l < layers; ++l) {
      loss += 0.5 * l2 * weights_[l].squaredNorm();
      grad.weights[l] += l2 * weights_[l];
    }
  }
  return loss;
}

Eigen::MatrixXd MlpModel::predict_proba(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != ambient_dim()) throw InvalidDimension("inputs have wrong dimension");
  Eigen::MatrixXd h = inputs.transpose();
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = (weights_[l] * h).colwise() + biases_[l];
    if (l + 1 < weights_.size()) h = relu(h);
  }
  return log_softmax_cols(h).array().exp().matrix().transpose();
}

std::vector<int> MlpModel::predict(const Eigen::MatrixXd& inputs) const {
  const Eigen::MatrixXd p = predict_proba(inputs);
  std::vector<int> out(p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index arg = 0;
    p.row(i).maxCoeff(&arg);
    out[i] = static_cast<int>(arg);
  }
  return out;
}

// ---------------------------------------------------------------------------

EnsembleModel::EnsembleModel(std::vector<MlpModel> members) : members_(std::move(members)) {
  if (members_.empty()) throw InvalidArgument("an ensemble needs at least one member");
  for (const auto& m : members_)
    if (m.layer_dims() != members_.front().layer_dims())
      throw InvalidArgument("ensemble members must share layer dimensions");
}

std::string EnsembleModel::describe() const {
  return "ensemble(" + std::to_string(members_.size()) + "x" + members_.front().describe() + ")";
}

Eigen::VectorXd EnsembleModel::do_log_probabilities(const Eigen::VectorXd& x) const {
  // log mean_m p_m = logsumexp_m log p_m - log N, per class.
  const Eigen::Index classes = class_count();
  Eigen::MatrixXd logs(classes, static_cast<Eigen::Index>(members_.size()));
  for (std::size_t m = 0; m < members_.size(); ++m) logs.col(m) = log_softmax(members_[m].logits(x));
  Eigen::VectorXd out(classes);
  for (Eigen::Index c = 0; c < classes; ++c) {
    const double mx = logs.row(c).maxCoeff();
    out[c] = mx + std::log((logs.row(c).array() - mx).exp().sum());
  }
  return out.array() - std::log(static_cast<double>(members_.size()));
}

LossAndGradient EnsembleModel::do_loss_and_input_gradient(const Eigen::VectorXd& x,
                                                          const Eigen::VectorXd& target) const {
  const std::size_t n = members_.size();
  std::vector<MlpModel::Cache> caches(n);
  std::vector<Eigen::VectorXd> member_logp(n);
  const Eigen::Index classes = class_count();
  for (std::size_t m = 0; m < n; ++m)
    member_logp[m] = log_softmax(members_[m].logits(x, caches[m]));

  Eigen::VectorXd mean_logp(classes);
  for (Eigen::Index c = 0; c < classes; ++c) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < n; ++m) mx = std::max(mx, member_logp[m][c]);
    double s = 0.0;
    for (std::size_t m = 0; m < n; ++m) s += std::exp(member_logp[m][c] - mx);
    mean_logp[c] = mx + std::log(s) - std::log(static_cast<double>(n));
  }

  LossAndGradient out;
  out.loss = cross_entropy_from_logs(mean_logp, target);
  out.gradient = Eigen::VectorXd::Zero(x.size());
  // dL/dz_m = (1/N) [p_m * sum_i(w_i) - w], with w_i = t_i p_{m,i} / pbar_i.
  for (std::size_t m = 0; m < n; ++m) {
    Eigen::VectorXd w(classes);
    for (Eigen::Index c = 0; c < classes; ++c)
      w[c] = target[c] == 0.0 ? 0.0 : target[c] * std::exp(member_logp[m][c] - mean_logp[c]);
    const Eigen::VectorXd pm = member_logp[m].array().exp();
    const Eigen::VectorXd delta = (pm * w.sum() - w) / static_cast<double>(n);
    out.gradient += members_[m].backprop_to_input(caches[m], delta);
  }
  return out;
}

Eigen::VectorXd ensemble_evaluate(const EnsembleModel& ensemble, const Eigen::VectorXd& x) {
  return ensemble.evaluate(x);
}

// ---------------------------------------------------------------------------

void validate(const TrainConfig& config) {
  if (!(config.learning_rate >= 0.0)) throw InvalidArgument("learning_rate must be >= 0");
  if (config.epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (config.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(config.l2_coefficient >= 0.0)) throw InvalidArgument("l2_coefficient must be >= 0");
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) || !(config.beta2 >= 0.0 && config.beta2 < 1.0))
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  if (!(config.epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0))
    throw InvalidArgument("momentum must lie in [0, 1)");
}

double accuracy(const MlpModel& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const auto pred = model.predict(data.inputs);
  int hits = 0;
  for (int i = 0; i < data.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / data.size();
}

namespace {

double mean_data_loss(const MlpModel& model, const Dataset& data) {
  const Eigen::MatrixXd p = model.predict_proba(data.inputs);
  double loss = 0.0;
  for (int i = 0; i < data.size(); ++i)
    loss -= std::log(std::max(p(i, data.labels[i]), kProbabilityFloor));
  return loss / data.size();
}

}  // namespace

std::vector<EpochMetrics> train(MlpModel& model, const Dataset& train_set, const Dataset* test_set,
                                const TrainConfig& config, const EpochCallback& on_epoch) {
  validate(config);
  validate(train_set);
  if (train_set.dim() != model.ambient_dim())
    throw InvalidDimension("training data dimension does not match the model input");
  if (train_set.class_count > model.class_count())
    throw InvalidArgument("dataset has more classes than the model outputs");

  const std::size_t layers = model.layer_count();
  MlpModel::ParameterGradient grad;
  // First/second moments (Adam) or velocity (momentum, first moment only).
  std::vector<Eigen::MatrixXd> mw(layers), vw(layers);
  std::vector<Eigen::VectorXd> mb(layers), vb(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    mw[l] = Eigen::MatrixXd::Zero(model.weights(l).rows(), model.weights(l).cols());
    vw[l] = mw[l];
    mb[l] = Eigen::VectorXd::Zero(model.biases(l).size());
    vb[l] = mb[l];
  }

  Rng rng(config.seed);
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> batch_labels;
  std::size_t step = 0;
  std::vector<EpochMetrics> history;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < train_set.size(); start += config.batch_size) {
      const int count = std::min(config.batch_size, train_set.size() - start);
      Eigen::MatrixXd batch(count, train_set.dim());
      batch_labels.resize(count);
      for (int i = 0; i < count; ++i) {
        batch.row(i) = train_set.inputs.row(order[start + i]);
        batch_labels[i] = train_set.labels[order[start + i]];
      }
      const double loss =
          model.loss_and_parameter_gradient(batch, batch_labels, config.l2_coefficient, grad);
      ++step;
      if (!std::isfinite(loss)) throw Divergence("training loss became non-finite", step);

      const double lr = config.learning_rate;
      for (std::size_t l = 0; l < layers; ++l) {
        if (config.optimizer == OptimizerKind::adam) {
          const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
          const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
          mw[l] = config.beta1 * mw[l] + (1.0 - config.beta1) * grad.weights[l];
          vw[l] = config.beta2 * vw[l] + (1.0 - config.beta2) * grad.weights[l].cwiseAbs2();
          mb[l] = config.beta1 * mb[l] + (1.0 - config.beta1) * grad.biases[l];
          vb[l] = config.beta2 * vb[l] + (1.0 - config.beta2) * grad.biases[l].cwiseAbs2();
          model.weights(l).array() -=
              lr * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + config.epsilon);
          model.biases(l).array() -=
              lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + config.epsilon);
        } else {
          mw[l] = config.momentum * mw[l] + grad.weights[l];
          mb[l] = config.momentum * mb[l] + grad.biases[l];
          model.weights(l) -= lr * mw[l];
          model.biases(l) -= lr * mb[l];
        }
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = mean_data_loss(model, train_set);
    if (!std::isfinite(m.train_loss)) throw Divergence("training loss became non-finite", step);
    m.train_accuracy = accuracy(model, train_set);
    m.test_accuracy =
        test_set ? accuracy(model, *test_set) : std::numeric_limits<double>::quiet_NaN();
    history.push_back(m);
    if (on_epoch) on_epoch(m, model);
  }
  return history;
}

std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,test_acc\n";
  for (const auto& m : metrics)
    os << m.epoch << ',' << format_double(m.train_loss) << ',' << format_double(m.train_accuracy)
       << ',' << format_double(m.test_accuracy) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'U', 'B', 'T', 'O', 'M', 'L', 'P'};

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* what) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    if (bytes_.size() - pos_ < sizeof(U))
      throw MalformedFile(std::string("truncated model file while reading ") + what, pos_);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  void expect_magic() {
    if (bytes_.size() < sizeof(kMagic) || std::memcmp(bytes_.data(), kMagic, sizeof(kMagic)) != 0)
      throw MalformedFile("not a model file (bad magic bytes)", 0);
    pos_ = sizeof(kMagic);
  }

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const MlpModel& model) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kModelFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.layer_dims().size()));
  for (int d : model.layer_dims()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const auto& w = model.weights(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) put_le<double>(out, w(r, c));
    const auto& b = model.biases(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) put_le<double>(out, b[i]);
  }
  return out;
}

MlpModel deserialize_model(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  in.expect_magic();
  const std::size_t version_pos = in.pos();
  const auto version = in.get<std::uint32_t>("version");
  if (version != kModelFormatVersion)
    throw MalformedFile("unsupported model format version " + std::to_string(version) +
                            " (expected " + std::to_string(kModelFormatVersion) + ")",
                        version_pos);
  const std::size_t count_pos = in.pos();
  const auto count = in.get<std::uint32_t>("layer count");
  if (count < 2 || count > 1024) throw MalformedFile("implausible layer count", count_pos);
  std::vector<int> dims;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t p = in.pos();
    const auto d = in.get<std::uint64_t>("layer size");
    if (d < 1 || d > (1u << 24)) throw MalformedFile("implausible layer size", p);
    dims.push_back(static_cast<int>(d));
  }
  if (dims.back() < 2) throw MalformedFile("model must output at least 2 classes", in.pos());
  MlpModel model(dims);
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    auto& w = model.weights(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = in.get<double>("weights");
    auto& b = model.biases(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = in.get<double>("biases");
  }
  if (!in.at_end()) throw MalformedFile("trailing bytes after model parameters", in.pos());
  return model;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace subtomo
