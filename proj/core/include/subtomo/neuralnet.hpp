#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "subtomo/fields.hpp"
#include "subtomo/random.hpp"

namespace subtomo {

struct Dataset;

// Fully connected classifier: rectifier hidden layers, softmax head.
// Layer l maps dims[l] -> dims[l+1] with weights of shape dims[l+1] x dims[l].
class MlpModel final : public ConfidenceField {
 public:
  // All parameters zero.
  explicit MlpModel(std::vector<int> layer_dims);
  // He-style init: weights ~ N(0, 2 / fan_in), biases zero.
  static MlpModel he_initialized(std::vector<int> layer_dims, Rng& rng);

  int class_count() const override { return dims_.back(); }
  int ambient_dim() const override { return dims_.front(); }
  std::string describe() const override;

  const std::vector<int>& layer_dims() const { return dims_; }
  std::size_t layer_count() const { return weights_.size(); }
  std::size_t parameter_count() const;

  Eigen::MatrixXd& weights(std::size_t layer) { return weights_.at(layer); }
  const Eigen::MatrixXd& weights(std::size_t layer) const { return weights_.at(layer); }
  Eigen::VectorXd& biases(std::size_t layer) { return biases_.at(layer); }
  const Eigen::VectorXd& biases(std::size_t layer) const { return biases_.at(layer); }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const { return evaluate(x); }
  Eigen::VectorXd logits(const Eigen::VectorXd& x) const;
  // Alias of loss_and_input_gradient: backpropagation down to the input.
  LossAndGradient input_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& target) const {
    return loss_and_input_gradient(x, target);
  }

  // Activations saved by a forward pass, consumed by backprop_to_input.
  struct Cache {
    std::vector<Eigen::VectorXd> inputs;     // input of each layer
    std::vector<Eigen::VectorXd> preacts;    // pre-activation of each layer
  };
  Eigen::VectorXd logits(const Eigen::VectorXd& x, Cache& cache) const;
  // Given dL/dlogits, returns dL/dX.
  Eigen::VectorXd backprop_to_input(const Cache& cache, const Eigen::VectorXd& logit_delta) const;

  struct ParameterGradient {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
  };
  // Mean cross-entropy over the rows of `inputs` plus (l2 / 2) * sum |W|^2,
  // and its gradient with respect to every weight and bias.
  double loss_and_parameter_gradient(const Eigen::MatrixXd& inputs, std::span<const int> labels,
                                     double l2, ParameterGradient& grad) const;

  // Predicted class for each row.
  std::vector<int> predict(const Eigen::MatrixXd& inputs) const;
  // Row-wise probabilities (N x C).
  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& inputs) const;

 protected:
  Eigen::VectorXd do_log_probabilities(const Eigen::VectorXd& x) const override;
  LossAndGradient do_loss_and_input_gradient(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& target) const override;

 private:
  std::vector<int> dims_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

// Arithmetic mean of member probabilities.
class EnsembleModel final : public ConfidenceField {
 public:
  explicit EnsembleModel(std::vector<MlpModel> members);

  int class_count() const override { return members_.front().class_count(); }
  int ambient_dim() const override { return members_.front().ambient_dim(); }
  std::string describe() const override;

  const std::vector<MlpModel>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }

 protected:
  Eigen::VectorXd do_log_probabilities(const Eigen::VectorXd& x) const override;
  LossAndGradient do_loss_and_input_gradient(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& target) const override;

 private:
  std::vector<MlpModel> members_;
};

Eigen::VectorXd ensemble_evaluate(const EnsembleModel& ensemble, const Eigen::VectorXd& x);

enum class OptimizerKind { adam, sgd_momentum };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 32;
  double l2_coefficient = 1e-4;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;  // NaN when no test split was given
};

// Called after every epoch with the current model.
using EpochCallback = std::function<void(const EpochMetrics&, const MlpModel&)>;

// Minibatch training on the mean cross-entropy plus L2 penalty. Deterministic
// given config.seed. Throws Divergence if the loss becomes non-finite.
std::vector<EpochMetrics> train(MlpModel& model, const Dataset& train_set,
                                const Dataset* test_set, const TrainConfig& config,
                                const EpochCallback& on_epoch = {});

double accuracy(const MlpModel& model, const Dataset& data);

// CSV with header epoch,train_loss,train_acc,test_acc.
std::string metrics_csv(const std::vector<EpochMetrics>& metrics);

// Binary model file, all integers and floats little-endian:
//   8 bytes  magic "SUBTOMLP"
//   u32      format version (kModelFormatVersion)
//   u32      number of entries in layer_dims
//   u64[]    layer_dims
//   per layer: f64 weights row-major (out x in), then f64 biases
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const MlpModel& model);
MlpModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace subtomo
