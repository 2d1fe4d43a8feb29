#pragma once

// Dense feed-forward networks with deterministic initialization and
// SGD/Adam training. These serve as the initial estimators that get
// Rao-Blackwellized downstream.

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rbx {

enum class Activation { Linear, Tanh, ReLU };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct NetworkSpec {
  /// Includes the input layer, e.g. {2, 10, 5, 1}.
  std::vector<int> layer_sizes;
  Activation hidden_activation = Activation::Tanh;
  Activation output_activation = Activation::Linear;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on fewer than two layers or a size < 1.
  void validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // (out x in)
  Eigen::VectorXd bias;     // (out)
};

class Network {
 public:
  Network(NetworkSpec spec, std::vector<DenseLayer> layers);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  int input_size() const { return spec_.layer_sizes.front(); }
  int output_size() const { return spec_.layer_sizes.back(); }
  std::size_t parameter_count() const;
  bool all_finite() const;

  /// Batched forward pass; one sample per column.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;

 private:
  NetworkSpec spec_;
  std::vector<DenseLayer> layers_;
};

/// Samples stored column-wise: inputs (in x n), targets (out x n).
struct Dataset {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;

  Dataset() = default;
  Dataset(Eigen::MatrixXd in, Eigen::MatrixXd out);

  static Dataset from_rows(const std::vector<std::vector<double>>& inputs,
                           const std::vector<std::vector<double>>& targets);

  Eigen::Index size() const { return inputs.cols(); }
  bool empty() const { return inputs.cols() == 0; }
};

enum class Optimizer { SGD, Adam };
enum class LearningRateSchedule { Constant, StepDecay };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& name);
std::string to_string(LearningRateSchedule s);
LearningRateSchedule schedule_from_string(const std::string& name);

struct TrainConfig {
  Optimizer optimizer = Optimizer::SGD;
  double learning_rate = 0.01;
  int batch_size = 1;
  int epochs = 100;
  std::uint64_t shuffle_seed = 0;

  // StepDecay halves the rate after `patience` epochs without a new best loss.
  LearningRateSchedule schedule = LearningRateSchedule::Constant;
  int patience = 50;
  double decay_factor = 0.5;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

struct TrainResult {
  Network network;
  std::vector<double> loss_history;        // training MSE after each epoch
  std::vector<double> validation_history;  // empty without a validation set
};

/// Raised when a training epoch produces a non-finite loss or parameters.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform weights and biases in [-1/sqrt(fan_in), 1/sqrt(fan_in)] drawn from
/// Rng(spec.seed), layer by layer, weights row-major then bias.
Network init(const NetworkSpec& spec);

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& x);

TrainResult train(const Network& net, const Dataset& data, const TrainConfig& cfg,
                  const Dataset* validation = nullptr);

/// Mean over samples of the squared Euclidean output-target distance.
double mse(const Network& net, const Dataset& data);

/// Full-batch gradient of mse() with respect to every weight and bias.
std::vector<DenseLayer> gradient(const Network& net, const Dataset& data);

/// Max over parameters of |backprop - central difference| / (|fd| + 1e-8).
double gradient_check(const Network& net, const Dataset& data, double step = 1e-5);

nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace rbx
