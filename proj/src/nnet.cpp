#include "rbx/nnet.hpp"

#include "rbx/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace rbx {

namespace {

void apply_activation(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::Linear:
      break;
    case Activation::Tanh:
      z = z.array().tanh();
      break;
    case Activation::ReLU:
      z = z.array().max(0.0);
      break;
  }
}

// Derivative expressed through the pre-activation z and activation a.
void multiply_activation_derivative(Activation act, const Eigen::MatrixXd& z,
                                    const Eigen::MatrixXd& a, Eigen::MatrixXd& delta) {
  switch (act) {
    case Activation::Linear:
      break;
    case Activation::Tanh:
      delta.array() *= 1.0 - a.array().square();
      break;
    case Activation::ReLU:
      // Subgradient at 0 is 0.
      delta.array() *= (z.array() > 0.0).cast<double>();
      break;
  }
}

Activation layer_activation(const NetworkSpec& spec, std::size_t layer, std::size_t n_layers) {
  return layer + 1 == n_layers ? spec.output_activation : spec.hidden_activation;
}

// Reusable buffers for batched forward/backward passes.
struct Workspace {
  std::vector<Eigen::MatrixXd> pre;   // z per layer
  std::vector<Eigen::MatrixXd> post;  // a per layer (post[0] = input)
  Eigen::MatrixXd delta;
};

void forward_pass(const Network& net, const Eigen::MatrixXd& inputs, Workspace& ws) {
  const auto& layers = net.layers();
  ws.pre.resize(layers.size());
  ws.post.resize(layers.size() + 1);
  ws.post[0] = inputs;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    ws.pre[l].noalias() = layers[l].weights * ws.post[l];
    ws.pre[l].colwise() += layers[l].bias;
    ws.post[l + 1] = ws.pre[l];
    apply_activation(layer_activation(net.spec(), l, layers.size()), ws.post[l + 1]);
  }
}

// Backprop of L = (1/B) sum ||out - target||^2 over the batch in `ws`.
void backward_pass(const Network& net, const Eigen::MatrixXd& targets, Workspace& ws,
                   std::vector<DenseLayer>& grads) {
  const auto& layers = net.layers();
  const std::size_t n = layers.size();
  const double scale = 2.0 / static_cast<double>(targets.cols());
  grads.resize(n);
  ws.delta = scale * (ws.post[n] - targets);
  for (std::size_t l = n; l-- > 0;) {
    multiply_activation_derivative(layer_activation(net.spec(), l, n), ws.pre[l],
                                   ws.post[l + 1], ws.delta);
    grads[l].weights.noalias() = ws.delta * ws.post[l].transpose();
    grads[l].bias = ws.delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd next = layers[l].weights.transpose() * ws.delta;
      ws.delta.swap(next);
    }
  }
}

double squared_error_sum(const Eigen::MatrixXd& out, const Eigen::MatrixXd& targets) {
  return (out - targets).squaredNorm();
}

class AdamState {
 public:
  explicit AdamState(const std::vector<DenseLayer>& shape) {
    for (const auto& l : shape) {
      m_.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()),
                    Eigen::VectorXd::Zero(l.bias.size())});
    }
    v_ = m_;
  }

  void step(std::vector<DenseLayer>& params, const std::vector<DenseLayer>& grads,
            double lr, const TrainConfig& cfg) {
    ++t_;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t l = 0; l < params.size(); ++l) {
      update(params[l].weights, grads[l].weights, m_[l].weights, v_[l].weights, lr, b1, b2,
             c1, c2, cfg.adam_epsilon);
      update(params[l].bias, grads[l].bias, m_[l].bias, v_[l].bias, lr, b1, b2, c1, c2,
             cfg.adam_epsilon);
    }
  }

 private:
  template <typename P, typename G, typename M>
  static void update(P& p, const G& g, M& m, M& v, double lr, double b1, double b2,
                     double c1, double c2, double eps) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }

  std::vector<DenseLayer> m_, v_;
  long long t_ = 0;
};

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& src, const std::vector<Eigen::Index>& idx,
                               std::size_t begin, std::size_t end) {
  Eigen::MatrixXd out(src.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t k = begin; k < end; ++k) {
    out.col(static_cast<Eigen::Index>(k - begin)) = src.col(idx[k]);
  }
  return out;
}

void check_dataset(const Network& net, const Dataset& data) {
  if (data.inputs.rows() != net.input_size() || data.targets.rows() != net.output_size()) {
    throw std::invalid_argument("dataset dimensions do not match network");
  }
  if (data.inputs.cols() != data.targets.cols()) {
    throw std::invalid_argument("dataset inputs and targets differ in length");
  }
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Tanh: return "tanh";
    case Activation::ReLU: return "relu";
  }
  return "linear";
}

Activation activation_from_string(const std::string& name) {
  if (name == "linear") return Activation::Linear;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::ReLU;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Optimizer o) { return o == Optimizer::SGD ? "sgd" : "adam"; }

Optimizer optimizer_from_string(const std::string& name) {
  if (name == "sgd") return Optimizer::SGD;
  if (name == "adam") return Optimizer::Adam;
  throw std::invalid_argument("unknown optimizer: " + name);
}

std::string to_string(LearningRateSchedule s) {
  return s == LearningRateSchedule::Constant ? "constant" : "step_decay";
}

LearningRateSchedule schedule_from_string(const std::string& name) {
  if (name == "constant") return LearningRateSchedule::Constant;
  if (name == "step_decay") return LearningRateSchedule::StepDecay;
  throw std::invalid_argument("unknown learning-rate schedule: " + name);
}

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("network needs at least an input and an output layer");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("layer sizes must be >= 1");
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("decay_factor must lie in (0, 1]");
  }
}

Network::Network(NetworkSpec spec, std::vector<DenseLayer> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {
  spec_.validate();
  if (layers_.size() != spec_.layer_sizes.size() - 1) {
    throw std::invalid_argument("layer count does not match spec");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto in = spec_.layer_sizes[l], out = spec_.layer_sizes[l + 1];
    if (layers_[l].weights.rows() != out || layers_[l].weights.cols() != in ||
        layers_[l].bias.size() != out) {
      throw std::invalid_argument("layer " + std::to_string(l) + " shape mismatch");
    }
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

bool Network::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& l) {
    return l.weights.allFinite() && l.bias.allFinite();
  });
}

Eigen::MatrixXd Network::forward_batch(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != input_size()) {
    throw std::invalid_argument("input dimension " + std::to_string(inputs.rows()) +
                                " does not match network input " +
                                std::to_string(input_size()));
  }
  Workspace ws;
  forward_pass(*this, inputs, ws);
  return std::move(ws.post.back());
}

Dataset::Dataset(Eigen::MatrixXd in, Eigen::MatrixXd out)
    : inputs(std::move(in)), targets(std::move(out)) {
  if (inputs.cols() != targets.cols()) {
    throw std::invalid_argument("dataset inputs and targets differ in length");
  }
}

Dataset Dataset::from_rows(const std::vector<std::vector<double>>& in,
                           const std::vector<std::vector<double>>& out) {
  if (in.size() != out.size() || in.empty()) {
    throw std::invalid_argument("dataset needs equally many (>= 1) inputs and targets");
  }
  const auto n = static_cast<Eigen::Index>(in.size());
  const auto di = static_cast<Eigen::Index>(in.front().size());
  const auto dt = static_cast<Eigen::Index>(out.front().size());
  Eigen::MatrixXd x(di, n), y(dt, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& r = in[static_cast<std::size_t>(j)];
    const auto& t = out[static_cast<std::size_t>(j)];
    if (static_cast<Eigen::Index>(r.size()) != di || static_cast<Eigen::Index>(t.size()) != dt) {
      throw std::invalid_argument("dataset rows differ in dimension");
    }
    x.col(j) = Eigen::Map<const Eigen::VectorXd>(r.data(), di);
    y.col(j) = Eigen::Map<const Eigen::VectorXd>(t.data(), dt);
  }
  return {std::move(x), std::move(y)};
}

Network init(const NetworkSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const int in = spec.layer_sizes[l], out = spec.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weights(r, c) = rng.uniform(-bound, bound);
    for (int r = 0; r < out; ++r) layer.bias(r) = rng.uniform(-bound, bound);
    layers.push_back(std::move(layer));
  }
  return {spec, std::move(layers)};
}

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& x) {
  return net.forward_batch(x);
}

double mse(const Network& net, const Dataset& data) {
  check_dataset(net, data);
  if (data.empty()) throw std::invalid_argument("mse of an empty dataset");
  return squared_error_sum(net.forward_batch(data.inputs), data.targets) /
         static_cast<double>(data.size());
}

std::vector<DenseLayer> gradient(const Network& net, const Dataset& data) {
  check_dataset(net, data);
  if (data.empty()) throw std::invalid_argument("gradient of an empty dataset");
  Workspace ws;
  std::vector<DenseLayer> grads;
  forward_pass(net, data.inputs, ws);
  backward_pass(net, data.targets, ws, grads);
  return grads;
}

TrainResult train(const Network& start, const Dataset& data, const TrainConfig& cfg,
                  const Dataset* validation) {
  cfg.validate();
  check_dataset(start, data);
  if (data.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  if (validation) check_dataset(start, *validation);

  TrainResult result{start, {}, {}};
  Network& net = result.network;
  auto& params = net.mutable_layers();

  const auto n = static_cast<std::size_t>(data.size());
  const auto batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  const bool full_batch = batch == n;

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(cfg.shuffle_seed);
  AdamState adam(params);
  Workspace ws;
  std::vector<DenseLayer> grads;
  Eigen::MatrixXd xb, yb;

  double lr = cfg.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (!full_batch) rng.shuffle(order.begin(), order.end());
    for (std::size_t b = 0; b < n; b += batch) {
      const std::size_t e = std::min(n, b + batch);
      const Eigen::MatrixXd* x = &data.inputs;
      const Eigen::MatrixXd* y = &data.targets;
      if (!full_batch) {
        xb = gather_columns(data.inputs, order, b, e);
        yb = gather_columns(data.targets, order, b, e);
        x = &xb;
        y = &yb;
      }
      forward_pass(net, *x, ws);
      backward_pass(net, *y, ws, grads);
      if (cfg.optimizer == Optimizer::Adam) {
        adam.step(params, grads, lr, cfg);
      } else {
        for (std::size_t l = 0; l < params.size(); ++l) {
          params[l].weights -= lr * grads[l].weights;
          params[l].bias -= lr * grads[l].bias;
        }
      }
    }

    const double loss = mse(net, data);
    if (!std::isfinite(loss) || !net.all_finite()) {
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                             " (loss " + std::to_string(loss) + ", learning rate " +
                             std::to_string(lr) + ")");
    }
    result.loss_history.push_back(loss);
    if (validation) result.validation_history.push_back(mse(net, *validation));

    if (cfg.schedule == LearningRateSchedule::StepDecay) {
      if (loss < best) {
        best = loss;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        lr *= cfg.decay_factor;
        since_best = 0;
      }
    }
  }
  return result;
}

double gradient_check(const Network& net, const Dataset& data, double step) {
  const auto analytic = gradient(net, data);
  Network probe = net;
  double worst = 0.0;
  auto check = [&](double& param, double grad) {
    const double saved = param;
    param = saved + step;
    const double up = mse(probe, data);
    param = saved - step;
    const double down = mse(probe, data);
    param = saved;
    const double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(grad - fd) / (std::abs(fd) + 1e-8));
  };
  auto& layers = probe.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (Eigen::Index i = 0; i < layers[l].weights.size(); ++i)
      check(layers[l].weights.data()[i], analytic[l].weights.data()[i]);
    for (Eigen::Index i = 0; i < layers[l].bias.size(); ++i)
      check(layers[l].bias(i), analytic[l].bias(i));
  }
  return worst;
}

nlohmann::json to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    layers.push_back({{"rows", l.weights.rows()},
                      {"cols", l.weights.cols()},
                      {"weights", w},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  const auto& spec = net.spec();
  return {{"format", "rbx-network"},
          {"version", 1},
          {"layer_sizes", spec.layer_sizes},
          {"hidden_activation", to_string(spec.hidden_activation)},
          {"output_activation", to_string(spec.output_activation)},
          {"seed", spec.seed},
          {"layers", layers}};
}

Network network_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "rbx-network") {
    throw std::invalid_argument("not an rbx-network document");
  }
  NetworkSpec spec;
  spec.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  spec.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
  spec.output_activation = activation_from_string(j.at("output_activation").get<std::string>());
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.validate();
  std::vector<DenseLayer> layers;
  for (const auto& jl : j.at("layers")) {
    const auto rows = jl.at("rows").get<Eigen::Index>();
    const auto cols = jl.at("cols").get<Eigen::Index>();
    const auto w = jl.at("weights").get<std::vector<double>>();
    const auto b = jl.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
        static_cast<Eigen::Index>(b.size()) != rows) {
      throw std::invalid_argument("layer array sizes inconsistent with rows/cols");
    }
    DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        layer.weights(r, c) = w[static_cast<std::size_t>(r * cols + c)];
    for (Eigen::Index r = 0; r < rows; ++r) layer.bias(r) = b[static_cast<std::size_t>(r)];
    layers.push_back(std::move(layer));
  }
  return {spec, std::move(layers)};
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_json(net).dump(2) << '\n';
}

Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return network_from_json(nlohmann::json::parse(in));
}

}  // namespace rbx
