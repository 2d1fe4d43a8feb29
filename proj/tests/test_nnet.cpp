#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rbx/nnet.hpp"
#include "rbx/random.hpp"

#include <cstdio>
#include <filesystem>

using namespace rbx;

namespace {

bool identical(const Network& a, const Network& b) {
  if (a.layers().size() != b.layers().size()) return false;
  for (std::size_t l = 0; l < a.layers().size(); ++l) {
    if (a.layers()[l].weights != b.layers()[l].weights) return false;
    if (a.layers()[l].bias != b.layers()[l].bias) return false;
  }
  return true;
}

Dataset random_dataset(int in, int out, int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(in, n), y(out, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < in; ++i) x(i, j) = rng.uniform(-1, 1);
    for (int i = 0; i < out; ++i) y(i, j) = rng.uniform(-1, 1);
  }
  return {x, y};
}

// Two classes split by the line x0 + x1 = 0, labels 0/1.
Dataset separable_dataset(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(2, n), y(1, n);
  for (int j = 0; j < n; ++j) {
    x(0, j) = rng.uniform(-1, 1);
    x(1, j) = rng.uniform(-1, 1);
    y(0, j) = x(0, j) + x(1, j) > 0.0 ? 1.0 : 0.0;
  }
  return {x, y};
}

}  // namespace

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(init(NetworkSpec{{3}}), std::invalid_argument);
  CHECK_THROWS_AS(init(NetworkSpec{{3, 0, 1}}), std::invalid_argument);
}

TEST_CASE("init is deterministic with fan-in scaled shapes") {
  const NetworkSpec spec{{2, 5, 1}, Activation::Tanh, Activation::Linear, 42};
  const Network a = init(spec), b = init(spec);
  CHECK(identical(a, b));
  REQUIRE(a.layers().size() == 2);
  CHECK(a.layers()[0].weights.rows() == 5);
  CHECK(a.layers()[0].weights.cols() == 2);
  CHECK(a.layers()[1].weights.rows() == 1);
  CHECK(a.layers()[1].weights.cols() == 5);
  CHECK(a.layers()[0].weights.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(2.0));
  CHECK(a.layers()[1].bias.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(5.0));

  NetworkSpec other = spec;
  other.seed = 43;
  CHECK_FALSE(identical(a, init(other)));
  CHECK(a.parameter_count() == 5 * 2 + 5 + 5 + 1);
}

TEST_CASE("forward") {
  SUBCASE("zero parameters give zero output") {
    Network net = init({{3, 4, 2}, Activation::Tanh, Activation::Linear, 1});
    for (auto& l : net.mutable_layers()) {
      l.weights.setZero();
      l.bias.setZero();
    }
    CHECK(forward(net, Eigen::Vector3d(0.3, -2, 5)).isZero());
  }
  SUBCASE("single linear layer") {
    Network net = init({{1, 1}, Activation::Tanh, Activation::Linear, 1});
    net.mutable_layers()[0].weights(0, 0) = 2.5;
    net.mutable_layers()[0].bias(0) = -0.75;
    Eigen::VectorXd x(1);
    x << 3.0;
    CHECK(forward(net, x)(0) == doctest::Approx(2.5 * 3.0 - 0.75));
  }
  SUBCASE("tanh output bounded") {
    const Network net = init({{2, 8, 3}, Activation::Tanh, Activation::Tanh, 7});
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd y = forward(net, Eigen::Vector2d(rng.uniform(-50, 50), rng.uniform(-50, 50)));
      CHECK(y.cwiseAbs().maxCoeff() <= 1.0);
    }
  }
  SUBCASE("dimension mismatch") {
    const Network net = init({{2, 3, 1}, Activation::Tanh, Activation::Linear, 1});
    CHECK_THROWS_AS(forward(net, Eigen::Vector3d::Zero()), std::invalid_argument);
  }
}

TEST_CASE("mse") {
  Network net = init({{2, 3, 1}, Activation::Tanh, Activation::Linear, 3});
  Dataset d = random_dataset(2, 1, 10, 4);
  d.targets = net.forward_batch(d.inputs);
  CHECK(mse(net, d) == 0.0);

  Network lin = init({{1, 1}, Activation::Tanh, Activation::Linear, 1});
  lin.mutable_layers()[0].weights.setZero();
  lin.mutable_layers()[0].bias.setConstant(0.5);
  CHECK(mse(lin, Dataset(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1))) == 0.25);

  SUBCASE("size-weighted mean over concatenation") {
    const Dataset a = random_dataset(2, 1, 7, 10), b = random_dataset(2, 1, 13, 11);
    Eigen::MatrixXd x(2, 20), y(1, 20);
    x << a.inputs, b.inputs;
    y << a.targets, b.targets;
    const double whole = mse(net, Dataset(x, y));
    CHECK(whole == doctest::Approx((7 * mse(net, a) + 13 * mse(net, b)) / 20.0).epsilon(1e-13));
  }
  SUBCASE("empty dataset") {
    CHECK_THROWS_AS(mse(net, Dataset(Eigen::MatrixXd(2, 0), Eigen::MatrixXd(1, 0))),
                    std::invalid_argument);
  }
}

TEST_CASE("gradient check") {
  SUBCASE("tanh nets match central differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Network net = init({{2, 4, 1}, Activation::Tanh, Activation::Linear, seed});
      CHECK(gradient_check(net, random_dataset(2, 1, 10, 100 + seed), 1e-5) < 1e-4);
    }
  }
  SUBCASE("targets equal outputs") {
    const Network net = init({{2, 4, 1}, Activation::Tanh, Activation::Linear, 9});
    Dataset d = random_dataset(2, 1, 10, 5);
    d.targets = net.forward_batch(d.inputs);
    for (const auto& g : gradient(net, d)) {
      CHECK(g.weights.cwiseAbs().maxCoeff() == 0.0);
      CHECK(g.bias.cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("relu net away from kinks") {
    const Network net = init({{2, 6, 3, 2}, Activation::ReLU, Activation::Linear, 21});
    Dataset d = random_dataset(2, 2, 10, 22);
    // Reject samples whose first-layer pre-activations sit near a kink.
    const auto& w = net.layers()[0];
    for (Eigen::Index j = 0; j < d.inputs.cols(); ++j) {
      const Eigen::VectorXd z = w.weights * d.inputs.col(j) + w.bias;
      CHECK(z.cwiseAbs().minCoeff() > 1e-3);
    }
    CHECK(gradient_check(net, d, 1e-5) < 1e-4);
  }
}

TEST_CASE("training") {
  const Dataset data = separable_dataset(200, 77);
  const Network start = init({{2, 5, 1}, Activation::Tanh, Activation::Linear, 5});
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 20;
  cfg.epochs = 500;
  cfg.shuffle_seed = 3;

  SUBCASE("loss decreases on a separable problem") {
    const TrainResult r = train(start, data, cfg);
    REQUIRE(r.loss_history.size() == 500);
    CHECK(r.loss_history.back() < mse(start, data));
    CHECK(r.network.all_finite());
  }
  SUBCASE("bitwise deterministic") {
    CHECK(identical(train(start, data, cfg).network, train(start, data, cfg).network));
  }
  SUBCASE("zero epochs leave parameters unchanged") {
    cfg.epochs = 0;
    const TrainResult r = train(start, data, cfg);
    CHECK(identical(r.network, start));
    CHECK(r.loss_history.empty());
  }
  SUBCASE("full-batch training ignores row duplication and order") {
    cfg.epochs = 50;
    cfg.batch_size = static_cast<int>(data.size());
    const Network once = train(start, data, cfg).network;

    Eigen::MatrixXd x(2, 400), y(1, 400);
    x << data.inputs, data.inputs;
    y << data.targets, data.targets;
    TrainConfig dup = cfg;
    dup.batch_size = 400;
    const Network twice = train(start, Dataset(x, y), dup).network;

    Eigen::MatrixXd xr = data.inputs.rowwise().reverse(), yr = data.targets.rowwise().reverse();
    const Network reversed = train(start, Dataset(xr, yr), cfg).network;
    for (std::size_t l = 0; l < once.layers().size(); ++l) {
      CHECK((once.layers()[l].weights - twice.layers()[l].weights).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((once.layers()[l].weights - reversed.layers()[l].weights).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(mse(once, Dataset(xr, yr)) == doctest::Approx(mse(once, data)).epsilon(1e-14));
  }
  SUBCASE("adam and step decay") {
    cfg.optimizer = Optimizer::Adam;
    cfg.learning_rate = 0.01;
    cfg.schedule = LearningRateSchedule::StepDecay;
    cfg.patience = 10;
    const TrainResult r = train(start, data, cfg, &data);
    CHECK(r.validation_history.size() == r.loss_history.size());
    CHECK(r.loss_history.back() < 0.5 * mse(start, data));
  }
  SUBCASE("divergence is reported") {
    cfg.learning_rate = 1e6;
    cfg.epochs = 50;
    Network big = init({{2, 5, 1}, Activation::ReLU, Activation::Linear, 5});
    Dataset scaled = data;
    scaled.inputs *= 1e3;
    CHECK_THROWS_AS(train(big, scaled, cfg), TrainingDiverged);
  }
  SUBCASE("invalid config") {
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(train(start, data, cfg), std::invalid_argument);
  }
}

TEST_CASE("json round trip") {
  const Network net = init({{3, 7, 4, 2}, Activation::ReLU, Activation::Tanh, 99});
  const Network back = network_from_json(nlohmann::json::parse(to_json(net).dump()));
  CHECK(identical(net, back));
  CHECK(back.spec().hidden_activation == Activation::ReLU);
  CHECK(back.spec().output_activation == Activation::Tanh);
  CHECK(back.spec().seed == 99);

  const auto path = std::filesystem::temp_directory_path() / "rbx_test_network.json";
  save_network(net, path.string());
  CHECK(identical(net, load_network(path.string())));
  std::filesystem::remove(path);

  auto bad = to_json(net);
  bad["layers"][0]["weights"].erase(0);
  CHECK_THROWS_AS(network_from_json(bad), std::invalid_argument);
}
