#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rbx/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace rbx;
using nlohmann::json;

namespace {

ExperimentConfig make(const std::string& name, std::vector<std::uint64_t> seeds, json params, int bins = 0) {
  ExperimentConfig c;
  c.name = name;
  c.seeds = std::move(seeds);
  c.params = std::move(params);
  c.bins = bins;
  return c;
}

json without_time(json j) {
  j.erase("wall_time_s");
  return j;
}

ExperimentConfig small_yield(bool oracle = false) {
  return make("yield", {1},
              {{"n_train", 300},
               {"n_validation", 100},
               {"test_step", 0.05},
               {"rb_step", 0.05},
               {"nets", json::array({json::array({5})})},
               {"epochs", 30},
               {"oracle_estimator", oracle}},
              200);
}

ExperimentConfig small_damage() {
  return make("damage", {0},
              {{"n_train", 200},
               {"epochs", 2},
               {"test_step", 0.02},
               {"hidden", {10, 10}},
               {"witness_pairs", 100}},
              10);
}

ExperimentConfig small_rubber(double noise) {
  return make("rubber", {0},
              {{"n_steps", 20}, {"n_regions", 40}, {"noise_sd", noise}, {"epochs", 20}, {"restarts", 1},
               {"orientations", 4}});
}

}  // namespace

TEST_CASE("configuration resolution") {
  for (const auto& name : kExperimentNames) {
    const ExperimentConfig d = default_config(name);
    CHECK(d.name == name);
    CHECK_FALSE(d.seeds.empty());
    CHECK(resolve_config(make(name, {}, json::object())).params == resolve_config(d).params);
  }
  CHECK_THROWS_AS(default_config("nope"), std::invalid_argument);
  CHECK_THROWS_AS(resolve_config(make("yield", {}, {{"no_such_key", 1}})), std::invalid_argument);
  CHECK_THROWS_AS(resolve_config(make("yield", {}, json::object(), 1751)), std::invalid_argument);
  CHECK_THROWS_AS(resolve_config(make("yield", {}, json::array())), std::invalid_argument);

  SUBCASE("overrides and derived values are explicit") {
    const ExperimentConfig r = resolve_config(make("damage", {3, 4}, {{"epochs", 7}}, 12));
    CHECK(r.seeds == std::vector<std::uint64_t>{3, 4});
    CHECK(r.bins == 12);
    CHECK(r.params.at("epochs") == 7);
    CHECK(r.params.at("target_scale").get<double>() == doctest::Approx(0.01 * 7.0));
    CHECK(r.params.at("test_step").get<double>() == 0.005);
    ExperimentConfig full = make("damage", {}, json::object());
    full.full_resolution = true;
    CHECK(resolve_config(full).params.at("test_step").get<double>() == 0.001);
  }

  SUBCASE("json round-trip") {
    ExperimentConfig c = make("rubber", {1, 2}, {{"epochs", 5}}, 3);
    c.out_dir = "x/y";
    c.full_resolution = true;
    const ExperimentConfig back = experiment_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(experiment_config_from_json(json{{"experiment", "yield"}}).seeds.empty());
  }
}

TEST_CASE("microsphere run") {
  CHECK(std::abs(microsphere_average(SymTensor3d::identity(), 16, 8) - 1.0) <= 1e-15);
  CHECK(microsphere_average(SymTensor3d::diagonal(3, 0, 0), 16, 8) == doctest::Approx(1.0).epsilon(1e-13));
  const RunReport r = run_microsphere(make("microsphere", {0, 1}, json::object()));
  CHECK(r.all_passed());
  CHECK(r.seeds.size() == 2);
  CHECK(r.aggregate.at("max_deviation").get<double>() < 1e-8);
  REQUIRE(r.check("identity_exact") != nullptr);
  CHECK(r.check("identity_exact")->passed);
  // Orbit average against a fixed direction, over 11 tensors.
  CHECK(r.seeds[0].variants[0].report.domain_size == 11);
}

TEST_CASE("yield run") {
  const RunReport r = run_yield(small_yield());
  REQUIRE(r.seeds.size() == 1);
  REQUIRE(r.seeds[0].variants.size() == 1);
  CHECK(r.seeds[0].variants[0].name == "net_5_1");
  for (const auto& c : r.checks) {
    if (c.name.rfind("rb_never_worse_construction", 0) == 0) CHECK(c.passed);
  }
  CHECK(r.curves.rows.size() == 200);
  CHECK(r.aggregate.at("s_max").get<double>() == doctest::Approx(1.75 * std::sqrt(3.0)));

  SUBCASE("an exact estimator is left unchanged") {
    const RunReport o = run_yield(small_yield(true));
    REQUIRE(o.seeds[0].variants.size() == 1);
    const auto& rep = o.seeds[0].variants[0].report;
    CHECK(rep.mse_before == 0.0);
    CHECK(rep.factor == 1.0);
    CHECK(o.all_passed());
  }
  SUBCASE("statistic") {
    const StatisticFn s = yield_statistic();
    CHECK(s(Eigen::Vector2d(1.0, 0.0))(0) == doctest::Approx(1.0));
    CHECK(s(Eigen::Vector2d(1.0, 1.0))(0) == doctest::Approx(1.0));
  }
}

TEST_CASE("report round-trip and determinism") {
  const RunReport a = run_yield(small_yield());
  const RunReport b = run_yield(small_yield());
  CHECK(without_time(to_json(a)) == without_time(to_json(b)));
  const json j = to_json(a);
  CHECK(to_json(run_report_from_json(j)) == j);
  CHECK(run_report_from_json(json::parse(j.dump())).seeds[0].variants[0].report == a.seeds[0].variants[0].report);
  CHECK_THROWS_AS(run_report_from_json(json{{"format", "other"}}), std::invalid_argument);
}

TEST_CASE("steelbar sets and run") {
  const auto cd = steelbar_training_set("const_d", 0);
  const auto cw = steelbar_training_set("const_w", 0);
  REQUIRE(cd.size() == 10);
  REQUIRE(cw.size() == 10);
  for (const auto& s : cd) CHECK(s.geometry.d == 4.0);
  for (const auto& s : cw) CHECK(s.geometry.w == 4.0);
  CHECK(cd.front().geometry.w == doctest::Approx(4.76));
  CHECK(cw.back().geometry.d == doctest::Approx(3.64));
  CHECK(steelbar_training_set("random", 1)[0].force == steelbar_training_set("random", 1)[0].force);
  CHECK(steelbar_training_set("random", 1)[0].force != steelbar_training_set("random", 2)[0].force);
  CHECK_THROWS_AS(steelbar_training_set("other", 0), std::invalid_argument);

  const auto test = steelbar_test_set();
  REQUIRE(test.size() == 21);
  for (const auto& s : test) {
    CHECK(s.geometry.w >= 2.0);
    CHECK(s.geometry.w <= 8.0);
    CHECK(s.geometry.d / s.geometry.w >= 0.1 - 1e-12);
    CHECK(s.geometry.d / s.geometry.w <= 0.9 + 1e-12);
  }

  SUBCASE("doubling the geometry leaves the dimensionless input and target unchanged") {
    for (const auto& s : cw) {
      const BarGeometry g2{2.0 * s.geometry.w, 2.0 * s.geometry.d};
      const double f2 = steelbar_surrogate(g2);
      CHECK(g2.d / g2.w == s.geometry.d / s.geometry.w);
      CHECK(f2 / (g2.w * g2.w) == doctest::Approx(s.force / (s.geometry.w * s.geometry.w)).epsilon(1e-14));
    }
  }

  const RunReport r = run_steelbar(make("steelbar", {0, 1}, {{"epochs", 300}}));
  REQUIRE(r.check("dimensionless_collapse") != nullptr);
  CHECK(r.check("dimensionless_collapse")->passed);
  REQUIRE(r.check("const_w_dimensionless_not_worse") != nullptr);
  CHECK(r.seeds.size() == 2);
  CHECK(r.seeds[0].variants.size() == 3);
  CHECK(r.curves.rows.size() == 2 * 3 * 21);
}

TEST_CASE("damage statistics and run") {
  const SymTensor2d e(0.03, -0.01, 0.02);
  Eigen::VectorXd w(3);
  w << e.xx, e.yy, e.xy;
  CHECK(damage_statistic(1)(w).size() == 1);
  CHECK(damage_statistic(2)(w)(1) == doctest::Approx(0.02));
  CHECK(damage_statistic(3)(w)(2) == 0.03);
  CHECK(damage_statistic(1)(w)(0) == doctest::Approx(dev_norm(e)));
  CHECK_THROWS_AS(damage_statistic(4), std::invalid_argument);

  const RunReport r = run_damage(small_damage());
  CHECK(r.all_passed());
  for (const char* v : {"S4_raw", "S1", "S2", "S3", "S4_filtered", "S4_augmented"}) {
    CHECK(r.aggregate.contains(v));
  }
  CHECK(r.aggregate.at("test_points") == 11 * 11 * 11);
  // S1 cannot separate tension from compression.
  CHECK(r.aggregate.at("S1").at("test_mse").at("mean").get<double>() >
        r.aggregate.at("S2").at("test_mse").at("mean").get<double>());
}

TEST_CASE("rubber sets and lateral ratio") {
  DicCloudConfig cc;
  cc.n_steps = 20;
  cc.n_regions = 50;
  const RubberSets s = rubber_training_sets(cc, 20.0);
  CHECK(s.homogenized_steps == 20);
  CHECK(s.rb.size() == s.homogenized_steps * 36 + s.compression_points);
  CHECK(s.compression_points >= 1);

  SUBCASE("zero noise keeps every point") {
    cc.noise_sd = 0.0;
    const RubberSets z = rubber_training_sets(cc, 20.0);
    REQUIRE(z.rb.size() == z.rb_inc_aux.size());
    for (std::size_t i = 0; i < z.rb.size(); ++i) {
      CHECK(z.rb[i].eps == z.rb_inc_aux[i].eps);
      CHECK(z.rb[i].sigma == z.rb_inc_aux[i].sigma);
    }
  }

  SUBCASE("linear isotropic network") {
    const double E = 20.0, nu = 0.3, in = 0.1, out = 2.0;
    Eigen::MatrixXd c(3, 3);
    c << 1, nu, 0, nu, 1, 0, 0, 0, 1 - nu;
    c *= E / (1 - nu * nu);
    const NetworkSpec spec{{3, 3}, Activation::Tanh, Activation::Linear, 0};
    const Network net(spec, {DenseLayer{c * in / out, Eigen::VectorXd::Zero(3)}});
    CHECK(lateral_ratio(net, 0.05, in, out, 1) == doctest::Approx(nu).epsilon(1e-9));
    CHECK(lateral_ratio(net, 0.05, in, out, 36) == doctest::Approx(nu).epsilon(1e-9));
    CHECK_THROWS_AS(lateral_ratio(net, 0.05, in, out, 0), std::invalid_argument);
  }

  SUBCASE("runs") {
    const RunReport z = run_rubber(small_rubber(0.0));
    REQUIRE(z.check("variants_coincide_without_noise") != nullptr);
    CHECK(z.check("variants_coincide_without_noise")->passed);
    CHECK(z.check("rb_set_size")->passed);
    const RunReport n = run_rubber(small_rubber(0.03));
    CHECK(n.check("rb_set_size")->passed);
    CHECK(n.check("rb_ratio_closer") != nullptr);
    CHECK(n.seeds[0].variants.size() == 2);
  }
}

TEST_CASE("poisson run") {
  const RunReport r = run_poisson(make("poisson", {}, json::object()));
  CHECK(r.all_passed());
  CHECK(r.seeds.size() == 100);
  CHECK(r.aggregate.at("full_wins").get<int>() >= 90);

  const RunReport z = run_poisson(make("poisson", {0, 1, 2}, {{"noise_sd", 0.0}}));
  REQUIRE(z.check("exact_without_noise") != nullptr);
  CHECK(z.all_passed());
  for (const auto& s : z.seeds) {
    CHECK(s.variants[0].metrics.at("nu_full").get<double>() == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(s.variants[0].metrics.at("nu_truncated").get<double>() == doctest::Approx(0.45).epsilon(1e-12));
  }

  const RunReport strict = run_poisson(make("poisson", {0, 1}, {{"min_win_fraction", 1.01}}));
  CHECK_FALSE(strict.all_passed());
}

TEST_CASE("dispatch and outputs") {
  const auto dir = std::filesystem::temp_directory_path() / "rbx_test_experiments_out";
  std::filesystem::remove_all(dir);
  ExperimentConfig c = make("poisson", {0, 1, 2}, json::object());
  c.out_dir = dir.string();
  const RunReport r = run_experiment(c);
  REQUIRE(std::filesystem::exists(dir / "report.json"));
  REQUIRE(std::filesystem::exists(dir / "curves.csv"));
  std::ifstream in(dir / "report.json");
  const json j = json::parse(in);
  CHECK(j == to_json(r));
  CHECK(j.at("config").at("params").at("nu_true") == 0.45);
  const CsvTable t = read_csv((dir / "curves.csv").string());
  CHECK(t.header == r.curves.header);
  CHECK(t.rows.size() == 3);
  std::filesystem::remove_all(dir);

  CHECK_THROWS_AS(run_experiment(make("nope", {}, json::object())), std::invalid_argument);
  CHECK_THROWS_AS(run_experiment(make("poisson", {0}, {{"noise_sd", "high"}})), std::invalid_argument);
}
