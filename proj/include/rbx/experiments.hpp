#pragma once

// Desk-scale runs of the six examples. Each run resolves its configuration
// against per-experiment defaults, executes all seeds, evaluates its
// asserted properties and returns a self-describing report.

#include "rbx/datagen.hpp"
#include "rbx/mechanics.hpp"
#include "rbx/nnet.hpp"
#include "rbx/oracles.hpp"
#include "rbx/rb_engine.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace rbx {

inline const std::vector<std::string> kExperimentNames = {"yield",  "microsphere", "steelbar",
                                                          "damage", "rubber",      "poisson"};

struct ExperimentConfig {
  std::string name;
  std::vector<std::uint64_t> seeds;  // empty: experiment default
  nlohmann::json params = nlohmann::json::object();  // overrides of the defaults
  int bins = 0;                      // 0: experiment default
  std::string out_dir;               // empty: no files written
  bool full_resolution = false;
};

/// The defaults of an experiment with every field filled in.
ExperimentConfig default_config(const std::string& name);

/// Merges `cfg` over the defaults. Unknown experiment names and unknown
/// parameter keys throw std::invalid_argument.
ExperimentConfig resolve_config(const ExperimentConfig& cfg);

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

struct VariantResult {
  std::string name;
  ImprovementReport report;
  nlohmann::json metrics = nlohmann::json::object();
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<VariantResult> variants;
};

struct PropertyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RunReport {
  ExperimentConfig config;  // resolved
  std::vector<SeedResult> seeds;
  nlohmann::json aggregate = nlohmann::json::object();
  std::vector<PropertyCheck> checks;
  double wall_time_s = 0.0;
  CsvTable curves;

  bool all_passed() const;
  const PropertyCheck* check(const std::string& name) const;
};

nlohmann::json to_json(const RunReport& r);
RunReport run_report_from_json(const nlohmann::json& j);

RunReport run_yield(const ExperimentConfig& cfg);
RunReport run_microsphere(const ExperimentConfig& cfg);
RunReport run_steelbar(const ExperimentConfig& cfg);
RunReport run_damage(const ExperimentConfig& cfg);
RunReport run_rubber(const ExperimentConfig& cfg);
RunReport run_poisson(const ExperimentConfig& cfg);

/// Dispatches on cfg.name and writes report.json and curves.csv when
/// cfg.out_dir is set.
RunReport run_experiment(const ExperimentConfig& cfg);
void write_outputs(const RunReport& r, const std::string& dir);

// --- pieces exposed for testing --------------------------------------------

/// Orientation average of e1.(Q^T C Q).e1 over the unit sphere.
double microsphere_average(const SymTensor3d& c, int n_theta, int n_phi);

/// Yield statistic: the deviatoric stress norm of a principal stress pair.
StatisticFn yield_statistic();

/// Damage statistics over a plane strain (xx, yy, xy): S1 = {D},
/// S2 = {D, T}, S3 = {D, T, eps_xx}.
StatisticFn damage_statistic(int level);

struct SteelbarSample {
  BarGeometry geometry;
  double force = 0.0;  // N
};

/// "const_d", "const_w" or "random" (10 points each; `seed` only affects
/// the random set).
std::vector<SteelbarSample> steelbar_training_set(const std::string& kind, std::uint64_t seed,
                                                  const SteelbarCurve& curve = {});
/// Deterministic 21-point test set scattered over 2 <= w <= 8, 0.1 <= d/w <= 0.9.
std::vector<SteelbarSample> steelbar_test_set(const SteelbarCurve& curve = {});

/// Lateral contraction ratio -eps_yy/eps_xx at which a strain-to-stress
/// network predicts zero lateral stress at longitudinal strain eps_xx. The
/// lateral stress is taken in the loading frame and averaged over
/// `n_orientations` loading directions in [0, pi); 1 uses the x axis only.
double lateral_ratio(const Network& net, double eps_xx, double input_scale, double output_scale,
                     int n_orientations = 36);

struct RubberSets {
  std::vector<StressStrainPair> rb;
  std::vector<StressStrainPair> rb_inc_aux;
  std::size_t homogenized_steps = 0;
  std::size_t compression_points = 0;
};

/// Builds both training sets from a synthetic DIC cloud under uniaxial
/// tension with sigma_xx = E eps_xx.
RubberSets rubber_training_sets(const DicCloudConfig& cloud, double youngs_modulus);

}  // namespace rbx
