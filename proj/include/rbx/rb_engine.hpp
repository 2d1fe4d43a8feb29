#pragma once

// Rao-Blackwellization of deterministic estimators: conditional averaging of
// an initial estimator over the level sets of a sufficient statistic.
//
// The empirical form partitions statistic space into a tensor-product grid
// and replaces each level-set integral by the mean over the samples that
// fall into a bin. Samples are weighted uniformly, which matches the
// volume-normalized averages only for uniformly sampled domains.

#include <Eigen/Dense>
#include <json.hpp>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace rbx {

/// A physical state omega, flattened to a vector.
using State = Eigen::VectorXd;
using ScalarEstimator = std::function<double(const State&)>;

/// Map from a physical state to the sufficient-information vector s.
struct StatisticFn {
  std::string name;
  int dimension = 1;
  std::function<Eigen::VectorXd(const State&)> eval;

  Eigen::VectorXd operator()(const State& w) const;
};

/// One axis of a grid: `intervals` equal bins over [lower, upper].
struct BinAxis {
  double lower = 0.0;
  double upper = 1.0;
  int intervals = 1;
};

/// Tensor-product grid in statistic space. Bins are left-closed and
/// right-open except the last one per axis, which also holds `upper`, so the
/// grid partitions the closed box. Flat indices are row-major (last axis
/// fastest).
struct BinGrid {
  std::vector<BinAxis> axes;
  /// Out-of-range statistics snap to the nearest edge bin instead of throwing.
  bool clamp = false;

  static BinGrid uniform(double lower, double upper, int intervals, bool clamp = false);

  void validate() const;
  int dimension() const { return static_cast<int>(axes.size()); }
  std::size_t bin_count() const;
  std::size_t flat_index(std::span<const int> multi) const;
  std::vector<int> multi_index(std::size_t flat) const;
  Eigen::VectorXd center(std::size_t flat) const;
};

/// Multi-index of the bin containing `s`. Throws std::out_of_range for
/// statistics outside the box unless the grid clamps.
std::vector<int> bin_of(const BinGrid& grid, const Eigen::VectorXd& s);
std::size_t flat_bin_of(const BinGrid& grid, const Eigen::VectorXd& s);

struct RBEstimator {
  BinGrid grid;
  std::vector<double> bin_values;      // one per bin, always finite
  std::vector<std::size_t> occupancy;  // construction samples per bin
  StatisticFn statistic;

  std::size_t sample_count() const;
  std::size_t empty_bins() const;
};

/// Builds the conditional-average estimator from precomputed initial
/// predictions and statistics (one entry per sample). Empty bins are filled
/// by linear interpolation between the nearest occupied bins in 1D, with
/// constant extrapolation at the ends, and from the nearest occupied bin by
/// Euclidean index distance in higher dimensions (ties: lowest flat index).
/// Throws std::invalid_argument when no sample lands in any bin.
RBEstimator rao_blackwellize_values(std::span<const double> theta0_values,
                                    std::span<const Eigen::VectorXd> statistics,
                                    const BinGrid& grid, StatisticFn stat);

RBEstimator rao_blackwellize_empirical(const ScalarEstimator& theta0, const StatisticFn& stat,
                                       std::span<const State> samples, const BinGrid& grid);

double evaluate(const RBEstimator& rb, const State& w);
double evaluate_statistic(const RBEstimator& rb, const Eigen::VectorXd& s);

/// Nodes in orbit-parameter space with positive weights.
struct QuadratureRule {
  std::vector<Eigen::VectorXd> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1] (Golub-Welsch).
QuadratureRule gauss_legendre(int n);

/// Product rule over the unit sphere in (theta, phi): Gauss-Legendre in
/// theta on [0, pi] with the sin(theta) Jacobian folded into the weights,
/// trapezoid in phi on [0, 2 pi). Weights are normalized to sum to one.
QuadratureRule sphere_rule(int n_theta, int n_phi);

/// Weighted average of theta0 along a parameterized orbit. The weights are
/// normalized by their sum; negative, non-finite or all-zero weights throw.
double rao_blackwellize_quadrature(const ScalarEstimator& theta0,
                                   const std::function<State(const Eigen::VectorXd&)>& orbit,
                                   const QuadratureRule& rule);

double mse_over_domain(const ScalarEstimator& est, const ScalarEstimator& truth,
                       std::span<const State> samples);

struct ImprovementReport {
  double mse_before = 0.0;
  double mse_after = 0.0;
  double factor = 1.0;  // see improvement_factor
  std::size_t n_bins = 0;
  std::size_t n_empty_bins = 0;
  std::size_t domain_size = 0;

  /// Truth is constant on every occupied bin, so never-worse is guaranteed.
  bool precondition_holds = false;
  /// precondition_holds and mse_after <= mse_before + 1e-12.
  bool guarantee_holds = false;
  /// sum over samples of (theta0 - theta1)(theta1 - truth).
  double cross_term = 0.0;

  friend bool operator==(const ImprovementReport&, const ImprovementReport&) = default;
};

inline constexpr double kGuaranteeTolerance = 1e-12;

/// mse_before / max(mse_after, 1e-300); two exact estimators give 1.
double improvement_factor(double mse_before, double mse_after);

/// Compares theta0 and theta1 against the truth values on the same samples.
ImprovementReport compare_predictions(std::span<const double> theta0,
                                      std::span<const double> theta1,
                                      std::span<const double> truth,
                                      std::span<const std::size_t> bins);

/// Builds theta1 from theta0 on `samples`, then evaluates both against
/// `truth` on the same samples. When the truth factors through the grid
/// (constant per occupied bin) the never-worse guarantee is asserted into
/// `guarantee_holds`; otherwise the report is informational only.
ImprovementReport verify_inequality(const ScalarEstimator& theta0, const StatisticFn& stat,
                                    std::span<const State> samples, const BinGrid& grid,
                                    const ScalarEstimator& truth);

/// 0 below the threshold, 1 at or above it.
int round_to_class(double value, double threshold = 0.5);

nlohmann::json to_json(const BinGrid& grid);
BinGrid bin_grid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RBEstimator& rb);
/// The statistic cannot be serialized; the caller supplies it and its name
/// and dimension must match the stored ones.
RBEstimator rb_estimator_from_json(const nlohmann::json& j, StatisticFn stat);
nlohmann::json to_json(const ImprovementReport& r);
ImprovementReport improvement_report_from_json(const nlohmann::json& j);

}  // namespace rbx
