#pragma once

// Synthetic data sets and the data-side improvement channels: label noise,
// rotation augmentation, homogenization, compression extension and the
// truncation filter behind the biased-regression demonstration.

#include "rbx/mechanics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rbx {

enum class Split { Train, Validation, Test };
std::string to_string(Split s);

struct LabeledPoint {
  std::vector<double> input;
  std::vector<double> target;
};

struct LabeledGrid {
  std::vector<LabeledPoint> points;
  Split split = Split::Train;
  std::uint64_t seed = 0;
};

/// Uniform stress pairs on [-half_width, half_width]^2 labeled by
/// yield_truth. Points with |phi| <= noise_band get a fair-coin label.
/// Input: (sigma1, sigma2); target: (label).
LabeledGrid yield_training_set(double half_width, std::size_t n_points, double noise_band,
                               std::uint64_t seed, Split split = Split::Train);

/// Full lattice from -half_width to +half_width inclusive at spacing `step`.
LabeledGrid yield_test_grid(double half_width, double step);

struct StressStrainPair {
  SymTensor2d sigma;  // MPa
  SymTensor2d eps;
  int step = 0;
};

/// Every pair rotated by k * step for k = 0 .. round(2 pi / step) - 1;
/// stress and strain share the angle. `step` must divide 2 pi.
std::vector<StressStrainPair> rotate_augment(const std::vector<StressStrainPair>& pairs,
                                             double step = M_PI / 18.0);

/// Conditional average per load step: one pair per group with the group's
/// stress and the componentwise mean strain. Groups must be non-empty and
/// share one stress (within 1e-12); throws std::invalid_argument otherwise.
std::vector<StressStrainPair> homogenize(const std::vector<std::vector<StressStrainPair>>& groups);

/// Groups pairs by their step id, in increasing step order.
std::vector<std::vector<StressStrainPair>> group_by_step(const std::vector<StressStrainPair>& pairs);

inline constexpr double kCompressionLinearCutoff = 0.02;
inline constexpr double kMaxCompressionStrain = 0.01016;

/// Through-origin least-squares slope sum(sigma_xx eps_xx) / sum(eps_xx^2)
/// over tension pairs with 0 < eps_xx <= cutoff.
double tension_slope(const std::vector<StressStrainPair>& tension, double cutoff);

/// Mirrored compression states of the small-strain tension pairs: for each
/// pair with 0 < eps_xx <= max_compression, the strain -eps with
/// sigma_xx = -slope eps_xx on the fitted line and the other stress
/// components negated. Needs >= 2 pairs below the cutoff with distinct
/// strains.
std::vector<StressStrainPair> compression_extend(const std::vector<StressStrainPair>& tension,
                                                 double max_compression = kMaxCompressionStrain,
                                                 double cutoff = kCompressionLinearCutoff);

/// One lateral strain reading of a region at a given load step.
struct DicPoint {
  int step = 0;
  double eps_xx = 0.0;
  double eps_yy = 0.0;
};

struct DicCloudConfig {
  double nu_true = 0.45;
  int n_steps = 20;
  int n_regions = 275;
  double noise_sd = 0.03;
  double max_strain = 0.1;  // eps_xx of the last step; steps are equally spaced
  std::uint64_t seed = 0;
};

/// eps_yy = -nu eps_xx + N(0, noise_sd^2) for every region of every step.
std::vector<DicPoint> dic_cloud(const DicCloudConfig& cfg);

/// Keeps points with -0.5 eps_xx <= eps_yy <= 0.
std::vector<DicPoint> truncation_filter(const std::vector<DicPoint>& cloud);

/// Negated through-origin least-squares slope of eps_yy on eps_xx.
double fit_poisson(const std::vector<DicPoint>& cloud);

// --- CSV ------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

/// sigma1,sigma2,label
CsvTable to_csv(const LabeledGrid& grid);
LabeledGrid labeled_grid_from_csv(const CsvTable& t, Split split);
/// step,sigma_xx,sigma_yy,sigma_xy,eps_xx,eps_yy,eps_xy
CsvTable to_csv(const std::vector<StressStrainPair>& pairs);
std::vector<StressStrainPair> pairs_from_csv(const CsvTable& t);
/// step,eps_xx,eps_yy
CsvTable to_csv(const std::vector<DicPoint>& cloud);
std::vector<DicPoint> dic_from_csv(const CsvTable& t);

}  // namespace rbx
