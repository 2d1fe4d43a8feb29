#include "rbx/rb_engine.hpp"

#include "rbx/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rbx {

Eigen::VectorXd StatisticFn::operator()(const State& w) const {
  Eigen::VectorXd s = eval(w);
  if (s.size() != dimension) {
    throw std::logic_error("statistic '" + name + "' returned wrong dimension");
  }
  return s;
}

// --- grid --------------------------------------------------------------------

BinGrid BinGrid::uniform(double lower, double upper, int intervals, bool clamp) {
  BinGrid g{{BinAxis{lower, upper, intervals}}, clamp};
  g.validate();
  return g;
}

void BinGrid::validate() const {
  if (axes.empty()) throw std::invalid_argument("bin grid needs at least one axis");
  for (const auto& a : axes) {
    if (!(std::isfinite(a.lower) && std::isfinite(a.upper) && a.lower < a.upper)) {
      throw std::invalid_argument("bin axis needs finite lower < upper");
    }
    if (a.intervals < 1) throw std::invalid_argument("bin axis needs >= 1 interval");
  }
}

std::size_t BinGrid::bin_count() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= static_cast<std::size_t>(a.intervals);
  return n;
}

std::size_t BinGrid::flat_index(std::span<const int> multi) const {
  std::size_t flat = 0;
  for (std::size_t d = 0; d < axes.size(); ++d) {
    flat = flat * static_cast<std::size_t>(axes[d].intervals) + static_cast<std::size_t>(multi[d]);
  }
  return flat;
}

std::vector<int> BinGrid::multi_index(std::size_t flat) const {
  std::vector<int> multi(axes.size());
  for (std::size_t d = axes.size(); d-- > 0;) {
    const auto n = static_cast<std::size_t>(axes[d].intervals);
    multi[d] = static_cast<int>(flat % n);
    flat /= n;
  }
  return multi;
}

Eigen::VectorXd BinGrid::center(std::size_t flat) const {
  const auto multi = multi_index(flat);
  Eigen::VectorXd c(dimension());
  for (std::size_t d = 0; d < axes.size(); ++d) {
    const auto& a = axes[d];
    c(static_cast<Eigen::Index>(d)) =
        a.lower + (multi[d] + 0.5) * (a.upper - a.lower) / a.intervals;
  }
  return c;
}

std::vector<int> bin_of(const BinGrid& grid, const Eigen::VectorXd& s) {
  if (s.size() != grid.dimension()) {
    throw std::invalid_argument("statistic dimension does not match grid");
  }
  std::vector<int> multi(grid.axes.size());
  for (std::size_t d = 0; d < grid.axes.size(); ++d) {
    const auto& a = grid.axes[d];
    const double v = s(static_cast<Eigen::Index>(d));
    if (std::isnan(v)) throw std::out_of_range("statistic is NaN");
    if (v < a.lower || v > a.upper) {
      if (!grid.clamp) {
        throw std::out_of_range("statistic " + std::to_string(v) + " outside [" +
                                std::to_string(a.lower) + ", " + std::to_string(a.upper) + "]");
      }
      multi[d] = v < a.lower ? 0 : a.intervals - 1;
      continue;
    }
    const double pos = (v - a.lower) / (a.upper - a.lower) * a.intervals;
    multi[d] = std::min(static_cast<int>(std::floor(pos)), a.intervals - 1);
  }
  return multi;
}

std::size_t flat_bin_of(const BinGrid& grid, const Eigen::VectorXd& s) {
  const auto multi = bin_of(grid, s);
  return grid.flat_index(multi);
}

// --- empirical estimator -------------------------------------------------------

std::size_t RBEstimator::sample_count() const {
  std::size_t n = 0;
  for (auto c : occupancy) n += c;
  return n;
}

std::size_t RBEstimator::empty_bins() const {
  return static_cast<std::size_t>(std::count(occupancy.begin(), occupancy.end(), 0u));
}

namespace {

void fill_empty_1d(std::vector<double>& values, const std::vector<std::size_t>& occ) {
  const std::size_t n = values.size();
  std::size_t prev = n;  // n marks "none yet"
  for (std::size_t i = 0; i < n; ++i) {
    if (occ[i] == 0) continue;
    if (prev == n) {
      for (std::size_t k = 0; k < i; ++k) values[k] = values[i];
    } else {
      const double span = static_cast<double>(i - prev);
      for (std::size_t k = prev + 1; k < i; ++k) {
        const double t = static_cast<double>(k - prev) / span;
        values[k] = values[prev] + t * (values[i] - values[prev]);
      }
    }
    prev = i;
  }
  for (std::size_t k = prev + 1; k < n; ++k) values[k] = values[prev];
}

void fill_empty_nearest(const BinGrid& grid, std::vector<double>& values,
                        const std::vector<std::size_t>& occ) {
  std::vector<std::vector<int>> occupied;
  std::vector<std::size_t> occupied_flat;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (occ[i] > 0) {
      occupied.push_back(grid.multi_index(i));
      occupied_flat.push_back(i);
    }
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (occ[i] > 0) continue;
    const auto here = grid.multi_index(i);
    long best = std::numeric_limits<long>::max();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < occupied.size(); ++k) {
      long d2 = 0;
      for (std::size_t d = 0; d < here.size(); ++d) {
        const long diff = here[d] - occupied[k][d];
        d2 += diff * diff;
      }
      // Occupied bins are visited in increasing flat order, so strict <
      // keeps the lowest index among ties.
      if (d2 < best) {
        best = d2;
        best_k = k;
      }
    }
    values[i] = values[occupied_flat[best_k]];
  }
}

}  // namespace

RBEstimator rao_blackwellize_values(std::span<const double> theta0_values,
                                    std::span<const Eigen::VectorXd> statistics,
                                    const BinGrid& grid, StatisticFn stat) {
  grid.validate();
  if (theta0_values.size() != statistics.size()) {
    throw std::invalid_argument("need one statistic per initial prediction");
  }
  if (theta0_values.empty()) throw std::invalid_argument("no construction samples");

  const std::size_t nb = grid.bin_count();
  std::vector<std::size_t> bins(theta0_values.size());
  std::vector<std::size_t> occ(nb, 0);
  std::vector<double> sum(nb, 0.0);
  for (std::size_t j = 0; j < theta0_values.size(); ++j) {
    if (!std::isfinite(theta0_values[j])) {
      throw std::invalid_argument("initial estimator returned a non-finite value");
    }
    bins[j] = flat_bin_of(grid, statistics[j]);
    ++occ[bins[j]];
    sum[bins[j]] += theta0_values[j];
  }
  std::vector<double> values(nb, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    if (occ[b] > 0) values[b] = sum[b] / static_cast<double>(occ[b]);
  }
  // Second pass removes the first-order rounding error of the bin means.
  std::vector<double> residual(nb, 0.0);
  for (std::size_t j = 0; j < theta0_values.size(); ++j) {
    residual[bins[j]] += theta0_values[j] - values[bins[j]];
  }
  for (std::size_t b = 0; b < nb; ++b) {
    if (occ[b] > 0) values[b] += residual[b] / static_cast<double>(occ[b]);
  }

  if (std::all_of(occ.begin(), occ.end(), [](std::size_t c) { return c == 0; })) {
    throw std::invalid_argument("all bins empty");
  }
  if (grid.dimension() == 1) {
    fill_empty_1d(values, occ);
  } else {
    fill_empty_nearest(grid, values, occ);
  }
  return {grid, std::move(values), std::move(occ), std::move(stat)};
}

RBEstimator rao_blackwellize_empirical(const ScalarEstimator& theta0, const StatisticFn& stat,
                                       std::span<const State> samples, const BinGrid& grid) {
  if (samples.empty()) throw std::invalid_argument("no construction samples");
  std::vector<double> values(samples.size());
  std::vector<Eigen::VectorXd> stats(samples.size());
  parallel_for(samples.size(), [&](std::size_t j) {
    values[j] = theta0(samples[j]);
    stats[j] = stat(samples[j]);
  });
  return rao_blackwellize_values(values, stats, grid, stat);
}

double evaluate_statistic(const RBEstimator& rb, const Eigen::VectorXd& s) {
  return rb.bin_values[flat_bin_of(rb.grid, s)];
}

double evaluate(const RBEstimator& rb, const State& w) {
  return evaluate_statistic(rb, rb.statistic(w));
}

// --- quadrature ----------------------------------------------------------------

QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("Gauss-Legendre needs n >= 1");
  // Jacobi matrix of the Legendre three-term recurrence.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = beta;
    jacobi(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  QuadratureRule rule;
  for (int i = 0; i < n; ++i) {
    const double v0 = eig.eigenvectors()(0, i);
    rule.nodes.push_back(Eigen::VectorXd::Constant(1, eig.eigenvalues()(i)));
    rule.weights.push_back(2.0 * v0 * v0);
  }
  return rule;
}

QuadratureRule sphere_rule(int n_theta, int n_phi) {
  if (n_phi < 1) throw std::invalid_argument("sphere rule needs n_phi >= 1");
  const QuadratureRule gl = gauss_legendre(n_theta);
  QuadratureRule rule;
  double total = 0.0;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
    const double theta = 0.5 * M_PI * (gl.nodes[i](0) + 1.0);
    const double w_theta = 0.5 * M_PI * gl.weights[i] * std::sin(theta);
    for (int k = 0; k < n_phi; ++k) {
      const double phi = 2.0 * M_PI * k / n_phi;
      Eigen::VectorXd node(2);
      node << theta, phi;
      rule.nodes.push_back(node);
      rule.weights.push_back(w_theta * 2.0 * M_PI / n_phi);
      total += rule.weights.back();
    }
  }
  for (auto& w : rule.weights) w /= total;
  return rule;
}

double rao_blackwellize_quadrature(const ScalarEstimator& theta0,
                                   const std::function<State(const Eigen::VectorXd&)>& orbit,
                                   const QuadratureRule& rule) {
  if (rule.nodes.size() != rule.weights.size() || rule.nodes.empty()) {
    throw std::invalid_argument("quadrature rule needs one weight per node");
  }
  double total = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double w = rule.weights[i];
    if (!std::isfinite(w) || w < 0.0) {
      throw std::invalid_argument("quadrature weights must be finite and non-negative");
    }
    total += w;
    acc += w * theta0(orbit(rule.nodes[i]));
  }
  if (!(total > 0.0)) throw std::invalid_argument("quadrature weights are not normalizable");
  return acc / total;
}

// --- error measures -------------------------------------------------------------

double mse_over_domain(const ScalarEstimator& est, const ScalarEstimator& truth,
                       std::span<const State> samples) {
  if (samples.empty()) throw std::invalid_argument("mse over an empty domain");
  double acc = 0.0;
  for (const auto& w : samples) {
    const double d = est(w) - truth(w);
    acc += d * d;
  }
  return acc / static_cast<double>(samples.size());
}

double improvement_factor(double mse_before, double mse_after) {
  if (mse_before == 0.0 && mse_after == 0.0) return 1.0;
  return mse_before / std::max(mse_after, 1e-300);
}

ImprovementReport compare_predictions(std::span<const double> theta0,
                                      std::span<const double> theta1,
                                      std::span<const double> truth,
                                      std::span<const std::size_t> bins) {
  const std::size_t n = theta0.size();
  if (n == 0 || theta1.size() != n || truth.size() != n || bins.size() != n) {
    throw std::invalid_argument("compare_predictions needs equally many non-empty inputs");
  }
  ImprovementReport r;
  r.domain_size = n;
  double before = 0.0, after = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    before += (theta0[j] - truth[j]) * (theta0[j] - truth[j]);
    after += (theta1[j] - truth[j]) * (theta1[j] - truth[j]);
    r.cross_term += (theta0[j] - theta1[j]) * (theta1[j] - truth[j]);
  }
  r.mse_before = before / static_cast<double>(n);
  r.mse_after = after / static_cast<double>(n);
  r.factor = improvement_factor(r.mse_before, r.mse_after);

  // Truth constant per bin, up to a relative 1e-12.
  std::vector<std::pair<std::size_t, double>> by_bin(n);
  for (std::size_t j = 0; j < n; ++j) by_bin[j] = {bins[j], truth[j]};
  std::sort(by_bin.begin(), by_bin.end());
  r.precondition_holds = true;
  for (std::size_t j = 0; j < n;) {
    std::size_t k = j;
    double lo = by_bin[j].second, hi = lo;
    while (k < n && by_bin[k].first == by_bin[j].first) {
      lo = std::min(lo, by_bin[k].second);
      hi = std::max(hi, by_bin[k].second);
      ++k;
    }
    if (hi - lo > 1e-12 * (1.0 + std::max(std::abs(lo), std::abs(hi)))) {
      r.precondition_holds = false;
      break;
    }
    j = k;
  }
  r.guarantee_holds = r.precondition_holds && r.mse_after <= r.mse_before + kGuaranteeTolerance;
  return r;
}

ImprovementReport verify_inequality(const ScalarEstimator& theta0, const StatisticFn& stat,
                                    std::span<const State> samples, const BinGrid& grid,
                                    const ScalarEstimator& truth) {
  const RBEstimator rb = rao_blackwellize_empirical(theta0, stat, samples, grid);
  const std::size_t n = samples.size();
  std::vector<double> t0(n), t1(n), ts(n);
  std::vector<std::size_t> bins(n);
  for (std::size_t j = 0; j < n; ++j) {
    t0[j] = theta0(samples[j]);
    bins[j] = flat_bin_of(grid, stat(samples[j]));
    t1[j] = rb.bin_values[bins[j]];
    ts[j] = truth(samples[j]);
  }
  ImprovementReport r = compare_predictions(t0, t1, ts, bins);
  r.n_bins = rb.grid.bin_count();
  r.n_empty_bins = rb.empty_bins();
  return r;
}

int round_to_class(double value, double threshold) { return value < threshold ? 0 : 1; }

// --- serialization ---------------------------------------------------------------

nlohmann::json to_json(const BinGrid& grid) {
  std::vector<double> lower, upper;
  std::vector<int> intervals;
  for (const auto& a : grid.axes) {
    lower.push_back(a.lower);
    upper.push_back(a.upper);
    intervals.push_back(a.intervals);
  }
  return {{"lower", lower}, {"upper", upper}, {"intervals", intervals}, {"clamp", grid.clamp}};
}

BinGrid bin_grid_from_json(const nlohmann::json& j) {
  const auto lower = j.at("lower").get<std::vector<double>>();
  const auto upper = j.at("upper").get<std::vector<double>>();
  const auto intervals = j.at("intervals").get<std::vector<int>>();
  if (lower.size() != upper.size() || lower.size() != intervals.size()) {
    throw std::invalid_argument("grid arrays differ in length");
  }
  BinGrid g;
  g.clamp = j.value("clamp", false);
  for (std::size_t d = 0; d < lower.size(); ++d) g.axes.push_back({lower[d], upper[d], intervals[d]});
  g.validate();
  return g;
}

nlohmann::json to_json(const RBEstimator& rb) {
  return {{"format", "rbx-rb-estimator"},
          {"version", 1},
          {"statistic", rb.statistic.name},
          {"statistic_dimension", rb.statistic.dimension},
          {"grid", to_json(rb.grid)},
          {"bin_values", rb.bin_values},
          {"occupancy", rb.occupancy}};
}

RBEstimator rb_estimator_from_json(const nlohmann::json& j, StatisticFn stat) {
  if (j.value("format", "") != "rbx-rb-estimator") {
    throw std::invalid_argument("not an rbx-rb-estimator document");
  }
  if (j.at("statistic").get<std::string>() != stat.name ||
      j.at("statistic_dimension").get<int>() != stat.dimension) {
    throw std::invalid_argument("statistic does not match the stored estimator");
  }
  RBEstimator rb{bin_grid_from_json(j.at("grid")), j.at("bin_values").get<std::vector<double>>(),
                 j.at("occupancy").get<std::vector<std::size_t>>(), std::move(stat)};
  if (rb.bin_values.size() != rb.grid.bin_count() || rb.occupancy.size() != rb.grid.bin_count()) {
    throw std::invalid_argument("bin arrays do not match grid size");
  }
  if (rb.grid.dimension() != rb.statistic.dimension) {
    throw std::invalid_argument("grid dimension does not match statistic");
  }
  return rb;
}

nlohmann::json to_json(const ImprovementReport& r) {
  return {{"mse_before", r.mse_before},       {"mse_after", r.mse_after},
          {"factor", r.factor},               {"n_bins", r.n_bins},
          {"n_empty_bins", r.n_empty_bins},   {"domain_size", r.domain_size},
          {"precondition_holds", r.precondition_holds},
          {"guarantee_holds", r.guarantee_holds},
          {"cross_term", r.cross_term}};
}

ImprovementReport improvement_report_from_json(const nlohmann::json& j) {
  ImprovementReport r;
  r.mse_before = j.at("mse_before").get<double>();
  r.mse_after = j.at("mse_after").get<double>();
  r.factor = j.at("factor").get<double>();
  r.n_bins = j.at("n_bins").get<std::size_t>();
  r.n_empty_bins = j.at("n_empty_bins").get<std::size_t>();
  r.domain_size = j.at("domain_size").get<std::size_t>();
  r.precondition_holds = j.at("precondition_holds").get<bool>();
  r.guarantee_holds = j.at("guarantee_holds").get<bool>();
  r.cross_term = j.at("cross_term").get<double>();
  return r;
}

}  // namespace rbx
