#include "rbx/datagen.hpp"

#include "rbx/oracles.hpp"
#include "rbx/random.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace rbx {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

LabeledGrid yield_training_set(double half_width, std::size_t n_points, double noise_band,
                               std::uint64_t seed, Split split) {
  if (n_points < 1) throw std::invalid_argument("yield_training_set needs n_points >= 1");
  if (!(half_width > 0.0) || noise_band < 0.0) {
    throw std::invalid_argument("yield_training_set needs half_width > 0, noise_band >= 0");
  }
  Rng rng(seed);
  LabeledGrid grid{{}, split, seed};
  grid.points.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const PrincipalStress2d s{rng.uniform(-half_width, half_width),
                              rng.uniform(-half_width, half_width)};
    // The coin is drawn for every point so the stream does not depend on the band.
    const bool coin = rng.coin();
    const double phi = von_mises_phi(s, kYieldStress);
    const int label = std::abs(phi) <= noise_band ? (coin ? 1 : 0) : yield_truth(s);
    grid.points.push_back({{s.s1, s.s2}, {static_cast<double>(label)}});
  }
  return grid;
}

LabeledGrid yield_test_grid(double half_width, double step) {
  if (!(step > 0.0) || !(half_width > 0.0)) {
    throw std::invalid_argument("yield_test_grid needs positive half_width and step");
  }
  const auto n = static_cast<long>(std::llround(2.0 * half_width / step)) + 1;
  LabeledGrid grid{{}, Split::Test, 0};
  grid.points.reserve(static_cast<std::size_t>(n * n));
  auto coord = [&](long i) { return static_cast<double>(2 * i - (n - 1)) * step / 2.0; };
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      const PrincipalStress2d s{coord(i), coord(j)};
      grid.points.push_back({{s.s1, s.s2}, {static_cast<double>(yield_truth(s))}});
    }
  }
  return grid;
}

std::vector<StressStrainPair> rotate_augment(const std::vector<StressStrainPair>& pairs,
                                             double step) {
  if (!(step > 0.0)) throw std::invalid_argument("rotation step must be positive");
  const double copies = 2.0 * M_PI / step;
  const long n = std::lround(copies);
  if (n < 1 || std::abs(copies - static_cast<double>(n)) > 1e-9 * copies) {
    throw std::invalid_argument("rotation step must divide 2 pi");
  }
  std::vector<StressStrainPair> out;
  out.reserve(pairs.size() * static_cast<std::size_t>(n));
  for (const auto& p : pairs) {
    for (long k = 0; k < n; ++k) {
      const Rotation2d q{static_cast<double>(k) * step};
      out.push_back({rotate(p.sigma, q), rotate(p.eps, q), p.step});
    }
  }
  return out;
}

std::vector<StressStrainPair> homogenize(const std::vector<std::vector<StressStrainPair>>& groups) {
  std::vector<StressStrainPair> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("homogenize: empty load-step group");
    const SymTensor2d& s0 = g.front().sigma;
    double xx = 0.0, yy = 0.0, xy = 0.0;
    for (const auto& p : g) {
      const double tol = 1e-12 * (1.0 + std::abs(s0.xx) + std::abs(s0.yy) + std::abs(s0.xy));
      if (std::abs(p.sigma.xx - s0.xx) > tol || std::abs(p.sigma.yy - s0.yy) > tol ||
          std::abs(p.sigma.xy - s0.xy) > tol) {
        throw std::invalid_argument("homogenize: inconsistent stresses within a load step");
      }
      xx += p.eps.xx;
      yy += p.eps.yy;
      xy += p.eps.xy;
    }
    const double m = static_cast<double>(g.size());
    out.push_back({s0, SymTensor2d(xx / m, yy / m, xy / m), g.front().step});
  }
  return out;
}

std::vector<std::vector<StressStrainPair>> group_by_step(const std::vector<StressStrainPair>& pairs) {
  std::map<int, std::vector<StressStrainPair>> by_step;
  for (const auto& p : pairs) by_step[p.step].push_back(p);
  std::vector<std::vector<StressStrainPair>> out;
  for (auto& [step, g] : by_step) out.push_back(std::move(g));
  return out;
}

double tension_slope(const std::vector<StressStrainPair>& tension, double cutoff) {
  double num = 0.0, den = 0.0;
  std::size_t used = 0;
  double first = std::numeric_limits<double>::quiet_NaN();
  bool distinct = false;
  for (const auto& p : tension) {
    const double e = p.eps.xx;
    if (!(e > 0.0 && e <= cutoff)) continue;
    if (used == 0) {
      first = e;
    } else if (e != first) {
      distinct = true;
    }
    num += p.sigma.xx * e;
    den += e * e;
    ++used;
  }
  if (used < 2 || !distinct) {
    throw std::invalid_argument("compression_extend: degenerate regression");
  }
  return num / den;
}

std::vector<StressStrainPair> compression_extend(const std::vector<StressStrainPair>& tension,
                                                 double max_compression, double cutoff) {
  const double slope = tension_slope(tension, cutoff);
  std::vector<StressStrainPair> out;
  for (const auto& p : tension) {
    if (!(p.eps.xx > 0.0 && p.eps.xx <= max_compression)) continue;
    const SymTensor2d sigma(-slope * p.eps.xx, -p.sigma.yy, -p.sigma.xy);
    out.push_back({sigma, -1.0 * p.eps, -p.step});
  }
  return out;
}

std::vector<DicPoint> dic_cloud(const DicCloudConfig& cfg) {
  if (!(cfg.nu_true > 0.0 && cfg.nu_true < 0.5)) {
    throw std::invalid_argument("dic_cloud needs 0 < nu_true < 0.5");
  }
  if (cfg.noise_sd < 0.0 || cfg.n_steps < 1 || cfg.n_regions < 1 || !(cfg.max_strain > 0.0)) {
    throw std::invalid_argument("dic_cloud needs noise_sd >= 0, n_steps, n_regions >= 1");
  }
  Rng rng(cfg.seed);
  std::vector<DicPoint> cloud;
  cloud.reserve(static_cast<std::size_t>(cfg.n_steps) * static_cast<std::size_t>(cfg.n_regions));
  for (int k = 1; k <= cfg.n_steps; ++k) {
    const double exx = cfg.max_strain * k / cfg.n_steps;
    for (int r = 0; r < cfg.n_regions; ++r) {
      cloud.push_back({k, exx, -cfg.nu_true * exx + cfg.noise_sd * rng.normal()});
    }
  }
  return cloud;
}

std::vector<DicPoint> truncation_filter(const std::vector<DicPoint>& cloud) {
  std::vector<DicPoint> out;
  for (const auto& p : cloud) {
    if (p.eps_yy >= -0.5 * p.eps_xx && p.eps_yy <= 0.0) out.push_back(p);
  }
  return out;
}

double fit_poisson(const std::vector<DicPoint>& cloud) {
  double num = 0.0, den = 0.0;
  for (const auto& p : cloud) {
    num += p.eps_xx * p.eps_yy;
    den += p.eps_xx * p.eps_xx;
  }
  if (cloud.size() < 2 || !(den > 0.0)) throw std::invalid_argument("fit_poisson: degenerate input");
  return -num / den;
}

// --- CSV ---------------------------------------------------------------------------

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    out << (c ? "," : "") << table.header[c];
  }
  out << '\n' << std::setprecision(17);
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << '\n';
  }
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != t.header.size()) throw std::runtime_error(path + ": ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

namespace {
void require_header(const CsvTable& t, const std::vector<std::string>& expected) {
  if (t.header != expected) throw std::invalid_argument("unexpected CSV columns");
}
}  // namespace

CsvTable to_csv(const LabeledGrid& grid) {
  CsvTable t{{"sigma1", "sigma2", "label"}, {}};
  for (const auto& p : grid.points) t.rows.push_back({p.input[0], p.input[1], p.target[0]});
  return t;
}

LabeledGrid labeled_grid_from_csv(const CsvTable& t, Split split) {
  require_header(t, {"sigma1", "sigma2", "label"});
  LabeledGrid g{{}, split, 0};
  for (const auto& r : t.rows) g.points.push_back({{r[0], r[1]}, {r[2]}});
  return g;
}

CsvTable to_csv(const std::vector<StressStrainPair>& pairs) {
  CsvTable t{{"step", "sigma_xx", "sigma_yy", "sigma_xy", "eps_xx", "eps_yy", "eps_xy"}, {}};
  for (const auto& p : pairs) {
    t.rows.push_back({static_cast<double>(p.step), p.sigma.xx, p.sigma.yy, p.sigma.xy, p.eps.xx,
                      p.eps.yy, p.eps.xy});
  }
  return t;
}

std::vector<StressStrainPair> pairs_from_csv(const CsvTable& t) {
  require_header(t, {"step", "sigma_xx", "sigma_yy", "sigma_xy", "eps_xx", "eps_yy", "eps_xy"});
  std::vector<StressStrainPair> out;
  for (const auto& r : t.rows) {
    out.push_back({SymTensor2d(r[1], r[2], r[3]), SymTensor2d(r[4], r[5], r[6]),
                   static_cast<int>(r[0])});
  }
  return out;
}

CsvTable to_csv(const std::vector<DicPoint>& cloud) {
  CsvTable t{{"step", "eps_xx", "eps_yy"}, {}};
  for (const auto& p : cloud) t.rows.push_back({static_cast<double>(p.step), p.eps_xx, p.eps_yy});
  return t;
}

std::vector<DicPoint> dic_from_csv(const CsvTable& t) {
  require_header(t, {"step", "eps_xx", "eps_yy"});
  std::vector<DicPoint> out;
  for (const auto& r : t.rows) out.push_back({static_cast<int>(r[0]), r[1], r[2]});
  return out;
}

}  // namespace rbx
