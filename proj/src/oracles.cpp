#include "rbx/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rbx {

int yield_truth(const PrincipalStress2d& s) {
  return von_mises_phi(s, kYieldStress) <= 0.0 ? 0 : 1;
}

double microsphere_truth(const SymTensor3d& c) { return trace(c) / 3.0; }

void ElasticConstants::validate() const {
  if (!(kappa > 0.0) || !(mu > 0.0) || !(gamma >= 0.0)) {
    throw std::invalid_argument("elastic constants need kappa > 0, mu > 0, gamma >= 0");
  }
}

double damage_objective(const SymTensor2d& eps, const SymTensor3d& eta,
                        const ElasticConstants& k) {
  const SymTensor3d e = embed(eps);
  const double dt = trace(e) - trace(eta);
  const SymTensor3d dd = deviator(e) - deviator(eta);
  return 0.5 * k.kappa * dt * dt + k.mu * ddot(dd, dd);
}

namespace {

double psi_0(double tr, double dev, const ElasticConstants& k) {
  return 0.5 * k.kappa * tr * tr + k.mu * dev * dev;
}

// Unit tensor along dev(eps), or an arbitrary traceless unit tensor when
// the deviator vanishes.
SymTensor3d unit_deviator(const SymTensor2d& eps) {
  const SymTensor3d dev = deviator(eps);
  const double n = frobenius_norm(dev);
  if (n > 0.0) return (1.0 / n) * dev;
  return SymTensor3d(0, 0, 0, 1.0 / std::sqrt(2.0), 0, 0);
}

// Traceless unit tensor orthogonal to `e` (Gram-Schmidt over candidates).
SymTensor3d orthogonal_unit_deviator(const SymTensor3d& e) {
  const SymTensor3d candidates[] = {
      {1, -1, 0, 0, 0, 0}, {0, 0, 0, 1, 0, 0}, {1, 1, -2, 0, 0, 0}, {0, 0, 0, 0, 1, 0}};
  for (const auto& c : candidates) {
    const SymTensor3d f = c - ddot(c, e) * e;
    const double n = frobenius_norm(f);
    if (n > 1e-6) return (1.0 / n) * f;
  }
  throw std::logic_error("no orthogonal deviator found");
}

}  // namespace

// With T = tr eps and D = |dev eps| the objective only sees dev(eta) through
// |dev eta| = r and its projection on dev(eps), so the optimal dev(eta) is
// r dev(eps)/D and the problem reduces to
//   min kappa/2 (T - t)^2 + mu (D - r)^2   s.t.  t >= gamma r, r >= 0.
// If T >= gamma D the unconstrained optimum (t, r) = (T, D) is admissible.
// Otherwise the cone boundary t = gamma r is active, giving
//   r* = (gamma kappa T + 2 mu D) / (gamma^2 kappa + 2 mu);
// when r* < 0 the apex r = 0 is optimal with t = max(T, 0).
EnergySplit damage_split_closed(const SymTensor2d& eps, const ElasticConstants& k) {
  k.validate();
  const double tr = trace(eps);
  const double dev = dev_norm(eps);
  const double p0 = psi_0(tr, dev, k);

  double t = tr, r = dev;
  if (tr < k.gamma * dev) {
    r = (k.gamma * k.kappa * tr + 2.0 * k.mu * dev) / (k.gamma * k.gamma * k.kappa + 2.0 * k.mu);
    if (r <= 0.0) {
      r = 0.0;
      t = std::max(tr, 0.0);
    } else {
      t = k.gamma * r;
    }
  }
  const double pr = 0.5 * k.kappa * (tr - t) * (tr - t) + k.mu * (dev - r) * (dev - r);

  const SymTensor3d eta = (t / 3.0) * SymTensor3d::identity() + r * unit_deviator(eps);
  return {pr, p0 - pr, p0, eta};
}

BruteForceResult damage_split_bruteforce(const SymTensor2d& eps, const ElasticConstants& k,
                                         int resolution, int angle_resolution) {
  k.validate();
  if (resolution < 1 || angle_resolution < 1) {
    throw std::invalid_argument("brute-force resolution must be >= 1");
  }
  const double tr = trace(eps);
  const double dev = dev_norm(eps);
  const double scale = std::abs(tr) + dev;
  const double r_max = 2.0 * scale + 1e-12;
  const double u_max = 2.0 * (std::abs(tr) + k.gamma * r_max) + 1e-12;
  const double hr = r_max / resolution;
  const double hu = u_max / resolution;

  const SymTensor3d e = unit_deviator(eps);
  const SymTensor3d f = orthogonal_unit_deviator(e);
  const SymTensor3d eye = SymTensor3d::identity();

  BruteForceResult out;
  out.grid_step_trace = hu;
  out.grid_step_dev = hr;
  double best = std::numeric_limits<double>::infinity();
  SymTensor3d best_eta;
  for (int ia = 0; ia <= angle_resolution; ++ia) {
    const double a = M_PI * ia / angle_resolution;
    const SymTensor3d dir = std::cos(a) * e + std::sin(a) * f;
    for (int ir = 0; ir <= resolution; ++ir) {
      const double r = hr * ir;
      const SymTensor3d eta_dev = r * dir;
      for (int iu = 0; iu <= resolution; ++iu) {
        const double t = k.gamma * r + hu * iu;
        const SymTensor3d eta = (t / 3.0) * eye + eta_dev;
        if (trace(eta) < k.gamma * dev_norm(eta) - 1e-12) out.all_admissible = false;
        ++out.evaluations;
        const double v = damage_objective(eps, eta, k);
        if (v < best) {
          best = v;
          best_eta = eta;
        }
      }
    }
  }
  const double p0 = psi_0(tr, dev, k);
  out.split = {best, p0 - best, p0, best_eta};
  return out;
}

double bruteforce_error_bound(const BruteForceResult& r, const ElasticConstants& k) {
  // Hessian of the reduced objective in (u, r) has trace
  // kappa (1 + gamma^2) + 2 mu >= lambda_max; the nearest grid node lies
  // within half a step per axis.
  const double lambda = k.kappa * (1.0 + k.gamma * k.gamma) + 2.0 * k.mu;
  return 0.5 * lambda *
         (r.grid_step_trace * r.grid_step_trace + r.grid_step_dev * r.grid_step_dev) / 4.0;
}

namespace {

bool close(double a, double b) { return std::abs(a - b) <= 1e-10; }

bool energies_equal(const SymTensor2d& a, const SymTensor2d& b, const ElasticConstants& k) {
  const auto sa = damage_split_closed(a, k);
  const auto sb = damage_split_closed(b, k);
  return close(sa.psi_r, sb.psi_r) && close(sa.psi_d, sb.psi_d);
}

}  // namespace

bool damage_sufficiency_witness(const SymTensor2d& eps_a, const SymTensor2d& eps_b,
                                const ElasticConstants& k) {
  const bool same_stat =
      close(dev_norm(eps_a), dev_norm(eps_b)) && close(trace(eps_a), trace(eps_b));
  return !same_stat || energies_equal(eps_a, eps_b, k);
}

bool damage_sufficiency_witness_dev_only(const SymTensor2d& eps_a, const SymTensor2d& eps_b,
                                         const ElasticConstants& k) {
  return !close(dev_norm(eps_a), dev_norm(eps_b)) || energies_equal(eps_a, eps_b, k);
}

void BarGeometry::validate() const {
  if (!(w > 0.0 && w <= 8.0) || !(d > 0.0 && d < w)) {
    throw std::invalid_argument("bar geometry needs 0 < w <= 8 mm and 0 < d < w");
  }
}

double steelbar_surrogate(const BarGeometry& g, double youngs_modulus, const SteelbarCurve& curve) {
  g.validate();
  if (!(youngs_modulus > 0.0)) throw std::invalid_argument("Young's modulus must be positive");
  return youngs_modulus * g.w * g.w * curve(g.d / g.w);
}

}  // namespace rbx
