#pragma once

// Analytic ground truths for the experiments.

#include "rbx/mechanics.hpp"

namespace rbx {

inline constexpr double kYieldStress = 1.0;  // MPa

/// 0 (elastic) iff the von Mises function at sigma_y = 1 MPa is <= 0.
int yield_truth(const PrincipalStress2d& s);

/// Closed-form orientation average of e1.C.e1: I1(C) / 3.
double microsphere_truth(const SymTensor3d& c);

/// Bulk modulus, shear modulus and cone parameter of the energy split.
struct ElasticConstants {
  double kappa = 3.0;
  double mu = 2.0;
  double gamma = 1.0;

  void validate() const;
};

struct EnergySplit {
  double psi_r = 0.0;  // residual energy, not coupled to damage
  double psi_d = 0.0;  // damage-driving part
  double psi_0 = 0.0;  // undamaged elastic energy
  SymTensor3d eta_bar;
};

/// kappa/2 tr(eps - eta)^2 + mu |dev eps - dev eta|^2 for a plane-strain eps.
double damage_objective(const SymTensor2d& eps, const SymTensor3d& eta,
                        const ElasticConstants& k);

/// Minimizer over the cone tr(eta) >= gamma |dev eta|, reduced to the
/// trace and deviatoric norm of eps; see the derivation in oracles.cpp.
EnergySplit damage_split_closed(const SymTensor2d& eps, const ElasticConstants& k);

struct BruteForceResult {
  EnergySplit split;
  double grid_step_trace = 0.0;  // step of the trace offset above the cone
  double grid_step_dev = 0.0;    // step of the deviatoric radius
  std::size_t evaluations = 0;
  bool all_admissible = true;    // every evaluated eta satisfied the cone
};

/// Exhaustive search of damage_objective over eta on a grid inside the
/// admissible cone. The grid parameterizes eta = (gamma r + u)/3 I
/// + r (cos a e + sin a f), with e the unit deviator of eps and f a unit
/// traceless tensor orthogonal to e; r in [0, R], u in [0, U], a in
/// [0, pi]. Doubling `resolution` yields a superset of the previous grid.
BruteForceResult damage_split_bruteforce(const SymTensor2d& eps, const ElasticConstants& k,
                                         int resolution, int angle_resolution = 8);

/// Upper bound on the grid error of damage_split_bruteforce for a
/// quadratic objective: (1/2) lambda_max (h_u^2 + h_r^2) / 4.
double bruteforce_error_bound(const BruteForceResult& r, const ElasticConstants& k);

/// True iff (dev_norm, trace) equal within 1e-10 implies (psi_R, psi_D)
/// equal within 1e-10, i.e. the pair is not a counterexample to the
/// sufficiency of {|dev eps|, tr eps}. Pairs with differing statistics are
/// vacuously true.
bool damage_sufficiency_witness(const SymTensor2d& eps_a, const SymTensor2d& eps_b,
                                const ElasticConstants& k);

/// Same test for the single statistic |dev eps|; false exhibits a pair that
/// shares the statistic but not the energies.
bool damage_sufficiency_witness_dev_only(const SymTensor2d& eps_a, const SymTensor2d& eps_b,
                                         const ElasticConstants& k);

/// Square cross-section width w and drill diameter d, both in mm.
struct BarGeometry {
  double w = 4.0;
  double d = 2.0;

  void validate() const;
};

/// Coefficients of the dimensionless master curve
/// F* = F_uts / (E w^2) = scale (1 - x)(1 + curvature x), x = d / w.
struct SteelbarCurve {
  double scale = 4.0e-3;
  double curvature = 0.15;

  double operator()(double ratio) const { return scale * (1.0 - ratio) * (1.0 + curvature * ratio); }
};

inline constexpr double kSteelYoungsModulus = 210000.0;  // N/mm^2

/// Ultimate tensile force [N] of the analytic stand-in for the bar database.
double steelbar_surrogate(const BarGeometry& g, double youngs_modulus = kSteelYoungsModulus,
                          const SteelbarCurve& curve = {});

}  // namespace rbx
