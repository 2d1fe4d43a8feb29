#pragma once

// Small-strain tensor algebra shared by all experiments: symmetric 2D/3D
// tensors, invariants, rotations and the plane von Mises criterion.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <tuple>

namespace rbx {

template <typename Scalar>
using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

namespace detail {
template <typename Scalar>
void require_finite(std::initializer_list<Scalar> values, const char* what) {
  for (Scalar v : values) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw std::invalid_argument(std::string(what) + ": non-finite component");
    }
  }
}
}  // namespace detail

/// Symmetric 2x2 tensor, in-plane components only.
template <typename Scalar>
struct SymTensor2 {
  Scalar xx{0}, yy{0}, xy{0};

  SymTensor2() = default;
  SymTensor2(Scalar xx_, Scalar yy_, Scalar xy_) : xx(xx_), yy(yy_), xy(xy_) {
    detail::require_finite<Scalar>({xx, yy, xy}, "SymTensor2");
  }

  static SymTensor2 identity() { return {1, 1, 0}; }

  /// Symmetric part of `m`.
  static SymTensor2 from_matrix(const Mat2<Scalar>& m) {
    return {m(0, 0), m(1, 1), Scalar(0.5) * (m(0, 1) + m(1, 0))};
  }

  Mat2<Scalar> matrix() const {
    Mat2<Scalar> m;
    m << xx, xy, xy, yy;
    return m;
  }

  friend bool operator==(const SymTensor2&, const SymTensor2&) = default;
};

/// Symmetric 3x3 tensor in Voigt-like component storage.
template <typename Scalar>
struct SymTensor3 {
  Scalar xx{0}, yy{0}, zz{0}, xy{0}, yz{0}, xz{0};

  SymTensor3() = default;
  SymTensor3(Scalar xx_, Scalar yy_, Scalar zz_, Scalar xy_, Scalar yz_, Scalar xz_)
      : xx(xx_), yy(yy_), zz(zz_), xy(xy_), yz(yz_), xz(xz_) {
    detail::require_finite<Scalar>({xx, yy, zz, xy, yz, xz}, "SymTensor3");
  }

  static SymTensor3 identity() { return {1, 1, 1, 0, 0, 0}; }
  static SymTensor3 diagonal(Scalar a, Scalar b, Scalar c) { return {a, b, c, 0, 0, 0}; }

  static SymTensor3 from_matrix(const Mat3<Scalar>& m) {
    const Scalar h(0.5);
    return {m(0, 0),
            m(1, 1),
            m(2, 2),
            h * (m(0, 1) + m(1, 0)),
            h * (m(1, 2) + m(2, 1)),
            h * (m(0, 2) + m(2, 0))};
  }

  Mat3<Scalar> matrix() const {
    Mat3<Scalar> m;
    m << xx, xy, xz, xy, yy, yz, xz, yz, zz;
    return m;
  }

  friend bool operator==(const SymTensor3&, const SymTensor3&) = default;
};

using SymTensor2d = SymTensor2<double>;
using SymTensor3d = SymTensor3<double>;

/// Principal stresses of a plane stress state [MPa]; unordered.
template <typename Scalar>
struct PrincipalStress2 {
  Scalar s1{0}, s2{0};
};
using PrincipalStress2d = PrincipalStress2<double>;

/// How a 2D tensor is lifted to 3D. Both embeddings set the out-of-plane
/// component to zero: plane strain (eps_zz = 0) for strains and plane stress
/// (sigma_zz = 0) for stresses.
enum class Embedding { PlaneStrain, PlaneStress3DZero };

template <typename Scalar>
SymTensor3<Scalar> embed(const SymTensor2<Scalar>& t,
                         Embedding = Embedding::PlaneStrain) {
  return {t.xx, t.yy, Scalar(0), t.xy, Scalar(0), Scalar(0)};
}

// --- algebra -------------------------------------------------------------

template <typename Scalar>
SymTensor3<Scalar> operator+(const SymTensor3<Scalar>& a, const SymTensor3<Scalar>& b) {
  return {a.xx + b.xx, a.yy + b.yy, a.zz + b.zz, a.xy + b.xy, a.yz + b.yz, a.xz + b.xz};
}
template <typename Scalar>
SymTensor3<Scalar> operator-(const SymTensor3<Scalar>& a, const SymTensor3<Scalar>& b) {
  return {a.xx - b.xx, a.yy - b.yy, a.zz - b.zz, a.xy - b.xy, a.yz - b.yz, a.xz - b.xz};
}
template <typename Scalar>
SymTensor3<Scalar> operator*(Scalar k, const SymTensor3<Scalar>& a) {
  return {k * a.xx, k * a.yy, k * a.zz, k * a.xy, k * a.yz, k * a.xz};
}
template <typename Scalar>
SymTensor2<Scalar> operator+(const SymTensor2<Scalar>& a, const SymTensor2<Scalar>& b) {
  return {a.xx + b.xx, a.yy + b.yy, a.xy + b.xy};
}
template <typename Scalar>
SymTensor2<Scalar> operator-(const SymTensor2<Scalar>& a, const SymTensor2<Scalar>& b) {
  return {a.xx - b.xx, a.yy - b.yy, a.xy - b.xy};
}
template <typename Scalar>
SymTensor2<Scalar> operator*(Scalar k, const SymTensor2<Scalar>& a) {
  return {k * a.xx, k * a.yy, k * a.xy};
}

template <typename Scalar>
Scalar trace(const SymTensor2<Scalar>& t) {
  return t.xx + t.yy;
}
template <typename Scalar>
Scalar trace(const SymTensor3<Scalar>& t) {
  return t.xx + t.yy + t.zz;
}

/// Frobenius inner product A:B.
template <typename Scalar>
Scalar ddot(const SymTensor3<Scalar>& a, const SymTensor3<Scalar>& b) {
  return a.xx * b.xx + a.yy * b.yy + a.zz * b.zz +
         Scalar(2) * (a.xy * b.xy + a.yz * b.yz + a.xz * b.xz);
}

template <typename Scalar>
Scalar frobenius_norm(const SymTensor3<Scalar>& t) {
  return std::sqrt(ddot(t, t));
}

template <typename Scalar>
SymTensor3<Scalar> deviator(const SymTensor3<Scalar>& t) {
  const Scalar m = trace(t) / Scalar(3);
  return {t.xx - m, t.yy - m, t.zz - m, t.xy, t.yz, t.xz};
}

/// 3D deviator of the embedded 2D tensor.
template <typename Scalar>
SymTensor3<Scalar> deviator(const SymTensor2<Scalar>& t,
                            Embedding e = Embedding::PlaneStrain) {
  return deviator(embed(t, e));
}

template <typename Scalar>
Scalar dev_norm(const SymTensor3<Scalar>& t) {
  return frobenius_norm(deviator(t));
}

template <typename Scalar>
Scalar dev_norm(const SymTensor2<Scalar>& t, Embedding e = Embedding::PlaneStrain) {
  return frobenius_norm(deviator(t, e));
}

template <typename Scalar>
struct Invariants {
  Scalar i1, i2, i3;
};

/// Principal invariants (I1, I2, I3) = (tr T, (tr^2 T - tr T^2)/2, det T).
template <typename Scalar>
Invariants<Scalar> invariants3(const SymTensor3<Scalar>& t) {
  const Scalar i1 = trace(t);
  const Scalar tr_sq = ddot(t, t);
  const Scalar i3 = t.xx * (t.yy * t.zz - t.yz * t.yz) -
                    t.xy * (t.xy * t.zz - t.yz * t.xz) +
                    t.xz * (t.xy * t.yz - t.yy * t.xz);
  return {i1, Scalar(0.5) * (i1 * i1 - tr_sq), i3};
}

// --- rotations -------------------------------------------------------------

/// In-plane rotation by `angle` (radians, counter-clockwise).
template <typename Scalar>
struct Rotation2 {
  Scalar angle{0};

  Mat2<Scalar> matrix() const {
    const Scalar c = std::cos(angle), s = std::sin(angle);
    Mat2<Scalar> r;
    r << c, -s, s, c;
    return r;
  }
};

/// Spatial rotation Q = Rz(phi) * Ry(theta - pi/2) * Rx(psi), chosen so that
/// Q e1 is the unit vector with polar angle theta and azimuth phi. The spin
/// psi about e1 defaults to zero and leaves Q e1 unchanged.
template <typename Scalar>
struct Rotation3 {
  Scalar theta{Scalar(M_PI / 2)};
  Scalar phi{0};
  Scalar psi{0};

  static Rotation3 identity() { return {Scalar(M_PI / 2), Scalar(0), Scalar(0)}; }

  Mat3<Scalar> matrix() const {
    using Eigen::AngleAxis;
    using V = Eigen::Matrix<Scalar, 3, 1>;
    const Mat3<Scalar> rz = AngleAxis<Scalar>(phi, V::UnitZ()).toRotationMatrix();
    const Mat3<Scalar> ry =
        AngleAxis<Scalar>(theta - Scalar(M_PI / 2), V::UnitY()).toRotationMatrix();
    const Mat3<Scalar> rx = AngleAxis<Scalar>(psi, V::UnitX()).toRotationMatrix();
    return rz * ry * rx;
  }

  /// Q e1 = (sin theta cos phi, sin theta sin phi, cos theta).
  Eigen::Matrix<Scalar, 3, 1> direction() const {
    return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
            std::cos(theta)};
  }
};

using Rotation2d = Rotation2<double>;
using Rotation3d = Rotation3<double>;

/// Similarity transform R^T T R.
template <typename Scalar>
SymTensor2<Scalar> rotate(const SymTensor2<Scalar>& t, const Rotation2<Scalar>& q) {
  const Mat2<Scalar> r = q.matrix();
  return SymTensor2<Scalar>::from_matrix(r.transpose() * t.matrix() * r);
}

/// Similarity transform Q^T T Q.
template <typename Scalar>
SymTensor3<Scalar> rotate(const SymTensor3<Scalar>& t, const Rotation3<Scalar>& q) {
  const Mat3<Scalar> r = q.matrix();
  return SymTensor3<Scalar>::from_matrix(r.transpose() * t.matrix() * r);
}

// --- yield -----------------------------------------------------------------

/// sqrt(s1^2 + s2^2 - s1 s2); the scalar statistic of the yield example.
template <typename Scalar>
Scalar dev_stress_norm(const PrincipalStress2<Scalar>& s) {
  // max() guards tiny negative round-off; the quadratic form is PSD.
  const Scalar q = s.s1 * s.s1 + s.s2 * s.s2 - s.s1 * s.s2;
  return std::sqrt(std::max(q, Scalar(0)));
}

/// Plane von Mises yield function in principal stresses; <= 0 is elastic.
template <typename Scalar>
Scalar von_mises_phi(const PrincipalStress2<Scalar>& s, Scalar sigma_y) {
  if (!(sigma_y > Scalar(0))) {
    throw std::invalid_argument("von_mises_phi: yield stress must be positive");
  }
  return dev_stress_norm(s) - sigma_y;
}

}  // namespace rbx
