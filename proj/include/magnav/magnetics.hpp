#pragma once

// Point-dipole interaction between the external magnet (EPM) carried by the
// arm and the internal magnet (IPM) inside the capsule. All quantities SI.

#include <sstream>

#include "magnav/common.hpp"

namespace magnav::magnetics {

inline constexpr double kDefaultMinSeparation = 0.05;  // m

struct MagnetSpec {
  double dipole_magnitude = 1.0;       // A·m²
  Vec3 axis_in_mount_frame = Vec3::UnitZ();

  void validate(const std::string& name) const {
    if (!(dipole_magnitude > 0.0) || !std::isfinite(dipole_magnitude)) {
      throw ContractError(name + ".dipole_magnitude must be > 0");
    }
    if (std::abs(axis_in_mount_frame.norm() - 1.0) > 1e-9) {
      throw ContractError(name + ".axis must have unit norm");
    }
  }
};

/// IPM-minus-EPM displacement, checked against a minimum separation.
class Separation {
 public:
  Separation(const Vec3& p, double min_separation = kDefaultMinSeparation)
      : p_(p), norm_(p.norm()) {
    if (!p.allFinite() || !(norm_ >= min_separation) || norm_ <= 0.0) {
      std::ostringstream os;
      os << "separation |p| = " << norm_ << " m is below the minimum "
         << min_separation << " m";
      throw DomainError(os.str());
    }
    dir_ = p_ / norm_;
  }

  const Vec3& vector() const { return p_; }
  const Vec3& direction() const { return dir_; }
  double norm() const { return norm_; }

 private:
  Vec3 p_;
  Vec3 dir_;
  double norm_;
};

/// B = μ0/(4π|p|³) (3 p̂p̂ᵀ − I) m_E
inline Vec3 dipole_field(const Separation& sep, const Vec3& m_epm) {
  const Vec3& ph = sep.direction();
  const double r = sep.norm();
  const double k = kMu0 / (4.0 * kPi * r * r * r);
  return k * (3.0 * ph * ph.dot(m_epm) - m_epm);
}

/// Jacobian ∂B/∂p of the dipole field. Symmetric and traceless.
inline Mat3 field_gradient(const Separation& sep, const Vec3& m_epm) {
  const Vec3& ph = sep.direction();
  const double r = sep.norm();
  const double k = 3.0 * kMu0 / (4.0 * kPi * r * r * r * r);
  const double pm = ph.dot(m_epm);
  const Mat3 pp = ph * ph.transpose();
  return k * (m_epm * ph.transpose() + ph * m_epm.transpose() +
              pm * (Mat3::Identity() - 5.0 * pp));
}

inline Vec3 magnetic_torque(const Vec3& m_ipm, const Vec3& field) {
  return m_ipm.cross(field);
}

/// Force on an IPM whose moment is aligned with the local field:
///
///   f = 3μ0|m_E||m_I| / (4π|p|⁴ |(3p̂p̂ᵀ − I)m̂_E|) · (m̂_E m̂_Eᵀ − (1 + 4(m̂_E·p̂)²) I) p̂
///
/// This equals |m_I| (b̂·∇)b.
inline Vec3 aligned_force(const Separation& sep, const Vec3& epm_axis,
                          double epm_moment, double ipm_moment) {
  const Vec3& ph = sep.direction();
  const double r = sep.norm();
  const double c = epm_axis.dot(ph);
  // |(3p̂p̂ᵀ − I)m̂| = sqrt(1 + 3c²) for unit m̂.
  const double denom = std::sqrt(1.0 + 3.0 * c * c);
  const double k = 3.0 * kMu0 * epm_moment * ipm_moment /
                   (4.0 * kPi * r * r * r * r * denom);
  return k * (epm_axis * c - (1.0 + 4.0 * c * c) * ph);
}

}  // namespace magnav::magnetics
