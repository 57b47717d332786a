#pragma once

#include <algorithm>
#include <cmath>

namespace cst {

// DoA axis convention: x = front, y = left, z = up. Azimuth in
// (-180, 180] degrees measured from x toward y, elevation in [-90, 90].

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{};
  }
};

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

inline Vec3 doa_from_azel(double az_deg, double el_deg) {
  const double az = deg_to_rad(az_deg), el = deg_to_rad(el_deg);
  return {std::cos(az) * std::cos(el), std::sin(az) * std::cos(el), std::sin(el)};
}

inline void azel_from_doa(const Vec3& d, double& az_deg, double& el_deg) {
  const Vec3 u = d.normalized();
  az_deg = rad_to_deg(std::atan2(u.y, u.x));
  if (az_deg <= -180.0) az_deg = 180.0;  // keep azimuth in (-180, 180]
  el_deg = rad_to_deg(std::asin(std::clamp(u.z, -1.0, 1.0)));
}

/// Angle between two directions in degrees; zero vectors give 180.
inline double angle_between_deg(const Vec3& a, const Vec3& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 180.0;
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return rad_to_deg(std::acos(c));
}

}  // namespace cst
