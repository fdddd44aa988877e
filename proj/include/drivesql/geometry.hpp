#pragma once

#include <cmath>

namespace drivesql {

/// Cartesian 3-vector in meters. In the ego frame x points forward, y left, z up.
struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

/// Quaternion (w, x, y, z), right-handed, active rotation convention.
struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const Quaternion&, const Quaternion&) = default;

    static Quaternion identity() { return {}; }
    /// Rotation of `radians` about +z.
    static Quaternion from_yaw(double radians);

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    Quaternion conjugate() const { return {w, -x, -y, -z}; }
    /// Unit quaternion in the same direction. Throws DomainError for zero or non-finite input.
    Quaternion normalized() const;
    double yaw() const;

    friend Quaternion operator*(const Quaternion& a, const Quaternion& b);
};

/// Applies q to v (q v q*). q is renormalized first.
Vec3 rotate(const Quaternion& q, const Vec3& v);

/// Applies q^-1 to v. q is renormalized first; a zero quaternion is a DomainError.
Vec3 rotate_inverse(const Quaternion& q, const Vec3& v);

/// sqrt(x^2 + y^2); z is ignored.
double planar_norm(const Vec3& v);

/// Displacement p_to - p_from expressed in the frame oriented by r_from.
Vec3 relative_motion(const Vec3& p_from, const Quaternion& r_from, const Vec3& p_to);

}  // namespace drivesql
