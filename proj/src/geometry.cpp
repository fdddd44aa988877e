#include "drivesql/geometry.hpp"

#include "drivesql/errors.hpp"

namespace drivesql {

Quaternion Quaternion::from_yaw(double radians) {
    return {std::cos(radians / 2.0), 0.0, 0.0, std::sin(radians / 2.0)};
}

Quaternion Quaternion::normalized() const {
    const double n = norm();
    if (!std::isfinite(n) || n == 0.0) {
        throw DomainError("quaternion must be finite and non-zero");
    }
    if (n == 1.0) return *this;
    return {w / n, x / n, y / n, z / n};
}

double Quaternion::yaw() const {
    const Quaternion q = normalized();
    return std::atan2(2.0 * (q.w * q.z + q.x * q.y), 1.0 - 2.0 * (q.y * q.y + q.z * q.z));
}

Quaternion operator*(const Quaternion& a, const Quaternion& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

namespace {

// v' = v + 2w(u x v) + 2 u x (u x v), u = (x, y, z), for unit q.
Vec3 apply_unit(const Quaternion& q, const Vec3& v) {
    const double tx = 2.0 * (q.y * v.z - q.z * v.y);
    const double ty = 2.0 * (q.z * v.x - q.x * v.z);
    const double tz = 2.0 * (q.x * v.y - q.y * v.x);
    return {v.x + q.w * tx + (q.y * tz - q.z * ty),
            v.y + q.w * ty + (q.z * tx - q.x * tz),
            v.z + q.w * tz + (q.x * ty - q.y * tx)};
}

}  // namespace

Vec3 rotate(const Quaternion& q, const Vec3& v) { return apply_unit(q.normalized(), v); }

Vec3 rotate_inverse(const Quaternion& q, const Vec3& v) {
    return apply_unit(q.normalized().conjugate(), v);
}

double planar_norm(const Vec3& v) { return std::sqrt(v.x * v.x + v.y * v.y); }

Vec3 relative_motion(const Vec3& p_from, const Quaternion& r_from, const Vec3& p_to) {
    return rotate_inverse(r_from, p_to - p_from);
}

}  // namespace drivesql
