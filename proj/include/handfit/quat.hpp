#pragma once

// Quaternion motion math: Hamilton algebra, the exp map from axis-angle
// vectors, interpolation, and the rotation angle between two orientations
// measured through the quaternion dot product.

#include <handfit/core.hpp>

#include <cmath>

namespace handfit {

struct Quaternion {
    double w = 1, x = 0, y = 0, z = 0;

    Quaternion() = default;
    Quaternion(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

    double dot(const Quaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 vec() const { return Vec3(x, y, z); }
    Quaternion operator-() const { return {-w, -x, -y, -z}; }

    Quaternion normalized() const {
        double n = norm();
        if (n < 1e-12) throw std::invalid_argument("cannot normalize near-zero quaternion");
        return {w / n, x / n, y / n, z / n};
    }
};

// global rotation first, then one entry per articulated joint in chain order
using PoseQuaternions = std::vector<Quaternion>;

namespace detail {
inline void require_unit(const Quaternion& q, const char* who) {
    if (std::abs(q.norm() - 1.0) > 1e-6)
        throw std::invalid_argument(std::string(who) + ": quaternion must be unit length");
}
}  // namespace detail

inline Quaternion quat_from_axis_angle(const Vec3& axis, double angle) {
    double n = axis.norm();
    if (std::abs(n - 1.0) > 1e-6)
        throw std::invalid_argument("quat_from_axis_angle: axis must be a unit vector");
    double h = 0.5 * angle;
    double s = std::sin(h);
    return {std::cos(h), s * axis.x(), s * axis.y(), s * axis.z()};
}

// exp map; safe at zero via the sinc series
inline Quaternion quat_from_rotvec(const Vec3& v) {
    double a = v.norm();
    double h = 0.5 * a;
    double k;  // sin(a/2)/a
    if (a < 1e-8)
        k = 0.5 - a * a / 48.0;
    else
        k = std::sin(h) / a;
    return {std::cos(h), k * v.x(), k * v.y(), k * v.z()};
}

inline Quaternion hamilton_product(const Quaternion& a, const Quaternion& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

// conjugate over squared norm, defined for any quaternion away from zero
inline Quaternion quat_inverse(const Quaternion& q) {
    double n2 = q.dot(q);
    if (n2 < 1e-24) throw std::invalid_argument("quat_inverse: near-zero norm");
    return {q.w / n2, -q.x / n2, -q.y / n2, -q.z / n2};
}

// literal dot-product form, no unit validation; exposed for derivative checks
inline double rotation_angle_raw(const Quaternion& a, const Quaternion& b) {
    double d = std::abs(a.dot(b));
    d = std::min(d, 1.0);
    return 2.0 * std::acos(d);
}

// rotation angle in [0, pi]; the absolute value folds the double cover
inline double rotation_angle_between(const Quaternion& a, const Quaternion& b) {
    detail::require_unit(a, "rotation_angle_between");
    detail::require_unit(b, "rotation_angle_between");
    return rotation_angle_raw(a, b);
}

inline Quaternion slerp(const Quaternion& q0, const Quaternion& q1, double t) {
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("slerp: t must lie in [0, 1]");
    detail::require_unit(q0, "slerp");
    detail::require_unit(q1, "slerp");
    double d = q0.dot(q1);
    double sign = 1.0;
    if (d < 0.0) {  // walk the shorter arc
        d = -d;
        sign = -1.0;
    }
    d = std::min(d, 1.0);
    double eta = std::acos(d);
    double se = std::sin(eta);
    double c0, c1;
    if (se < 1e-6) {  // endpoints nearly aligned: normalized lerp
        c0 = 1.0 - t;
        c1 = t * sign;
    } else {
        c0 = std::sin((1.0 - t) * eta) / se;
        c1 = std::sin(t * eta) / se * sign;
    }
    Quaternion r{c0 * q0.w + c1 * q1.w, c0 * q0.x + c1 * q1.x,
                 c0 * q0.y + c1 * q1.y, c0 * q0.z + c1 * q1.z};
    return r.normalized();
}

inline Mat3 quat_to_matrix(const Quaternion& q) {
    double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

// theta holds 3 axis-angle components per articulated joint; rot is the
// global orientation. Output: [global, joint 0, joint 1, ...]
inline PoseQuaternions pose_to_quaternions(const VecX& theta, const Vec3& rot) {
    if (theta.size() % 3 != 0)
        throw std::invalid_argument("pose_to_quaternions: theta length must be a multiple of 3");
    PoseQuaternions out;
    out.reserve(std::size_t(theta.size() / 3) + 1);
    out.push_back(quat_from_rotvec(rot));
    for (int j = 0; j < theta.size() / 3; ++j)
        out.push_back(quat_from_rotvec(Vec3(theta[3 * j], theta[3 * j + 1], theta[3 * j + 2])));
    return out;
}

// d quat / d rotvec, rows ordered (w, x, y, z)
inline Eigen::Matrix<double, 4, 3> quat_from_rotvec_jac(const Vec3& v) {
    double a2 = v.squaredNorm();
    double a = std::sqrt(a2);
    Eigen::Matrix<double, 4, 3> jac;
    if (a < 1e-6) {
        // series: w = cos(a/2), vec = v * k(a), k = 1/2 - a^2/48
        double k = 0.5 - a2 / 48.0;
        for (int c = 0; c < 3; ++c) {
            jac(0, c) = -0.5 * k * v[c];  // dw = -sin(a/2)/2 * da ~ -(a/4) * (v_c/a)
            for (int r = 0; r < 3; ++r)
                jac(r + 1, c) = (r == c ? k : 0.0) - v[r] * v[c] / 24.0;
        }
        return jac;
    }
    double h = 0.5 * a;
    double sh = std::sin(h), ch = std::cos(h);
    double k = sh / a;
    double dk_da = (0.5 * ch - k) / a;  // d(sin(a/2)/a)/da
    for (int c = 0; c < 3; ++c) {
        double da_dc = v[c] / a;
        jac(0, c) = -0.5 * sh * da_dc;
        for (int r = 0; r < 3; ++r)
            jac(r + 1, c) = (r == c ? k : 0.0) + v[r] * dk_da * da_dc;
    }
    return jac;
}

// gradient of rotation_angle_raw with respect to both raw 4-vectors;
// zero where the |dot| clamp is active
inline void rotation_angle_grad(const Quaternion& a, const Quaternion& b, Vec4* da, Vec4* db) {
    double d = a.dot(b);
    double ad = std::abs(d);
    if (ad >= 1.0) {
        if (da) da->setZero();
        if (db) db->setZero();
        return;
    }
    double s = (d >= 0.0) ? 1.0 : -1.0;
    double g = -2.0 * s / std::sqrt(1.0 - ad * ad);
    if (da) *da = g * Vec4(b.w, b.x, b.y, b.z);
    if (db) *db = g * Vec4(a.w, a.x, a.y, a.z);
}

}  // namespace handfit
