#pragma once

// Axis-angle rotation matrices, their derivatives, and the intrinsic
// Z (azimuth) - Y (pitch) - X (roll) decomposition used for joint
// feasibility ranges.

#include <handfit/core.hpp>

#include <Eigen/Geometry>

#include <cmath>

namespace handfit {

inline Mat3 skew(const Vec3& v) {
    Mat3 k;
    k << 0, -v.z(), v.y(),
         v.z(), 0, -v.x(),
         -v.y(), v.x(), 0;
    return k;
}

inline Mat3 rodrigues(const Vec3& v) {
    double a2 = v.squaredNorm();
    double a = std::sqrt(a2);
    if (a < 1e-10) return Mat3::Identity() + skew(v);
    Vec3 u = v / a;
    Mat3 k = skew(u);
    return Mat3::Identity() + std::sin(a) * k + (1.0 - std::cos(a)) * (k * k);
}

// dR/dv_c (Gallego-Yezzi closed form); at the origin dR/dv_c = [e_c]x
inline std::array<Mat3, 3> rodrigues_jac(const Vec3& v) {
    std::array<Mat3, 3> out;
    double a2 = v.squaredNorm();
    if (a2 < 1e-16) {
        for (int c = 0; c < 3; ++c) out[c] = skew(Vec3::Unit(c));
        return out;
    }
    Mat3 r = rodrigues(v);
    Mat3 eye_r = Mat3::Identity() - r;
    for (int c = 0; c < 3; ++c) {
        Vec3 e = Vec3::Unit(c);
        Vec3 w = v.cross(eye_r * e);
        out[c] = ((v[c] * skew(v) + skew(w)) / a2) * r;
    }
    return out;
}

// intrinsic ZYX angles (azimuth, pitch, roll), each in (-pi, pi];
// at the gimbal degeneracy the roll is fixed to zero
inline Vec3 euler_zyx(const Mat3& r) {
    auto wrap = [](double a) { return a <= -kPi ? a + 2 * kPi : a; };
    double sp = -r(2, 0);
    sp = std::max(-1.0, std::min(1.0, sp));
    if (std::abs(sp) > 1.0 - 1e-9) {
        double pitch = sp > 0 ? kPi / 2 : -kPi / 2;
        double az = std::atan2(-r(0, 1), r(1, 1));
        return Vec3(wrap(az), pitch, 0.0);
    }
    double az = std::atan2(r(1, 0), r(0, 0));
    double pitch = std::asin(sp);
    double roll = std::atan2(r(2, 1), r(2, 2));
    return Vec3(wrap(az), pitch, wrap(roll));
}

inline Mat3 euler_zyx_matrix(const Vec3& angles) {
    double ca = std::cos(angles[0]), sa = std::sin(angles[0]);
    double cp = std::cos(angles[1]), sp = std::sin(angles[1]);
    double cr = std::cos(angles[2]), sr = std::sin(angles[2]);
    Mat3 rz, ry, rx;
    rz << ca, -sa, 0, sa, ca, 0, 0, 0, 1;
    ry << cp, 0, sp, 0, 1, 0, -sp, 0, cp;
    rx << 1, 0, 0, 0, cr, -sr, 0, sr, cr;
    return rz * ry * rx;
}

// d(azimuth,pitch,roll)/dv for an axis-angle vector, away from the gimbal lock
inline Mat3 euler_zyx_jac(const Vec3& v) {
    Mat3 r = rodrigues(v);
    std::array<Mat3, 3> dr = rodrigues_jac(v);
    Mat3 jac = Mat3::Zero();
    double u = r(1, 0), w = r(0, 0);
    double den_az = u * u + w * w;
    double sp = -r(2, 0);
    double den_p = std::sqrt(std::max(1e-12, 1.0 - sp * sp));
    double p = r(2, 1), q = r(2, 2);
    double den_roll = p * p + q * q;
    for (int c = 0; c < 3; ++c) {
        const Mat3& d = dr[c];
        jac(0, c) = (w * d(1, 0) - u * d(0, 0)) / std::max(1e-12, den_az);
        jac(1, c) = -d(2, 0) / den_p;
        jac(2, c) = (q * d(2, 1) - p * d(2, 2)) / std::max(1e-12, den_roll);
    }
    return jac;
}

}  // namespace handfit
