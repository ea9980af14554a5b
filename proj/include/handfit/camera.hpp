#pragma once

// Camera models and point projection.

#include <handfit/core.hpp>

namespace handfit {

enum class CameraMode { perspective, orthogonal };

struct CameraModel {
    CameraMode mode = CameraMode::perspective;
    double fx = 100.0, fy = 100.0;  // focal lengths, pixels
    double cx = 32.0, cy = 32.0;    // principal point / orthogonal center
    double scale = 100.0;           // orthogonal pixels per meter
    int width = 64, height = 64;

    void validate() const {
        if (width < 8 || height < 8)
            throw std::invalid_argument("camera: image must be at least 8x8");
        if (mode == CameraMode::perspective && (fx <= 0.0 || fy <= 0.0))
            throw std::invalid_argument("camera: focal lengths must be positive");
        if (mode == CameraMode::orthogonal && scale <= 0.0)
            throw std::invalid_argument("camera: orthogonal scale must be positive");
    }
};

// d(u, v)/d(x, y, z) for one point
inline Eigen::Matrix<double, 2, 3> project_jac(const Vec3& p, const CameraModel& cam) {
    Eigen::Matrix<double, 2, 3> jac = Eigen::Matrix<double, 2, 3>::Zero();
    if (cam.mode == CameraMode::perspective) {
        double z = p.z();
        if (z <= 1e-6) throw behind_camera_error(0);
        jac(0, 0) = cam.fx / z;
        jac(0, 2) = -cam.fx * p.x() / (z * z);
        jac(1, 1) = cam.fy / z;
        jac(1, 2) = -cam.fy * p.y() / (z * z);
    } else {
        jac(0, 0) = cam.scale;
        jac(1, 1) = cam.scale;
    }
    return jac;
}

inline Points2 project(const Points3& pts, const CameraModel& cam) {
    cam.validate();
    Points2 out(pts.rows(), 2);
    if (cam.mode == CameraMode::perspective) {
        for (int i = 0; i < pts.rows(); ++i) {
            double z = pts(i, 2);
            if (z <= 1e-6) throw behind_camera_error(i);
            out(i, 0) = cam.fx * pts(i, 0) / z + cam.cx;
            out(i, 1) = cam.fy * pts(i, 1) / z + cam.cy;
        }
    } else {
        for (int i = 0; i < pts.rows(); ++i) {
            out(i, 0) = cam.scale * pts(i, 0) + cam.cx;
            out(i, 1) = cam.scale * pts(i, 1) + cam.cy;
        }
    }
    return out;
}

}  // namespace handfit
