#pragma once

#include <cmath>

#include <Eigen/Core>

#include "liprf/common.hpp"

namespace liprf {

using Pose = Eigen::Matrix<double, 3, 4>;

/// Pinhole camera. Camera frame follows the x-right, y-down, z-forward convention;
/// `pose` maps camera coordinates to world coordinates. Pixel (u,v) is sampled at its
/// center (u+0.5, v+0.5).
struct Camera {
    int width = 1;
    int height = 1;
    double focal = 1.0;
    double cx = 0.5;
    double cy = 0.5;
    Pose pose = Pose::Identity();

    [[nodiscard]] Mat3 rotation() const { return pose.leftCols<3>(); }
    [[nodiscard]] Vec3 position() const { return pose.col(3); }
    [[nodiscard]] Vec3 viewing_axis() const { return pose.col(2).normalized(); }

    /// Largest deviation of R·Rᵀ from identity.
    [[nodiscard]] double orthonormality_error() const {
        const Mat3 r = rotation();
        return (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    }

    /// Unnormalized world-space direction through continuous image coordinates (px, py).
    [[nodiscard]] Vec3 direction_through(double px, double py) const {
        const Vec3 cam((px - cx) / focal, (py - cy) / focal, 1.0);
        return rotation() * cam;
    }

    /// Projects a world point. Returns false when the point is behind the camera.
    bool project(const Vec3& world, double& px, double& py) const {
        const Vec3 cam = rotation().transpose() * (world - position());
        if (cam.z() <= 1e-12) return false;
        px = focal * cam.x() / cam.z() + cx;
        py = focal * cam.y() / cam.z() + cy;
        return true;
    }
};

/// Builds a camera-to-world pose at `eye` looking at `target` with world `up`.
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-12) right = forward.cross(Vec3::UnitX());
    right.normalize();
    const Vec3 down = forward.cross(right);
    Pose p;
    p.col(0) = right;
    p.col(1) = down;
    p.col(2) = forward;
    p.col(3) = eye;
    return p;
}

}  // namespace liprf
