#pragma once

#include <vector>

#include <Eigen/Geometry>

#include "headfuse/tri_mesh.hpp"

namespace headfuse {

/// Perspective camera: focal length in pixels, translation in millimetres,
/// unit-quaternion rotation, plus an independent gaze rotation used by the
/// eye fit.
struct CameraModel {
    double focal = 1000.0;
    Vec3 translation = Vec3::Zero();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Vec2 principal = Vec2::Zero();
    Eigen::Quaterniond eye_rotation = Eigen::Quaterniond::Identity();

    void validate() const;
};

/// Pinhole projection u = f x/z + cx, v = f y/z + cy after the rigid head
/// transform. Points must land in front of the camera.
Vec2 project_point(const CameraModel& camera, const Vec3& point);
std::vector<Vec2> project(const CameraModel& camera, const std::vector<Vec3>& points);

/// d(projection)/d(camera-space point), the 2x3 pinhole Jacobian.
Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraModel& camera, const Vec3& camera_point);

struct PnpInfo {
    double rms_px = 0;
    int iterations = 0;
    bool used_dlt_init = false;
};

/// Camera recovery from named 2D/3D landmark pairs (>= 6): direct linear
/// initialization followed by Gauss-Newton over focal length, translation
/// and rotation. The principal point is taken as given (default origin).
CameraModel solve_head_pnp(const LandmarkSet& landmarks_2d, const LandmarkSet& landmarks_3d,
                           const Vec2& principal = Vec2::Zero(), PnpInfo* info = nullptr);

/// Lifts 2D points along their camera rays to the given camera-space depths
/// and expresses them in the model frame.
std::vector<Vec3> backproject_landmarks(const CameraModel& camera,
                                        const std::vector<Vec2>& points_2d,
                                        const std::vector<double>& depths);

} // namespace headfuse
