#include "headfuse/camera.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "headfuse/errors.hpp"

namespace headfuse {

void CameraModel::validate() const {
    if (!(focal > 0)) throw ValidationError("camera focal length must be positive");
    if (std::abs(rotation.norm() - 1.0) > 1e-9)
        throw ValidationError("camera rotation quaternion must be unit");
    if (std::abs(eye_rotation.norm() - 1.0) > 1e-9)
        throw ValidationError("eye rotation quaternion must be unit");
}

Vec2 project_point(const CameraModel& camera, const Vec3& point) {
    const Vec3 pc = camera.rotation.normalized() * point + camera.translation;
    if (!(pc.z() > 0)) throw NumericalError("projection of a point at or behind the camera");
    return {camera.focal * pc.x() / pc.z() + camera.principal.x(),
            camera.focal * pc.y() / pc.z() + camera.principal.y()};
}

std::vector<Vec2> project(const CameraModel& camera, const std::vector<Vec3>& points) {
    std::vector<Vec2> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(project_point(camera, p));
    return out;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraModel& camera,
                                                const Vec3& camera_point) {
    const double z = camera_point.z();
    Eigen::Matrix<double, 2, 3> j;
    j << camera.focal / z, 0, -camera.focal * camera_point.x() / (z * z), //
        0, camera.focal / z, -camera.focal * camera_point.y() / (z * z);
    return j;
}

namespace {

Eigen::Quaterniond apply_tangent(const Eigen::Quaterniond& q, const Vec3& omega) {
    const double angle = omega.norm();
    Eigen::Quaterniond dq = Eigen::Quaterniond::Identity();
    if (angle > 0) {
        const Vec3 axis = omega / angle;
        dq = Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis));
    }
    return (q * dq).normalized();
}

/// RQ decomposition M = K R with K upper triangular (positive diagonal
/// enforced by the caller).
void rq_decompose(const Eigen::Matrix3d& m, Eigen::Matrix3d& k, Eigen::Matrix3d& r) {
    Eigen::Matrix3d e = Eigen::Matrix3d::Zero();
    e(0, 2) = e(1, 1) = e(2, 0) = 1;
    const Eigen::Matrix3d a = (e * m).transpose();
    Eigen::HouseholderQR<Eigen::Matrix3d> qr(a);
    Eigen::Matrix3d q = qr.householderQ();
    Eigen::Matrix3d rr = q.transpose() * a;
    k = e * rr.transpose() * e;
    r = e * q.transpose();
}

} // namespace

CameraModel solve_head_pnp(const LandmarkSet& landmarks_2d, const LandmarkSet& landmarks_3d,
                           const Vec2& principal, PnpInfo* info) {
    std::vector<Vec2> p2;
    std::vector<Vec3> p3;
    for (const auto& name : landmarks_3d.names()) {
        if (!landmarks_3d.has3(name) || !landmarks_2d.has2(name)) continue;
        p3.push_back(landmarks_3d.point3(name));
        p2.push_back(landmarks_2d.point2(name) - principal);
    }
    const int n = static_cast<int>(p3.size());
    if (n < 6) throw ValidationError("solve_head_pnp needs at least 6 correspondences");

    // Degeneracy check on the 3D configuration.
    Eigen::MatrixXd pts(n, 3);
    for (int i = 0; i < n; ++i) pts.row(i) = p3[i].transpose();
    const Eigen::RowVector3d centroid = pts.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> shape_svd(pts.rowwise() - centroid);
    const double spread = shape_svd.singularValues()[0];
    if (shape_svd.singularValues()[1] < 1e-9 * spread)
        throw NumericalError("solve_head_pnp: near-collinear landmark configuration");
    const bool coplanar = shape_svd.singularValues()[2] < 1e-6 * spread;

    CameraModel camera;
    camera.principal = principal;
    bool have_init = false;

    if (!coplanar) {
        // DLT over the 3x4 projection matrix.
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 12);
        for (int i = 0; i < n; ++i) {
            const Eigen::RowVector4d xh(p3[i].x(), p3[i].y(), p3[i].z(), 1.0);
            a.block<1, 4>(2 * i, 0) = xh;
            a.block<1, 4>(2 * i, 8) = -p2[i].x() * xh;
            a.block<1, 4>(2 * i + 1, 4) = xh;
            a.block<1, 4>(2 * i + 1, 8) = -p2[i].y() * xh;
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
        const Eigen::VectorXd pvec = svd.matrixV().col(11);
        Eigen::Matrix<double, 3, 4> proj;
        proj << pvec.segment<4>(0).transpose(), pvec.segment<4>(4).transpose(),
            pvec.segment<4>(8).transpose();
        Eigen::Matrix3d m = proj.leftCols<3>();
        if (m.determinant() < 0) {
            proj = -proj;
            m = -m;
        }
        Eigen::Matrix3d k, r;
        rq_decompose(m, k, r);
        Eigen::Vector3d d(k(0, 0) > 0 ? 1 : -1, k(1, 1) > 0 ? 1 : -1, k(2, 2) > 0 ? 1 : -1);
        k = k * d.asDiagonal();
        r = d.asDiagonal() * r;
        if (std::abs(k(2, 2)) > 1e-12) k /= k(2, 2);
        const Vec3 t = k.inverse() * proj.col(3);
        if (k(0, 0) > 0 && t.z() > 0) {
            camera.focal = 0.5 * (k(0, 0) + k(1, 1));
            camera.rotation = Eigen::Quaterniond(r).normalized();
            camera.translation = t;
            have_init = true;
            if (info) info->used_dlt_init = true;
        }
    }
    if (!have_init) {
        // Coplanar (or failed DLT) fallback: look down +z at the landmark
        // cloud from a distance scaled by the image spread.
        double img_spread = 0;
        for (const auto& p : p2) img_spread = std::max(img_spread, p.norm());
        camera.focal = std::max(100.0, img_spread);
        camera.rotation = Eigen::Quaterniond::Identity();
        camera.translation = Vec3(-centroid.x(), -centroid.y(),
                                  -centroid.z() + 4.0 * spread + 1.0);
    }

    // Gauss-Newton refinement over [f, t, omega] with damping.
    auto residuals = [&](const CameraModel& c) {
        Eigen::VectorXd r(2 * n);
        for (int i = 0; i < n; ++i) {
            const Vec3 pc = c.rotation * p3[i] + c.translation;
            if (!(pc.z() > 0)) return Eigen::VectorXd::Constant(2 * n, 1e12).eval();
            r[2 * i] = c.focal * pc.x() / pc.z() - p2[i].x();
            r[2 * i + 1] = c.focal * pc.y() / pc.z() - p2[i].y();
        }
        return r;
    };

    double mu = 1e-6;
    Eigen::VectorXd r = residuals(camera);
    double cost = r.squaredNorm();
    int iterations = 0;
    for (int iter = 0; iter < 100; ++iter) {
        ++iterations;
        Eigen::MatrixXd j(2 * n, 7);
        for (int i = 0; i < n; ++i) {
            const Vec3 pc = camera.rotation * p3[i] + camera.translation;
            const double z = pc.z();
            Eigen::Matrix<double, 2, 3> dpi;
            dpi << camera.focal / z, 0, -camera.focal * pc.x() / (z * z), //
                0, camera.focal / z, -camera.focal * pc.y() / (z * z);
            j(2 * i, 0) = pc.x() / z;
            j(2 * i + 1, 0) = pc.y() / z;
            j.block<2, 3>(2 * i, 1) = dpi;
            Eigen::Matrix3d skew;
            skew << 0, -p3[i].z(), p3[i].y(), p3[i].z(), 0, -p3[i].x(), -p3[i].y(), p3[i].x(), 0;
            j.block<2, 3>(2 * i, 4) = dpi * (camera.rotation.toRotationMatrix() * (-skew));
        }
        const Eigen::MatrixXd jtj = j.transpose() * j;
        const Eigen::VectorXd g = j.transpose() * r;
        bool accepted = false;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::MatrixXd damped = jtj;
            damped.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::VectorXd delta = damped.ldlt().solve(-g);
            CameraModel trial = camera;
            trial.focal = camera.focal + delta[0];
            trial.translation = camera.translation + delta.segment<3>(1);
            trial.rotation = apply_tangent(camera.rotation, delta.segment<3>(4));
            if (trial.focal <= 0) {
                mu *= 10;
                continue;
            }
            const Eigen::VectorXd r_trial = residuals(trial);
            const double cost_trial = r_trial.squaredNorm();
            if (cost_trial < cost) {
                camera = trial;
                r = r_trial;
                const double rel = (cost - cost_trial) / std::max(cost, 1e-300);
                cost = cost_trial;
                mu = std::max(mu / 3, 1e-12);
                accepted = true;
                if (rel < 1e-14) iter = 100;
                break;
            }
            mu *= 10;
        }
        if (!accepted) break;
    }
    if (!std::isfinite(cost) || cost >= 1e20)
        throw NumericalError("solve_head_pnp: refinement diverged");

    if (info) {
        info->rms_px = std::sqrt(cost / (2 * n));
        info->iterations = iterations;
    }
    camera.validate();
    return camera;
}

std::vector<Vec3> backproject_landmarks(const CameraModel& camera,
                                        const std::vector<Vec2>& points_2d,
                                        const std::vector<double>& depths) {
    if (points_2d.size() != depths.size())
        throw ValidationError("backproject: point/depth count mismatch");
    const Eigen::Matrix3d r_inv = camera.rotation.normalized().toRotationMatrix().transpose();
    std::vector<Vec3> out;
    out.reserve(points_2d.size());
    for (std::size_t i = 0; i < points_2d.size(); ++i) {
        if (!(depths[i] > 0)) throw ValidationError("backproject: depths must be positive");
        const Vec3 ray((points_2d[i].x() - camera.principal.x()) / camera.focal,
                       (points_2d[i].y() - camera.principal.y()) / camera.focal, 1.0);
        const Vec3 pc = depths[i] * ray;
        out.push_back(r_inv * (pc - camera.translation));
    }
    return out;
}

} // namespace headfuse
