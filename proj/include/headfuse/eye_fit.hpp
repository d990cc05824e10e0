#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "headfuse/camera.hpp"
#include "headfuse/raster.hpp"
#include "headfuse/shape_model.hpp"

namespace headfuse {

// Landmark layout of the eye fit (17 eyelid + 16 iris/pupil = 33).
inline constexpr int eyelid_landmark_count = 17;
inline constexpr int iris_landmark_count = 16;

/// Eye region shape model plus the vertices the 17 eyelid landmarks track.
struct EyeRegionModel {
    ShapeModel shape;
    std::vector<std::uint32_t> eyelid_vertices;

    void validate() const;
};

/// Eyeball: mean mesh, one pupil-dilation blendshape, a static lens shell,
/// a per-vertex texture model and the gaze pivot.
struct EyeBallModel {
    TriMesh mean;
    Eigen::VectorXd pupil_blendshape; ///< 3N
    double pupil_variance = 1.0;
    TriMesh lens;
    std::vector<std::uint32_t> iris_vertices; ///< 16, tracked by l_eye
    Eigen::VectorXd texture_mean;             ///< 3N rgb
    Eigen::MatrixXd texture_basis;            ///< 3N x M
    Eigen::VectorXd texture_eigenvalues;      ///< M
    std::vector<std::uint32_t> texture_vertices; ///< support of the texture term
    Vec3 rotation_center = Vec3::Zero();

    int texture_components() const { return static_cast<int>(texture_eigenvalues.size()); }
    void validate() const;

    /// Eyeball vertices at a pupil parameter.
    VertexMatrix shape_at(double pupil) const;
};

/// Term weights of the landmark + texture + Tikhonov cost. Infinite
/// regularizer weights freeze the corresponding parameter block at its
/// prior (the gaze rotation belongs to the eyeball block).
struct FitWeights {
    double iris = 1.0;        ///< c_l
    double texture = 0.1;     ///< c_t
    double region_reg = 1e-2; ///< c_el
    double pupil_reg = 1e-2;  ///< c_eye,l
    double texture_reg = 1e-2; ///< c_eye,t

    void validate() const;
};

struct EyeFitOptions {
    int max_iterations = 50;
    double tolerance = 1e-6; ///< relative cost decrease
};

struct EyeFitResult {
    Eigen::VectorXd region_params;  ///< p_el
    double pupil = 0;               ///< p_eye
    Eigen::Quaterniond gaze = Eigen::Quaterniond::Identity(); ///< c_r
    Eigen::VectorXd texture_params; ///< lambda
    double cost = 0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> cost_log;
    double eyelid_rms_px = 0;
    double iris_rms_px = 0;
};

/// Gauss-Newton (simultaneous, damped) fit of the eye models to the 33
/// landmarks with the head camera held fixed; the texture term runs only
/// when an image is supplied.
EyeFitResult fit_eye(const EyeRegionModel& region, const EyeBallModel& eyeball,
                     const CameraModel& camera, const std::vector<Vec2>& eyelid_landmarks,
                     const std::vector<Vec2>& iris_landmarks, const Raster* image,
                     const FitWeights& weights = {}, const EyeFitOptions& options = {});

/// Clamped linear texture synthesis mean + basis * lambda.
std::vector<Vec3> synth_eye_texture(const EyeBallModel& model, const Eigen::VectorXd& lambda);
/// Least-squares texture coefficients of per-vertex colors.
Eigen::VectorXd project_eye_texture(const EyeBallModel& model, const std::vector<Vec3>& colors);

/// Eyeball container I/O ("HFEB" binary + JSON sidecar).
void write_eyeball(const EyeBallModel& model, const std::filesystem::path& path);
EyeBallModel read_eyeball(const std::filesystem::path& path);

/// Eye-region container I/O: a model container whose sidecar carries the
/// eyelid vertex list as lid00..lid16 landmark indices.
void write_eye_region(const EyeRegionModel& model, const std::filesystem::path& path);
EyeRegionModel read_eye_region(const std::filesystem::path& path);

/// Camera JSON I/O.
void write_camera(const CameraModel& camera, const std::filesystem::path& path);
CameraModel read_camera(const std::filesystem::path& path);

} // namespace headfuse
