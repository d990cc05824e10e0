#pragma once

#include <vector>

#include "headfuse/tri_mesh.hpp"

namespace headfuse {

/// Similarity transform y = scale * R * x + t.
struct SimilarityTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Vec3 translation = Vec3::Zero();
    double scale = 1.0;

    Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
    VertexMatrix apply(const VertexMatrix& x) const;
};

/// Least-squares similarity (or rigid, with_scale=false) alignment of source
/// onto target point sets of equal size.
SimilarityTransform procrustes(const VertexMatrix& source, const VertexMatrix& target,
                               bool with_scale = true);

struct GpaOptions {
    bool with_scale = true;   ///< remove uniform scale as well as pose
    double tolerance = 1e-10; ///< mean movement (RMS, relative to size) stop criterion
    int max_iterations = 100;
};

struct GpaResult {
    std::vector<TriMesh> aligned;
    TriMesh mean;
    int iterations = 0;
};

/// Generalized Procrustes alignment of a mesh collection sharing one
/// topology. The returned mean is the coordinate-wise average of the aligned
/// set, centered at the origin; when scale is removed the mean keeps the
/// average centroid size of the inputs so millimetre units survive.
GpaResult gpa_align(const std::vector<TriMesh>& meshes, const GpaOptions& options = {});

} // namespace headfuse
