#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "headfuse/block_kernel.hpp"
#include "headfuse/shape_model.hpp"

namespace headfuse {

/// Face/head blend field over the reference template: 0 at the nose-tip
/// anchor, 1 at (and beyond) the farthest face-region point.
struct BlendWeights {
    Eigen::VectorXd rho; ///< per template point, in [0, 1]
    int nose_tip_index = 0;
    double min_distance = 0;
    double max_distance = 0;
};

BlendWeights face_head_blend_weights(const TriMesh& template_mesh,
                                     const std::vector<char>& face_mask, int nose_tip_index);

/// Template-to-source-surfaces registration needed to assemble the fused
/// kernel: anchors on the head mean everywhere, anchors on the face mean for
/// covered points.
struct KernelRegistration {
    std::vector<BarycentricAnchor> head_anchors; ///< one per template point
    std::vector<BarycentricAnchor> face_anchors; ///< valid where face_mask
    std::vector<char> face_mask;                 ///< coverage of the face mean

    void validate(int point_count) const;
};

/// Coverage-based registration: a template point is in the face region iff
/// its distance to the face mean surface is below tol.
KernelRegistration register_template(const TriMesh& template_mesh, const TriMesh& head_mean,
                                     const TriMesh& face_mean, double coverage_tol);

/// Blended covariance kernel over the template. Face-face point pairs mix
/// the head and face covariances with the rho field, every other pair uses
/// the head covariance alone (the only source carrying cross-region
/// correlation).
BlockKernel build_fused_kernel(const ShapeModel& head, const ShapeModel& face,
                               const TriMesh& template_mesh,
                               const KernelRegistration& registration,
                               const BlendWeights& weights);

struct EigenmodelInfo {
    int requested = 0;
    int kept = 0;
    double negative_mass = 0; ///< |sum of clipped negative eigenvalues|
};

/// Linear model from the kernel's top eigenpairs; mean = template vertices.
/// Small negative eigenvalues (mass below 1e-6 * trace) are clipped, larger
/// violations are an error.
ShapeModel kernel_eigenmodel(const BlockKernel& kernel, int keep, EigenmodelInfo* info = nullptr);

/// Same eigenmodel computed in factor space, never materializing the dense
/// kernel; intended for templates too large for block storage.
ShapeModel fused_eigenmodel_lowrank(const ShapeModel& head, const ShapeModel& face,
                                    const TriMesh& template_mesh,
                                    const KernelRegistration& registration,
                                    const BlendWeights& weights, int keep);

/// Minimum eigenvalue of the assembled kernel (PSD check helper).
double kernel_min_eigenvalue(const BlockKernel& kernel);

/// template + sum_i sqrt(l_i) a_i phi_i with a ~ N(0,1); deterministic
/// under the seed.
TriMesh sample_gpmm(const ShapeModel& eigenmodel, std::uint64_t seed);
TriMesh sample_gpmm(const BlockKernel& kernel, int keep, std::uint64_t seed);

} // namespace headfuse
