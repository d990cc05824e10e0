#pragma once

#include <cstdint>
#include <vector>

#include "headfuse/block_kernel.hpp"
#include "headfuse/shape_model.hpp"

namespace headfuse {

/// Paper defaults of the high-resolution ear pipeline (full-scale data; the
/// synthetic families use smaller meshes).
inline constexpr int ear_template_vertex_count = 2800;
inline constexpr int ear_registration_landmark_count = 50;

/// Reflects a model in the sagittal plane (axis = 0 by the canonical-frame
/// convention): mean and basis columns negate that coordinate, triangle
/// winding flips, eigenvalues are untouched. An involution.
ShapeModel mirror_model(const ShapeModel& model, int axis = 0);

/// Flattened ear: planar disk embedding with the canal at the origin and the
/// base loop on the unit circle; radii normalized so the base maps to 1.
struct EarUnwrap {
    Eigen::Matrix<double, Eigen::Dynamic, 2> uv;
    int canal_vertex = 0;
    Eigen::VectorXd radius; ///< per vertex, in [0, 1]
};

/// Boundary-fixed harmonic (uniform-weight) disk embedding of an ear mesh.
/// base_loop must be the full boundary loop in cyclic order; the mesh must
/// be a topological disk.
EarUnwrap unwrap_ear(const TriMesh& ear_mean, int canal_vertex,
                     const std::vector<std::uint32_t>& base_loop);

/// Two-dimensional orientation test used by the embedding checks: count of
/// flipped (negative-area) triangles.
int flipped_triangle_count(const EarUnwrap& unwrap, const TriMesh& mesh);

/// Registration of the template's ear-region points onto the registered ear
/// mean: one anchor per region point, region points listed explicitly.
struct EarRegistration {
    std::vector<int> region_points;          ///< template point ids (one side)
    std::vector<BarycentricAnchor> anchors;  ///< onto the ear mean, same order

    void validate(int template_points, const TriMesh& ear_mean) const;
};

/// Blends ear-model covariance into the kernel over one ear region:
/// K(i,j) <- rho_ij * K_existing + (1 - rho_ij) * K_ear-blend for region
/// pairs, rho from the flattened radii (0 at the canal, 1 at the base).
/// Pairs not fully inside the region are untouched, so fusing left and right
/// ears is independent.
BlockKernel fuse_ear_kernel(BlockKernel kernel, const ShapeModel& ear, RegionLabel side,
                            const EarUnwrap& unwrap, const EarRegistration& registration);

} // namespace headfuse
