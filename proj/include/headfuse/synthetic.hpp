#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "headfuse/shape_model.hpp"
#include "headfuse/tri_mesh.hpp"

namespace headfuse::synth {

/// Subdivided icosahedron scaled by per-axis radii. subdivisions 0..4 give
/// 12 / 42 / 162 / 642 / 2562 vertices.
TriMesh make_icosphere(int subdivisions, const Vec3& radii = Vec3::Ones());

/// Rectangular grid patch (rows x cols vertices) in the xy-plane, optionally
/// domed along +z. Has an open boundary.
TriMesh make_grid_patch(int rows, int cols, double width, double height, double dome = 0);

/// Triangulated disk: rings x segments plus a center vertex. Boundary is the
/// outer ring; returns the mesh, the center vertex id and the boundary loop
/// in cyclic order.
struct DiskMesh {
    TriMesh mesh;
    int center_vertex = 0;
    std::vector<std::uint32_t> boundary_loop;
};
DiskMesh make_disk(int rings, int segments, double radius_x, double radius_y, double dome = 0);

enum class FamilyKind { CoupledEllipsoids, BumpySpheres, ToyEar, ToyEyeRegion };

FamilyKind family_kind_from_string(const std::string& s);
std::string to_string(FamilyKind kind);

/// Deterministic synthetic model family. Part geometry is a known linear
/// function of the whole-shape latents, which gives every fusion experiment
/// a ground truth.
struct SyntheticFamilySpec {
    FamilyKind kind = FamilyKind::CoupledEllipsoids;
    int subdivisions = 2;     ///< icosphere resolution for sphere-based kinds
    int latent_dim = 8;
    int sample_count = 100;
    double noise = 0.0;       ///< iid per-coordinate noise sigma (mm)
    std::uint64_t seed = 1;
    /// Optional explicit latent coupling (part latents = coupling * whole
    /// latents); requires part topology == whole topology. Empty selects the
    /// built-in crop-derived coupling.
    Eigen::MatrixXd coupling;

    void validate() const;
};

struct SyntheticFamily {
    ShapeModel whole_model;            ///< population-exact generating model
    std::vector<TriMesh> whole_meshes;
    std::vector<Eigen::VectorXd> whole_latents;

    std::optional<ShapeModel> part_model;
    std::vector<TriMesh> part_meshes;
    std::vector<std::uint32_t> part_vertex_map; ///< part vertex -> whole vertex
    Eigen::MatrixXd coupling;                   ///< part latents = coupling * whole latents

    LandmarkSet template_landmarks; ///< names -> whole-template vertex ids (+ positions)

    // Ear-flattening fixtures (ToyEar kind).
    int canal_vertex = -1;
    std::vector<std::uint32_t> base_loop;

    // Eye fixtures (ToyEyeRegion kind): see eye_fit.hpp for the consumers.
    std::vector<std::uint32_t> eyelid_landmark_vertices;
    std::vector<std::uint32_t> iris_landmark_vertices;
    Eigen::VectorXd pupil_blendshape;
    Eigen::VectorXd texture_mean;
    Eigen::MatrixXd texture_basis;
    Eigen::VectorXd texture_eigenvalues;
    std::optional<TriMesh> eyeball_mesh;
};

SyntheticFamily synth_family(const SyntheticFamilySpec& spec);

/// Smooth orthonormal deformation basis over a mesh (low-frequency trig
/// fields, QR-orthonormalized). Shared by the family builders and tests.
Eigen::MatrixXd smooth_deformation_basis(const TriMesh& mesh, int count, std::uint64_t seed);

/// Dual mesh of a closed manifold: one vertex per source triangle, placed at
/// its centroid, fan-triangulated around each source vertex. Every dual
/// vertex anchors exactly at a source-triangle centroid, which keeps
/// barycentric covariance blends positive semidefinite.
TriMesh dual_centroid_mesh(const TriMesh& mesh);

} // namespace headfuse::synth
