#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "headfuse/tri_mesh.hpp"

namespace headfuse {

/// Radial per-vertex stiffness field: weight_at_anchor at the anchor point,
/// decaying monotonically with distance. Inner-region vertices (near the
/// anchor) resist deformation more than outer ones.
struct StiffnessProfile {
    enum class Decay { Linear, Gaussian };

    Vec3 anchor = Vec3::Zero();
    double weight_at_anchor = 1.0;
    Decay decay = Decay::Gaussian;
    /// Millimetres; <= 0 selects 0.5 x template bounding-sphere radius.
    double length_scale = 0.0;
    double landmark_weight = 1.0;

    /// Weight at x in (0, weight_at_anchor]; auto_scale substitutes the
    /// length scale when none is set.
    double weight(const Vec3& x, double auto_scale) const;

    void validate() const;
};

struct NicpOptions {
    int stiffness_steps = 8;       ///< geometric ladder, high to low
    double stiffness_high = 50.0;
    double stiffness_low = 0.5;
    int max_inner_iterations = 10; ///< correspondence/solve rounds per step
    double inner_tolerance = 1e-4; ///< RMS vertex movement (mm) stop rule
    double reject_multiple = 4.0;  ///< of the median correspondence distance
    bool prealign = true;          ///< rigid pre-alignment before deformation
};

struct NicpResult {
    TriMesh deformed;
    bool converged = false;
    double final_residual = 0;            ///< mean accepted correspondence distance
    std::vector<double> step_residuals;   ///< one per stiffness step
    std::vector<std::vector<double>> energy; ///< per step, per inner iteration
};

/// Weighted optimal-step non-rigid ICP: deforms the template onto the target
/// under a per-vertex affine model with graph-stiffness regularization,
/// lowering stiffness over a geometric ladder. Landmarks, when given, pin
/// named template vertices to target positions with the profile's landmark
/// weight.
NicpResult nicp_register(const TriMesh& template_mesh, const TriMesh& target,
                         const StiffnessProfile& profile,
                         const std::optional<std::pair<LandmarkSet, LandmarkSet>>& landmarks = {},
                         const NicpOptions& options = {});

struct MergeConfig {
    /// (inner vertex, outer vertex) correspondence covering the region of the
    /// outer mesh that the inner geometry replaces.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> correspondence;
    /// Blend band width (mm) measured from the region seam; < 0 selects
    /// 20 x the median edge length of the region, 0 is a hard stitch.
    double band_width = -1.0;
};

/// Replaces the mapped region of the outer mesh with inner-mesh geometry,
/// ramping from outer positions at the seam to inner positions deep in the
/// region so the result is C0 across the seam. The profile's decay kind
/// selects the ramp shape.
TriMesh merge_meshes(const TriMesh& inner, const TriMesh& outer,
                     const StiffnessProfile& profile, const MergeConfig& config);

/// Largest edge-vector distortion introduced by remeshing: max over edges of
/// |(a' - b') - (a - b)|. Zero when nothing moved; the seam-gap measure used
/// by the merge tests.
double max_edge_distortion(const TriMesh& before, const TriMesh& after);

} // namespace headfuse
