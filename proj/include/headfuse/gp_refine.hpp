#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "headfuse/gaussian_process.hpp"
#include "headfuse/nicp.hpp"
#include "headfuse/shape_model.hpp"

namespace headfuse {

struct IcpRefineOptions {
    int max_iterations = 10;
    double reject_multiple = 3.0; ///< of the current median correspondence distance
    int observation_cap = 1500;   ///< farthest-point subsample of dense observations
    double sigma2 = 0.25;         ///< dense pseudo-observation noise (mm^2)
    double tolerance = 1e-6;      ///< relative mean-distance change stop rule
};

struct IcpRefineResult {
    TriMesh registered; ///< template wrapped with the final posterior mean
    std::shared_ptr<PosteriorProcess> posterior;
    bool converged = false;
    std::vector<double> energy;          ///< mean accepted distance per iteration
    std::vector<int> accepted_counts;
    std::vector<int> rejected_boundary;  ///< per iteration
};

/// Closest-point refinement of a landmark posterior: each iteration wraps
/// the template with the current posterior mean, finds closest scan points,
/// drops boundary hits and outliers, and re-conditions the initial posterior
/// on the surviving dense deformations.
IcpRefineResult icp_refine(std::shared_ptr<const PosteriorProcess> initial, const TriMesh& scan,
                           const IcpRefineOptions& options = {});

/// Spectral truncation: K' = sum_{i<=keep} l_i phi_i phi_i^T.
BlockKernel truncate_kernel(const BlockKernel& kernel, int keep);

struct RefineConfig {
    LandmarkSet template_landmarks; ///< names + correspondence indices
    int iterations = 2;             ///< covariance refresh passes
    double landmark_sigma2 = 1.0;
    IcpRefineOptions icp;
    double truncate_fraction = 0.98; ///< variance kept before GP regression
    KeepSpec pca_keep = KeepSpec::variance(0.997);
    /// Face-region vertex mask for the final per-scan NICP alignment; empty
    /// disables the NICP step.
    std::vector<char> nicp_region;
    StiffnessProfile nicp_profile;
    NicpOptions nicp_options;
};

struct RefineReport {
    std::vector<double> per_scan_rms; ///< final pass, vs. the scan surface
    int failed_scans = 0;
};

/// Full model-refresh loop: reconstruct every scan (landmark posterior +
/// closest-point refinement + optional face-region NICP), rebuild the sample
/// covariance, optionally iterate, then PCA over the reconstructions.
ShapeModel refine_model(const BlockKernel& kernel,
                        const std::vector<std::pair<TriMesh, LandmarkSet>>& scans,
                        const RefineConfig& config, RefineReport* report = nullptr);

} // namespace headfuse
