#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include <Eigen/Core>

#include "headfuse/shape_model.hpp"

namespace headfuse {

/// Paired latent codes of a whole-shape model and an overlapping part model,
/// stacked column-wise.
struct LatentPairSet {
    Eigen::MatrixXd whole; ///< n_whole x n_samples
    Eigen::MatrixXd part;  ///< n_part x n_samples

    int count() const { return static_cast<int>(whole.cols()); }
    void validate() const;
    /// True when the sample count supports a well-posed least squares solve.
    bool well_posed() const {
        return count() >= std::max(whole.rows(), part.rows());
    }
};

/// Linear map from part-model latents to whole-model latents.
struct LatentRegressor {
    Eigen::MatrixXd map; ///< n_whole x n_part
    std::string source_model;
    std::string target_model;
};

/// Maps a whole-topology mesh to a part-topology mesh (a registration crop,
/// or an index crop for synthetic data).
using PartExtractor = std::function<TriMesh(const TriMesh&)>;

/// Extractor that picks the listed whole-mesh vertices onto a part topology.
PartExtractor make_index_crop_extractor(std::vector<std::uint32_t> indices,
                                        std::vector<Triangle> part_topology);

struct PairGenReport {
    int requested = 0;
    int generated = 0;
    int skipped = 0;
};

/// Draws `count` random whole-model instances, extracts the part of each and
/// projects both sides to their latent spaces. Extraction failures are
/// skipped and reported; more than 10% of them is an error.
LatentPairSet generate_pairs(const ShapeModel& whole, const ShapeModel& part,
                             const PartExtractor& extractor, int count, std::uint64_t seed,
                             PairGenReport* report = nullptr);

struct RegressionOptions {
    /// Condition number of part-gram above which a small ridge is added.
    double ridge_condition = 1e12;
    bool allow_ridge = true;
};

/// Least squares fit of whole = map * part via the normal equations
/// (right pseudo-inverse of the part matrix).
LatentRegressor fit_regressor(const LatentPairSet& pairs, const RegressionOptions& options = {});

/// Full-shape prediction from a part mesh:
/// whole_mean + U_whole * map * U_part^T (part - part_mean).
TriMesh predict_whole(const LatentRegressor& regressor, const ShapeModel& whole,
                      const ShapeModel& part, const TriMesh& part_mesh);

/// Regressor from projected (part mesh, whole mesh) training pairs; the
/// part-to-whole route used for reconstruction from partial observations.
LatentRegressor fit_part_to_whole(const ShapeModel& part, const ShapeModel& whole,
                                  const std::vector<std::pair<TriMesh, TriMesh>>& paired_meshes,
                                  const RegressionOptions& options = {});

} // namespace headfuse
