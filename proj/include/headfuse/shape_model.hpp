#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "headfuse/tri_mesh.hpp"

namespace headfuse {

/// Sidecar metadata carried by a model container.
struct ModelMetadata {
    std::string name;
    std::string scale_convention = "millimetres";
    /// Stored eigenvalues are variances along components, not standard
    /// deviations.
    std::string eigenvalue_convention = "variance";
    /// Sagittal mirror axis of the canonical frame (x by convention).
    int mirror_axis = 0;
    std::map<std::string, std::uint32_t> landmark_indices;
};

/// Linear statistical shape model: mean + column-orthonormal basis +
/// per-component variances over a fixed triangulation.
class ShapeModel {
public:
    ShapeModel() = default;
    ShapeModel(Eigen::VectorXd mean, Eigen::MatrixXd basis, Eigen::VectorXd eigenvalues,
               std::vector<Triangle> topology, ModelMetadata metadata = {});

    int vertex_count() const { return static_cast<int>(mean_.size() / 3); }
    int component_count() const { return static_cast<int>(eigenvalues_.size()); }

    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& basis() const { return basis_; }
    const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
    const std::vector<Triangle>& topology() const { return topology_; }
    const ModelMetadata& metadata() const { return metadata_; }
    ModelMetadata& metadata() { return metadata_; }

    TriMesh mean_mesh() const { return TriMesh::from_flat(mean_, topology_); }

    /// Sum of stored variances.
    double total_variance() const { return eigenvalues_.sum(); }

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd basis_;
    Eigen::VectorXd eigenvalues_;
    std::vector<Triangle> topology_;
    ModelMetadata metadata_;
};

/// Component-retention rule for PCA construction: an explicit count or a
/// variance fraction in (0, 1].
struct KeepSpec {
    std::variant<int, double> value = 0.997;

    static KeepSpec count(int n) { return {n}; }
    static KeepSpec variance(double f) { return {f}; }
    int resolve(const Eigen::VectorXd& variances) const;
};

struct PcaInfo {
    int requested = -1;   ///< -1 when a variance fraction was used
    int kept = 0;
    int achievable_rank = 0;
    double total_variance = 0;
    bool truncated = false; ///< requested count exceeded the achievable rank
};

/// PCA over an aligned mesh collection via thin SVD of the centered data
/// matrix. Eigenvalues are unbiased sample variances (n-1 denominator).
ShapeModel build_pca(const std::vector<TriMesh>& aligned, KeepSpec keep = {},
                     PcaInfo* info = nullptr, ModelMetadata metadata = {});

/// mean + basis * p, reshaped onto the model topology.
TriMesh sample_instance(const ShapeModel& model, const Eigen::VectorXd& p);

/// basis^T (s - mean); the least-squares latent code of a mesh.
Eigen::VectorXd project_instance(const ShapeModel& model, const TriMesh& mesh);

/// Reconstruction restricted to the first k components.
TriMesh reconstruct_with(const ShapeModel& model, const TriMesh& mesh, int k);

/// count independent draws with coordinate i ~ N(0, eigenvalue_i).
/// Deterministic under a fixed seed.
std::vector<Eigen::VectorXd> draw_random_latents(const ShapeModel& model, int count,
                                                 std::uint64_t seed);

} // namespace headfuse
