#pragma once

#include <memory>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "headfuse/block_kernel.hpp"
#include "headfuse/tri_mesh.hpp"

namespace headfuse {

/// Deformations observed at template locations, with isotropic Gaussian
/// noise. Deformations are totals from the template (observed point =
/// template point + deformation).
struct DeformationObservations {
    std::vector<int> vertices;     ///< resolved template vertex ids
    Eigen::VectorXd deformations;  ///< stacked 3m vector
    double sigma2 = 1.0;           ///< noise variance (mm^2)

    static DeformationObservations at_vertices(std::vector<int> ids,
                                               const std::vector<Vec3>& deformations,
                                               double sigma2);
    /// Spatial observation points resolved to the nearest template vertex.
    static DeformationObservations at_points(const BlockKernel& kernel,
                                             const std::vector<Vec3>& points,
                                             const std::vector<Vec3>& deformations,
                                             double sigma2);
    void validate(int point_count) const;
};

/// Vector-valued Gaussian process over the kernel's reference template,
/// evaluated at template vertices (arbitrary points resolve through the
/// closest vertex, matching the kernel's nearest-index rule).
class GaussianProcess {
public:
    virtual ~GaussianProcess() = default;

    virtual const BlockKernel& kernel() const = 0;
    const TriMesh& reference() const { return kernel().reference(); }
    int point_count() const { return kernel().point_count(); }

    /// Mean deformation at a template vertex.
    virtual Vec3 mean(int vertex) const = 0;
    /// Covariance block between two template vertices.
    virtual Eigen::Matrix3d cov(int vi, int vj) const = 0;

    /// Stacked mean over a vertex list (3|A| vector).
    virtual Eigen::VectorXd mean_vector(const std::vector<int>& vertices) const;
    /// Cross-covariance over two vertex lists (3|A| x 3|B|).
    virtual Eigen::MatrixXd cov_matrix(const std::vector<int>& rows,
                                       const std::vector<int>& cols) const;

    Vec3 mean_at(const Vec3& x) const { return mean(kernel().nearest_vertex(x)); }
    Eigen::Matrix3d cov_at(const Vec3& x, const Vec3& y) const {
        return cov(kernel().nearest_vertex(x), kernel().nearest_vertex(y));
    }
};

/// Prior GP: kernel blocks, optionally a nonzero mean deformation field.
class PriorProcess final : public GaussianProcess {
public:
    explicit PriorProcess(std::shared_ptr<const BlockKernel> kernel,
                          Eigen::VectorXd mean_field = {});

    const BlockKernel& kernel() const override { return *kernel_; }
    Vec3 mean(int vertex) const override;
    Eigen::Matrix3d cov(int vi, int vj) const override {
        return kernel_->block(vi, vj);
    }

private:
    std::shared_ptr<const BlockKernel> kernel_;
    Eigen::VectorXd mean_field_; ///< empty = zero mean
};

/// GP conditioned on observed deformations; itself a GP, so posteriors can
/// be conditioned again (the dense-ICP refresh loop relies on that).
class PosteriorProcess final : public GaussianProcess {
public:
    PosteriorProcess(std::shared_ptr<const GaussianProcess> base,
                     DeformationObservations observations);

    const BlockKernel& kernel() const override { return base_->kernel(); }
    Vec3 mean(int vertex) const override;
    Eigen::Matrix3d cov(int vi, int vj) const override;
    Eigen::VectorXd mean_vector(const std::vector<int>& vertices) const override;
    Eigen::MatrixXd cov_matrix(const std::vector<int>& rows,
                               const std::vector<int>& cols) const override;

    const DeformationObservations& observations() const { return obs_; }

private:
    std::shared_ptr<const GaussianProcess> base_;
    DeformationObservations obs_;
    Eigen::LDLT<Eigen::MatrixXd> factor_; ///< K_XX + sigma^2 I
    Eigen::VectorXd alpha_;               ///< factor^-1 (X - base mean at obs)
};

/// Kernel function at arbitrary spatial points: the block at the closest
/// template vertices.
Eigen::Matrix3d kernel_function(const BlockKernel& kernel, const Vec3& x, const Vec3& y);

/// posterior(base, observations).
std::shared_ptr<PosteriorProcess> posterior(std::shared_ptr<const GaussianProcess> base,
                                            DeformationObservations observations);

/// Posterior conditioned on landmark displacements scan - template, matched
/// by name; template landmarks resolve via correspondence indices when
/// present, else by nearest template vertex.
std::shared_ptr<PosteriorProcess> landmark_posterior(std::shared_ptr<const BlockKernel> kernel,
                                                     const LandmarkSet& template_landmarks,
                                                     const LandmarkSet& scan_landmarks,
                                                     double sigma2);

} // namespace headfuse
