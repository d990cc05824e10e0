#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "headfuse/closest_point.hpp"
#include "headfuse/shape_model.hpp"
#include "headfuse/tri_mesh.hpp"

namespace headfuse {

enum class RegionLabel : std::uint8_t { Head = 0, Face = 1, LeftEar = 2, RightEar = 3 };

/// Point on a surface as convex weights over one triangle's corners.
struct BarycentricAnchor {
    std::uint32_t triangle = 0;
    Vec3 coords = Vec3::Zero();

    void validate() const;
};

/// Lazy 3x3 block view of a model's covariance U diag(l) U^T; blocks are
/// produced from the sqrt-scaled basis without materializing 3N x 3N.
class ModelCovariance {
public:
    explicit ModelCovariance(const ShapeModel& model)
        : scaled_(model.basis() * model.eigenvalues().cwiseSqrt().asDiagonal()) {}

    Eigen::Matrix3d block(int v, int k) const {
        return scaled_.middleRows(3 * v, 3) * scaled_.middleRows(3 * k, 3).transpose();
    }
    int point_count() const { return static_cast<int>(scaled_.rows() / 3); }
    const Eigen::MatrixXd& scaled_basis() const { return scaled_; }

private:
    Eigen::MatrixXd scaled_;
};

/// Dense symmetric field of per-point-pair 3x3 covariance blocks over a
/// reference mesh; only the upper triangle (i <= j) is stored, the mirror
/// block is served transposed.
class BlockKernel {
public:
    BlockKernel() = default;
    BlockKernel(TriMesh reference, std::vector<RegionLabel> labels);

    /// Sample covariance kernel of a linear model over its own topology.
    static BlockKernel from_model(const ShapeModel& model);
    /// Sample covariance (about the mean) of deformation samples, each a 3N
    /// vector; optionally returns the mean deformation.
    static BlockKernel from_deformations(const TriMesh& reference,
                                         const std::vector<Eigen::VectorXd>& deformations,
                                         Eigen::VectorXd* mean_out = nullptr);

    int point_count() const { return n_; }
    const TriMesh& reference() const { return *reference_; }
    const std::vector<RegionLabel>& labels() const { return labels_; }
    std::vector<RegionLabel>& labels() { return labels_; }

    Eigen::Matrix3d block(int i, int j) const {
        if (i <= j) return blocks_[index(i, j)];
        return blocks_[index(j, i)].transpose();
    }
    void set_block(int i, int j, const Eigen::Matrix3d& b);

    /// Marginal trace sum_i tr K(i,i).
    double trace() const;
    /// Full 3N x 3N assembly (symmetric).
    Eigen::MatrixXd dense() const;

    /// Closest reference vertex to an arbitrary point.
    int nearest_vertex(const Vec3& p) const { return grid_->nearest(p); }

    bool operator==(const BlockKernel& o) const {
        return n_ == o.n_ && blocks_ == o.blocks_;
    }

private:
    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(i) * n_ - static_cast<std::size_t>(i) * (i - 1) / 2 +
               (j - i);
    }

    std::shared_ptr<const TriMesh> reference_;
    std::shared_ptr<const VertexGrid> grid_;
    std::vector<RegionLabel> labels_;
    std::vector<Eigen::Matrix3d> blocks_;
    int n_ = 0;
};

/// Closest-point barycentric anchor of every template point on a surface.
std::vector<BarycentricAnchor> anchor_points(const TriMesh& template_mesh,
                                             const TriMesh& surface);

/// Barycentric blend of the nine corner-pair covariance blocks between the
/// two anchored triangles; the weight denominator is exactly 3 for valid
/// barycentrics.
Eigen::Matrix3d blend_local_block(const BarycentricAnchor& anchor_i,
                                  const BarycentricAnchor& anchor_j,
                                  const ModelCovariance& covariance, const TriMesh& surface);

/// Barycentric interpolation of a per-vertex scalar at an anchor.
double interpolate_scalar(const BarycentricAnchor& anchor, const Eigen::VectorXd& values,
                          const TriMesh& surface);

} // namespace headfuse
