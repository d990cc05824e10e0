#include "headfuse/block_kernel.hpp"

#include <cassert>
#include <cmath>

#include "headfuse/errors.hpp"

namespace headfuse {

void BarycentricAnchor::validate() const {
    if (coords.minCoeff() < -1e-12)
        throw ValidationError("barycentric coordinates must be nonnegative");
    if (std::abs(coords.sum() - 1.0) > 1e-10)
        throw ValidationError("barycentric coordinates must sum to 1");
}

BlockKernel::BlockKernel(TriMesh reference, std::vector<RegionLabel> labels)
    : reference_(std::make_shared<TriMesh>(std::move(reference))), labels_(std::move(labels)),
      n_(reference_->vertex_count()) {
    if (labels_.empty()) labels_.assign(n_, RegionLabel::Head);
    if (labels_.size() != static_cast<std::size_t>(n_))
        throw ValidationError("region label count does not match reference vertex count");
    grid_ = std::make_shared<VertexGrid>(reference_->vertices());
    blocks_.assign(static_cast<std::size_t>(n_) * (n_ + 1) / 2, Eigen::Matrix3d::Zero());
}

BlockKernel BlockKernel::from_model(const ShapeModel& model) {
    BlockKernel k(model.mean_mesh(), {});
    const ModelCovariance cov(model);
    for (int i = 0; i < k.n_; ++i)
        for (int j = i; j < k.n_; ++j) k.set_block(i, j, cov.block(i, j));
    return k;
}

BlockKernel BlockKernel::from_deformations(const TriMesh& reference,
                                           const std::vector<Eigen::VectorXd>& deformations,
                                           Eigen::VectorXd* mean_out) {
    if (deformations.size() < 2)
        throw ValidationError("sample covariance needs at least 2 deformations");
    const Eigen::Index dim = 3 * reference.vertex_count();
    Eigen::MatrixXd d(dim, deformations.size());
    for (std::size_t j = 0; j < deformations.size(); ++j) {
        if (deformations[j].size() != dim)
            throw ValidationError("deformation length does not match reference");
        d.col(j) = deformations[j];
    }
    const Eigen::VectorXd mean = d.rowwise().mean();
    d.colwise() -= mean;
    if (mean_out) *mean_out = mean;
    d /= std::sqrt(static_cast<double>(deformations.size() - 1));

    BlockKernel k(reference, {});
    for (int i = 0; i < k.n_; ++i)
        for (int j = i; j < k.n_; ++j)
            k.set_block(i, j, d.middleRows(3 * i, 3) * d.middleRows(3 * j, 3).transpose());
    return k;
}

void BlockKernel::set_block(int i, int j, const Eigen::Matrix3d& b) {
    if (i > j) {
        blocks_[index(j, i)] = b.transpose();
        return;
    }
    blocks_[index(i, j)] = b;
}

double BlockKernel::trace() const {
    double t = 0;
    for (int i = 0; i < n_; ++i) t += blocks_[index(i, i)].trace();
    return t;
}

Eigen::MatrixXd BlockKernel::dense() const {
    Eigen::MatrixXd k(3 * n_, 3 * n_);
    for (int i = 0; i < n_; ++i) {
        for (int j = i; j < n_; ++j) {
            const Eigen::Matrix3d& b = blocks_[index(i, j)];
            k.block<3, 3>(3 * i, 3 * j) = b;
            if (i != j) k.block<3, 3>(3 * j, 3 * i) = b.transpose();
        }
    }
    return k;
}

std::vector<BarycentricAnchor> anchor_points(const TriMesh& template_mesh,
                                             const TriMesh& surface) {
    const SurfaceTree tree(surface);
    std::vector<BarycentricAnchor> anchors(template_mesh.vertex_count());
    for (int i = 0; i < template_mesh.vertex_count(); ++i) {
        const auto hit = tree.closest(template_mesh.vertex(i));
        anchors[i].triangle = static_cast<std::uint32_t>(hit.triangle);
        anchors[i].coords = hit.bary;
        anchors[i].validate();
    }
    return anchors;
}

Eigen::Matrix3d blend_local_block(const BarycentricAnchor& anchor_i,
                                  const BarycentricAnchor& anchor_j,
                                  const ModelCovariance& covariance, const TriMesh& surface) {
    const Triangle& ti = surface.triangles()[anchor_i.triangle];
    const Triangle& tj = surface.triangles()[anchor_j.triangle];
    Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
    double wsum = 0;
    for (int v = 0; v < 3; ++v) {
        for (int k = 0; k < 3; ++k) {
            const double w = 0.5 * (anchor_i.coords[v] + anchor_j.coords[k]);
            acc += w * covariance.block(static_cast<int>(ti[v]), static_cast<int>(tj[k]));
            wsum += w;
        }
    }
    assert(std::abs(wsum - 3.0) < 1e-9);
    return acc / wsum;
}

double interpolate_scalar(const BarycentricAnchor& anchor, const Eigen::VectorXd& values,
                          const TriMesh& surface) {
    const Triangle& t = surface.triangles()[anchor.triangle];
    return anchor.coords[0] * values[t[0]] + anchor.coords[1] * values[t[1]] +
           anchor.coords[2] * values[t[2]];
}

} // namespace headfuse
