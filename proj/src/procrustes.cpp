#include "headfuse/procrustes.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include "headfuse/errors.hpp"

namespace headfuse {

VertexMatrix SimilarityTransform::apply(const VertexMatrix& x) const {
    VertexMatrix y = scale * (x * rotation.transpose());
    y.rowwise() += translation.transpose();
    return y;
}

SimilarityTransform procrustes(const VertexMatrix& source, const VertexMatrix& target,
                               bool with_scale) {
    if (source.rows() != target.rows() || source.rows() < 3)
        throw ValidationError("procrustes needs >= 3 paired points of equal count");

    const Eigen::RowVector3d cs = source.colwise().mean();
    const Eigen::RowVector3d ct = target.colwise().mean();
    const VertexMatrix xs = source.rowwise() - cs;
    const VertexMatrix xt = target.rowwise() - ct;

    const Eigen::Matrix3d h = xs.transpose() * xt;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d d = Eigen::Vector3d::Ones();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) d[2] = -1;

    SimilarityTransform t;
    t.rotation = svd.matrixV() * d.asDiagonal() * svd.matrixU().transpose();
    if (with_scale) {
        const double denom = xs.squaredNorm();
        if (denom <= 0) throw NumericalError("procrustes source has zero spread");
        t.scale = svd.singularValues().dot(d) / denom;
    }
    t.translation = ct.transpose() - t.scale * (t.rotation * cs.transpose());
    return t;
}

GpaResult gpa_align(const std::vector<TriMesh>& meshes, const GpaOptions& options) {
    if (meshes.size() < 2) throw ValidationError("gpa_align needs at least 2 meshes");
    for (std::size_t i = 1; i < meshes.size(); ++i)
        if (!meshes[i].same_topology(meshes[0]))
            throw ValidationError("gpa_align: topology mismatch at mesh " + std::to_string(i));

    const int n = meshes[0].vertex_count();
    const auto m = static_cast<double>(meshes.size());

    // State: centered copies. The total configuration norm is pinned to the
    // inputs' (Gower), which keeps millimetre scale and makes re-running the
    // alignment on its own output a fixed point.
    std::vector<VertexMatrix> aligned;
    aligned.reserve(meshes.size());
    double target_norm2 = 0;
    for (const auto& mesh : meshes) {
        VertexMatrix v = mesh.vertices();
        v.rowwise() -= v.colwise().mean().eval();
        target_norm2 += v.squaredNorm();
        aligned.push_back(std::move(v));
    }
    if (target_norm2 <= 0) throw NumericalError("gpa_align: degenerate zero-size meshes");
    const double coord_scale = std::sqrt(target_norm2 / (m * n));

    auto consensus = [&]() {
        VertexMatrix c = VertexMatrix::Zero(n, 3);
        for (const auto& a : aligned) c += a;
        c /= m;
        return c;
    };

    VertexMatrix mean = consensus();
    if (std::sqrt(mean.squaredNorm() / n) < 1e-12 * coord_scale) mean = aligned[0];

    int iter = 0;
    for (; iter < options.max_iterations; ++iter) {
        double move2 = 0;
        double norm2 = 0;
        for (auto& a : aligned) {
            const auto t = procrustes(a, mean, options.with_scale);
            VertexMatrix next = t.apply(a);
            move2 += (next - a).squaredNorm();
            a = std::move(next);
            norm2 += a.squaredNorm();
        }
        if (options.with_scale && norm2 > 0) {
            const double beta = std::sqrt(target_norm2 / norm2);
            for (auto& a : aligned) a *= beta;
        }
        mean = consensus();
        if (std::sqrt(move2 / (m * n)) < options.tolerance * coord_scale) {
            ++iter;
            break;
        }
    }

    GpaResult result;
    result.iterations = iter;
    for (std::size_t i = 0; i < meshes.size(); ++i)
        result.aligned.push_back(meshes[i].with_vertices(std::move(aligned[i])));
    result.mean = meshes[0].with_vertices(std::move(mean));
    return result;
}

} // namespace headfuse
