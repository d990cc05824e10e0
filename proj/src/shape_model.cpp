#include "headfuse/shape_model.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "headfuse/errors.hpp"
#include "headfuse/rng.hpp"

namespace headfuse {

namespace {

std::uint32_t max_index(const std::vector<Triangle>& tris) {
    std::uint32_t m = 0;
    for (const auto& t : tris) m = std::max({m, t[0], t[1], t[2]});
    return m;
}

} // namespace

ShapeModel::ShapeModel(Eigen::VectorXd mean, Eigen::MatrixXd basis,
                       Eigen::VectorXd eigenvalues, std::vector<Triangle> topology,
                       ModelMetadata metadata)
    : mean_(std::move(mean)), basis_(std::move(basis)),
      eigenvalues_(std::move(eigenvalues)), topology_(std::move(topology)),
      metadata_(std::move(metadata)) {
    if (mean_.size() % 3 != 0)
        throw ValidationError("model mean length must be a multiple of 3");
    if (basis_.rows() != mean_.size())
        throw ValidationError("basis row count does not match mean length");
    if (basis_.cols() != eigenvalues_.size())
        throw ValidationError("basis column count does not match eigenvalue count");
    if (!topology_.empty() && max_index(topology_) >= static_cast<std::uint32_t>(vertex_count()))
        throw ValidationError("topology index exceeds model vertex count");
    for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) {
        if (!(eigenvalues_[i] > 0))
            throw ValidationError("eigenvalues must be positive");
        if (i > 0 && eigenvalues_[i] > eigenvalues_[i - 1] + 1e-12)
            throw ValidationError("eigenvalues must be nonincreasing");
    }
    if (basis_.cols() > 0) {
        const Eigen::MatrixXd gram = basis_.transpose() * basis_;
        const double err = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols()))
                               .cwiseAbs()
                               .maxCoeff();
        if (err > 1e-8) throw ValidationError("basis is not orthonormal (max deviation " +
                                              std::to_string(err) + ")");
    }
}

int KeepSpec::resolve(const Eigen::VectorXd& variances) const {
    if (std::holds_alternative<int>(value)) {
        const int k = std::get<int>(value);
        if (k <= 0) throw ValidationError("component count must be positive");
        return k;
    }
    const double f = std::get<double>(value);
    if (!(f > 0.0) || f > 1.0)
        throw ValidationError("variance fraction must be in (0, 1]");
    const double total = variances.sum();
    if (total <= 0) return 0;
    double acc = 0;
    for (Eigen::Index i = 0; i < variances.size(); ++i) {
        acc += variances[i];
        if (acc >= f * total - 1e-15 * total) return static_cast<int>(i) + 1;
    }
    return static_cast<int>(variances.size());
}

ShapeModel build_pca(const std::vector<TriMesh>& aligned, KeepSpec keep, PcaInfo* info,
                     ModelMetadata metadata) {
    if (aligned.size() < 2) throw ValidationError("build_pca needs at least 2 meshes");
    for (std::size_t i = 1; i < aligned.size(); ++i)
        if (!aligned[i].same_topology(aligned[0]))
            throw ValidationError("build_pca: topology mismatch at mesh " + std::to_string(i));

    const Eigen::Index dim = 3 * static_cast<Eigen::Index>(aligned[0].vertex_count());
    const Eigen::Index m = static_cast<Eigen::Index>(aligned.size());
    Eigen::MatrixXd data(dim, m);
    for (Eigen::Index j = 0; j < m; ++j) data.col(j) = aligned[j].flat();

    Eigen::VectorXd mean = data.rowwise().mean();
    data.colwise() -= mean;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinU);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double cutoff = sv.size() ? sv[0] * 1e-10 : 0.0;
    int rank = 0;
    while (rank < sv.size() && sv[rank] > cutoff) ++rank;
    if (rank == 0)
        throw NumericalError("build_pca: data has no variance (all meshes identical)");

    Eigen::VectorXd variances(rank);
    for (int i = 0; i < rank; ++i) variances[i] = sv[i] * sv[i] / static_cast<double>(m - 1);

    int k = keep.resolve(variances);
    const bool truncated = k > rank;
    k = std::min(k, rank);

    if (info) {
        info->requested = std::holds_alternative<int>(keep.value) ? std::get<int>(keep.value) : -1;
        info->kept = k;
        info->achievable_rank = rank;
        info->total_variance = data.squaredNorm() / static_cast<double>(m - 1);
        info->truncated = truncated;
    }

    return ShapeModel(std::move(mean), svd.matrixU().leftCols(k), variances.head(k),
                      aligned[0].triangles(), std::move(metadata));
}

TriMesh sample_instance(const ShapeModel& model, const Eigen::VectorXd& p) {
    if (p.size() != model.component_count())
        throw ValidationError("latent vector length does not match component count");
    return TriMesh::from_flat(model.mean() + model.basis() * p, model.topology());
}

Eigen::VectorXd project_instance(const ShapeModel& model, const TriMesh& mesh) {
    if (mesh.vertex_count() != model.vertex_count() || mesh.triangles() != model.topology())
        throw ValidationError("mesh topology does not match model");
    return model.basis().transpose() * (mesh.flat() - model.mean());
}

TriMesh reconstruct_with(const ShapeModel& model, const TriMesh& mesh, int k) {
    if (k < 0 || k > model.component_count())
        throw ValidationError("component count out of range");
    if (mesh.vertex_count() != model.vertex_count() || mesh.triangles() != model.topology())
        throw ValidationError("mesh topology does not match model");
    const auto basis = model.basis().leftCols(k);
    return TriMesh::from_flat(model.mean() + basis * (basis.transpose() * (mesh.flat() - model.mean())),
                              model.topology());
}

std::vector<Eigen::VectorXd> draw_random_latents(const ShapeModel& model, int count,
                                                 std::uint64_t seed) {
    if (count < 0) throw ValidationError("draw count must be nonnegative");
    Rng rng(seed);
    std::vector<Eigen::VectorXd> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(rng.normal_vector(model.eigenvalues()));
    return out;
}

} // namespace headfuse
