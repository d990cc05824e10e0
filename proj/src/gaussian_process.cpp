#include "headfuse/gaussian_process.hpp"

#include "headfuse/errors.hpp"

namespace headfuse {

DeformationObservations DeformationObservations::at_vertices(std::vector<int> ids,
                                                             const std::vector<Vec3>& deformations,
                                                             double sigma2) {
    if (ids.size() != deformations.size())
        throw ValidationError("observation ids and deformations differ in length");
    DeformationObservations obs;
    obs.vertices = std::move(ids);
    obs.deformations.resize(3 * deformations.size());
    for (std::size_t i = 0; i < deformations.size(); ++i)
        obs.deformations.segment<3>(3 * i) = deformations[i];
    obs.sigma2 = sigma2;
    return obs;
}

DeformationObservations DeformationObservations::at_points(const BlockKernel& kernel,
                                                           const std::vector<Vec3>& points,
                                                           const std::vector<Vec3>& deformations,
                                                           double sigma2) {
    std::vector<int> ids;
    ids.reserve(points.size());
    for (const auto& p : points) ids.push_back(kernel.nearest_vertex(p));
    return at_vertices(std::move(ids), deformations, sigma2);
}

void DeformationObservations::validate(int point_count) const {
    if (vertices.empty()) throw ValidationError("posterior needs at least one observation");
    if (!(sigma2 > 0)) throw ValidationError("observation noise variance must be positive");
    if (deformations.size() != static_cast<Eigen::Index>(3 * vertices.size()))
        throw ValidationError("deformation vector length mismatch");
    for (int v : vertices)
        if (v < 0 || v >= point_count)
            throw ValidationError("observation vertex id out of range");
}

Eigen::VectorXd GaussianProcess::mean_vector(const std::vector<int>& vertices) const {
    Eigen::VectorXd out(3 * vertices.size());
    for (std::size_t i = 0; i < vertices.size(); ++i) out.segment<3>(3 * i) = mean(vertices[i]);
    return out;
}

Eigen::MatrixXd GaussianProcess::cov_matrix(const std::vector<int>& rows,
                                            const std::vector<int>& cols) const {
    Eigen::MatrixXd out(3 * rows.size(), 3 * cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            out.block<3, 3>(3 * i, 3 * j) = cov(rows[i], cols[j]);
    return out;
}

PriorProcess::PriorProcess(std::shared_ptr<const BlockKernel> kernel, Eigen::VectorXd mean_field)
    : kernel_(std::move(kernel)), mean_field_(std::move(mean_field)) {
    if (!kernel_) throw ValidationError("prior process needs a kernel");
    if (mean_field_.size() != 0 && mean_field_.size() != 3 * kernel_->point_count())
        throw ValidationError("mean field length does not match the kernel");
}

Vec3 PriorProcess::mean(int vertex) const {
    if (mean_field_.size() == 0) return Vec3::Zero();
    return mean_field_.segment<3>(3 * vertex);
}

PosteriorProcess::PosteriorProcess(std::shared_ptr<const GaussianProcess> base,
                                   DeformationObservations observations)
    : base_(std::move(base)), obs_(std::move(observations)) {
    if (!base_) throw ValidationError("posterior needs a base process");
    obs_.validate(base_->point_count());
    Eigen::MatrixXd kxx = base_->cov_matrix(obs_.vertices, obs_.vertices);
    kxx.diagonal().array() += obs_.sigma2;
    factor_.compute(kxx);
    if (factor_.info() != Eigen::Success)
        throw NumericalError("posterior: observation covariance factorization failed");
    alpha_ = factor_.solve(obs_.deformations - base_->mean_vector(obs_.vertices));
}

Vec3 PosteriorProcess::mean(int vertex) const {
    const Eigen::MatrixXd kx = base_->cov_matrix(obs_.vertices, {vertex});
    return base_->mean(vertex) + (kx.transpose() * alpha_);
}

Eigen::Matrix3d PosteriorProcess::cov(int vi, int vj) const {
    const Eigen::MatrixXd ki = base_->cov_matrix(obs_.vertices, {vi});
    const Eigen::MatrixXd kj = base_->cov_matrix(obs_.vertices, {vj});
    return base_->cov(vi, vj) - ki.transpose() * factor_.solve(kj);
}

Eigen::VectorXd PosteriorProcess::mean_vector(const std::vector<int>& vertices) const {
    const Eigen::MatrixXd kx = base_->cov_matrix(obs_.vertices, vertices);
    return base_->mean_vector(vertices) + kx.transpose() * alpha_;
}

Eigen::MatrixXd PosteriorProcess::cov_matrix(const std::vector<int>& rows,
                                             const std::vector<int>& cols) const {
    const Eigen::MatrixXd kr = base_->cov_matrix(obs_.vertices, rows);
    const Eigen::MatrixXd kc = base_->cov_matrix(obs_.vertices, cols);
    return base_->cov_matrix(rows, cols) - kr.transpose() * factor_.solve(kc);
}

Eigen::Matrix3d kernel_function(const BlockKernel& kernel, const Vec3& x, const Vec3& y) {
    return kernel.block(kernel.nearest_vertex(x), kernel.nearest_vertex(y));
}

std::shared_ptr<PosteriorProcess> posterior(std::shared_ptr<const GaussianProcess> base,
                                            DeformationObservations observations) {
    return std::make_shared<PosteriorProcess>(std::move(base), std::move(observations));
}

std::shared_ptr<PosteriorProcess> landmark_posterior(std::shared_ptr<const BlockKernel> kernel,
                                                     const LandmarkSet& template_landmarks,
                                                     const LandmarkSet& scan_landmarks,
                                                     double sigma2) {
    if (!kernel) throw ValidationError("landmark_posterior needs a kernel");
    std::vector<int> ids;
    std::vector<Vec3> defs;
    for (const auto& name : template_landmarks.names()) {
        if (!scan_landmarks.has3(name))
            throw ValidationError("scan landmarks missing name: " + name);
        int vertex;
        Vec3 tmpl_pos;
        if (template_landmarks.has_index(name)) {
            vertex = static_cast<int>(template_landmarks.index(name));
            if (vertex >= kernel->point_count())
                throw ValidationError("landmark index out of range: " + name);
            tmpl_pos = kernel->reference().vertex(vertex);
        } else {
            tmpl_pos = template_landmarks.point3(name);
            vertex = kernel->nearest_vertex(tmpl_pos);
            tmpl_pos = kernel->reference().vertex(vertex);
        }
        ids.push_back(vertex);
        defs.push_back(scan_landmarks.point3(name) - tmpl_pos);
    }
    auto prior = std::make_shared<PriorProcess>(std::move(kernel));
    return posterior(prior, DeformationObservations::at_vertices(std::move(ids), defs, sigma2));
}

} // namespace headfuse
