#include "headfuse/latent_regression.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "headfuse/errors.hpp"

namespace headfuse {

void LatentPairSet::validate() const {
    if (whole.cols() != part.cols())
        throw ValidationError("latent pair set has mismatched sample counts");
    if (whole.cols() == 0) throw ValidationError("latent pair set is empty");
}

PartExtractor make_index_crop_extractor(std::vector<std::uint32_t> indices,
                                        std::vector<Triangle> part_topology) {
    return [indices = std::move(indices),
            part_topology = std::move(part_topology)](const TriMesh& whole) {
        VertexMatrix v(indices.size(), 3);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            if (indices[i] >= static_cast<std::uint32_t>(whole.vertex_count()))
                throw ValidationError("crop index out of range");
            v.row(i) = whole.vertices().row(indices[i]);
        }
        return TriMesh(std::move(v), part_topology);
    };
}

LatentPairSet generate_pairs(const ShapeModel& whole, const ShapeModel& part,
                             const PartExtractor& extractor, int count, std::uint64_t seed,
                             PairGenReport* report) {
    if (count < 1) throw ValidationError("generate_pairs needs count >= 1");
    const auto latents = draw_random_latents(whole, count, seed);

    LatentPairSet pairs;
    pairs.whole.resize(whole.component_count(), count);
    pairs.part.resize(part.component_count(), count);
    int kept = 0, skipped = 0;
    for (int j = 0; j < count; ++j) {
        try {
            const TriMesh instance = sample_instance(whole, latents[j]);
            const TriMesh extracted = extractor(instance);
            pairs.part.col(kept) = project_instance(part, extracted);
            pairs.whole.col(kept) = latents[j];
            ++kept;
        } catch (const std::exception&) {
            ++skipped;
        }
    }
    if (report) {
        report->requested = count;
        report->generated = kept;
        report->skipped = skipped;
    }
    if (skipped > count / 10)
        throw NumericalError("generate_pairs: extractor failed on " + std::to_string(skipped) +
                             " of " + std::to_string(count) + " samples");
    pairs.whole.conservativeResize(Eigen::NoChange, kept);
    pairs.part.conservativeResize(Eigen::NoChange, kept);
    return pairs;
}

LatentRegressor fit_regressor(const LatentPairSet& pairs, const RegressionOptions& options) {
    pairs.validate();
    const Eigen::MatrixXd gram = pairs.part * pairs.part.transpose();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const double lmax = eig.eigenvalues().maxCoeff();
    const double lmin = eig.eigenvalues().minCoeff();
    const bool ill = lmin <= 0 || lmax / lmin > options.ridge_condition;

    Eigen::MatrixXd regularized = gram;
    if (ill) {
        if (!options.allow_ridge)
            throw NumericalError("fit_regressor: part latent matrix is rank deficient");
        const double eps = 1e-8 * gram.trace() / static_cast<double>(gram.rows());
        if (!(eps > 0))
            throw NumericalError("fit_regressor: part latents are identically zero");
        regularized += eps * Eigen::MatrixXd::Identity(gram.rows(), gram.cols());
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(regularized);
    if (ldlt.info() != Eigen::Success)
        throw NumericalError("fit_regressor: gram factorization failed");

    LatentRegressor r;
    // map = C_whole C_part^T (C_part C_part^T)^-1, via the transposed solve.
    r.map = ldlt.solve(pairs.part * pairs.whole.transpose()).transpose();
    return r;
}

TriMesh predict_whole(const LatentRegressor& regressor, const ShapeModel& whole,
                      const ShapeModel& part, const TriMesh& part_mesh) {
    if (regressor.map.rows() != whole.component_count() ||
        regressor.map.cols() != part.component_count())
        throw ValidationError("regressor dimensions do not match the model pair");
    const Eigen::VectorXd p_part = project_instance(part, part_mesh);
    return sample_instance(whole, regressor.map * p_part);
}

LatentRegressor fit_part_to_whole(const ShapeModel& part, const ShapeModel& whole,
                                  const std::vector<std::pair<TriMesh, TriMesh>>& paired_meshes,
                                  const RegressionOptions& options) {
    if (paired_meshes.empty()) throw ValidationError("fit_part_to_whole: empty pair list");
    LatentPairSet pairs;
    pairs.part.resize(part.component_count(), paired_meshes.size());
    pairs.whole.resize(whole.component_count(), paired_meshes.size());
    for (std::size_t j = 0; j < paired_meshes.size(); ++j) {
        pairs.part.col(j) = project_instance(part, paired_meshes[j].first);
        pairs.whole.col(j) = project_instance(whole, paired_meshes[j].second);
    }
    LatentRegressor r = fit_regressor(pairs, options);
    r.source_model = part.metadata().name;
    r.target_model = whole.metadata().name;
    return r;
}

} // namespace headfuse
