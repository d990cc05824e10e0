#include "headfuse/gp_refine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "headfuse/closest_point.hpp"
#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

/// Deterministic farthest-point subsample of the template vertices.
std::vector<int> farthest_point_subset(const TriMesh& mesh, int count) {
    const int n = mesh.vertex_count();
    if (count >= n) {
        std::vector<int> all(n);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    std::vector<int> picked;
    picked.reserve(count);
    std::vector<double> dist(n, std::numeric_limits<double>::max());
    int current = 0; // start from vertex 0 for reproducibility
    picked.push_back(current);
    for (int k = 1; k < count; ++k) {
        double best = -1;
        int best_i = -1;
        for (int i = 0; i < n; ++i) {
            const double d = (mesh.vertex(i) - mesh.vertex(current)).squaredNorm();
            dist[i] = std::min(dist[i], d);
            if (dist[i] > best) {
                best = dist[i];
                best_i = i;
            }
        }
        current = best_i;
        picked.push_back(current);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

} // namespace

IcpRefineResult icp_refine(std::shared_ptr<const PosteriorProcess> initial, const TriMesh& scan,
                           const IcpRefineOptions& options) {
    if (!initial) throw ValidationError("icp_refine needs an initial posterior");
    const TriMesh& tmpl = initial->reference();
    const int n = tmpl.vertex_count();
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    const std::vector<int> subset = farthest_point_subset(tmpl, options.observation_cap);

    const SurfaceTree tree(scan);

    IcpRefineResult result;
    std::shared_ptr<const GaussianProcess> current = initial;
    std::shared_ptr<PosteriorProcess> refined;

    double best_energy = std::numeric_limits<double>::max();
    Eigen::VectorXd best_mean;
    std::shared_ptr<PosteriorProcess> best_posterior;

    Eigen::VectorXd mu = current->mean_vector(all);
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        // Wrap, correspond, reject.
        std::vector<int> obs_ids;
        std::vector<Vec3> obs_defs;
        std::vector<double> dists;
        std::vector<SurfaceTree::Hit> hits(subset.size());
        for (std::size_t k = 0; k < subset.size(); ++k) {
            const int v = subset[k];
            const Vec3 wrapped = tmpl.vertex(v) + mu.segment<3>(3 * v);
            hits[k] = tree.closest(wrapped);
            dists.push_back(hits[k].distance);
        }
        std::vector<double> sorted = dists;
        auto mid = sorted.begin() + sorted.size() / 2;
        std::nth_element(sorted.begin(), mid, sorted.end());
        const double median = *mid;

        int boundary_rejects = 0;
        double energy_acc = 0;
        for (std::size_t k = 0; k < subset.size(); ++k) {
            if (tree.on_boundary(hits[k])) {
                ++boundary_rejects;
                continue;
            }
            if (dists[k] > options.reject_multiple * median && dists[k] > 0) continue;
            const int v = subset[k];
            obs_ids.push_back(v);
            obs_defs.push_back(hits[k].point - tmpl.vertex(v));
            energy_acc += dists[k];
        }
        if (obs_ids.empty())
            throw NumericalError("icp_refine: all correspondences rejected");
        const double energy = energy_acc / static_cast<double>(obs_ids.size());
        result.energy.push_back(energy);
        result.accepted_counts.push_back(static_cast<int>(obs_ids.size()));
        result.rejected_boundary.push_back(boundary_rejects);

        refined = posterior(initial, DeformationObservations::at_vertices(
                                         std::move(obs_ids), obs_defs, options.sigma2));
        const Eigen::VectorXd mu_next = refined->mean_vector(all);

        if (energy < best_energy) {
            best_energy = energy;
            best_mean = mu_next;
            best_posterior = refined;
        }
        const double change = (mu_next - mu).norm() / std::max(1.0, mu.norm());
        mu = mu_next;
        current = refined;
        if (change < options.tolerance ||
            (result.energy.size() > 1 &&
             std::abs(result.energy.end()[-1] - result.energy.end()[-2]) <
                 options.tolerance * std::max(1.0, result.energy.front()))) {
            result.converged = true;
            break;
        }
    }

    if (!result.converged && best_posterior) {
        // Oscillation guard: report the best iterate seen.
        mu = best_mean;
        refined = best_posterior;
    }
    result.posterior = refined;
    VertexMatrix wrapped = tmpl.vertices();
    for (int v = 0; v < n; ++v) wrapped.row(v) += mu.segment<3>(3 * v).transpose();
    result.registered = tmpl.with_vertices(std::move(wrapped));
    return result;
}

BlockKernel truncate_kernel(const BlockKernel& kernel, int keep) {
    if (keep <= 0) throw ValidationError("truncate_kernel needs keep >= 1");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kernel.dense());
    if (eig.info() != Eigen::Success)
        throw NumericalError("truncate_kernel: eigendecomposition failed");
    const Eigen::VectorXd& vals = eig.eigenvalues(); // ascending
    const int rank = static_cast<int>(vals.size());
    keep = std::min(keep, rank);

    Eigen::MatrixXd scaled(vals.size(), keep);
    for (int c = 0; c < keep; ++c) {
        const double l = std::max(vals[rank - 1 - c], 0.0);
        scaled.col(c) = eig.eigenvectors().col(rank - 1 - c) * std::sqrt(l);
    }
    BlockKernel out(kernel.reference(), kernel.labels());
    for (int i = 0; i < out.point_count(); ++i)
        for (int j = i; j < out.point_count(); ++j)
            out.set_block(i, j,
                          scaled.middleRows(3 * i, 3) * scaled.middleRows(3 * j, 3).transpose());
    return out;
}

namespace {

int components_for_fraction(const Eigen::VectorXd& descending, double fraction) {
    const double total = descending.sum();
    if (total <= 0) return 1;
    double acc = 0;
    for (Eigen::Index i = 0; i < descending.size(); ++i) {
        acc += descending[i];
        if (acc >= fraction * total) return static_cast<int>(i) + 1;
    }
    return static_cast<int>(descending.size());
}

} // namespace

ShapeModel refine_model(const BlockKernel& kernel,
                        const std::vector<std::pair<TriMesh, LandmarkSet>>& scans,
                        const RefineConfig& config, RefineReport* report) {
    if (scans.size() < 2) throw ValidationError("refine_model needs at least 2 scans");
    if (config.iterations < 1) throw ValidationError("refine_model needs >= 1 iteration");
    const TriMesh tmpl = kernel.reference();

    // Truncate the starting covariance to suppress unstable trailing modes.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kernel.dense(), Eigen::EigenvaluesOnly);
    Eigen::VectorXd spectrum = eig.eigenvalues().reverse().cwiseMax(0.0);
    const int keep0 = components_for_fraction(spectrum, config.truncate_fraction);
    auto working = std::make_shared<BlockKernel>(truncate_kernel(kernel, keep0));
    Eigen::VectorXd working_mean; // empty = zero mean deformation

    std::vector<TriMesh> reconstructions;
    for (int pass = 0; pass < config.iterations; ++pass) {
        reconstructions.clear();
        std::vector<Eigen::VectorXd> deformations;
        int failures = 0;
        std::vector<double> rms;
        for (const auto& [scan, lms] : scans) {
            try {
                auto prior = std::make_shared<PriorProcess>(working, working_mean);
                // Landmark conditioning against the (possibly nonzero-mean)
                // working process.
                std::vector<int> ids;
                std::vector<Vec3> defs;
                for (const auto& name : config.template_landmarks.names()) {
                    if (!lms.has3(name))
                        throw ValidationError("scan landmarks missing name: " + name);
                    const int v = static_cast<int>(config.template_landmarks.index(name));
                    ids.push_back(v);
                    defs.push_back(lms.point3(name) - tmpl.vertex(v));
                }
                auto p0 = posterior(prior, DeformationObservations::at_vertices(
                                               ids, defs, config.landmark_sigma2));
                auto icp = icp_refine(p0, scan, config.icp);
                TriMesh recon = icp.registered;

                if (!config.nicp_region.empty()) {
                    // Non-rigid snap of the face region onto the raw scan.
                    auto [region_mesh, kept] = crop_mesh(recon, config.nicp_region);
                    if (region_mesh.triangle_count() > 0) {
                        auto snapped = nicp_register(region_mesh, scan, config.nicp_profile, {},
                                                     config.nicp_options);
                        VertexMatrix v = recon.vertices();
                        for (std::size_t i = 0; i < kept.size(); ++i)
                            v.row(kept[i]) = snapped.deformed.vertices().row(i);
                        recon = recon.with_vertices(std::move(v));
                    }
                }

                const SurfaceTree scan_tree(scan);
                double acc = 0;
                for (int v = 0; v < recon.vertex_count(); ++v) {
                    const double d = scan_tree.closest(recon.vertex(v)).distance;
                    acc += d * d;
                }
                rms.push_back(std::sqrt(acc / recon.vertex_count()));
                deformations.push_back(recon.flat() - tmpl.flat());
                reconstructions.push_back(std::move(recon));
            } catch (const std::exception&) {
                ++failures;
            }
        }
        if (reconstructions.size() < 2)
            throw NumericalError("refine_model: fewer than 2 scans reconstructed");
        if (report) {
            report->failed_scans = failures;
            report->per_scan_rms = rms;
        }
        if (pass + 1 < config.iterations) {
            Eigen::VectorXd mean_def;
            auto refreshed = BlockKernel::from_deformations(tmpl, deformations, &mean_def);
            working = std::make_shared<BlockKernel>(std::move(refreshed));
            working_mean = std::move(mean_def);
        }
    }

    ModelMetadata meta;
    meta.name = "refined";
    for (const auto& [name, idx] : config.template_landmarks.indices())
        meta.landmark_indices[name] = idx;
    return build_pca(reconstructions, config.pca_keep, nullptr, std::move(meta));
}

} // namespace headfuse
