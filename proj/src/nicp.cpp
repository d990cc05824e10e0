#include "headfuse/nicp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "headfuse/closest_point.hpp"
#include "headfuse/errors.hpp"
#include "headfuse/procrustes.hpp"

namespace headfuse {

double StiffnessProfile::weight(const Vec3& x, double auto_scale) const {
    const double scale = length_scale > 0 ? length_scale : auto_scale;
    const double d = (x - anchor).norm();
    double g = 1.0;
    if (decay == Decay::Gaussian) {
        g = std::exp(-0.5 * d * d / (scale * scale));
    } else {
        g = std::max(0.0, 1.0 - d / scale);
    }
    // Keep the field strictly positive so stiffness never vanishes entirely.
    return weight_at_anchor * std::max(g, 1e-6);
}

void StiffnessProfile::validate() const {
    if (!(weight_at_anchor > 0)) throw ValidationError("weight_at_anchor must be positive");
    if (landmark_weight < 0) throw ValidationError("landmark weight must be nonnegative");
}

namespace {

struct Correspondence {
    Vec3 target = Vec3::Zero();
    bool valid = false;
};

std::vector<Correspondence> find_correspondences(const VertexMatrix& deformed,
                                                 const SurfaceTree& tree,
                                                 double reject_multiple, double overlap_scale,
                                                 double* mean_distance) {
    const int n = static_cast<int>(deformed.rows());
    std::vector<Correspondence> corr(n);
    std::vector<double> dist(n);
    std::vector<SurfaceTree::Hit> hits(n);
    for (int i = 0; i < n; ++i) {
        hits[i] = tree.closest(deformed.row(i).transpose());
        dist[i] = hits[i].distance;
    }
    std::vector<double> sorted = dist;
    auto mid = sorted.begin() + sorted.size() / 2;
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double median = *mid;
    if (*std::min_element(dist.begin(), dist.end()) > 2.0 * overlap_scale)
        throw NumericalError("nicp: no valid correspondences (meshes do not overlap)");

    int accepted = 0;
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        if (dist[i] > reject_multiple * median && dist[i] > 0) continue;
        if (tree.on_boundary(hits[i])) continue;
        corr[i].target = hits[i].point;
        corr[i].valid = true;
        acc += dist[i];
        ++accepted;
    }
    if (accepted == 0) throw NumericalError("nicp: no valid correspondences (all rejected)");
    if (mean_distance) *mean_distance = acc / accepted;
    return corr;
}

struct LandmarkConstraint {
    int vertex;
    Vec3 target;
};

std::vector<LandmarkConstraint>
resolve_landmarks(const TriMesh& template_mesh,
                  const std::optional<std::pair<LandmarkSet, LandmarkSet>>& landmarks) {
    std::vector<LandmarkConstraint> out;
    if (!landmarks) return out;
    const auto& [tmpl_set, target_set] = *landmarks;
    for (const auto& name : tmpl_set.names()) {
        if (!target_set.has3(name)) continue;
        int vertex = -1;
        if (tmpl_set.has_index(name)) {
            vertex = static_cast<int>(tmpl_set.index(name));
            if (vertex >= template_mesh.vertex_count())
                throw ValidationError("landmark index out of range: " + name);
        } else if (tmpl_set.has3(name)) {
            const Vec3 p = tmpl_set.point3(name);
            double best = std::numeric_limits<double>::max();
            for (int i = 0; i < template_mesh.vertex_count(); ++i) {
                const double d = (template_mesh.vertex(i) - p).squaredNorm();
                if (d < best) {
                    best = d;
                    vertex = i;
                }
            }
        }
        if (vertex >= 0) out.push_back({vertex, target_set.point3(name)});
    }
    return out;
}

double nicp_energy(const VertexMatrix& original, const Eigen::MatrixXd& x,
                   const std::vector<Correspondence>& corr,
                   const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges,
                   const std::vector<double>& edge_weights, double alpha,
                   const std::vector<LandmarkConstraint>& lms, double beta,
                   const VertexMatrix& deformed) {
    double e = 0;
    for (std::size_t i = 0; i < corr.size(); ++i)
        if (corr[i].valid)
            e += (deformed.row(i).transpose() - corr[i].target).squaredNorm();
    for (std::size_t k = 0; k < edges.size(); ++k) {
        const auto [a, b] = edges[k];
        e += alpha * edge_weights[k] *
             (x.middleRows(4 * a, 4) - x.middleRows(4 * b, 4)).squaredNorm();
    }
    for (const auto& lm : lms)
        e += beta * (deformed.row(lm.vertex).transpose() - lm.target).squaredNorm();
    (void)original;
    return e;
}

} // namespace

NicpResult nicp_register(const TriMesh& template_mesh, const TriMesh& target,
                         const StiffnessProfile& profile,
                         const std::optional<std::pair<LandmarkSet, LandmarkSet>>& landmarks,
                         const NicpOptions& options) {
    profile.validate();
    if (options.stiffness_steps < 1) throw ValidationError("nicp needs >= 1 stiffness step");

    const int n = template_mesh.vertex_count();
    const double auto_scale = 0.5 * std::max(template_mesh.bounding_radius(), 1e-9);

    // Rigid pre-alignment: landmarks when available, else centroid + scale.
    VertexMatrix base = template_mesh.vertices();
    const auto lms = resolve_landmarks(template_mesh, landmarks);
    if (options.prealign) {
        if (lms.size() >= 3) {
            VertexMatrix src(lms.size(), 3), dst(lms.size(), 3);
            for (std::size_t i = 0; i < lms.size(); ++i) {
                src.row(i) = template_mesh.vertices().row(lms[i].vertex);
                dst.row(i) = lms[i].target.transpose();
            }
            base = procrustes(src, dst).apply(base);
        } else {
            const Vec3 ct = template_mesh.centroid();
            const Vec3 cs = target.centroid();
            const double s = target.centroid_size() /
                             std::max(template_mesh.centroid_size(), 1e-12);
            base = (base.rowwise() - ct.transpose()) * s;
            base.rowwise() += cs.transpose();
        }
    }

    const auto edges = mesh_edges(template_mesh);
    std::vector<double> edge_weights(edges.size());
    for (std::size_t k = 0; k < edges.size(); ++k) {
        const auto [a, b] = edges[k];
        edge_weights[k] = 0.5 * (profile.weight(base.row(a).transpose(), auto_scale) +
                                 profile.weight(base.row(b).transpose(), auto_scale));
    }

    const SurfaceTree tree(target);
    const double beta = profile.landmark_weight;

    // Per-vertex 4x3 affine stack; identity start.
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4 * n, 3);
    for (int i = 0; i < n; ++i) x.block<3, 3>(4 * i, 0).setIdentity();

    auto deform = [&](const Eigen::MatrixXd& xx) {
        VertexMatrix out(n, 3);
        for (int i = 0; i < n; ++i) {
            Eigen::RowVector4d row;
            row << base.row(i), 1.0;
            out.row(i) = row * xx.middleRows(4 * i, 4);
        }
        return out;
    };

    NicpResult result;
    result.converged = true;
    VertexMatrix deformed = deform(x);

    for (int step = 0; step < options.stiffness_steps; ++step) {
        const double t = options.stiffness_steps == 1
                             ? 0.0
                             : static_cast<double>(step) / (options.stiffness_steps - 1);
        const double alpha = options.stiffness_high *
                             std::pow(options.stiffness_low / options.stiffness_high, t);

        std::vector<double> energies;
        double step_residual = 0;
        bool inner_converged = false;
        for (int inner = 0; inner < options.max_inner_iterations; ++inner) {
            const auto corr = find_correspondences(deformed, tree, options.reject_multiple,
                                                   template_mesh.bounding_radius(),
                                                   &step_residual);

            // Normal equations of the stacked least squares system.
            std::vector<Eigen::Triplet<double>> trip;
            trip.reserve(16 * edges.size() + 16 * n);
            Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(4 * n, 3);

            for (std::size_t k = 0; k < edges.size(); ++k) {
                const auto [a, b] = edges[k];
                const double w = alpha * edge_weights[k];
                for (int d = 0; d < 4; ++d) {
                    trip.emplace_back(4 * a + d, 4 * a + d, w);
                    trip.emplace_back(4 * b + d, 4 * b + d, w);
                    trip.emplace_back(4 * a + d, 4 * b + d, -w);
                    trip.emplace_back(4 * b + d, 4 * a + d, -w);
                }
            }
            auto add_point_term = [&](int i, const Vec3& target_pos, double w) {
                Eigen::RowVector4d row;
                row << base.row(i), 1.0;
                for (int r = 0; r < 4; ++r)
                    for (int c = 0; c < 4; ++c)
                        trip.emplace_back(4 * i + r, 4 * i + c, w * row[r] * row[c]);
                rhs.middleRows(4 * i, 4) += w * row.transpose() * target_pos.transpose();
            };
            for (int i = 0; i < n; ++i)
                if (corr[i].valid) add_point_term(i, corr[i].target, 1.0);
            for (const auto& lm : lms) add_point_term(lm.vertex, lm.target, beta);

            Eigen::SparseMatrix<double> ata(4 * n, 4 * n);
            ata.setFromTriplets(trip.begin(), trip.end());
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(ata);
            if (solver.info() != Eigen::Success)
                throw NumericalError("nicp: singular system (insufficient constraints)");
            Eigen::MatrixXd x_next(4 * n, 3);
            for (int c = 0; c < 3; ++c) x_next.col(c) = solver.solve(rhs.col(c));

            const VertexMatrix next = deform(x_next);
            const double move = std::sqrt((next - deformed).squaredNorm() / n);
            x = std::move(x_next);
            deformed = next;
            energies.push_back(nicp_energy(base, x, corr, edges, edge_weights, alpha, lms, beta,
                                           deformed));
            if (move < options.inner_tolerance) {
                inner_converged = true;
                break;
            }
        }
        result.energy.push_back(std::move(energies));
        result.step_residuals.push_back(step_residual);
        if (!inner_converged && step == options.stiffness_steps - 1) result.converged = false;
    }

    result.final_residual = result.step_residuals.back();
    result.deformed = template_mesh.with_vertices(std::move(deformed));
    return result;
}

TriMesh merge_meshes(const TriMesh& inner, const TriMesh& outer,
                     const StiffnessProfile& profile, const MergeConfig& config) {
    if (config.correspondence.empty())
        throw ValidationError("merge_meshes: missing boundary correspondence map");

    const int n = outer.vertex_count();
    std::vector<std::int64_t> inner_of(n, -1);
    for (auto [iv, ov] : config.correspondence) {
        if (iv >= static_cast<std::uint32_t>(inner.vertex_count()) ||
            ov >= static_cast<std::uint32_t>(n))
            throw ValidationError("merge_meshes: correspondence index out of range");
        inner_of[ov] = iv;
    }

    // Adjacency restricted to the mapped region; seam vertices border the
    // unmapped remainder.
    std::vector<std::vector<std::pair<int, double>>> adj(n);
    for (auto [a, b] : mesh_edges(outer)) {
        const double len = (outer.vertex(a) - outer.vertex(b)).norm();
        adj[a].push_back({static_cast<int>(b), len});
        adj[b].push_back({static_cast<int>(a), len});
    }

    std::vector<double> seam_dist(n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    double region_edge_sum = 0;
    int region_edge_count = 0;
    for (int v = 0; v < n; ++v) {
        if (inner_of[v] < 0) continue;
        for (auto [w, len] : adj[v]) {
            if (inner_of[w] < 0) {
                seam_dist[v] = 0;
                queue.push({0.0, v});
            } else {
                region_edge_sum += len;
                ++region_edge_count;
            }
        }
    }
    while (!queue.empty()) {
        auto [d, v] = queue.top();
        queue.pop();
        if (d > seam_dist[v]) continue;
        for (auto [w, len] : adj[v]) {
            if (inner_of[w] < 0) continue;
            if (d + len < seam_dist[w]) {
                seam_dist[w] = d + len;
                queue.push({seam_dist[w], w});
            }
        }
    }

    double band = config.band_width;
    if (band < 0) {
        const double median_edge =
            region_edge_count > 0 ? region_edge_sum / region_edge_count : 1.0;
        band = 20.0 * median_edge;
    }

    VertexMatrix v = outer.vertices();
    for (int i = 0; i < n; ++i) {
        if (inner_of[i] < 0) continue;
        double t = 1.0;
        if (band > 0) {
            const double s = std::isfinite(seam_dist[i]) ? std::min(1.0, seam_dist[i] / band)
                                                         : 1.0;
            t = profile.decay == StiffnessProfile::Decay::Linear ? s : s * s * (3 - 2 * s);
        }
        const Vec3 inner_pos = inner.vertex(static_cast<int>(inner_of[i]));
        v.row(i) = ((1.0 - t) * outer.vertex(i) + t * inner_pos).transpose();
    }
    return outer.with_vertices(std::move(v));
}

double max_edge_distortion(const TriMesh& before, const TriMesh& after) {
    if (!before.same_topology(after))
        throw ValidationError("edge distortion needs identical topologies");
    double worst = 0;
    for (auto [a, b] : mesh_edges(before)) {
        const Vec3 e0 = before.vertex(a) - before.vertex(b);
        const Vec3 e1 = after.vertex(a) - after.vertex(b);
        worst = std::max(worst, (e1 - e0).norm());
    }
    return worst;
}

} // namespace headfuse
