#include "headfuse/ear.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "headfuse/errors.hpp"

namespace headfuse {

ShapeModel mirror_model(const ShapeModel& model, int axis) {
    if (axis < 0 || axis > 2) throw ValidationError("mirror axis must be 0, 1 or 2");
    Eigen::VectorXd mean = model.mean();
    Eigen::MatrixXd basis = model.basis();
    for (int v = 0; v < model.vertex_count(); ++v) {
        mean[3 * v + axis] = -mean[3 * v + axis];
        basis.row(3 * v + axis) = -basis.row(3 * v + axis);
    }
    std::vector<Triangle> topology = model.topology();
    for (auto& t : topology) std::swap(t[1], t[2]);
    ModelMetadata meta = model.metadata();
    return ShapeModel(std::move(mean), std::move(basis), model.eigenvalues(),
                      std::move(topology), std::move(meta));
}

namespace {

void require_disk(const TriMesh& mesh, const std::vector<std::uint32_t>& base_loop) {
    const auto boundary = boundary_edges(mesh);
    if (boundary.empty()) throw ValidationError("unwrap_ear: mesh has no boundary");
    // Euler characteristic of a disk: V - E + F = 1.
    const auto edges = mesh_edges(mesh);
    const long euler = static_cast<long>(mesh.vertex_count()) -
                       static_cast<long>(edges.size()) +
                       static_cast<long>(mesh.triangle_count());
    if (euler != 1) throw ValidationError("unwrap_ear: mesh is not a topological disk");

    // The base loop must be exactly the boundary.
    std::set<std::pair<std::uint32_t, std::uint32_t>> boundary_set(boundary.begin(),
                                                                   boundary.end());
    if (base_loop.size() != boundary.size())
        throw ValidationError("unwrap_ear: base loop does not cover the boundary");
    for (std::size_t i = 0; i < base_loop.size(); ++i) {
        const std::uint32_t a = base_loop[i];
        const std::uint32_t b = base_loop[(i + 1) % base_loop.size()];
        if (!boundary_set.count({std::min(a, b), std::max(a, b)}))
            throw ValidationError("unwrap_ear: base loop is not a boundary cycle");
    }
}

} // namespace

EarUnwrap unwrap_ear(const TriMesh& ear_mean, int canal_vertex,
                     const std::vector<std::uint32_t>& base_loop) {
    const int n = ear_mean.vertex_count();
    if (canal_vertex < 0 || canal_vertex >= n)
        throw ValidationError("unwrap_ear: canal vertex out of range");
    require_disk(ear_mean, base_loop);
    std::vector<char> on_boundary(n, 0);
    for (auto v : base_loop) on_boundary[v] = 1;
    if (on_boundary[canal_vertex])
        throw ValidationError("unwrap_ear: canal vertex must be interior");

    // Boundary on the unit circle, arc-length parameterized in 3D.
    Eigen::Matrix<double, Eigen::Dynamic, 2> uv =
        Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(n, 2);
    std::vector<double> arc(base_loop.size() + 1, 0.0);
    for (std::size_t i = 0; i < base_loop.size(); ++i) {
        const Vec3 a = ear_mean.vertex(base_loop[i]);
        const Vec3 b = ear_mean.vertex(base_loop[(i + 1) % base_loop.size()]);
        arc[i + 1] = arc[i] + (a - b).norm();
    }
    const double total = arc.back();
    for (std::size_t i = 0; i < base_loop.size(); ++i) {
        const double angle = 2.0 * M_PI * arc[i] / total;
        uv(base_loop[i], 0) = std::cos(angle);
        uv(base_loop[i], 1) = std::sin(angle);
    }

    // Uniform-weight harmonic interior: Tutte's embedding, injective for a
    // disk with convex boundary.
    std::vector<int> interior_index(n, -1);
    std::vector<int> interior;
    for (int v = 0; v < n; ++v) {
        if (!on_boundary[v]) {
            interior_index[v] = static_cast<int>(interior.size());
            interior.push_back(v);
        }
    }
    const auto edges = mesh_edges(ear_mean);
    std::vector<std::vector<int>> neighbors(n);
    for (auto [a, b] : edges) {
        neighbors[a].push_back(static_cast<int>(b));
        neighbors[b].push_back(static_cast<int>(a));
    }
    const int m = static_cast<int>(interior.size());
    if (m > 0) {
        std::vector<Eigen::Triplet<double>> trip;
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, 2);
        for (int i = 0; i < m; ++i) {
            const int v = interior[i];
            trip.emplace_back(i, i, static_cast<double>(neighbors[v].size()));
            for (int w : neighbors[v]) {
                if (interior_index[w] >= 0)
                    trip.emplace_back(i, interior_index[w], -1.0);
                else
                    rhs.row(i) += uv.row(w);
            }
        }
        Eigen::SparseMatrix<double> lap(m, m);
        lap.setFromTriplets(trip.begin(), trip.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(lap);
        if (solver.info() != Eigen::Success)
            throw NumericalError("unwrap_ear: harmonic system is singular");
        for (int c = 0; c < 2; ++c) {
            Eigen::VectorXd sol = solver.solve(rhs.col(c));
            for (int i = 0; i < m; ++i) uv(interior[i], c) = sol[i];
        }
    }

    EarUnwrap out;
    out.canal_vertex = canal_vertex;
    out.uv = uv;
    const Eigen::RowVector2d center = uv.row(canal_vertex);
    Eigen::VectorXd radius(n);
    double base_mean = 0;
    for (auto v : base_loop) base_mean += (uv.row(v) - center).norm();
    base_mean /= static_cast<double>(base_loop.size());
    if (!(base_mean > 0)) throw NumericalError("unwrap_ear: degenerate embedding");
    for (int v = 0; v < n; ++v)
        radius[v] = std::min(1.0, (uv.row(v) - center).norm() / base_mean);
    out.radius = radius;
    return out;
}

int flipped_triangle_count(const EarUnwrap& unwrap, const TriMesh& mesh) {
    int negatives = 0, positives = 0;
    for (const auto& t : mesh.triangles()) {
        const Eigen::RowVector2d a = unwrap.uv.row(t[0]);
        const Eigen::RowVector2d b = unwrap.uv.row(t[1]);
        const Eigen::RowVector2d c = unwrap.uv.row(t[2]);
        const double area2 = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        (area2 < 0 ? negatives : positives)++;
    }
    return std::min(negatives, positives);
}

void EarRegistration::validate(int template_points, const TriMesh& ear_mean) const {
    if (region_points.size() != anchors.size())
        throw ValidationError("ear registration: region/anchor size mismatch");
    if (region_points.empty()) throw ValidationError("ear registration: empty region");
    for (std::size_t i = 0; i < region_points.size(); ++i) {
        if (region_points[i] < 0 || region_points[i] >= template_points)
            throw ValidationError("ear registration: region point out of range");
        if (anchors[i].triangle >= ear_mean.triangles().size())
            throw ValidationError("ear registration: anchor triangle out of range");
        anchors[i].validate();
    }
}

BlockKernel fuse_ear_kernel(BlockKernel kernel, const ShapeModel& ear, RegionLabel side,
                            const EarUnwrap& unwrap, const EarRegistration& registration) {
    if (side != RegionLabel::LeftEar && side != RegionLabel::RightEar)
        throw ValidationError("fuse_ear_kernel: side must be an ear label");
    const TriMesh ear_surface = ear.mean_mesh();
    registration.validate(kernel.point_count(), ear_surface);
    if (unwrap.radius.size() != ear_surface.vertex_count())
        throw ValidationError("fuse_ear_kernel: unwrap does not match the ear mean");

    const ModelCovariance cov(ear);
    const auto& region = registration.region_points;
    const auto& anchors = registration.anchors;

    // Flattened-space blend radius of each region point, interpolated at its
    // anchor.
    std::vector<double> rho(region.size());
    for (std::size_t i = 0; i < region.size(); ++i)
        rho[i] = std::clamp(interpolate_scalar(anchors[i], unwrap.radius, ear_surface), 0.0, 1.0);

    for (std::size_t a = 0; a < region.size(); ++a) {
        kernel.labels()[region[a]] = side;
        for (std::size_t b = a; b < region.size(); ++b) {
            const Eigen::Matrix3d ear_block =
                blend_local_block(anchors[a], anchors[b], cov, ear_surface);
            const double r = 0.5 * (rho[a] + rho[b]);
            const Eigen::Matrix3d fused =
                r * kernel.block(region[a], region[b]) + (1.0 - r) * ear_block;
            kernel.set_block(region[a], region[b], fused);
        }
    }
    return kernel;
}

} // namespace headfuse
