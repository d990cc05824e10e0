#include "headfuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "headfuse/errors.hpp"
#include "headfuse/rng.hpp"

namespace headfuse::synth {

namespace {

// Midpoint subdivision of a unit icosahedron.
struct SphereBuilder {
    std::vector<Vec3> verts;
    std::vector<Triangle> tris;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint_cache;

    std::uint32_t midpoint(std::uint32_t a, std::uint32_t b) {
        const auto k = std::minmax(a, b);
        auto it = midpoint_cache.find({k.first, k.second});
        if (it != midpoint_cache.end()) return it->second;
        const Vec3 m = (verts[a] + verts[b]).normalized();
        verts.push_back(m);
        const auto idx = static_cast<std::uint32_t>(verts.size() - 1);
        midpoint_cache[{k.first, k.second}] = idx;
        return idx;
    }
};

} // namespace

TriMesh make_icosphere(int subdivisions, const Vec3& radii) {
    if (subdivisions < 0 || subdivisions > 6)
        throw ValidationError("icosphere subdivisions must be in [0, 6]");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    SphereBuilder b;
    b.verts = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
               {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : b.verts) v.normalize();
    b.tris = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
              {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
              {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
              {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::vector<Triangle> next;
        next.reserve(4 * b.tris.size());
        for (const auto& tr : b.tris) {
            const std::uint32_t a = b.midpoint(tr[0], tr[1]);
            const std::uint32_t c = b.midpoint(tr[1], tr[2]);
            const std::uint32_t e = b.midpoint(tr[2], tr[0]);
            next.push_back({tr[0], a, e});
            next.push_back({tr[1], c, a});
            next.push_back({tr[2], e, c});
            next.push_back({a, c, e});
        }
        b.tris = std::move(next);
    }
    VertexMatrix v(b.verts.size(), 3);
    for (std::size_t i = 0; i < b.verts.size(); ++i)
        v.row(i) = b.verts[i].cwiseProduct(radii).transpose();
    return TriMesh(std::move(v), std::move(b.tris));
}

TriMesh make_grid_patch(int rows, int cols, double width, double height, double dome) {
    if (rows < 2 || cols < 2) throw ValidationError("grid patch needs rows, cols >= 2");
    VertexMatrix v(rows * cols, 3);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double u = static_cast<double>(c) / (cols - 1) - 0.5;
            const double w = static_cast<double>(r) / (rows - 1) - 0.5;
            const double z = dome * std::cos(M_PI * u) * std::cos(M_PI * w);
            v.row(r * cols + c) = Vec3(u * width, w * height, z).transpose();
        }
    }
    std::vector<Triangle> tris;
    for (int r = 0; r + 1 < rows; ++r) {
        for (int c = 0; c + 1 < cols; ++c) {
            const auto i0 = static_cast<std::uint32_t>(r * cols + c);
            const auto i1 = static_cast<std::uint32_t>(r * cols + c + 1);
            const auto i2 = static_cast<std::uint32_t>((r + 1) * cols + c);
            const auto i3 = static_cast<std::uint32_t>((r + 1) * cols + c + 1);
            tris.push_back({i0, i1, i2});
            tris.push_back({i1, i3, i2});
        }
    }
    return TriMesh(std::move(v), std::move(tris));
}

DiskMesh make_disk(int rings, int segments, double radius_x, double radius_y, double dome) {
    if (rings < 1 || segments < 3) throw ValidationError("disk needs rings >= 1, segments >= 3");
    DiskMesh out;
    std::vector<Vec3> verts;
    verts.emplace_back(0, 0, dome);
    for (int r = 1; r <= rings; ++r) {
        const double f = static_cast<double>(r) / rings;
        for (int s = 0; s < segments; ++s) {
            const double a = 2.0 * M_PI * s / segments;
            const double z = dome * std::cos(0.5 * M_PI * f);
            verts.emplace_back(radius_x * f * std::cos(a), radius_y * f * std::sin(a), z);
        }
    }
    std::vector<Triangle> tris;
    for (int s = 0; s < segments; ++s) {
        tris.push_back({0, static_cast<std::uint32_t>(1 + s),
                        static_cast<std::uint32_t>(1 + (s + 1) % segments)});
    }
    auto ring_base = [&](int r) { return 1 + (r - 1) * segments; };
    for (int r = 1; r < rings; ++r) {
        for (int s = 0; s < segments; ++s) {
            const auto a = static_cast<std::uint32_t>(ring_base(r) + s);
            const auto b = static_cast<std::uint32_t>(ring_base(r) + (s + 1) % segments);
            const auto c = static_cast<std::uint32_t>(ring_base(r + 1) + s);
            const auto d = static_cast<std::uint32_t>(ring_base(r + 1) + (s + 1) % segments);
            tris.push_back({a, c, b});
            tris.push_back({b, c, d});
        }
    }
    VertexMatrix v(verts.size(), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) v.row(i) = verts[i].transpose();
    out.mesh = TriMesh(std::move(v), std::move(tris));
    out.center_vertex = 0;
    for (int s = 0; s < segments; ++s)
        out.boundary_loop.push_back(static_cast<std::uint32_t>(ring_base(rings) + s));
    return out;
}

FamilyKind family_kind_from_string(const std::string& s) {
    if (s == "coupled_ellipsoids") return FamilyKind::CoupledEllipsoids;
    if (s == "bumpy_spheres") return FamilyKind::BumpySpheres;
    if (s == "toy_ear") return FamilyKind::ToyEar;
    if (s == "toy_eye_region") return FamilyKind::ToyEyeRegion;
    throw ValidationError("unknown family kind: " + s);
}

std::string to_string(FamilyKind kind) {
    switch (kind) {
        case FamilyKind::CoupledEllipsoids: return "coupled_ellipsoids";
        case FamilyKind::BumpySpheres: return "bumpy_spheres";
        case FamilyKind::ToyEar: return "toy_ear";
        case FamilyKind::ToyEyeRegion: return "toy_eye_region";
    }
    return "?";
}

void SyntheticFamilySpec::validate() const {
    if (latent_dim < 1) throw ValidationError("latent dimension must be >= 1");
    if (noise < 0) throw ValidationError("noise must be nonnegative");
    if (sample_count < 0) throw ValidationError("sample count must be nonnegative");
}

Eigen::MatrixXd smooth_deformation_basis(const TriMesh& mesh, int count, std::uint64_t seed) {
    const int dim = 3 * mesh.vertex_count();
    if (count > dim) throw ValidationError("requested more modes than degrees of freedom");
    Rng rng(seed);
    const double scale = std::max(mesh.bounding_radius(), 1e-9);
    Eigen::MatrixXd fields(dim, count);
    for (int m = 0; m < count; ++m) {
        const Vec3 freq(rng.uniform(0.4, 2.2), rng.uniform(0.4, 2.2), rng.uniform(0.4, 2.2));
        const Vec3 phase(rng.uniform(0, 2 * M_PI), rng.uniform(0, 2 * M_PI),
                         rng.uniform(0, 2 * M_PI));
        const Vec3 dir = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
        for (int v = 0; v < mesh.vertex_count(); ++v) {
            const Vec3 p = mesh.vertex(v) / scale;
            const double a = std::sin(freq.x() * p.x() + phase.x()) +
                             std::cos(freq.y() * p.y() + phase.y()) +
                             std::sin(freq.z() * p.z() + phase.z());
            fields.block<3, 1>(3 * v, m) = a * dir;
        }
    }
    // Orthonormalize; smoothness is preserved because QR mixes the columns
    // linearly.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(fields);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, count);
    // Fix signs deterministically (largest-magnitude entry positive).
    for (int c = 0; c < count; ++c) {
        int imax;
        q.col(c).cwiseAbs().maxCoeff(&imax);
        if (q(imax, c) < 0) q.col(c) = -q.col(c);
    }
    return q;
}

TriMesh dual_centroid_mesh(const TriMesh& mesh) {
    if (!boundary_edges(mesh).empty())
        throw ValidationError("dual_centroid_mesh needs a closed mesh");
    const auto& tris = mesh.triangles();
    VertexMatrix centroids(tris.size(), 3);
    for (std::size_t t = 0; t < tris.size(); ++t)
        centroids.row(t) = (mesh.vertex(tris[t][0]) + mesh.vertex(tris[t][1]) +
                            mesh.vertex(tris[t][2]))
                               .transpose() /
                           3.0;

    // Directed-edge -> triangle map for fan walking.
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> across;
    for (std::size_t t = 0; t < tris.size(); ++t)
        for (int k = 0; k < 3; ++k)
            across[{tris[t][k], tris[t][(k + 1) % 3]}] = static_cast<std::uint32_t>(t);

    std::vector<std::int64_t> start_triangle(mesh.vertex_count(), -1);
    for (std::size_t t = 0; t < tris.size(); ++t)
        for (int k = 0; k < 3; ++k)
            if (start_triangle[tris[t][k]] < 0)
                start_triangle[tris[t][k]] = static_cast<std::int64_t>(t);

    std::vector<Triangle> dual;
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        if (start_triangle[v] < 0) continue;
        // Walk the triangle fan around v in orientation order.
        std::vector<std::uint32_t> fan;
        std::uint32_t t = static_cast<std::uint32_t>(start_triangle[v]);
        do {
            fan.push_back(t);
            const Triangle& tri = tris[t];
            int k = 0;
            while (tri[k] != static_cast<std::uint32_t>(v)) ++k;
            // Next triangle shares the edge (v, previous corner).
            const std::uint32_t prev = tri[(k + 2) % 3];
            auto it = across.find({static_cast<std::uint32_t>(v), prev});
            if (it == across.end())
                throw ValidationError("dual_centroid_mesh: open fan on a closed mesh");
            t = it->second;
        } while (t != static_cast<std::uint32_t>(start_triangle[v]) &&
                 fan.size() <= tris.size());
        for (std::size_t k = 1; k + 1 < fan.size(); ++k)
            dual.push_back({fan[0], fan[k], fan[k + 1]});
    }
    return TriMesh(std::move(centroids), std::move(dual));
}

namespace {

Eigen::VectorXd decaying_variances(int count, double sigma_top_mm, double decay) {
    Eigen::VectorXd v(count);
    double var = sigma_top_mm * sigma_top_mm;
    for (int i = 0; i < count; ++i) {
        v[i] = var;
        var *= decay;
    }
    return v;
}

/// Population-exact part model of a cropped linear model: thin SVD of the
/// cropped scaled basis. Returns the model and the coupling matrix mapping
/// whole latents to part latents.
std::pair<ShapeModel, Eigen::MatrixXd>
crop_model(const ShapeModel& whole, const std::vector<std::uint32_t>& kept,
           const std::vector<Triangle>& part_topology, const std::string& name) {
    const int np = static_cast<int>(kept.size());
    Eigen::VectorXd mean(3 * np);
    Eigen::MatrixXd scaled(3 * np, whole.component_count());
    for (int i = 0; i < np; ++i) {
        mean.segment<3>(3 * i) = whole.mean().segment<3>(3 * kept[i]);
        scaled.middleRows(3 * i, 3) = whole.basis().middleRows(3 * kept[i], 3);
    }
    scaled *= whole.eigenvalues().cwiseSqrt().asDiagonal();

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    int rank = 0;
    while (rank < sv.size() && sv[rank] > sv[0] * 1e-10) ++rank;
    Eigen::VectorXd variances(rank);
    for (int i = 0; i < rank; ++i) variances[i] = sv[i] * sv[i];

    ModelMetadata meta;
    meta.name = name;
    ShapeModel part(std::move(mean), svd.matrixU().leftCols(rank), variances, part_topology,
                    std::move(meta));
    // p_part = U_p^T C (s_whole - m) restricted = U_p^T scaled * diag(1/sqrt(l)) p_whole
    Eigen::MatrixXd coupling = svd.matrixU().leftCols(rank).transpose() * scaled *
                               whole.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal();
    return {std::move(part), std::move(coupling)};
}

SyntheticFamily build_sphere_family(const SyntheticFamilySpec& spec, bool coupled) {
    const Vec3 radii = coupled ? Vec3(95, 85, 100) : Vec3(90, 90, 90);
    TriMesh base = make_icosphere(spec.subdivisions, radii);

    ModelMetadata meta;
    meta.name = coupled ? "synthetic-coupled-whole" : "synthetic-bumpy-sphere";
    Eigen::MatrixXd basis = smooth_deformation_basis(base, spec.latent_dim, spec.seed ^ 0x9e3779b9);
    Eigen::VectorXd variances = decaying_variances(spec.latent_dim, 6.0, 0.72);

    SyntheticFamily fam;
    fam.whole_model = ShapeModel(base.flat(), basis, variances, base.triangles(), meta);

    // A handful of stable named landmarks spread over the surface.
    static const char* names[] = {"apex", "brow", "chin", "left", "right", "nape", "crownl", "crownr"};
    std::vector<Vec3> probes = {radii.cwiseProduct(Vec3(0, 0, 1)),
                                radii.cwiseProduct(Vec3(0, 0.6, 0.8)),
                                radii.cwiseProduct(Vec3(0, -0.6, 0.8)),
                                radii.cwiseProduct(Vec3(-1, 0, 0)),
                                radii.cwiseProduct(Vec3(1, 0, 0)),
                                radii.cwiseProduct(Vec3(0, 0, -1)),
                                radii.cwiseProduct(Vec3(-0.5, 0.8, 0)),
                                radii.cwiseProduct(Vec3(0.5, 0.8, 0))};
    for (std::size_t k = 0; k < probes.size(); ++k) {
        int best = 0;
        double bd = std::numeric_limits<double>::max();
        for (int v = 0; v < base.vertex_count(); ++v) {
            const double d = (base.vertex(v) - probes[k]).squaredNorm();
            if (d < bd) {
                bd = d;
                best = v;
            }
        }
        fam.template_landmarks.set_index(names[k], static_cast<std::uint32_t>(best));
        fam.template_landmarks.set3(names[k], base.vertex(best));
    }

    Rng noise_rng(spec.seed ^ 0x51ed2701);
    auto latents = draw_random_latents(fam.whole_model, spec.sample_count, spec.seed);
    for (int j = 0; j < spec.sample_count; ++j) {
        TriMesh m = sample_instance(fam.whole_model, latents[j]);
        if (spec.noise > 0) {
            VertexMatrix v = m.vertices();
            for (int i = 0; i < v.rows(); ++i)
                v.row(i) += noise_rng.normal_vector(3, spec.noise).transpose();
            m = m.with_vertices(std::move(v));
        }
        fam.whole_meshes.push_back(std::move(m));
        fam.whole_latents.push_back(std::move(latents[j]));
    }

    if (coupled) {
        if (spec.coupling.size() > 0) {
            // Part = whole topology, latents explicitly coupled.
            if (spec.coupling.cols() != spec.latent_dim)
                throw ValidationError("coupling matrix column count must equal latent_dim");
            fam.coupling = spec.coupling;
            fam.part_model = fam.whole_model;
            fam.part_vertex_map.resize(base.vertex_count());
            for (int i = 0; i < base.vertex_count(); ++i)
                fam.part_vertex_map[i] = static_cast<std::uint32_t>(i);
            for (const auto& z : fam.whole_latents)
                fam.part_meshes.push_back(sample_instance(fam.whole_model, fam.coupling * z));
        } else {
            // Face patch: unit-sphere z above a threshold. The part geometry
            // is then the exact restriction of the whole-shape field.
            std::vector<char> keep(base.vertex_count(), 0);
            for (int i = 0; i < base.vertex_count(); ++i)
                keep[i] = base.vertex(i).z() / radii.z() > 0.35 ? 1 : 0;
            auto [patch, kept] = crop_mesh(base, keep);
            auto [part, coupling] =
                crop_model(fam.whole_model, kept, patch.triangles(), "synthetic-coupled-part");
            fam.part_model = std::move(part);
            fam.coupling = std::move(coupling);
            fam.part_vertex_map = kept;
            for (const auto& mesh : fam.whole_meshes) {
                auto [cropped, _] = crop_mesh(mesh, keep);
                fam.part_meshes.push_back(std::move(cropped));
            }
        }
    }
    return fam;
}

SyntheticFamily build_toy_ear_family(const SyntheticFamilySpec& spec) {
    // Elongated domed disk: the canal is the center vertex, the base of the
    // ear is the outer boundary loop.
    DiskMesh disk = make_disk(5, 12, 22.0, 34.0, 8.0);
    ModelMetadata meta;
    meta.name = "synthetic-toy-ear";
    Eigen::MatrixXd basis =
        smooth_deformation_basis(disk.mesh, spec.latent_dim, spec.seed ^ 0xabcdef12);
    Eigen::VectorXd variances = decaying_variances(spec.latent_dim, 2.5, 0.6);

    SyntheticFamily fam;
    fam.whole_model = ShapeModel(disk.mesh.flat(), basis, variances, disk.mesh.triangles(), meta);
    fam.canal_vertex = disk.center_vertex;
    fam.base_loop = disk.boundary_loop;
    auto latents = draw_random_latents(fam.whole_model, spec.sample_count, spec.seed);
    for (auto& z : latents) {
        fam.whole_meshes.push_back(sample_instance(fam.whole_model, z));
        fam.whole_latents.push_back(std::move(z));
    }
    return fam;
}

SyntheticFamily build_toy_eye_family(const SyntheticFamilySpec& spec) {
    // Eye region: a gently domed patch. Eyelid landmarks trace an almond
    // outline; the models deform the patch smoothly.
    TriMesh patch = make_grid_patch(9, 13, 64.0, 40.0, 6.0);
    ModelMetadata meta;
    meta.name = "synthetic-eye-region";
    const int m = std::min(spec.latent_dim, 5);
    Eigen::MatrixXd basis = smooth_deformation_basis(patch, m, spec.seed ^ 0x7777);
    Eigen::VectorXd variances = decaying_variances(m, 1.8, 0.7);

    SyntheticFamily fam;
    fam.whole_model = ShapeModel(patch.flat(), basis, variances, patch.triangles(), meta);

    // 17 eyelid landmarks: almond loop through grid vertices.
    static const int lid_rc[17][2] = {{4, 1},  {5, 2},  {6, 3},  {6, 5},  {6, 6},  {6, 7},
                                      {6, 9},  {5, 10}, {4, 11}, {3, 10}, {2, 9},  {2, 7},
                                      {2, 6},  {2, 5},  {2, 3},  {3, 2},  {4, 3}};
    for (auto& rc : lid_rc)
        fam.eyelid_landmark_vertices.push_back(static_cast<std::uint32_t>(rc[0] * 13 + rc[1]));

    // Eyeball: small sphere; iris ring and pupil ring around +z axis.
    TriMesh ball = make_icosphere(2, Vec3(12, 12, 12));
    fam.eyeball_mesh = ball;
    const int nb = ball.vertex_count();
    fam.pupil_blendshape = Eigen::VectorXd::Zero(3 * nb);
    std::vector<std::pair<double, int>> ring; // angular distance from +z, vertex
    for (int v = 0; v < nb; ++v) {
        const Vec3 p = ball.vertex(v).normalized();
        const double ang = std::acos(std::clamp(p.z(), -1.0, 1.0));
        ring.emplace_back(ang, v);
        // Pupil-margin vertices slide radially with dilation.
        if (ang > 0.25 && ang < 0.6) {
            const Vec3 tangential = (p - Vec3(0, 0, p.z())).normalized() * 2.0;
            fam.pupil_blendshape.segment<3>(3 * v) = tangential;
        }
    }
    std::sort(ring.begin(), ring.end());
    // 16 iris landmarks: vertices in an angular band around the iris rim,
    // picked evenly by azimuth.
    std::vector<int> iris_candidates;
    for (double lo = 0.45, hi = 0.75; iris_candidates.size() < 16; lo -= 0.05, hi += 0.05) {
        iris_candidates.clear();
        for (const auto& [ang, v] : ring)
            if (ang > lo && ang < hi) iris_candidates.push_back(v);
        if (lo < 0.1) break;
    }
    if (iris_candidates.size() < 16)
        throw NumericalError("toy eye family failed to place 16 iris landmarks");
    std::sort(iris_candidates.begin(), iris_candidates.end(), [&](int a, int b) {
        const Vec3 pa = ball.vertex(a), pb = ball.vertex(b);
        return std::atan2(pa.y(), pa.x()) < std::atan2(pb.y(), pb.x());
    });
    for (int k = 0; k < 16; ++k) {
        const std::size_t pick = k * iris_candidates.size() / 16;
        fam.iris_landmark_vertices.push_back(static_cast<std::uint32_t>(iris_candidates[pick]));
    }

    // Per-vertex texture model: dark pupil, colored iris band, white sclera.
    const int mt = 3;
    fam.texture_mean = Eigen::VectorXd::Zero(3 * nb);
    fam.texture_basis = Eigen::MatrixXd::Zero(3 * nb, mt);
    for (int v = 0; v < nb; ++v) {
        const Vec3 p = ball.vertex(v).normalized();
        const double ang = std::acos(std::clamp(p.z(), -1.0, 1.0));
        Vec3 rgb(0.95, 0.95, 0.95);
        if (ang < 0.3) rgb = Vec3(0.05, 0.05, 0.05);
        else if (ang < 0.8) rgb = Vec3(0.35, 0.45, 0.55);
        fam.texture_mean.segment<3>(3 * v) = rgb;
        if (ang >= 0.3 && ang < 0.8) {
            fam.texture_basis.block<3, 1>(3 * v, 0) = Vec3(0.3, 0.1, -0.2);
            fam.texture_basis.block<3, 1>(3 * v, 1) = Vec3(-0.1, 0.25, 0.1);
            fam.texture_basis.block<3, 1>(3 * v, 2) = Vec3(0.05, -0.1, 0.3);
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(fam.texture_basis);
    fam.texture_basis =
        qr.householderQ() * Eigen::MatrixXd::Identity(3 * nb, mt);
    fam.texture_eigenvalues = decaying_variances(mt, 0.15, 0.6);

    auto latents = draw_random_latents(fam.whole_model, spec.sample_count, spec.seed);
    for (auto& z : latents) {
        fam.whole_meshes.push_back(sample_instance(fam.whole_model, z));
        fam.whole_latents.push_back(std::move(z));
    }
    return fam;
}

} // namespace

SyntheticFamily synth_family(const SyntheticFamilySpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case FamilyKind::CoupledEllipsoids: return build_sphere_family(spec, true);
        case FamilyKind::BumpySpheres: return build_sphere_family(spec, false);
        case FamilyKind::ToyEar: return build_toy_ear_family(spec);
        case FamilyKind::ToyEyeRegion: return build_toy_eye_family(spec);
    }
    throw ValidationError("unknown family kind");
}

} // namespace headfuse::synth
