#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "headfuse/errors.hpp"
#include "headfuse/kernel_fusion.hpp"
#include "headfuse/rng.hpp"
#include "headfuse/synthetic.hpp"
#include "oracles.hpp"

using namespace headfuse;

namespace {

ShapeModel toy_model(int subdiv, int comps, std::uint64_t seed,
                     const Vec3& radii = Vec3(50, 55, 60)) {
    TriMesh base = synth::make_icosphere(subdiv, radii);
    Eigen::MatrixXd basis = synth::smooth_deformation_basis(base, comps, seed);
    Eigen::VectorXd ev(comps);
    double v = 16.0;
    for (int i = 0; i < comps; ++i) {
        ev[i] = v;
        v *= 0.65;
    }
    ModelMetadata meta;
    meta.name = "toy-head";
    return ShapeModel(base.flat(), basis, ev, base.triangles(), meta);
}

/// Population-exact restriction of a model to the vertices with z above a
/// fraction of the maximum.
std::pair<ShapeModel, std::vector<std::uint32_t>> face_restriction(const ShapeModel& head,
                                                                   double z_threshold,
                                                                   double variance_scale = 1.0) {
    const TriMesh mean = head.mean_mesh();
    std::vector<char> keep(mean.vertex_count(), 0);
    const double zmax = mean.vertices().col(2).maxCoeff();
    for (int i = 0; i < mean.vertex_count(); ++i)
        keep[i] = mean.vertex(i).z() > z_threshold * zmax ? 1 : 0;
    auto [patch, kept] = crop_mesh(mean, keep);

    Eigen::VectorXd pmean(3 * kept.size());
    Eigen::MatrixXd scaled(3 * kept.size(), head.component_count());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        pmean.segment<3>(3 * i) = head.mean().segment<3>(3 * kept[i]);
        scaled.middleRows(3 * i, 3) = head.basis().middleRows(3 * kept[i], 3);
    }
    scaled *= (variance_scale * head.eigenvalues()).cwiseSqrt().asDiagonal();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    int rank = 0;
    while (rank < sv.size() && sv[rank] > sv[0] * 1e-10) ++rank;
    Eigen::VectorXd ev(rank);
    for (int i = 0; i < rank; ++i) ev[i] = sv[i] * sv[i];
    ModelMetadata meta;
    meta.name = "toy-face";
    return {ShapeModel(pmean, svd.matrixU().leftCols(rank), ev, patch.triangles(), meta), kept};
}

struct FusionFixture {
    ShapeModel head;
    ShapeModel face;
    TriMesh tmpl;
    KernelRegistration reg;
    BlendWeights weights;
};

/// Template = the head mean itself (vertex-anchored; kernels may be
/// indefinite, fine for value-level checks).
FusionFixture vertex_fixture(int subdiv, int comps, std::uint64_t seed) {
    FusionFixture f;
    f.head = toy_model(subdiv, comps, seed);
    auto [face, kept] = face_restriction(f.head, 0.3);
    f.face = std::move(face);
    f.tmpl = f.head.mean_mesh();
    f.reg = register_template(f.tmpl, f.head.mean_mesh(), f.face.mean_mesh(), 1e-6);
    int nose = -1;
    double best_z = -1e300;
    for (int i = 0; i < f.tmpl.vertex_count(); ++i) {
        if (f.reg.face_mask[i] && f.tmpl.vertex(i).z() > best_z) {
            best_z = f.tmpl.vertex(i).z();
            nose = i;
        }
    }
    REQUIRE(nose >= 0);
    f.weights = face_head_blend_weights(f.tmpl, f.reg.face_mask, nose);
    return f;
}

/// Template = dual centroid mesh of the head mean: every anchor sits at a
/// source-triangle centroid, which keeps the assembled kernel PSD.
FusionFixture centroid_fixture(int subdiv, int comps, std::uint64_t seed,
                               double face_variance_scale = 1.0) {
    FusionFixture f;
    f.head = toy_model(subdiv, comps, seed);
    auto [face, kept] = face_restriction(f.head, 0.3, face_variance_scale);
    f.face = std::move(face);
    f.tmpl = synth::dual_centroid_mesh(f.head.mean_mesh());
    f.reg = register_template(f.tmpl, f.head.mean_mesh(), f.face.mean_mesh(), 1e-6);
    int nose = -1;
    double best_z = -1e300;
    for (int i = 0; i < f.tmpl.vertex_count(); ++i) {
        if (f.reg.face_mask[i] && f.tmpl.vertex(i).z() > best_z) {
            best_z = f.tmpl.vertex(i).z();
            nose = i;
        }
    }
    REQUIRE(nose >= 0);
    f.weights = face_head_blend_weights(f.tmpl, f.reg.face_mask, nose);
    return f;
}

std::vector<oracle::AnchorRef> to_refs(const std::vector<BarycentricAnchor>& anchors) {
    std::vector<oracle::AnchorRef> out;
    for (const auto& a : anchors) out.push_back({a.triangle, a.coords});
    return out;
}

} // namespace

TEST_CASE("model covariance accessor") {
    SUBCASE("single component blocks are rank-one outer products") {
        TriMesh base = synth::make_icosphere(0);
        const int dim = 3 * base.vertex_count();
        Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
        Rng rng(1);
        for (int i = 0; i < dim; ++i) u[i] = rng.normal();
        u.normalize();
        Eigen::VectorXd ev(1);
        ev << 7.5;
        ShapeModel model(base.flat(), u, ev, base.triangles());
        ModelCovariance cov(model);
        for (int v = 0; v < base.vertex_count(); ++v) {
            for (int k = 0; k < base.vertex_count(); ++k) {
                const Eigen::Matrix3d expected =
                    7.5 * u.segment<3>(3 * v) * u.segment<3>(3 * k).transpose();
                CHECK((cov.block(v, k) - expected).cwiseAbs().maxCoeff() < 1e-12);
            }
        }
    }
    SUBCASE("marginal traces sum to the total variance") {
        ShapeModel model = toy_model(1, 5, 3);
        ModelCovariance cov(model);
        double acc = 0;
        for (int v = 0; v < model.vertex_count(); ++v) acc += cov.block(v, v).trace();
        CHECK(acc == doctest::Approx(model.eigenvalues().sum()).epsilon(1e-10));
    }
    SUBCASE("accessor equals the explicit dense covariance") {
        ShapeModel model = toy_model(1, 4, 5); // 42 vertices
        ModelCovariance cov(model);
        const Eigen::MatrixXd dense = oracle::dense_covariance(model);
        for (int v = 0; v < model.vertex_count(); v += 3)
            for (int k = 0; k < model.vertex_count(); k += 5)
                CHECK((cov.block(v, k) - dense.block<3, 3>(3 * v, 3 * k)).cwiseAbs().maxCoeff() <
                      1e-10);
    }
}

TEST_CASE("anchor_points") {
    TriMesh surface = synth::make_icosphere(1, Vec3(30, 30, 30));

    SUBCASE("surface vertices anchor with unit barycentrics") {
        auto anchors = anchor_points(surface, surface);
        for (int i = 0; i < surface.vertex_count(); ++i) {
            CHECK(anchors[i].coords.maxCoeff() == doctest::Approx(1.0).epsilon(1e-9));
            const Triangle& t = surface.triangles()[anchors[i].triangle];
            int c;
            anchors[i].coords.maxCoeff(&c);
            CHECK(t[c] == static_cast<std::uint32_t>(i));
        }
    }
    SUBCASE("triangle centroids anchor at (1/3, 1/3, 1/3)") {
        std::vector<Vec3> pts;
        for (int k = 0; k < 5; ++k) {
            const Triangle& t = surface.triangles()[k * 7];
            pts.push_back((surface.vertex(t[0]) + surface.vertex(t[1]) + surface.vertex(t[2])) / 3.0);
        }
        VertexMatrix v(pts.size(), 3);
        for (std::size_t i = 0; i < pts.size(); ++i) v.row(i) = pts[i].transpose();
        TriMesh probes(v, {});
        auto anchors = anchor_points(probes, surface);
        for (const auto& a : anchors)
            CHECK((a.coords - Vec3::Constant(1.0 / 3.0)).cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("recomposition matches the closest point") {
        Rng rng(9);
        std::vector<Vec3> pts;
        for (int k = 0; k < 40; ++k)
            pts.push_back(Vec3(rng.normal(), rng.normal(), rng.normal()) * 25.0);
        VertexMatrix v(pts.size(), 3);
        for (std::size_t i = 0; i < pts.size(); ++i) v.row(i) = pts[i].transpose();
        TriMesh probes(v, {});
        auto anchors = anchor_points(probes, surface);
        SurfaceTree tree(surface);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const Triangle& t = surface.triangles()[anchors[i].triangle];
            const Vec3 recomposed = anchors[i].coords[0] * surface.vertex(t[0]) +
                                    anchors[i].coords[1] * surface.vertex(t[1]) +
                                    anchors[i].coords[2] * surface.vertex(t[2]);
            CHECK((recomposed - tree.closest(pts[i]).point).norm() < 1e-9);
        }
    }
}

TEST_CASE("blend_local_block") {
    ShapeModel model = toy_model(0, 3, 7);
    ModelCovariance cov(model);
    const TriMesh surface = model.mean_mesh();
    const Eigen::MatrixXd dense = oracle::dense_covariance(model);

    SUBCASE("matches the brute-force rule, including unit barycentrics") {
        Rng rng(2);
        for (int rep = 0; rep < 30; ++rep) {
            auto bary = [&]() -> Vec3 {
                if (rep % 3 == 0) { // exercise anchors exactly at vertices too
                    Vec3 c = Vec3::Zero();
                    c[rep % 2] = 1.0;
                    return c;
                }
                double a = rng.uniform(), b = rng.uniform();
                if (a + b > 1) {
                    a = 1 - a;
                    b = 1 - b;
                }
                return {a, b, 1 - a - b};
            };
            BarycentricAnchor ai{static_cast<std::uint32_t>(rep % surface.triangle_count()),
                                 bary()};
            BarycentricAnchor aj{static_cast<std::uint32_t>((5 * rep + 1) % surface.triangle_count()),
                                 bary()};
            const Eigen::Matrix3d expected = oracle::blend_block_bruteforce(
                dense, surface.triangles(), {ai.triangle, ai.coords}, {aj.triangle, aj.coords});
            CHECK((blend_local_block(ai, aj, cov, surface) - expected).cwiseAbs().maxCoeff() <
                  1e-12);
        }
    }
    SUBCASE("centroidal anchors average all nine corner blocks") {
        BarycentricAnchor ai{1, Vec3::Constant(1.0 / 3.0)};
        BarycentricAnchor aj{5, Vec3::Constant(1.0 / 3.0)};
        const Triangle& ti = surface.triangles()[1];
        const Triangle& tj = surface.triangles()[5];
        Eigen::Matrix3d mean9 = Eigen::Matrix3d::Zero();
        for (int v = 0; v < 3; ++v)
            for (int k = 0; k < 3; ++k) mean9 += cov.block(ti[v], tj[k]);
        mean9 /= 9.0;
        CHECK((blend_local_block(ai, aj, cov, surface) - mean9).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("weights sum to 3 for random barycentric pairs") {
        Rng rng(4);
        for (int rep = 0; rep < 1000; ++rep) {
            auto bary = [&]() {
                double a = rng.uniform(), b = rng.uniform();
                if (a + b > 1) {
                    a = 1 - a;
                    b = 1 - b;
                }
                return Vec3(a, b, 1 - a - b);
            };
            const Vec3 ci = bary(), cj = bary();
            double wsum = 0;
            for (int v = 0; v < 3; ++v)
                for (int k = 0; k < 3; ++k) wsum += (ci[v] + cj[k]) / 2.0;
            CHECK(wsum == doctest::Approx(3.0).epsilon(1e-14));
        }
    }
    SUBCASE("blended entries stay within the corner-block entry range") {
        Rng rng(12);
        for (int rep = 0; rep < 50; ++rep) {
            auto bary = [&]() {
                double a = rng.uniform(), b = rng.uniform();
                if (a + b > 1) {
                    a = 1 - a;
                    b = 1 - b;
                }
                return Vec3(a, b, 1 - a - b);
            };
            BarycentricAnchor ai{static_cast<std::uint32_t>(rep % surface.triangle_count()), bary()};
            BarycentricAnchor aj{static_cast<std::uint32_t>((3 * rep) % surface.triangle_count()),
                                 bary()};
            const Eigen::Matrix3d blended = blend_local_block(ai, aj, cov, surface);
            const Triangle& ti = surface.triangles()[ai.triangle];
            const Triangle& tj = surface.triangles()[aj.triangle];
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    double lo = 1e300, hi = -1e300;
                    for (int v = 0; v < 3; ++v) {
                        for (int k = 0; k < 3; ++k) {
                            const double e = cov.block(ti[v], tj[k])(r, c);
                            lo = std::min(lo, e);
                            hi = std::max(hi, e);
                        }
                    }
                    CHECK(blended(r, c) >= lo - 1e-12);
                    CHECK(blended(r, c) <= hi + 1e-12);
                }
            }
        }
    }
}

TEST_CASE("face_head_blend_weights endpoints") {
    TriMesh tmpl = synth::make_icosphere(1, Vec3(40, 40, 40));
    std::vector<char> mask(tmpl.vertex_count(), 0);
    int nose = 0;
    double zbest = -1e300;
    for (int i = 0; i < tmpl.vertex_count(); ++i) {
        if (tmpl.vertex(i).z() > 0) mask[i] = 1;
        if (tmpl.vertex(i).z() > zbest) {
            zbest = tmpl.vertex(i).z();
            nose = i;
        }
    }
    BlendWeights w = face_head_blend_weights(tmpl, mask, nose);
    CHECK(w.rho[nose] == 0.0);
    double dmax = 0;
    int farthest = nose;
    for (int i = 0; i < tmpl.vertex_count(); ++i) {
        if (!mask[i]) continue;
        const double d = (tmpl.vertex(i) - tmpl.vertex(nose)).norm();
        if (d > dmax) {
            dmax = d;
            farthest = i;
        }
    }
    CHECK(w.rho[farthest] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.rho.minCoeff() >= 0.0);
    CHECK(w.rho.maxCoeff() <= 1.0);
    // Linear in distance below the face-region maximum.
    for (int i = 0; i < tmpl.vertex_count(); ++i) {
        const double d = (tmpl.vertex(i) - tmpl.vertex(nose)).norm();
        if (d <= dmax)
            CHECK(w.rho[i] == doctest::Approx(d / dmax).epsilon(1e-9));
    }

    CHECK_THROWS_AS(face_head_blend_weights(tmpl, std::vector<char>(tmpl.vertex_count(), 0), nose),
                    ValidationError);
}

TEST_CASE("build_fused_kernel matches the brute-force oracle on a 12-vertex template") {
    FusionFixture f = vertex_fixture(0, 4, 21);
    REQUIRE(f.tmpl.vertex_count() == 12);
    BlockKernel kernel = build_fused_kernel(f.head, f.face, f.tmpl, f.reg, f.weights);

    const Eigen::MatrixXd expected = oracle::fused_kernel_bruteforce(
        f.head, f.face, f.tmpl.vertex_count(), to_refs(f.reg.head_anchors),
        to_refs(f.reg.face_anchors), f.reg.face_mask, f.weights.rho);
    CHECK((kernel.dense() - expected).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("fused kernel trivial endpoints (centroid template)") {
    FusionFixture f = centroid_fixture(0, 4, 22);

    SUBCASE("face model equal to the head restriction leaves blocks at the head value") {
        BlockKernel kernel = build_fused_kernel(f.head, f.face, f.tmpl, f.reg, f.weights);
        BlendWeights ones = f.weights;
        ones.rho.setOnes();
        BlockKernel head_only = build_fused_kernel(f.head, f.face, f.tmpl, f.reg, ones);
        CHECK((kernel.dense() - head_only.dense()).cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("rho forced to 1 gives the pure head blend everywhere") {
        BlendWeights ones = f.weights;
        ones.rho.setOnes();
        BlockKernel kernel = build_fused_kernel(f.head, f.face, f.tmpl, f.reg, ones);
        const ModelCovariance cov(f.head);
        const TriMesh surface = f.head.mean_mesh();
        for (int i = 0; i < f.tmpl.vertex_count(); i += 2) {
            for (int j = i; j < f.tmpl.vertex_count(); j += 3) {
                const Eigen::Matrix3d expected =
                    blend_local_block(f.reg.head_anchors[i], f.reg.head_anchors[j], cov, surface);
                CHECK((kernel.block(i, j) - expected).cwiseAbs().maxCoeff() < 1e-12);
            }
        }
    }
    SUBCASE("perturbing the face model never touches out-of-face blocks") {
        BlockKernel a = build_fused_kernel(f.head, f.face, f.tmpl, f.reg, f.weights);
        Eigen::VectorXd ev = f.face.eigenvalues() * 3.0;
        ShapeModel perturbed(f.face.mean(), f.face.basis(), ev, f.face.topology());
        BlockKernel b = build_fused_kernel(f.head, perturbed, f.tmpl, f.reg, f.weights);
        int outside_pairs = 0;
        for (int i = 0; i < f.tmpl.vertex_count(); ++i) {
            for (int j = i; j < f.tmpl.vertex_count(); ++j) {
                if (f.reg.face_mask[i] && f.reg.face_mask[j]) continue;
                ++outside_pairs;
                CHECK(a.block(i, j) == b.block(i, j)); // bitwise
            }
        }
        CHECK(outside_pairs > 0);
    }
    SUBCASE("blending two identical kernels is the identity for any rho") {
        Rng rng(5);
        BlendWeights w = f.weights;
        for (Eigen::Index i = 0; i < w.rho.size(); ++i) w.rho[i] = rng.uniform();
        BlockKernel mixed = build_fused_kernel(f.head, f.face, f.tmpl, f.reg, w);
        BlendWeights ones = f.weights;
        ones.rho.setOnes();
        BlockKernel pure = build_fused_kernel(f.head, f.face, f.tmpl, f.reg, ones);
        CHECK((mixed.dense() - pure.dense()).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("centroid-template kernel is symmetric and PSD") {
    FusionFixture f = centroid_fixture(1, 5, 23);
    BlockKernel kernel = build_fused_kernel(f.head, f.face, f.tmpl, f.reg, f.weights);

    for (int i = 0; i < kernel.point_count(); i += 5)
        for (int j = 0; j < kernel.point_count(); j += 7)
            CHECK((kernel.block(i, j) - kernel.block(j, i).transpose()).cwiseAbs().maxCoeff() <
                  1e-9);

    const double min_eig = kernel_min_eigenvalue(kernel);
    CHECK(min_eig >= -1e-6 * kernel.trace() / (3 * kernel.point_count()));
}

TEST_CASE("PSD policy: clip small negative mass, reject large") {
    // Hand-built kernel: u u^T plus a negative dent of controlled mass.
    TriMesh base = synth::make_icosphere(0);
    const int dim = 3 * base.vertex_count();
    Rng rng(6);
    Eigen::VectorXd u(dim), v(dim);
    for (int i = 0; i < dim; ++i) {
        u[i] = rng.normal();
        v[i] = rng.normal();
    }
    u.normalize();
    v -= u * u.dot(v);
    v.normalize();

    auto make_kernel = [&](double dent) {
        const Eigen::MatrixXd k = 10.0 * u * u.transpose() - dent * v * v.transpose();
        BlockKernel kernel(base, {});
        for (int i = 0; i < base.vertex_count(); ++i)
            for (int j = i; j < base.vertex_count(); ++j)
                kernel.set_block(i, j, k.block<3, 3>(3 * i, 3 * j));
        return kernel;
    };

    // Trace ~ 10 - dent; tolerance 1e-6 * trace.
    ShapeModel clipped = kernel_eigenmodel(make_kernel(5e-6), 3);
    CHECK(clipped.component_count() == 1); // the dent is clipped away
    CHECK(clipped.eigenvalues()[0] == doctest::Approx(10.0).epsilon(1e-9));

    CHECK_THROWS_AS(kernel_eigenmodel(make_kernel(0.5), 3), NumericalError);
}

TEST_CASE("kernel_eigenmodel recovers a single-source spectrum") {
    ShapeModel model = toy_model(1, 5, 31);
    BlockKernel kernel = BlockKernel::from_model(model);
    EigenmodelInfo info;
    ShapeModel eigen = kernel_eigenmodel(kernel, 5, &info);
    REQUIRE(eigen.component_count() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(eigen.eigenvalues()[i] ==
              doctest::Approx(model.eigenvalues()[i]).epsilon(1e-6));
        CHECK(std::abs(std::abs(eigen.basis().col(i).dot(model.basis().col(i))) - 1.0) < 1e-6);
    }

    CHECK_THROWS_AS(kernel_eigenmodel(kernel, 0), ValidationError);

    SUBCASE("rank truncation is reported") {
        ShapeModel big = kernel_eigenmodel(kernel, 50, &info);
        CHECK(info.kept == 5);
        CHECK(info.requested == 50);
        CHECK(big.component_count() == 5);
    }
}

TEST_CASE("low-rank assembly equals the dense route") {
    FusionFixture f = centroid_fixture(1, 5, 41);
    BlockKernel kernel = build_fused_kernel(f.head, f.face, f.tmpl, f.reg, f.weights);
    ShapeModel dense_route = kernel_eigenmodel(kernel, 6);
    ShapeModel factor_route =
        fused_eigenmodel_lowrank(f.head, f.face, f.tmpl, f.reg, f.weights, 6);

    REQUIRE(dense_route.component_count() == factor_route.component_count());
    for (int i = 0; i < dense_route.component_count(); ++i)
        CHECK(factor_route.eigenvalues()[i] ==
              doctest::Approx(dense_route.eigenvalues()[i]).epsilon(1e-8));
    // Compare the truncated covariances (basis sign/ties insensitive).
    const Eigen::MatrixXd ka = oracle::dense_covariance(dense_route);
    const Eigen::MatrixXd kb = oracle::dense_covariance(factor_route);
    CHECK((ka - kb).norm() / ka.norm() < 1e-8);
}

TEST_CASE("sample_gpmm") {
    ShapeModel model = toy_model(1, 4, 51);
    BlockKernel kernel = BlockKernel::from_model(model);
    ShapeModel eigen = kernel_eigenmodel(kernel, 4);

    SUBCASE("zero coefficients give the template") {
        TriMesh t = sample_instance(eigen, Eigen::VectorXd::Zero(eigen.component_count()));
        CHECK((t.flat() - eigen.mean()).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("fixed seed reproducibility") {
        TriMesh a = sample_gpmm(eigen, 99);
        TriMesh b = sample_gpmm(eigen, 99);
        CHECK((a.vertices() - b.vertices()).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("sample covariance converges to the truncated kernel") {
        const int draws = 10000;
        const Eigen::Index dim = 3 * eigen.vertex_count();
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd mean_acc = Eigen::VectorXd::Zero(dim);
        for (int k = 0; k < draws; ++k) {
            const Eigen::VectorXd d = sample_gpmm(eigen, 1000 + k).flat() - eigen.mean();
            acc += d * d.transpose();
            mean_acc += d;
        }
        mean_acc /= draws;
        const Eigen::MatrixXd cov =
            acc / (draws - 1) - mean_acc * mean_acc.transpose() * draws / (draws - 1.0);
        const Eigen::MatrixXd expected = oracle::dense_covariance(eigen);
        CHECK((cov - expected).norm() / expected.norm() < 0.10);
    }
}
