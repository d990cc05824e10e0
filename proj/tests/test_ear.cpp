#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "headfuse/ear.hpp"
#include "headfuse/errors.hpp"
#include "headfuse/kernel_fusion.hpp"
#include "headfuse/rng.hpp"
#include "headfuse/synthetic.hpp"
#include "oracles.hpp"

using namespace headfuse;

namespace {

synth::SyntheticFamily ear_family(std::uint64_t seed, int latent_dim = 4) {
    synth::SyntheticFamilySpec spec;
    spec.kind = synth::FamilyKind::ToyEar;
    spec.latent_dim = latent_dim;
    spec.sample_count = 0;
    spec.seed = seed;
    return synth::synth_family(spec);
}

} // namespace

TEST_CASE("mirror_model") {
    auto fam = ear_family(3);
    const ShapeModel& model = fam.whole_model;

    SUBCASE("mirror is an involution") {
        ShapeModel twice = mirror_model(mirror_model(model));
        CHECK((twice.mean() - model.mean()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((twice.basis() - model.basis()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((twice.eigenvalues() - model.eigenvalues()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(twice.topology() == model.topology());
    }
    SUBCASE("eigenvalues are untouched") {
        ShapeModel m = mirror_model(model);
        CHECK((m.eigenvalues() - model.eigenvalues()).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("sampling commutes with reflection") {
        ShapeModel m = mirror_model(model);
        Rng rng(9);
        for (int rep = 0; rep < 5; ++rep) {
            const Eigen::VectorXd p = rng.normal_vector(model.eigenvalues());
            const TriMesh direct = sample_instance(m, p);
            TriMesh reflected = sample_instance(model, p);
            VertexMatrix v = reflected.vertices();
            v.col(0) = -v.col(0);
            CHECK((direct.vertices() - v).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    SUBCASE("winding flip preserves orientation of the reflected surface") {
        ShapeModel m = mirror_model(model);
        const Triangle& t0 = model.topology()[0];
        const Triangle& t1 = m.topology()[0];
        CHECK(t1[0] == t0[0]);
        CHECK(t1[1] == t0[2]);
        CHECK(t1[2] == t0[1]);
    }
}

TEST_CASE("unwrap_ear") {
    auto fam = ear_family(5);
    const TriMesh ear = fam.whole_model.mean_mesh();

    EarUnwrap unwrap = unwrap_ear(ear, fam.canal_vertex, fam.base_loop);

    SUBCASE("canal maps to radius zero") {
        CHECK(unwrap.radius[fam.canal_vertex] == 0.0);
    }
    SUBCASE("base loop maps to radius one within 5%") {
        for (auto v : fam.base_loop) {
            CHECK(unwrap.radius[v] <= 1.0);
            // Pre-clamp spread: measure against the raw embedding.
            const double raw = (unwrap.uv.row(v) - unwrap.uv.row(fam.canal_vertex)).norm();
            double base_mean = 0;
            for (auto w : fam.base_loop)
                base_mean += (unwrap.uv.row(w) - unwrap.uv.row(fam.canal_vertex)).norm();
            base_mean /= fam.base_loop.size();
            CHECK(std::abs(raw / base_mean - 1.0) < 0.05);
        }
    }
    SUBCASE("radii are normalized to [0, 1] with max exactly 1") {
        CHECK(unwrap.radius.minCoeff() == 0.0);
        CHECK(unwrap.radius.maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("embedding is injective (no flipped triangles)") {
        CHECK(flipped_triangle_count(unwrap, ear) == 0);
    }
    SUBCASE("non-disk topology is rejected") {
        TriMesh sphere = synth::make_icosphere(0);
        CHECK_THROWS_AS(unwrap_ear(sphere, 0, {}), ValidationError);

        // Wrong loop: skip a boundary vertex.
        std::vector<std::uint32_t> bad(fam.base_loop.begin(), fam.base_loop.end() - 1);
        CHECK_THROWS_AS(unwrap_ear(ear, fam.canal_vertex, bad), ValidationError);
    }
    SUBCASE("boundary canal vertex is rejected") {
        CHECK_THROWS_AS(unwrap_ear(ear, static_cast<int>(fam.base_loop[0]), fam.base_loop),
                        ValidationError);
    }
}

namespace {

struct EarFusionFixture {
    BlockKernel kernel;        ///< toy head kernel, 12 points
    ShapeModel ear;            ///< toy ear model
    EarUnwrap unwrap;
    EarRegistration registration;
    std::vector<int> region;   ///< template ids in the ear region
};

EarFusionFixture make_ear_fixture(std::uint64_t seed) {
    // Toy head: 12-vertex icosphere model kernel.
    TriMesh head = synth::make_icosphere(0, Vec3(50, 50, 55));
    Eigen::MatrixXd basis = synth::smooth_deformation_basis(head, 3, seed);
    Eigen::VectorXd ev(3);
    ev << 9, 5, 2;
    ShapeModel head_model(head.flat(), basis, ev, head.triangles());

    EarFusionFixture f{BlockKernel::from_model(head_model), ShapeModel{}, {}, {}, {}};

    // Toy ear family; register the +x-side template points onto the ear mean
    // by closest point after moving the ear next to that side.
    auto fam = ear_family(seed + 1);
    f.ear = fam.whole_model;
    TriMesh ear_mean = f.ear.mean_mesh();
    f.unwrap = unwrap_ear(ear_mean, fam.canal_vertex, fam.base_loop);

    // Place the ear at the +x pole of the head.
    VertexMatrix moved = ear_mean.vertices();
    Eigen::Matrix3d rot;
    rot << 0, 0, 1, 0, 1, 0, -1, 0, 0; // z -> x
    moved = moved * rot.transpose();
    moved.rowwise() += Eigen::RowVector3d(50, 0, 0);
    TriMesh placed = ear_mean.with_vertices(std::move(moved));
    // The ear model must live on the placed geometry for anchors to make
    // sense; rebuild with the moved mean (basis rows rotate with it).
    Eigen::MatrixXd rotated_basis = f.ear.basis();
    for (int v = 0; v < placed.vertex_count(); ++v)
        rotated_basis.middleRows(3 * v, 3) = rot * rotated_basis.middleRows(3 * v, 3);
    f.ear = ShapeModel(placed.flat(), rotated_basis, f.ear.eigenvalues(), placed.triangles());

    for (int i = 0; i < head.vertex_count(); ++i)
        if (head.vertex(i).x() > 20) f.region.push_back(i);
    REQUIRE(f.region.size() >= 2);
    f.registration.region_points = f.region;
    TriMesh probes = [&] {
        VertexMatrix v(f.region.size(), 3);
        for (std::size_t i = 0; i < f.region.size(); ++i) v.row(i) = head.vertices().row(f.region[i]);
        return TriMesh(v, {});
    }();
    f.registration.anchors = anchor_points(probes, placed);
    return f;
}

} // namespace

TEST_CASE("fuse_ear_kernel") {
    EarFusionFixture f = make_ear_fixture(11);
    const BlockKernel before = f.kernel;
    BlockKernel fused = fuse_ear_kernel(f.kernel, f.ear, RegionLabel::RightEar, f.unwrap,
                                        f.registration);

    SUBCASE("matches the brute-force blending rule") {
        const Eigen::MatrixXd ear_dense = oracle::dense_covariance(f.ear);
        const TriMesh ear_surface = f.ear.mean_mesh();
        for (std::size_t a = 0; a < f.region.size(); ++a) {
            for (std::size_t b = a; b < f.region.size(); ++b) {
                const auto& ai = f.registration.anchors[a];
                const auto& aj = f.registration.anchors[b];
                const Eigen::Matrix3d ear_block = oracle::blend_block_bruteforce(
                    ear_dense, ear_surface.triangles(), {ai.triangle, ai.coords},
                    {aj.triangle, aj.coords});
                auto rho_at = [&](const BarycentricAnchor& anchor) {
                    const Triangle& t = ear_surface.triangles()[anchor.triangle];
                    return anchor.coords[0] * f.unwrap.radius[t[0]] +
                           anchor.coords[1] * f.unwrap.radius[t[1]] +
                           anchor.coords[2] * f.unwrap.radius[t[2]];
                };
                const double r = 0.5 * (rho_at(ai) + rho_at(aj));
                const Eigen::Matrix3d expected =
                    r * before.block(f.region[a], f.region[b]) + (1 - r) * ear_block;
                CHECK((fused.block(f.region[a], f.region[b]) - expected).cwiseAbs().maxCoeff() <
                      1e-10);
            }
        }
    }
    SUBCASE("blocks outside the ear region are bit-identical") {
        auto in_region = [&](int i) {
            return std::find(f.region.begin(), f.region.end(), i) != f.region.end();
        };
        int untouched = 0;
        for (int i = 0; i < before.point_count(); ++i) {
            for (int j = i; j < before.point_count(); ++j) {
                if (in_region(i) && in_region(j)) continue;
                ++untouched;
                CHECK(before.block(i, j) == fused.block(i, j));
            }
        }
        CHECK(untouched > 0);
    }
    SUBCASE("region labels are updated") {
        for (int i : f.region) CHECK(fused.labels()[i] == RegionLabel::RightEar);
    }
}

TEST_CASE("ear fusion endpoints and independence") {
    EarFusionFixture f = make_ear_fixture(13);

    SUBCASE("rho = 0 takes the pure ear blend") {
        // Force the canal radius field to zero over the region.
        EarUnwrap zero = f.unwrap;
        zero.radius.setZero();
        BlockKernel fused =
            fuse_ear_kernel(f.kernel, f.ear, RegionLabel::RightEar, zero, f.registration);
        const ModelCovariance cov(f.ear);
        const TriMesh surface = f.ear.mean_mesh();
        for (std::size_t a = 0; a < f.region.size(); ++a) {
            const Eigen::Matrix3d expected = blend_local_block(
                f.registration.anchors[a], f.registration.anchors[a], cov, surface);
            CHECK((fused.block(f.region[a], f.region[a]) - expected).cwiseAbs().maxCoeff() <
                  1e-12);
        }
    }
    SUBCASE("rho = 1 keeps the head kernel") {
        EarUnwrap one = f.unwrap;
        one.radius.setOnes();
        BlockKernel fused =
            fuse_ear_kernel(f.kernel, f.ear, RegionLabel::RightEar, one, f.registration);
        for (std::size_t a = 0; a < f.region.size(); ++a)
            for (std::size_t b = a; b < f.region.size(); ++b)
                CHECK((fused.block(f.region[a], f.region[b]) -
                       f.kernel.block(f.region[a], f.region[b]))
                          .cwiseAbs()
                          .maxCoeff() < 1e-12);
    }
    SUBCASE("fusing one side leaves the other side untouched") {
        // Mirror the fixture region to the -x side for a fake left ear.
        EarFusionFixture g = make_ear_fixture(13);
        std::vector<int> left_region;
        const TriMesh& head_ref = g.kernel.reference();
        for (int i = 0; i < head_ref.vertex_count(); ++i)
            if (head_ref.vertex(i).x() < -20) left_region.push_back(i);
        BlockKernel fused = fuse_ear_kernel(g.kernel, g.ear, RegionLabel::RightEar, g.unwrap,
                                            g.registration);
        for (int i : left_region)
            for (int j : left_region)
                CHECK(g.kernel.block(i, j) == fused.block(i, j));
    }
    SUBCASE("fused marginal at a rho=0 point equals the ear-blend marginal") {
        EarUnwrap zero = f.unwrap;
        zero.radius.setZero();
        BlockKernel fused =
            fuse_ear_kernel(f.kernel, f.ear, RegionLabel::RightEar, zero, f.registration);
        const ModelCovariance cov(f.ear);
        const TriMesh surface = f.ear.mean_mesh();
        const Eigen::Matrix3d ear_marginal = blend_local_block(
            f.registration.anchors[0], f.registration.anchors[0], cov, surface);
        CHECK(std::abs(fused.block(f.region[0], f.region[0]).trace() - ear_marginal.trace()) <
              1e-6);
    }
}
