#include "headfuse/kernel_fusion.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "headfuse/errors.hpp"
#include "headfuse/rng.hpp"

namespace headfuse {

BlendWeights face_head_blend_weights(const TriMesh& template_mesh,
                                     const std::vector<char>& face_mask, int nose_tip_index) {
    const int n = template_mesh.vertex_count();
    if (face_mask.size() != static_cast<std::size_t>(n))
        throw ValidationError("face mask size does not match template");
    if (nose_tip_index < 0 || nose_tip_index >= n)
        throw ValidationError("nose tip index out of range");
    if (!face_mask[nose_tip_index])
        throw ValidationError("nose tip must lie inside the face region");

    const Vec3 nose = template_mesh.vertex(nose_tip_index);
    Eigen::VectorXd dist(n);
    for (int i = 0; i < n; ++i) dist[i] = (template_mesh.vertex(i) - nose).norm();

    double dmax = 0;
    bool any = false;
    for (int i = 0; i < n; ++i) {
        if (face_mask[i]) {
            dmax = std::max(dmax, dist[i]);
            any = true;
        }
    }
    if (!any) throw ValidationError("face region is empty");
    const double dmin = dist.minCoeff(); // zero, the nose tip is a template point

    BlendWeights w;
    w.nose_tip_index = nose_tip_index;
    w.min_distance = dmin;
    w.max_distance = dmax;
    if (dmax <= dmin) throw NumericalError("degenerate face region (single point)");
    w.rho = ((dist.array() - dmin) / (dmax - dmin)).cwiseMin(1.0).cwiseMax(0.0);
    return w;
}

void KernelRegistration::validate(int point_count) const {
    const auto n = static_cast<std::size_t>(point_count);
    if (head_anchors.size() != n)
        throw ValidationError("registration is missing head anchors");
    if (face_mask.size() != n)
        throw ValidationError("registration face mask has wrong size");
    if (face_anchors.size() != n)
        throw ValidationError("registration face anchors have wrong size");
    for (std::size_t i = 0; i < n; ++i) {
        head_anchors[i].validate();
        if (face_mask[i]) face_anchors[i].validate();
    }
}

KernelRegistration register_template(const TriMesh& template_mesh, const TriMesh& head_mean,
                                     const TriMesh& face_mean, double coverage_tol) {
    KernelRegistration reg;
    reg.head_anchors = anchor_points(template_mesh, head_mean);
    reg.face_anchors.resize(template_mesh.vertex_count());
    reg.face_mask.assign(template_mesh.vertex_count(), 0);
    const SurfaceTree face_tree(face_mean);
    for (int i = 0; i < template_mesh.vertex_count(); ++i) {
        const auto hit = face_tree.closest(template_mesh.vertex(i));
        if (hit.distance <= coverage_tol) {
            reg.face_mask[i] = 1;
            reg.face_anchors[i].triangle = static_cast<std::uint32_t>(hit.triangle);
            reg.face_anchors[i].coords = hit.bary;
        }
    }
    return reg;
}

BlockKernel build_fused_kernel(const ShapeModel& head, const ShapeModel& face,
                               const TriMesh& template_mesh,
                               const KernelRegistration& registration,
                               const BlendWeights& weights) {
    const int n = template_mesh.vertex_count();
    registration.validate(n);
    if (weights.rho.size() != n)
        throw ValidationError("blend weight field does not match template");

    const ModelCovariance cov_head(head);
    const ModelCovariance cov_face(face);
    const TriMesh head_surface = head.mean_mesh();
    const TriMesh face_surface = face.mean_mesh();

    std::vector<RegionLabel> labels(n, RegionLabel::Head);
    for (int i = 0; i < n; ++i)
        if (registration.face_mask[i]) labels[i] = RegionLabel::Face;
    BlockKernel kernel(template_mesh, labels);

    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            const Eigen::Matrix3d kh = blend_local_block(
                registration.head_anchors[i], registration.head_anchors[j], cov_head,
                head_surface);
            if (registration.face_mask[i] && registration.face_mask[j]) {
                const Eigen::Matrix3d kf = blend_local_block(
                    registration.face_anchors[i], registration.face_anchors[j], cov_face,
                    face_surface);
                const double rho = 0.5 * (weights.rho[i] + weights.rho[j]);
                kernel.set_block(i, j, rho * kh + (1.0 - rho) * kf);
            } else {
                kernel.set_block(i, j, kh);
            }
        }
    }
    return kernel;
}

namespace {

ShapeModel eigenmodel_from_dense(const Eigen::MatrixXd& dense, const TriMesh& reference,
                                 double trace, int keep, EigenmodelInfo* info) {
    if (keep <= 0) throw ValidationError("eigenmodel needs keep >= 1");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense);
    if (eig.info() != Eigen::Success)
        throw NumericalError("kernel eigendecomposition failed");

    // Ascending order from Eigen; view it reversed.
    const Eigen::VectorXd& vals = eig.eigenvalues();
    double negative_mass = 0;
    for (Eigen::Index i = 0; i < vals.size(); ++i)
        if (vals[i] < 0) negative_mass += -vals[i];
    if (negative_mass > 1e-6 * std::max(trace, 1e-300))
        throw NumericalError("kernel is not PSD within tolerance (negative mass " +
                             std::to_string(negative_mass) + ")");

    const double floor = 1e-12 * std::max(trace, 0.0) / std::max<double>(1, vals.size());
    int kept = 0;
    for (Eigen::Index i = vals.size() - 1; i >= 0 && kept < keep; --i) {
        if (vals[i] <= floor) break;
        ++kept;
    }
    if (kept == 0) throw NumericalError("kernel has no positive eigenvalues");

    Eigen::VectorXd lambda(kept);
    Eigen::MatrixXd basis(dense.rows(), kept);
    for (int c = 0; c < kept; ++c) {
        lambda[c] = vals[vals.size() - 1 - c];
        basis.col(c) = eig.eigenvectors().col(vals.size() - 1 - c);
        int imax;
        basis.col(c).cwiseAbs().maxCoeff(&imax);
        if (basis(imax, c) < 0) basis.col(c) = -basis.col(c);
    }
    if (info) {
        info->requested = keep;
        info->kept = kept;
        info->negative_mass = negative_mass;
    }
    ModelMetadata meta;
    meta.name = "kernel-eigenmodel";
    return ShapeModel(reference.flat(), std::move(basis), std::move(lambda),
                      reference.triangles(), std::move(meta));
}

} // namespace

ShapeModel kernel_eigenmodel(const BlockKernel& kernel, int keep, EigenmodelInfo* info) {
    return eigenmodel_from_dense(kernel.dense(), kernel.reference(), kernel.trace(), keep, info);
}

double kernel_min_eigenvalue(const BlockKernel& kernel) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kernel.dense(),
                                                       Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

namespace {

/// Barycentric row-interpolation operators of a source model's sqrt-scaled
/// basis at the anchor points: P rows are the anchored interpolation, S rows
/// the corner average (the 1/3 absorbs the blend denominator).
void anchored_factors(const ModelCovariance& cov, const TriMesh& surface,
                      const std::vector<BarycentricAnchor>& anchors,
                      const std::vector<char>* mask, Eigen::MatrixXd& p, Eigen::MatrixXd& s) {
    const auto n = static_cast<int>(anchors.size());
    const auto& b = cov.scaled_basis();
    p.setZero(3 * n, b.cols());
    s.setZero(3 * n, b.cols());
    for (int i = 0; i < n; ++i) {
        if (mask && !(*mask)[i]) continue;
        const Triangle& t = surface.triangles()[anchors[i].triangle];
        for (int v = 0; v < 3; ++v) {
            p.middleRows(3 * i, 3) += anchors[i].coords[v] * b.middleRows(3 * t[v], 3);
            s.middleRows(3 * i, 3) += (1.0 / 3.0) * b.middleRows(3 * t[v], 3);
        }
    }
}

void scale_rows(Eigen::MatrixXd& m, const Eigen::VectorXd& per_point) {
    for (Eigen::Index i = 0; i < per_point.size(); ++i)
        m.middleRows(3 * i, 3) *= per_point[i];
}

} // namespace

ShapeModel fused_eigenmodel_lowrank(const ShapeModel& head, const ShapeModel& face,
                                    const TriMesh& template_mesh,
                                    const KernelRegistration& registration,
                                    const BlendWeights& weights, int keep) {
    const int n = template_mesh.vertex_count();
    registration.validate(n);

    const ModelCovariance cov_head(head);
    const ModelCovariance cov_face(face);
    const TriMesh head_surface = head.mean_mesh();
    const TriMesh face_surface = face.mean_mesh();

    // Blockwise the fused kernel is
    //   K = Bh + Xi Xj (rho_ij - 1) (Bh - Bf)
    // with Bh/Bf the barycentric blends 0.5 (P S^T + S P^T) and
    // rho_ij - 1 = 0.5((rho_i - 1) + (rho_j - 1)). Both the mask product and
    // the average split into per-point row scalings, so K is a short sum of
    // symmetrized low-rank terms T(X, Y) = 0.5 (X Y^T + Y X^T).
    Eigen::MatrixXd ph, sh, pf, sf;
    anchored_factors(cov_head, head_surface, registration.head_anchors, nullptr, ph, sh);
    anchored_factors(cov_face, face_surface, registration.face_anchors, &registration.face_mask,
                     pf, sf);

    Eigen::VectorXd chi(n), chi_r(n);
    for (int i = 0; i < n; ++i) {
        chi[i] = registration.face_mask[i] ? 1.0 : 0.0;
        chi_r[i] = chi[i] * (weights.rho[i] - 1.0);
    }

    struct Term {
        Eigen::MatrixXd x, y;
        double coeff;
    };
    std::vector<Term> terms;
    terms.push_back({ph, sh, 1.0}); // Bh

    auto masked = [&](const Eigen::MatrixXd& m, const Eigen::VectorXd& d) {
        Eigen::MatrixXd out = m;
        scale_rows(out, d);
        return out;
    };
    // + 0.5 (D_a Bh D_b + D_b Bh D_a) with a = chi_r, b = chi:
    terms.push_back({masked(ph, chi_r), masked(sh, chi), 0.5});
    terms.push_back({masked(sh, chi_r), masked(ph, chi), 0.5});
    // - 0.5 (D_a Bf D_b + D_b Bf D_a):
    terms.push_back({masked(pf, chi_r), masked(sf, chi), -0.5});
    terms.push_back({masked(sf, chi_r), masked(pf, chi), -0.5});

    Eigen::Index cols = 0;
    for (const auto& t : terms) cols += t.x.cols() + t.y.cols();
    Eigen::MatrixXd f(3 * n, cols);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(cols, cols);
    Eigen::Index at = 0;
    for (const auto& t : terms) {
        const Eigen::Index cx = t.x.cols(), cy = t.y.cols();
        f.middleCols(at, cx) = t.x;
        f.middleCols(at + cx, cy) = t.y;
        g.block(at, at + cx, cx, cy) =
            0.5 * t.coeff * Eigen::MatrixXd::Identity(cx, cy);
        g.block(at + cx, at, cy, cx) =
            0.5 * t.coeff * Eigen::MatrixXd::Identity(cy, cx);
        at += cx + cy;
    }

    // K = F G F^T; compress through a thin QR of F and decompose the small
    // symmetric core.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(f);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(3 * n, cols);
    const Eigen::MatrixXd r = q.transpose() * f;
    const Eigen::MatrixXd core = r * g * r.transpose();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
        0.5 * (core + core.transpose()));
    const Eigen::VectorXd& vals = eig.eigenvalues();
    const double trace = vals.cwiseMax(0.0).sum();

    double negative_mass = 0;
    for (Eigen::Index i = 0; i < vals.size(); ++i)
        if (vals[i] < 0) negative_mass += -vals[i];
    if (negative_mass > 1e-6 * std::max(trace, 1e-300))
        throw NumericalError("fused kernel (factor space) is not PSD within tolerance");

    const double floor = 1e-12 * trace / std::max<double>(1, vals.size());
    int kept = 0;
    for (Eigen::Index i = vals.size() - 1; i >= 0 && kept < keep; --i) {
        if (vals[i] <= floor) break;
        ++kept;
    }
    if (kept == 0) throw NumericalError("fused kernel has no positive eigenvalues");

    Eigen::VectorXd lambda(kept);
    Eigen::MatrixXd basis(3 * n, kept);
    for (int c = 0; c < kept; ++c) {
        const Eigen::Index src = vals.size() - 1 - c;
        lambda[c] = vals[src];
        basis.col(c) = q * eig.eigenvectors().col(src);
        int imax;
        basis.col(c).cwiseAbs().maxCoeff(&imax);
        if (basis(imax, c) < 0) basis.col(c) = -basis.col(c);
    }
    ModelMetadata meta;
    meta.name = "kernel-eigenmodel";
    return ShapeModel(template_mesh.flat(), std::move(basis), std::move(lambda),
                      template_mesh.triangles(), std::move(meta));
}

TriMesh sample_gpmm(const ShapeModel& eigenmodel, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::VectorXd p(eigenmodel.component_count());
    for (Eigen::Index i = 0; i < p.size(); ++i)
        p[i] = std::sqrt(eigenmodel.eigenvalues()[i]) * rng.normal();
    return sample_instance(eigenmodel, p);
}

TriMesh sample_gpmm(const BlockKernel& kernel, int keep, std::uint64_t seed) {
    return sample_gpmm(kernel_eigenmodel(kernel, keep), seed);
}

} // namespace headfuse
