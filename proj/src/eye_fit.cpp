#include "headfuse/eye_fit.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include <Eigen/Dense>

#include "headfuse/errors.hpp"
#include "headfuse/model_io.hpp"

namespace headfuse {

void EyeRegionModel::validate() const {
    if (eyelid_vertices.size() != eyelid_landmark_count)
        throw ValidationError("eye region model needs exactly 17 eyelid vertices");
    for (auto v : eyelid_vertices)
        if (v >= static_cast<std::uint32_t>(shape.vertex_count()))
            throw ValidationError("eyelid vertex id out of range");
}

void EyeBallModel::validate() const {
    const int n = mean.vertex_count();
    if (pupil_blendshape.size() != 3 * n)
        throw ValidationError("pupil blendshape length must be 3 x eyeball vertex count");
    if (iris_vertices.size() != iris_landmark_count)
        throw ValidationError("eyeball model needs exactly 16 iris vertices");
    for (auto v : iris_vertices)
        if (v >= static_cast<std::uint32_t>(n))
            throw ValidationError("iris vertex id out of range");
    if (texture_mean.size() != 3 * n || texture_basis.rows() != 3 * n ||
        texture_basis.cols() != texture_eigenvalues.size())
        throw ValidationError("eyeball texture model dimensions are inconsistent");
    for (auto v : texture_vertices)
        if (v >= static_cast<std::uint32_t>(n))
            throw ValidationError("texture vertex id out of range");
    if (!(pupil_variance > 0)) throw ValidationError("pupil variance must be positive");
}

VertexMatrix EyeBallModel::shape_at(double pupil) const {
    VertexMatrix v = mean.vertices();
    for (int i = 0; i < v.rows(); ++i)
        v.row(i) += pupil * pupil_blendshape.segment<3>(3 * i).transpose();
    return v;
}

void FitWeights::validate() const {
    for (double w : {iris, texture, region_reg, pupil_reg, texture_reg})
        if (w < 0 || std::isnan(w)) throw ValidationError("fit weights must be nonnegative");
}

namespace {

Eigen::Quaterniond apply_tangent(const Eigen::Quaterniond& q, const Vec3& omega) {
    const double angle = omega.norm();
    if (angle == 0) return q.normalized();
    return (q * Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle))).normalized();
}

Eigen::Matrix3d skew(const Vec3& v) {
    Eigen::Matrix3d s;
    s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return s;
}

struct FitState {
    Eigen::VectorXd p_el;
    double p_eye = 0;
    Eigen::Quaterniond gaze = Eigen::Quaterniond::Identity();
    Eigen::VectorXd lambda;
};

struct ParamLayout {
    bool region_active = true;
    bool eyeball_active = true; ///< pupil + gaze
    bool texture_active = false;
    int m_region = 0;
    int m_texture = 0;

    int total() const {
        return (region_active ? m_region : 0) + (eyeball_active ? 4 : 0) +
               (texture_active ? m_texture : 0);
    }
    int region_offset() const { return 0; }
    int eyeball_offset() const { return region_active ? m_region : 0; }
    int texture_offset() const { return eyeball_offset() + (eyeball_active ? 4 : 0); }
};

} // namespace

EyeFitResult fit_eye(const EyeRegionModel& region, const EyeBallModel& eyeball,
                     const CameraModel& camera, const std::vector<Vec2>& eyelid_landmarks,
                     const std::vector<Vec2>& iris_landmarks, const Raster* image,
                     const FitWeights& weights, const EyeFitOptions& options) {
    region.validate();
    eyeball.validate();
    weights.validate();
    camera.validate();
    if (eyelid_landmarks.size() != eyelid_landmark_count ||
        iris_landmarks.size() != iris_landmark_count)
        throw ValidationError("fit_eye needs 17 eyelid and 16 iris landmarks");

    ParamLayout layout;
    layout.m_region = region.shape.component_count();
    layout.m_texture = eyeball.texture_components();
    layout.region_active = !std::isinf(weights.region_reg);
    layout.eyeball_active = !std::isinf(weights.pupil_reg);
    const bool texture_on = image != nullptr && weights.texture > 0;
    layout.texture_active = texture_on && !std::isinf(weights.texture_reg);

    FitState state;
    state.p_el = Eigen::VectorXd::Zero(layout.m_region);
    state.lambda = Eigen::VectorXd::Zero(layout.m_texture);

    const Eigen::Matrix3d r_head = camera.rotation.normalized().toRotationMatrix();
    const int n_tex = texture_on ? static_cast<int>(eyeball.texture_vertices.size()) : 0;
    const int n_res = 2 * eyelid_landmark_count + 2 * iris_landmark_count + 3 * n_tex +
                      layout.m_region + 1 + layout.m_texture;

    const double sqrt_iris = std::sqrt(weights.iris);
    const double sqrt_tex = std::sqrt(weights.texture);
    const double sqrt_reg_el = std::isinf(weights.region_reg) ? 0 : std::sqrt(weights.region_reg);
    const double sqrt_reg_eye = std::isinf(weights.pupil_reg) ? 0 : std::sqrt(weights.pupil_reg);
    const double sqrt_reg_tex =
        std::isinf(weights.texture_reg) ? 0 : std::sqrt(weights.texture_reg);
    const Eigen::VectorXd inv_sigma_el = region.shape.eigenvalues().cwiseSqrt().cwiseInverse();
    const Eigen::VectorXd inv_sigma_tex =
        eyeball.texture_eigenvalues.cwiseSqrt().cwiseInverse();

    // Residuals and (optionally) the Jacobian over active parameters.
    auto evaluate = [&](const FitState& s, Eigen::VectorXd& r, Eigen::MatrixXd* jac) -> bool {
        r.setZero(n_res);
        if (jac) jac->setZero(n_res, layout.total());
        const Eigen::Matrix3d r_gaze = s.gaze.toRotationMatrix();
        int row = 0;

        // Eyelid landmark block.
        for (int k = 0; k < eyelid_landmark_count; ++k) {
            const int v = static_cast<int>(region.eyelid_vertices[k]);
            const Vec3 x = region.shape.mean().segment<3>(3 * v) +
                           region.shape.basis().middleRows(3 * v, 3) * s.p_el;
            const Vec3 pc = r_head * x + camera.translation;
            if (!(pc.z() > 0)) return false;
            const Vec2 uv(camera.focal * pc.x() / pc.z() + camera.principal.x(),
                          camera.focal * pc.y() / pc.z() + camera.principal.y());
            r.segment<2>(row) = uv - eyelid_landmarks[k];
            if (jac && layout.region_active) {
                const Eigen::Matrix<double, 2, 3> dpi = projection_jacobian(camera, pc);
                jac->block(row, layout.region_offset(), 2, layout.m_region) =
                    dpi * r_head * region.shape.basis().middleRows(3 * v, 3);
            }
            row += 2;
        }

        // Iris landmark block.
        for (int k = 0; k < iris_landmark_count; ++k) {
            const int v = static_cast<int>(eyeball.iris_vertices[k]);
            const Vec3 s_eye = eyeball.mean.vertex(v) +
                               s.p_eye * eyeball.pupil_blendshape.segment<3>(3 * v);
            const Vec3 local = s_eye - eyeball.rotation_center;
            const Vec3 x = eyeball.rotation_center + r_gaze * local;
            const Vec3 pc = r_head * x + camera.translation;
            if (!(pc.z() > 0)) return false;
            const Vec2 uv(camera.focal * pc.x() / pc.z() + camera.principal.x(),
                          camera.focal * pc.y() / pc.z() + camera.principal.y());
            r.segment<2>(row) = sqrt_iris * (uv - iris_landmarks[k]);
            if (jac && layout.eyeball_active) {
                const Eigen::Matrix<double, 2, 3> dpi = projection_jacobian(camera, pc);
                const Eigen::Matrix<double, 2, 3> base = sqrt_iris * dpi * r_head;
                jac->block<2, 1>(row, layout.eyeball_offset()) =
                    base * (r_gaze * eyeball.pupil_blendshape.segment<3>(3 * v));
                jac->block<2, 3>(row, layout.eyeball_offset() + 1) =
                    base * (r_gaze * (-skew(local)));
            }
            row += 2;
        }

        // Texture block: image sampled at projected texture vertices.
        if (texture_on) {
            for (int k = 0; k < n_tex; ++k) {
                const int v = static_cast<int>(eyeball.texture_vertices[k]);
                const Vec3 s_eye = eyeball.mean.vertex(v) +
                                   s.p_eye * eyeball.pupil_blendshape.segment<3>(3 * v);
                const Vec3 local = s_eye - eyeball.rotation_center;
                const Vec3 x = eyeball.rotation_center + r_gaze * local;
                const Vec3 pc = r_head * x + camera.translation;
                if (!(pc.z() > 0)) return false;
                const Vec2 uv(camera.focal * pc.x() / pc.z() + camera.principal.x(),
                              camera.focal * pc.y() / pc.z() + camera.principal.y());
                const Vec3 model_color = eyeball.texture_mean.segment<3>(3 * v) +
                                         eyeball.texture_basis.middleRows(3 * v, 3) * s.lambda;
                r.segment<3>(row) = sqrt_tex * (image->sample(uv) - model_color);
                if (jac) {
                    const Eigen::Matrix<double, 3, 2> dimg = image->sample_gradient(uv);
                    const Eigen::Matrix<double, 2, 3> dpi = projection_jacobian(camera, pc);
                    const Eigen::Matrix3d chain = sqrt_tex * dimg * dpi * r_head;
                    if (layout.eyeball_active) {
                        jac->block<3, 1>(row, layout.eyeball_offset()) =
                            chain * (r_gaze * eyeball.pupil_blendshape.segment<3>(3 * v));
                        jac->block<3, 3>(row, layout.eyeball_offset() + 1) =
                            chain * (r_gaze * (-skew(local)));
                    }
                    if (layout.texture_active)
                        jac->block(row, layout.texture_offset(), 3, layout.m_texture) =
                            -sqrt_tex * eyeball.texture_basis.middleRows(3 * v, 3);
                }
                row += 3;
            }
        }

        // Tikhonov blocks.
        for (int i = 0; i < layout.m_region; ++i) {
            r[row] = sqrt_reg_el * inv_sigma_el[i] * s.p_el[i];
            if (jac && layout.region_active)
                (*jac)(row, layout.region_offset() + i) = sqrt_reg_el * inv_sigma_el[i];
            ++row;
        }
        r[row] = sqrt_reg_eye * s.p_eye / std::sqrt(eyeball.pupil_variance);
        if (jac && layout.eyeball_active)
            (*jac)(row, layout.eyeball_offset()) = sqrt_reg_eye / std::sqrt(eyeball.pupil_variance);
        ++row;
        for (int i = 0; i < layout.m_texture; ++i) {
            r[row] = sqrt_reg_tex * inv_sigma_tex[i] * s.lambda[i];
            if (jac && layout.texture_active)
                (*jac)(row, layout.texture_offset() + i) = sqrt_reg_tex * inv_sigma_tex[i];
            ++row;
        }
        return r.allFinite();
    };

    auto apply_delta = [&](const FitState& s, const Eigen::VectorXd& delta) {
        FitState out = s;
        if (layout.region_active)
            out.p_el = s.p_el + delta.segment(layout.region_offset(), layout.m_region);
        if (layout.eyeball_active) {
            out.p_eye = s.p_eye + delta[layout.eyeball_offset()];
            out.gaze = apply_tangent(s.gaze, delta.segment<3>(layout.eyeball_offset() + 1));
        }
        if (layout.texture_active)
            out.lambda = s.lambda + delta.segment(layout.texture_offset(), layout.m_texture);
        return out;
    };

    Eigen::VectorXd r;
    if (!evaluate(state, r, nullptr))
        throw NumericalError("fit_eye: non-finite cost at the initial state");
    double cost = r.squaredNorm();

    EyeFitResult result;
    result.cost_log.push_back(cost);

    double mu = 1e-4;
    int failed_streak = 0;
    int iter = 0;
    for (; iter < options.max_iterations; ++iter) {
        if (layout.total() == 0) break; // everything frozen
        Eigen::MatrixXd jac;
        Eigen::VectorXd r_now;
        if (!evaluate(state, r_now, &jac))
            throw NumericalError("fit_eye: non-finite cost during iteration");
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r_now;

        bool accepted = false;
        double rel = 0;
        for (int attempt = 0; attempt < 10; ++attempt) {
            Eigen::MatrixXd damped = jtj;
            damped.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::VectorXd delta = damped.ldlt().solve(-g);
            const FitState trial = apply_delta(state, delta);
            Eigen::VectorXd r_trial;
            if (evaluate(trial, r_trial, nullptr)) {
                const double cost_trial = r_trial.squaredNorm();
                if (cost_trial <= cost) {
                    rel = (cost - cost_trial) / std::max(cost, 1e-300);
                    state = trial;
                    cost = cost_trial;
                    result.cost_log.push_back(cost);
                    mu = std::max(mu / 3, 1e-12);
                    accepted = true;
                    break;
                }
            }
            mu *= 10;
        }
        if (!accepted) {
            if (++failed_streak >= 3)
                throw NumericalError("fit_eye: diverged (3 consecutive rejected damped steps)");
            continue;
        }
        failed_streak = 0;
        if (rel < options.tolerance) {
            result.converged = true;
            ++iter;
            break;
        }
    }

    result.region_params = state.p_el;
    result.pupil = state.p_eye;
    result.gaze = state.gaze;
    result.texture_params = state.lambda;
    result.cost = cost;
    result.iterations = iter;
    if (options.max_iterations == 0) result.converged = false;

    // Final per-term landmark residuals for reporting.
    Eigen::VectorXd r_final;
    evaluate(state, r_final, nullptr);
    result.eyelid_rms_px =
        std::sqrt(r_final.head(2 * eyelid_landmark_count).squaredNorm() / eyelid_landmark_count);
    const auto iris_seg = r_final.segment(2 * eyelid_landmark_count, 2 * iris_landmark_count);
    result.iris_rms_px = std::sqrt(iris_seg.squaredNorm() /
                                   std::max(weights.iris, 1e-300) / iris_landmark_count);
    return result;
}

std::vector<Vec3> synth_eye_texture(const EyeBallModel& model, const Eigen::VectorXd& lambda) {
    if (lambda.size() != model.texture_components())
        throw ValidationError("texture coefficient length mismatch");
    const Eigen::VectorXd t = model.texture_mean + model.texture_basis * lambda;
    std::vector<Vec3> out(model.mean.vertex_count());
    for (std::size_t v = 0; v < out.size(); ++v) {
        const Vec3 c = t.segment<3>(3 * v);
        out[v] = c.cwiseMax(0.0).cwiseMin(1.0);
    }
    return out;
}

Eigen::VectorXd project_eye_texture(const EyeBallModel& model, const std::vector<Vec3>& colors) {
    if (colors.size() != static_cast<std::size_t>(model.mean.vertex_count()))
        throw ValidationError("texture color count mismatch");
    Eigen::VectorXd t(3 * colors.size());
    for (std::size_t v = 0; v < colors.size(); ++v) t.segment<3>(3 * v) = colors[v];
    return model.texture_basis.transpose() * (t - model.texture_mean);
}

namespace {

constexpr char eyeball_magic[4] = {'H', 'F', 'E', 'B'};

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T get(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("truncated eyeball container");
    return v;
}
void put_vec(std::ostream& out, const Eigen::VectorXd& v) {
    put(out, static_cast<std::uint64_t>(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}
Eigen::VectorXd get_vec(std::istream& in) {
    const auto n = get<std::uint64_t>(in);
    Eigen::VectorXd v(n);
    in.read(reinterpret_cast<char*>(v.data()), n * sizeof(double));
    if (!in) throw IoError("truncated eyeball container");
    return v;
}
void put_mesh(std::ostream& out, const TriMesh& m) {
    put(out, static_cast<std::uint64_t>(m.vertex_count()));
    put(out, static_cast<std::uint64_t>(m.triangle_count()));
    out.write(reinterpret_cast<const char*>(m.vertices().data()),
              3 * m.vertex_count() * sizeof(double));
    for (const auto& t : m.triangles())
        out.write(reinterpret_cast<const char*>(t.data()), 3 * sizeof(std::uint32_t));
}
TriMesh get_mesh(std::istream& in) {
    const auto nv = get<std::uint64_t>(in);
    const auto nt = get<std::uint64_t>(in);
    VertexMatrix v(nv, 3);
    in.read(reinterpret_cast<char*>(v.data()), 3 * nv * sizeof(double));
    std::vector<Triangle> tris(nt);
    for (auto& t : tris) in.read(reinterpret_cast<char*>(t.data()), 3 * sizeof(std::uint32_t));
    if (!in) throw IoError("truncated eyeball container");
    return TriMesh(std::move(v), std::move(tris));
}
void put_ids(std::ostream& out, const std::vector<std::uint32_t>& ids) {
    put(out, static_cast<std::uint64_t>(ids.size()));
    out.write(reinterpret_cast<const char*>(ids.data()), ids.size() * sizeof(std::uint32_t));
}
std::vector<std::uint32_t> get_ids(std::istream& in) {
    const auto n = get<std::uint64_t>(in);
    std::vector<std::uint32_t> ids(n);
    in.read(reinterpret_cast<char*>(ids.data()), n * sizeof(std::uint32_t));
    if (!in) throw IoError("truncated eyeball container");
    return ids;
}

} // namespace

void write_eyeball(const EyeBallModel& model, const std::filesystem::path& path) {
    model.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(eyeball_magic, 4);
    put(out, static_cast<std::uint32_t>(1));
    put_mesh(out, model.mean);
    put_vec(out, model.pupil_blendshape);
    put(out, model.pupil_variance);
    put_mesh(out, model.lens);
    put_ids(out, model.iris_vertices);
    put_vec(out, model.texture_mean);
    put(out, static_cast<std::uint64_t>(model.texture_basis.cols()));
    out.write(reinterpret_cast<const char*>(model.texture_basis.data()),
              model.texture_basis.size() * sizeof(double));
    put_vec(out, model.texture_eigenvalues);
    put_ids(out, model.texture_vertices);
    out.write(reinterpret_cast<const char*>(model.rotation_center.data()), 3 * sizeof(double));
    if (!out) throw IoError("failed writing " + path.string());
}

EyeBallModel read_eyeball(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, eyeball_magic, 4) != 0)
        throw IoError("not an eyeball container: " + path.string());
    if (get<std::uint32_t>(in) != 1) throw IoError("unsupported eyeball container version");
    EyeBallModel m;
    m.mean = get_mesh(in);
    m.pupil_blendshape = get_vec(in);
    m.pupil_variance = get<double>(in);
    m.lens = get_mesh(in);
    m.iris_vertices = get_ids(in);
    m.texture_mean = get_vec(in);
    const auto tc = get<std::uint64_t>(in);
    m.texture_basis.resize(m.texture_mean.size(), tc);
    in.read(reinterpret_cast<char*>(m.texture_basis.data()),
            m.texture_basis.size() * sizeof(double));
    m.texture_eigenvalues = get_vec(in);
    m.texture_vertices = get_ids(in);
    in.read(reinterpret_cast<char*>(m.rotation_center.data()), 3 * sizeof(double));
    if (!in) throw IoError("truncated eyeball container");
    m.validate();
    return m;
}

void write_eye_region(const EyeRegionModel& model, const std::filesystem::path& path) {
    model.validate();
    ShapeModel annotated = model.shape;
    for (int k = 0; k < eyelid_landmark_count; ++k) {
        char name[8];
        std::snprintf(name, sizeof name, "lid%02d", k);
        annotated.metadata().landmark_indices[name] = model.eyelid_vertices[k];
    }
    write_model(annotated, path);
}

EyeRegionModel read_eye_region(const std::filesystem::path& path) {
    EyeRegionModel m;
    m.shape = read_model(path);
    m.eyelid_vertices.resize(eyelid_landmark_count);
    for (int k = 0; k < eyelid_landmark_count; ++k) {
        char name[8];
        std::snprintf(name, sizeof name, "lid%02d", k);
        auto it = m.shape.metadata().landmark_indices.find(name);
        if (it == m.shape.metadata().landmark_indices.end())
            throw IoError("eye region container is missing eyelid vertex " + std::string(name));
        m.eyelid_vertices[k] = it->second;
    }
    m.validate();
    return m;
}

void write_camera(const CameraModel& camera, const std::filesystem::path& path) {
    nlohmann::json j;
    j["focal"] = camera.focal;
    j["translation"] = {camera.translation.x(), camera.translation.y(), camera.translation.z()};
    j["rotation"] = {camera.rotation.w(), camera.rotation.x(), camera.rotation.y(),
                     camera.rotation.z()};
    j["principal"] = {camera.principal.x(), camera.principal.y()};
    j["eye_rotation"] = {camera.eye_rotation.w(), camera.eye_rotation.x(),
                         camera.eye_rotation.y(), camera.eye_rotation.z()};
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
}

CameraModel read_camera(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        CameraModel c;
        c.focal = j.at("focal").get<double>();
        const auto& t = j.at("translation");
        c.translation = Vec3(t[0], t[1], t[2]);
        const auto& q = j.at("rotation");
        c.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized();
        if (j.contains("principal"))
            c.principal = Vec2(j["principal"][0], j["principal"][1]);
        if (j.contains("eye_rotation")) {
            const auto& e = j["eye_rotation"];
            c.eye_rotation = Eigen::Quaterniond(e[0], e[1], e[2], e[3]).normalized();
        }
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad camera JSON in " + path.string() + ": " + e.what());
    }
}

} // namespace headfuse
