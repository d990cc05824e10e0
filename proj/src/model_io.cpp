#include "headfuse/model_io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

constexpr char model_magic[4] = {'H', 'F', 'M', 'C'};
constexpr char matrix_magic[4] = {'H', 'F', 'M', 'X'};
constexpr std::uint32_t container_version = 1;

template <typename T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_raw(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("truncated container");
    return v;
}

void write_doubles(std::ostream& out, const double* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), n * sizeof(double));
}

void read_doubles(std::istream& in, double* p, std::size_t n) {
    in.read(reinterpret_cast<char*>(p), n * sizeof(double));
    if (!in) throw IoError("truncated container payload");
}

} // namespace

void write_model(const ShapeModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(model_magic, 4);
    write_raw(out, container_version);
    write_raw(out, static_cast<std::uint64_t>(model.vertex_count()));
    write_raw(out, static_cast<std::uint64_t>(model.component_count()));
    write_raw(out, static_cast<std::uint64_t>(model.topology().size()));
    write_doubles(out, model.mean().data(), model.mean().size());
    write_doubles(out, model.eigenvalues().data(), model.eigenvalues().size());
    write_doubles(out, model.basis().data(), static_cast<std::size_t>(model.basis().size()));
    for (const auto& t : model.topology())
        out.write(reinterpret_cast<const char*>(t.data()), 3 * sizeof(std::uint32_t));
    if (!out) throw IoError("failed writing " + path.string());

    const auto& meta = model.metadata();
    nlohmann::json j;
    j["name"] = meta.name;
    j["scale_convention"] = meta.scale_convention;
    j["eigenvalue_convention"] = meta.eigenvalue_convention;
    j["mirror_axis"] = meta.mirror_axis;
    j["vertex_count"] = model.vertex_count();
    j["component_count"] = model.component_count();
    nlohmann::json lm = nlohmann::json::object();
    for (const auto& [name, idx] : meta.landmark_indices) lm[name] = idx;
    j["landmark_indices"] = lm;
    std::ofstream side(path.string() + ".json");
    if (!side) throw IoError("cannot open sidecar for writing: " + path.string() + ".json");
    side << j.dump(2) << '\n';
}

ShapeModel read_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, model_magic, 4) != 0)
        throw IoError("not a model container: " + path.string());
    const auto version = read_raw<std::uint32_t>(in);
    if (version != container_version)
        throw IoError("unsupported container version " + std::to_string(version));
    const auto n_vertices = read_raw<std::uint64_t>(in);
    const auto n_components = read_raw<std::uint64_t>(in);
    const auto n_triangles = read_raw<std::uint64_t>(in);

    Eigen::VectorXd mean(3 * n_vertices);
    read_doubles(in, mean.data(), mean.size());
    Eigen::VectorXd eigenvalues(n_components);
    read_doubles(in, eigenvalues.data(), eigenvalues.size());
    Eigen::MatrixXd basis(3 * n_vertices, n_components);
    read_doubles(in, basis.data(), static_cast<std::size_t>(basis.size()));
    std::vector<Triangle> topology(n_triangles);
    for (auto& t : topology) {
        in.read(reinterpret_cast<char*>(t.data()), 3 * sizeof(std::uint32_t));
        if (!in) throw IoError("truncated topology");
    }

    ModelMetadata meta;
    std::ifstream side(path.string() + ".json");
    if (side) {
        nlohmann::json j;
        try {
            side >> j;
            meta.name = j.value("name", "");
            meta.scale_convention = j.value("scale_convention", "millimetres");
            meta.eigenvalue_convention = j.value("eigenvalue_convention", "variance");
            meta.mirror_axis = j.value("mirror_axis", 0);
            if (j.contains("landmark_indices"))
                for (auto it = j["landmark_indices"].begin(); it != j["landmark_indices"].end(); ++it)
                    meta.landmark_indices[it.key()] = it->get<std::uint32_t>();
        } catch (const nlohmann::json::exception& e) {
            throw IoError("bad sidecar JSON for " + path.string() + ": " + e.what());
        }
    }
    return ShapeModel(std::move(mean), std::move(basis), std::move(eigenvalues),
                      std::move(topology), std::move(meta));
}

void write_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(matrix_magic, 4);
    write_raw(out, container_version);
    write_raw(out, static_cast<std::uint64_t>(m.rows()));
    write_raw(out, static_cast<std::uint64_t>(m.cols()));
    write_doubles(out, m.data(), static_cast<std::size_t>(m.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, matrix_magic, 4) != 0)
        throw IoError("not a matrix container: " + path.string());
    const auto version = read_raw<std::uint32_t>(in);
    if (version != container_version)
        throw IoError("unsupported container version " + std::to_string(version));
    const auto rows = read_raw<std::uint64_t>(in);
    const auto cols = read_raw<std::uint64_t>(in);
    Eigen::MatrixXd m(rows, cols);
    read_doubles(in, m.data(), static_cast<std::size_t>(m.size()));
    return m;
}

} // namespace headfuse
