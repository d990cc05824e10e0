#include "headfuse/mesh_io.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode) {
    std::ifstream in(path, mode);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
    std::ofstream out(path, mode);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

// Index of an OBJ face token ("7", "7/2", "7//3"), converted to 0-based.
std::uint32_t obj_face_index(const std::string& token, std::size_t vertex_count) {
    const std::string first = token.substr(0, token.find('/'));
    const long v = std::stol(first);
    long idx = v > 0 ? v - 1 : static_cast<long>(vertex_count) + v;
    if (idx < 0 || idx >= static_cast<long>(vertex_count))
        throw IoError("OBJ face index out of range: " + token);
    return static_cast<std::uint32_t>(idx);
}

} // namespace

TriMesh read_obj(const std::filesystem::path& path) {
    auto in = open_in(path, std::ios::in);
    std::vector<Vec3> verts, colors;
    std::vector<Triangle> tris;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            double x, y, z;
            if (!(ss >> x >> y >> z)) throw IoError("malformed OBJ vertex line");
            verts.emplace_back(x, y, z);
            double r, g, b;
            if (ss >> r >> g >> b) colors.emplace_back(r, g, b);
        } else if (tag == "f") {
            std::vector<std::uint32_t> idx;
            std::string tok;
            while (ss >> tok) idx.push_back(obj_face_index(tok, verts.size()));
            if (idx.size() < 3) throw IoError("OBJ face with fewer than 3 vertices");
            for (std::size_t k = 1; k + 1 < idx.size(); ++k)
                tris.push_back({idx[0], idx[k], idx[k + 1]});
        }
    }
    if (!colors.empty() && colors.size() != verts.size())
        throw IoError("OBJ vertex colors present on only some vertices");
    VertexMatrix v(verts.size(), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) v.row(i) = verts[i].transpose();
    return TriMesh(std::move(v), std::move(tris), std::move(colors));
}

void write_obj(const TriMesh& mesh, const std::filesystem::path& path) {
    auto out = open_out(path, std::ios::out);
    char buf[256];
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        const Vec3 p = mesh.vertex(i);
        if (mesh.has_colors()) {
            const Vec3& c = mesh.colors()[i];
            std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g %.17g %.17g %.17g\n",
                          p.x(), p.y(), p.z(), c.x(), c.y(), c.z());
        } else {
            std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", p.x(), p.y(), p.z());
        }
        out << buf;
    }
    for (const auto& t : mesh.triangles())
        out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

namespace {

struct PlyProperty {
    std::string type;
    std::string name;
    bool is_list = false;
    std::string count_type, item_type;
};

std::size_t scalar_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
        t == "float32")
        return 4;
    if (t == "double" || t == "float64" || t == "int64" || t == "uint64") return 8;
    throw IoError("unsupported PLY scalar type: " + t);
}

double read_scalar(std::istream& in, const std::string& type) {
    unsigned char raw[8];
    in.read(reinterpret_cast<char*>(raw), scalar_size(type));
    if (!in) throw IoError("truncated PLY payload");
    // Little-endian host assumed; containers are declared little-endian.
    if (type == "float" || type == "float32") {
        float f;
        std::memcpy(&f, raw, 4);
        return f;
    }
    if (type == "double" || type == "float64") {
        double d;
        std::memcpy(&d, raw, 8);
        return d;
    }
    if (type == "uchar" || type == "uint8") return raw[0];
    if (type == "char" || type == "int8") return static_cast<signed char>(raw[0]);
    if (type == "ushort" || type == "uint16") {
        std::uint16_t v;
        std::memcpy(&v, raw, 2);
        return v;
    }
    if (type == "short" || type == "int16") {
        std::int16_t v;
        std::memcpy(&v, raw, 2);
        return v;
    }
    if (type == "uint" || type == "uint32") {
        std::uint32_t v;
        std::memcpy(&v, raw, 4);
        return v;
    }
    if (type == "int" || type == "int32") {
        std::int32_t v;
        std::memcpy(&v, raw, 4);
        return v;
    }
    throw IoError("unsupported PLY scalar type: " + type);
}

} // namespace

TriMesh read_ply(const std::filesystem::path& path) {
    auto in = open_in(path, std::ios::in | std::ios::binary);
    std::string line;
    std::getline(in, line);
    if (line.rfind("ply", 0) != 0) throw IoError("not a PLY file: " + path.string());

    struct Element {
        std::string name;
        std::size_t count = 0;
        std::vector<PlyProperty> props;
    };
    std::vector<Element> elements;
    bool little_endian = false;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "comment" || tag == "obj_info") continue;
        if (tag == "format") {
            std::string fmt;
            ss >> fmt;
            little_endian = (fmt == "binary_little_endian");
            if (!little_endian) throw IoError("only binary_little_endian PLY is supported");
        } else if (tag == "element") {
            Element e;
            ss >> e.name >> e.count;
            elements.push_back(e);
        } else if (tag == "property") {
            if (elements.empty()) throw IoError("PLY property before element");
            PlyProperty p;
            ss >> p.type;
            if (p.type == "list") {
                p.is_list = true;
                ss >> p.count_type >> p.item_type >> p.name;
            } else {
                ss >> p.name;
            }
            elements.back().props.push_back(p);
        } else if (tag == "end_header") {
            break;
        }
    }

    std::vector<Vec3> verts, colors;
    std::vector<Triangle> tris;
    bool has_color = false;
    for (const auto& e : elements) {
        if (e.name == "vertex") {
            for (const auto& p : e.props)
                if (p.name == "red") has_color = true;
            for (std::size_t i = 0; i < e.count; ++i) {
                Vec3 v = Vec3::Zero(), c = Vec3::Zero();
                for (const auto& p : e.props) {
                    const double val = read_scalar(in, p.type);
                    if (p.name == "x") v.x() = val;
                    else if (p.name == "y") v.y() = val;
                    else if (p.name == "z") v.z() = val;
                    else if (p.name == "red") c.x() = val / 255.0;
                    else if (p.name == "green") c.y() = val / 255.0;
                    else if (p.name == "blue") c.z() = val / 255.0;
                }
                verts.push_back(v);
                if (has_color) colors.push_back(c);
            }
        } else if (e.name == "face") {
            for (std::size_t i = 0; i < e.count; ++i) {
                for (const auto& p : e.props) {
                    if (!p.is_list) {
                        read_scalar(in, p.type);
                        continue;
                    }
                    const auto n = static_cast<std::size_t>(read_scalar(in, p.count_type));
                    std::vector<std::uint32_t> idx(n);
                    for (auto& v : idx)
                        v = static_cast<std::uint32_t>(read_scalar(in, p.item_type));
                    for (std::size_t k = 1; k + 1 < idx.size(); ++k)
                        tris.push_back({idx[0], idx[k], idx[k + 1]});
                }
            }
        } else {
            // Skip unknown fixed-size elements.
            std::size_t row = 0;
            for (const auto& p : e.props) {
                if (p.is_list) throw IoError("unsupported list property in element " + e.name);
                row += scalar_size(p.type);
            }
            in.seekg(static_cast<std::streamoff>(row * e.count), std::ios::cur);
        }
    }
    VertexMatrix v(verts.size(), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) v.row(i) = verts[i].transpose();
    return TriMesh(std::move(v), std::move(tris), std::move(colors));
}

void write_ply(const TriMesh& mesh, const std::filesystem::path& path) {
    auto out = open_out(path, std::ios::out | std::ios::binary);
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << mesh.vertex_count() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    if (mesh.has_colors())
        out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element face " << mesh.triangle_count() << "\n";
    out << "property list uchar int vertex_indices\n";
    out << "end_header\n";
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        const float xyz[3] = {static_cast<float>(mesh.vertices()(i, 0)),
                              static_cast<float>(mesh.vertices()(i, 1)),
                              static_cast<float>(mesh.vertices()(i, 2))};
        out.write(reinterpret_cast<const char*>(xyz), sizeof xyz);
        if (mesh.has_colors()) {
            const Vec3& c = mesh.colors()[i];
            const unsigned char rgb[3] = {
                static_cast<unsigned char>(std::clamp(c.x(), 0.0, 1.0) * 255.0 + 0.5),
                static_cast<unsigned char>(std::clamp(c.y(), 0.0, 1.0) * 255.0 + 0.5),
                static_cast<unsigned char>(std::clamp(c.z(), 0.0, 1.0) * 255.0 + 0.5)};
            out.write(reinterpret_cast<const char*>(rgb), sizeof rgb);
        }
    }
    for (const auto& t : mesh.triangles()) {
        const unsigned char n = 3;
        out.write(reinterpret_cast<const char*>(&n), 1);
        const std::int32_t idx[3] = {static_cast<std::int32_t>(t[0]),
                                     static_cast<std::int32_t>(t[1]),
                                     static_cast<std::int32_t>(t[2])};
        out.write(reinterpret_cast<const char*>(idx), sizeof idx);
    }
    if (!out) throw IoError("failed writing " + path.string());
}

TriMesh read_mesh(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".obj") return read_obj(path);
    if (ext == ".ply") return read_ply(path);
    throw IoError("unknown mesh extension: " + path.string());
}

void write_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".obj") return write_obj(mesh, path);
    if (ext == ".ply") return write_ply(mesh, path);
    throw IoError("unknown mesh extension: " + path.string());
}

LandmarkSet read_landmarks(const std::filesystem::path& path) {
    auto in = open_in(path, std::ios::in);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad landmark JSON in " + path.string() + ": " + e.what());
    }
    LandmarkSet lm;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "indices") {
            for (auto jt = it->begin(); jt != it->end(); ++jt)
                lm.set_index(jt.key(), jt->get<std::uint32_t>());
            continue;
        }
        const auto& arr = it.value();
        if (!arr.is_array() || (arr.size() != 2 && arr.size() != 3))
            throw IoError("landmark " + it.key() + " must be [x,y] or [x,y,z]");
        if (arr.size() == 3)
            lm.set3(it.key(), Vec3(arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>()));
        else
            lm.set2(it.key(), Vec2(arr[0].get<double>(), arr[1].get<double>()));
    }
    return lm;
}

void write_landmarks(const LandmarkSet& landmarks, const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, p] : landmarks.points3()) j[name] = {p.x(), p.y(), p.z()};
    for (const auto& [name, p] : landmarks.points2()) j[name] = {p.x(), p.y()};
    if (!landmarks.indices().empty()) {
        nlohmann::json idx = nlohmann::json::object();
        for (const auto& [name, i] : landmarks.indices()) idx[name] = i;
        j["indices"] = idx;
    }
    auto out = open_out(path, std::ios::out);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

} // namespace headfuse
