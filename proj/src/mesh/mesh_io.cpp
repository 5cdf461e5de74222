#include "csplat/mesh/mesh_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace csplat {

MeshFormat mesh_format_from_string(const std::string& name) {
    if (name == "obj") return MeshFormat::kObj;
    if (name == "ply") return MeshFormat::kPly;
    throw std::invalid_argument("unknown mesh format: " + name);
}

namespace {

void save_obj(const TriMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for write");
    char buf[128];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
        out << buf;
    }
    for (const auto& t : mesh.triangles) {
        std::snprintf(buf, sizeof(buf), "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
        out << buf;
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

void save_mesh_ply(const TriMesh& mesh, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for write");
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "element face " << mesh.triangles.size() << "\n";
    out << "property list uchar uint vertex_indices\n";
    out << "end_header\n";
    for (const Vec3& v : mesh.vertices) {
        const float xyz[3] = {static_cast<float>(v.x), static_cast<float>(v.y),
                              static_cast<float>(v.z)};
        out.write(reinterpret_cast<const char*>(xyz), 12);
    }
    for (const auto& t : mesh.triangles) {
        const uint8_t count = 3;
        out.write(reinterpret_cast<const char*>(&count), 1);
        out.write(reinterpret_cast<const char*>(t.data()), 12);
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

TriMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    TriMesh mesh;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "v") {
            Vec3 v;
            ls >> v.x >> v.y >> v.z;
            mesh.vertices.push_back(v);
        } else if (tok == "f") {
            std::array<uint32_t, 3> tri{};
            for (int k = 0; k < 3; ++k) {
                std::string corner;
                ls >> corner;
                tri[static_cast<std::size_t>(k)] =
                    static_cast<uint32_t>(std::stoul(corner.substr(0, corner.find('/')))) - 1;
            }
            mesh.triangles.push_back(tri);
        }
    }
    return mesh;
}

TriMesh load_mesh_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    std::string line;
    if (!std::getline(in, line) || line != "ply") throw std::runtime_error(path + ": not a PLY");
    std::size_t n_vertices = 0, n_faces = 0;
    int vertex_props = 0;
    bool in_vertex = false;
    bool binary_le = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (tok == "element") {
            std::string name;
            std::size_t count;
            ls >> name >> count;
            in_vertex = name == "vertex";
            if (in_vertex)
                n_vertices = count;
            else if (name == "face")
                n_faces = count;
        } else if (tok == "property") {
            if (in_vertex) {
                std::string type;
                ls >> type;
                if (type != "list") ++vertex_props;
            }
        } else if (tok == "end_header") {
            break;
        }
    }
    if (!binary_le) throw std::runtime_error(path + ": binary_little_endian required");
    if (vertex_props < 3) throw std::runtime_error(path + ": need x,y,z vertex properties");
    TriMesh mesh;
    mesh.vertices.resize(n_vertices);
    std::vector<float> row(static_cast<std::size_t>(vertex_props));
    for (std::size_t i = 0; i < n_vertices; ++i) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * 4));
        mesh.vertices[i] = {row[0], row[1], row[2]};
    }
    mesh.triangles.resize(n_faces);
    for (std::size_t i = 0; i < n_faces; ++i) {
        uint8_t count = 0;
        in.read(reinterpret_cast<char*>(&count), 1);
        if (count != 3) throw std::runtime_error(path + ": only triangle faces supported");
        in.read(reinterpret_cast<char*>(mesh.triangles[i].data()), 12);
    }
    if (!in) throw std::runtime_error(path + ": truncated");
    return mesh;
}

}  // namespace

void save_mesh(const TriMesh& mesh, const std::string& path, MeshFormat format) {
    if (format == MeshFormat::kObj)
        save_obj(mesh, path);
    else
        save_mesh_ply(mesh, path);
}

TriMesh load_mesh(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".obj" || ext == ".OBJ") return load_obj(path);
    return load_mesh_ply(path);
}

}  // namespace csplat
