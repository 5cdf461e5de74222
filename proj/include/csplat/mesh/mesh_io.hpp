#pragma once

#include <string>

#include "csplat/mesh/marching.hpp"

namespace csplat {

enum class MeshFormat { kObj, kPly };

MeshFormat mesh_format_from_string(const std::string& name);

// OBJ is ASCII; PLY is binary little-endian with 32-bit float vertices (the
// round trip is bit-exact on the float data).
void save_mesh(const TriMesh& mesh, const std::string& path, MeshFormat format);
TriMesh load_mesh(const std::string& path);  // dispatches on extension

}  // namespace csplat
