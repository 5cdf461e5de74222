#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "csplat/mesh/field.hpp"

namespace csplat {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<uint32_t, 3>> triangles;
    std::vector<Vec3> normals;  // optional, empty unless computed
};

// Marching tetrahedra over a uniform lattice (6 tets per cube, Kuhn split,
// face-consistent across neighbors). Each sign-crossing edge is refined by
// `refine_iters` bisection steps of the opacity field; vertices on shared
// edges merge exactly. Triangles are wound with the outward (decreasing
// field) orientation.
TriMesh extract_mesh(const GaussianCloud& cloud, int grid_resolution, double iso,
                     int refine_iters);

// True when every edge is shared by exactly two triangles (closed surface).
bool is_watertight(const TriMesh& mesh);

double mesh_area(const TriMesh& mesh);

}  // namespace csplat
