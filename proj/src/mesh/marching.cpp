#include "csplat/mesh/marching.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "csplat/core/parallel.hpp"

namespace csplat {

namespace {

// Kuhn split: six tetrahedra around the 0-7 main diagonal. Cube corners are
// indexed x + 2y + 4z. Opposite faces of adjacent cubes get the same
// diagonal, so the decomposition is face-to-face consistent.
constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7},
                             {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};

struct SlabOutput {
    // vertices keyed by lattice edge so shared edges merge exactly
    std::vector<std::pair<uint64_t, Vec3>> vertices;  // key -> position
    std::vector<std::array<uint64_t, 3>> triangles;   // edge keys
};

uint64_t corner_id(int x, int y, int z, int n) {
    return (static_cast<uint64_t>(z) * n + y) * n + x;
}

uint64_t edge_key(uint64_t a, uint64_t b, uint64_t corner_count) {
    const uint64_t lo = std::min(a, b), hi = std::max(a, b);
    return lo * corner_count + hi;
}

}  // namespace

TriMesh extract_mesh(const GaussianCloud& cloud, int grid_resolution, double iso,
                     int refine_iters) {
    TriMesh mesh;
    if (cloud.empty()) return mesh;
    if (grid_resolution < 1) throw std::invalid_argument("extract_mesh: resolution must be >= 1");

    const OpacityField field(cloud);
    const Vec3 lo = field.bounds_min();
    const Vec3 hi = field.bounds_max();
    const int res = grid_resolution;
    const int n = res + 1;  // corner lattice
    const Vec3 cell{(hi.x - lo.x) / res, (hi.y - lo.y) / res, (hi.z - lo.z) / res};

    auto corner_pos = [&](int x, int y, int z) {
        return Vec3{lo.x + cell.x * x, lo.y + cell.y * y, lo.z + cell.z * z};
    };

    // field values on the lattice (gaussian-centric scatter)
    std::vector<double> values;
    field.fill_lattice(lo, cell, n, values);

    const uint64_t corner_count = static_cast<uint64_t>(n) * n * n;
    auto refine_edge = [&](uint64_t ida, uint64_t idb, const std::vector<uint32_t>& candidates) {
        // decode lattice coordinates
        auto decode = [&](uint64_t id) {
            const int x = static_cast<int>(id % static_cast<uint64_t>(n));
            const int y = static_cast<int>((id / static_cast<uint64_t>(n)) % static_cast<uint64_t>(n));
            const int z = static_cast<int>(id / (static_cast<uint64_t>(n) * n));
            return corner_pos(x, y, z);
        };
        Vec3 pa = decode(ida), pb = decode(idb);
        bool inside_a = values[ida] > iso;
        for (int it = 0; it < refine_iters; ++it) {
            const Vec3 mid = (pa + pb) * 0.5;
            const bool inside_mid = field.eval_candidates(mid, candidates) > iso;
            if (inside_mid == inside_a) {
                pa = mid;
            } else {
                pb = mid;
            }
        }
        return (pa + pb) * 0.5;
    };

    std::vector<SlabOutput> slabs(static_cast<std::size_t>(res));
    parallel_for(static_cast<std::size_t>(res), [&](std::size_t z0, std::size_t z1) {
        std::vector<uint32_t> candidates;
        for (std::size_t zs = z0; zs < z1; ++zs) {
            SlabOutput& slab = slabs[zs];
            std::map<uint64_t, Vec3> local_vertices;
            const int z = static_cast<int>(zs);
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x) {
                    uint64_t ids[8];
                    double vals[8];
                    bool inside[8];
                    bool any_in = false, any_out = false;
                    for (int c = 0; c < 8; ++c) {
                        const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
                        ids[c] = corner_id(x + dx, y + dy, z + dz, n);
                        vals[c] = values[ids[c]];
                        inside[c] = vals[c] > iso;
                        (inside[c] ? any_in : any_out) = true;
                    }
                    if (!any_in || !any_out) continue;
                    // one candidate gather serves every bisection in this cube
                    field.collect_box(corner_pos(x, y, z), corner_pos(x + 1, y + 1, z + 1),
                                      candidates);
                    for (const auto& tet : kTets) {
                        int in_corners[4], out_corners[4];
                        int n_in = 0, n_out = 0;
                        for (int k = 0; k < 4; ++k) {
                            if (inside[tet[k]])
                                in_corners[n_in++] = tet[k];
                            else
                                out_corners[n_out++] = tet[k];
                        }
                        if (n_in == 0 || n_in == 4) continue;

                        auto vertex_on = [&](int ca, int cb) {
                            const uint64_t key = edge_key(ids[ca], ids[cb], corner_count);
                            auto it = local_vertices.find(key);
                            if (it == local_vertices.end())
                                it = local_vertices
                                         .emplace(key, refine_edge(ids[ca], ids[cb], candidates))
                                         .first;
                            return key;
                        };
                        auto position_of = [&](uint64_t key) { return local_vertices.at(key); };

                        // outward reference: from the inside centroid toward
                        // the outside centroid
                        Vec3 cin, cout;
                        for (int k = 0; k < n_in; ++k) {
                            const int c = in_corners[k];
                            cin += corner_pos(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
                        }
                        for (int k = 0; k < n_out; ++k) {
                            const int c = out_corners[k];
                            cout += corner_pos(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
                        }
                        const Vec3 outward = cout / n_out - cin / n_in;

                        auto emit = [&](uint64_t a, uint64_t b, uint64_t c) {
                            const Vec3 pa = position_of(a), pb = position_of(b), pc = position_of(c);
                            const Vec3 nrm = cross(pb - pa, pc - pa);
                            if (dot(nrm, outward) >= 0.0)
                                slab.triangles.push_back({a, b, c});
                            else
                                slab.triangles.push_back({a, c, b});
                        };

                        if (n_in == 1) {
                            const int a = in_corners[0];
                            emit(vertex_on(a, out_corners[0]), vertex_on(a, out_corners[1]),
                                 vertex_on(a, out_corners[2]));
                        } else if (n_in == 3) {
                            const int d = out_corners[0];
                            emit(vertex_on(in_corners[0], d), vertex_on(in_corners[1], d),
                                 vertex_on(in_corners[2], d));
                        } else {  // 2-2 split: quad in cyclic order AC, AD, BD, BC
                            const int a = in_corners[0], b = in_corners[1];
                            const int c = out_corners[0], d = out_corners[1];
                            const uint64_t vac = vertex_on(a, c);
                            const uint64_t vad = vertex_on(a, d);
                            const uint64_t vbd = vertex_on(b, d);
                            const uint64_t vbc = vertex_on(b, c);
                            emit(vac, vad, vbd);
                            emit(vac, vbd, vbc);
                        }
                    }
                }
            slab.vertices.assign(local_vertices.begin(), local_vertices.end());
        }
    });

    // merge in slab order; identical edge keys produce identical positions
    std::map<uint64_t, uint32_t> index_of;
    for (const SlabOutput& slab : slabs) {
        std::map<uint64_t, Vec3> pos;
        for (const auto& [key, p] : slab.vertices) pos.emplace(key, p);
        for (const auto& tri : slab.triangles) {
            std::array<uint32_t, 3> idx{};
            for (int k = 0; k < 3; ++k) {
                auto it = index_of.find(tri[static_cast<std::size_t>(k)]);
                if (it == index_of.end()) {
                    it = index_of
                             .emplace(tri[static_cast<std::size_t>(k)],
                                      static_cast<uint32_t>(mesh.vertices.size()))
                             .first;
                    mesh.vertices.push_back(pos.at(tri[static_cast<std::size_t>(k)]));
                }
                idx[static_cast<std::size_t>(k)] = it->second;
            }
            const Vec3& pa = mesh.vertices[idx[0]];
            const Vec3& pb = mesh.vertices[idx[1]];
            const Vec3& pc = mesh.vertices[idx[2]];
            if (idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2]) continue;
            if (0.5 * norm(cross(pb - pa, pc - pa)) <= 1e-12) continue;  // degenerate
            mesh.triangles.push_back(idx);
        }
    }
    return mesh;
}

bool is_watertight(const TriMesh& mesh) {
    if (mesh.triangles.empty()) return false;
    std::map<std::pair<uint32_t, uint32_t>, int> edge_count;
    for (const auto& tri : mesh.triangles)
        for (int k = 0; k < 3; ++k) {
            const uint32_t a = tri[static_cast<std::size_t>(k)];
            const uint32_t b = tri[static_cast<std::size_t>((k + 1) % 3)];
            ++edge_count[{std::min(a, b), std::max(a, b)}];
        }
    for (const auto& [edge, count] : edge_count)
        if (count != 2) return false;
    return true;
}

double mesh_area(const TriMesh& mesh) {
    double area = 0.0;
    for (const auto& tri : mesh.triangles)
        area += 0.5 * norm(cross(mesh.vertices[tri[1]] - mesh.vertices[tri[0]],
                                 mesh.vertices[tri[2]] - mesh.vertices[tri[0]]));
    return area;
}

}  // namespace csplat
