#include "csplat/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "csplat/core/parallel.hpp"

namespace csplat {

double psnr(const ImageBuffer& ref, const ImageBuffer& img) {
    if (!ref.same_shape(img)) throw std::invalid_argument("psnr: shape mismatch");
    std::vector<double> sq(ref.data.size());
    for (std::size_t i = 0; i < sq.size(); ++i) {
        const double d = ref.data[i] - img.data[i];
        sq[i] = d * d;
    }
    const double mse = pairwise_sum(sq) / static_cast<double>(sq.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace {

struct PointGrid {
    Vec3 origin;
    double cell = 1.0;
    int dims[3] = {1, 1, 1};
    std::vector<std::vector<uint32_t>> lists;
    const std::vector<Vec3>* points = nullptr;

    static PointGrid build(const std::vector<Vec3>& pts, double cell_size) {
        PointGrid g;
        g.points = &pts;
        Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
        for (const Vec3& p : pts)
            for (int k = 0; k < 3; ++k) {
                lo[k] = std::min(lo[k], p[k]);
                hi[k] = std::max(hi[k], p[k]);
            }
        g.origin = lo;
        g.cell = std::max(cell_size, 1e-12);
        // cap the total cell count; any_within stays correct because the cell
        // only ever grows (>= tau still holds)
        for (;;) {
            double total = 1.0;
            for (int k = 0; k < 3; ++k) {
                g.dims[k] = std::max(
                    1, static_cast<int>(std::floor((hi[k] - lo[k]) / g.cell)) + 1);
                total *= g.dims[k];
            }
            if (total <= 2e6) break;
            g.cell *= std::cbrt(total / 2e6) * 1.01;
        }
        g.lists.resize(static_cast<std::size_t>(g.dims[0]) * g.dims[1] * g.dims[2]);
        for (std::size_t i = 0; i < pts.size(); ++i)
            g.lists[g.cell_index(g.coords(pts[i]))].push_back(static_cast<uint32_t>(i));
        return g;
    }

    std::array<int, 3> coords(const Vec3& p) const {
        std::array<int, 3> c{};
        for (int k = 0; k < 3; ++k)
            c[static_cast<std::size_t>(k)] = std::clamp(
                static_cast<int>(std::floor((p[k] - origin[k]) / cell)), 0, dims[k] - 1);
        return c;
    }
    std::size_t cell_index(const std::array<int, 3>& c) const {
        return (static_cast<std::size_t>(c[2]) * dims[1] + c[1]) * dims[0] + c[0];
    }

    // true iff some point lies within tau (cell size must be >= tau)
    bool any_within(const Vec3& p, double tau) const {
        const auto c = coords(p);
        const double tau2 = tau * tau;
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int bx = c[0] + dx, by = c[1] + dy, bz = c[2] + dz;
                    if (bx < 0 || by < 0 || bz < 0 || bx >= dims[0] || by >= dims[1] ||
                        bz >= dims[2])
                        continue;
                    for (const uint32_t i : lists[cell_index({bx, by, bz})])
                        if (norm2((*points)[i] - p) <= tau2) return true;
                }
        return false;
    }

    // exact nearest distance via expanding Chebyshev shells
    double nearest_distance(const Vec3& p) const {
        const auto c = coords(p);
        double best2 = std::numeric_limits<double>::infinity();
        const int max_ring = std::max({dims[0], dims[1], dims[2]});
        auto visit = [&](int bx, int by, int bz, bool* nonempty) {
            if (bx < 0 || by < 0 || bz < 0 || bx >= dims[0] || by >= dims[1] || bz >= dims[2])
                return;
            *nonempty = true;
            for (const uint32_t i : lists[cell_index({bx, by, bz})])
                best2 = std::min(best2, norm2((*points)[i] - p));
        };
        for (int r = 0; r <= max_ring; ++r) {
            // points in ring r are at least (r-1)*cell away
            if (r > 1 && best2 <= (r - 1.0) * cell * ((r - 1.0) * cell)) break;
            bool nonempty = false;
            if (r == 0) {
                visit(c[0], c[1], c[2], &nonempty);
            } else {
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        visit(c[0] + dx, c[1] + dy, c[2] - r, &nonempty);
                        visit(c[0] + dx, c[1] + dy, c[2] + r, &nonempty);
                    }
                for (int dz = -r + 1; dz <= r - 1; ++dz) {
                    for (int dx = -r; dx <= r; ++dx) {
                        visit(c[0] + dx, c[1] - r, c[2] + dz, &nonempty);
                        visit(c[0] + dx, c[1] + r, c[2] + dz, &nonempty);
                    }
                    for (int dy = -r + 1; dy <= r - 1; ++dy) {
                        visit(c[0] - r, c[1] + dy, c[2] + dz, &nonempty);
                        visit(c[0] + r, c[1] + dy, c[2] + dz, &nonempty);
                    }
                }
            }
            if (!nonempty && r > 0 && std::isfinite(best2)) break;
        }
        return std::sqrt(best2);
    }
};

struct Aabb {
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    static Aabb of(const std::vector<Vec3>& pts, double inflate) {
        Aabb box;
        for (const Vec3& p : pts)
            for (int k = 0; k < 3; ++k) {
                box.lo[k] = std::min(box.lo[k], p[k]);
                box.hi[k] = std::max(box.hi[k], p[k]);
            }
        for (int k = 0; k < 3; ++k) {
            box.lo[k] -= inflate;
            box.hi[k] += inflate;
        }
        return box;
    }
    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z &&
               p.z <= hi.z;
    }
};

void require_nonempty(const std::vector<Vec3>& pts, const char* what) {
    if (pts.empty()) throw std::invalid_argument(std::string(what) + ": empty point set");
}

double mean_nearest(const std::vector<Vec3>& from, const PointGrid& grid) {
    std::vector<double> dists(from.size());
    parallel_for(from.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) dists[i] = grid.nearest_distance(from[i]);
    });
    return pairwise_sum(dists) / static_cast<double>(dists.size());
}

double nn_cell_size(const std::vector<Vec3>& pts) {
    const Aabb box = Aabb::of(pts, 0.0);
    const Vec3 span = box.hi - box.lo;
    const double diag = std::max({span.x, span.y, span.z, 1e-9});
    const double per_axis = std::cbrt(static_cast<double>(pts.size()));
    return std::max(diag / std::max(per_axis, 1.0), 1e-9);
}

}  // namespace

F1Result f1_score(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, double tau,
                  bool crop_to_gt_bounds) {
    require_nonempty(pred, "f1_score pred");
    require_nonempty(gt, "f1_score gt");
    const PointGrid gt_grid = PointGrid::build(gt, tau);
    const PointGrid pred_grid = PointGrid::build(pred, tau);
    const Aabb gt_box = Aabb::of(gt, tau);

    std::vector<uint8_t> pred_hit(pred.size(), 0), pred_keep(pred.size(), 1);
    parallel_for(pred.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            if (crop_to_gt_bounds && !gt_box.contains(pred[i])) {
                pred_keep[i] = 0;
                continue;
            }
            pred_hit[i] = gt_grid.any_within(pred[i], tau) ? 1 : 0;
        }
    });
    std::vector<uint8_t> gt_hit(gt.size(), 0);
    parallel_for(gt.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            gt_hit[i] = pred_grid.any_within(gt[i], tau) ? 1 : 0;
    });

    std::size_t kept = 0, hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        kept += pred_keep[i];
        hits += pred_hit[i] & pred_keep[i];
    }
    std::size_t gt_hits = 0;
    for (const uint8_t h : gt_hit) gt_hits += h;

    F1Result out;
    out.precision = kept > 0 ? static_cast<double>(hits) / static_cast<double>(kept) : 0.0;
    out.recall = static_cast<double>(gt_hits) / static_cast<double>(gt.size());
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

F1Result f1_score_brute_force(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                              double tau, bool crop_to_gt_bounds) {
    require_nonempty(pred, "f1_score pred");
    require_nonempty(gt, "f1_score gt");
    const Aabb gt_box = Aabb::of(gt, tau);
    const double tau2 = tau * tau;
    std::size_t kept = 0, hits = 0;
    for (const Vec3& p : pred) {
        if (crop_to_gt_bounds && !gt_box.contains(p)) continue;
        ++kept;
        for (const Vec3& q : gt)
            if (norm2(p - q) <= tau2) {
                ++hits;
                break;
            }
    }
    std::size_t gt_hits = 0;
    for (const Vec3& q : gt)
        for (const Vec3& p : pred)
            if (norm2(p - q) <= tau2) {
                ++gt_hits;
                break;
            }
    F1Result out;
    out.precision = kept > 0 ? static_cast<double>(hits) / static_cast<double>(kept) : 0.0;
    out.recall = static_cast<double>(gt_hits) / static_cast<double>(gt.size());
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

double chamfer(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
    require_nonempty(pred, "chamfer pred");
    require_nonempty(gt, "chamfer gt");
    const PointGrid gt_grid = PointGrid::build(gt, nn_cell_size(gt));
    const PointGrid pred_grid = PointGrid::build(pred, nn_cell_size(pred));
    return 0.5 * (mean_nearest(pred, gt_grid) + mean_nearest(gt, pred_grid));
}

double chamfer_brute_force(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
    require_nonempty(pred, "chamfer pred");
    require_nonempty(gt, "chamfer gt");
    auto one_way = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
        std::vector<double> dists(from.size());
        for (std::size_t i = 0; i < from.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3& q : to) best = std::min(best, norm2(from[i] - q));
            dists[i] = std::sqrt(best);
        }
        return pairwise_sum(dists) / static_cast<double>(dists.size());
    };
    return 0.5 * (one_way(pred, gt) + one_way(gt, pred));
}

std::vector<Vec3> sample_mesh_surface(const TriMesh& mesh, std::size_t count, uint64_t seed) {
    if (mesh.triangles.empty()) throw std::invalid_argument("sample_mesh_surface: empty mesh");
    std::vector<double> areas(mesh.triangles.size());
    double total = 0.0;
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        const auto& t = mesh.triangles[i];
        areas[i] = 0.5 * norm(cross(mesh.vertices[t[1]] - mesh.vertices[t[0]],
                                    mesh.vertices[t[2]] - mesh.vertices[t[0]]));
        total += areas[i];
    }
    if (total <= 0.0) throw std::invalid_argument("sample_mesh_surface: zero-area mesh");

    // stratified allocation: floor of the proportional share, remainders by
    // largest fraction (ties to the lower index)
    std::vector<std::size_t> counts(areas.size());
    std::vector<std::pair<double, std::size_t>> remainders(areas.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < areas.size(); ++i) {
        const double share = static_cast<double>(count) * areas[i] / total;
        counts[i] = static_cast<std::size_t>(std::floor(share));
        assigned += counts[i];
        remainders[i] = {share - std::floor(share), i};
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t k = 0; assigned < count; ++k, ++assigned)
        ++counts[remainders[k % remainders.size()].second];

    Rng rng(seed);
    std::vector<Vec3> samples;
    samples.reserve(count);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const auto& t = mesh.triangles[i];
        const Vec3& a = mesh.vertices[t[0]];
        const Vec3& b = mesh.vertices[t[1]];
        const Vec3& c = mesh.vertices[t[2]];
        for (std::size_t k = 0; k < counts[i]; ++k) {
            double u = rng.uniform(), v = rng.uniform();
            if (u + v > 1.0) {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            samples.push_back(a + (b - a) * u + (c - a) * v);
        }
    }
    return samples;
}

std::string metrics_to_json(const MetricsReport& report) {
    nlohmann::json doc;
    if (report.psnr) {
        if (std::isinf(*report.psnr))
            doc["psnr"] = "inf";
        else
            doc["psnr"] = *report.psnr;
    } else {
        doc["psnr"] = nullptr;
    }
    if (report.ssim)
        doc["ssim"] = *report.ssim;
    else
        doc["ssim"] = nullptr;
    doc["precision"] = report.precision;
    doc["recall"] = report.recall;
    doc["f1"] = report.f1;
    doc["chamfer"] = report.chamfer;
    doc["tau"] = report.tau;
    doc["n_samples"] = report.n_samples;
    doc["seed"] = report.seed;
    return doc.dump(2);
}

MetricsReport metrics_from_json(const std::string& json) {
    const nlohmann::json doc = nlohmann::json::parse(json);
    MetricsReport report;
    if (!doc.at("psnr").is_null()) {
        if (doc.at("psnr").is_string())
            report.psnr = std::numeric_limits<double>::infinity();
        else
            report.psnr = doc.at("psnr").get<double>();
    }
    if (!doc.at("ssim").is_null()) report.ssim = doc.at("ssim").get<double>();
    report.precision = doc.at("precision").get<double>();
    report.recall = doc.at("recall").get<double>();
    report.f1 = doc.at("f1").get<double>();
    report.chamfer = doc.at("chamfer").get<double>();
    report.tau = doc.at("tau").get<double>();
    report.n_samples = doc.at("n_samples").get<std::size_t>();
    report.seed = doc.at("seed").get<uint64_t>();
    return report;
}

}  // namespace csplat
