#include "csplat/mesh/field.hpp"

#include <algorithm>
#include <cmath>

#include "csplat/core/parallel.hpp"
#include "csplat/render/forward.hpp"

namespace csplat {

OpacityField::OpacityField(const GaussianCloud& cloud) {
    entries_.resize(cloud.size());
    double max_scale_all = 0.0;
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian& g = cloud[i];
        Entry& e = entries_[i];
        e.position = g.position;
        e.sigma_inv = covariance(g).sigma_inv;
        e.opacity = g.opacity();
        const Vec3 s = g.scales();
        const double smax = std::max(s.x, std::max(s.y, s.z));
        e.reach = 8.0 * smax;
        max_scale_all = std::max(max_scale_all, smax);
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], g.position[k]);
            hi[k] = std::max(hi[k], g.position[k]);
        }
    }
    if (cloud.empty()) {
        lo = Vec3{0, 0, 0};
        hi = Vec3{0, 0, 0};
    }
    const double inflate = 3.0 * max_scale_all;
    bounds_min_ = lo - Vec3{inflate, inflate, inflate};
    bounds_max_ = hi + Vec3{inflate, inflate, inflate};

    // primitives are inserted into every bin their 8-sigma ball overlaps
    const Vec3 span = bounds_max_ - bounds_min_;
    const double max_span = std::max({span.x, span.y, span.z, 1e-9});
    bin_size_ = max_span / 64.0;
    bin_origin_ = bounds_min_;
    for (int k = 0; k < 3; ++k)
        bins_[k] = std::max(1, static_cast<int>(std::ceil(span[k] / bin_size_)) + 1);
    bin_lists_.resize(static_cast<std::size_t>(bins_[0]) * bins_[1] * bins_[2]);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const Entry& e = entries_[i];
        int b_lo[3], b_hi[3];
        for (int k = 0; k < 3; ++k) {
            b_lo[k] = std::clamp(
                static_cast<int>(std::floor((e.position[k] - e.reach - bin_origin_[k]) / bin_size_)),
                0, bins_[k] - 1);
            b_hi[k] = std::clamp(
                static_cast<int>(std::floor((e.position[k] + e.reach - bin_origin_[k]) / bin_size_)),
                0, bins_[k] - 1);
        }
        for (int bz = b_lo[2]; bz <= b_hi[2]; ++bz)
            for (int by = b_lo[1]; by <= b_hi[1]; ++by)
                for (int bx = b_lo[0]; bx <= b_hi[0]; ++bx)
                    bin_lists_[bin_index(bx, by, bz)].push_back(static_cast<uint32_t>(i));
    }
}

double OpacityField::eval_entry(const Entry& e, const Vec3& x) const {
    const Vec3 d = x - e.position;
    if (norm2(d) > e.reach * e.reach) return 0.0;
    return e.opacity * std::exp(-0.5 * dot(d, e.sigma_inv * d));
}

double OpacityField::eval(const Vec3& x) const {
    int b[3];
    for (int k = 0; k < 3; ++k)
        b[k] = std::clamp(static_cast<int>(std::floor((x[k] - bin_origin_[k]) / bin_size_)), 0,
                          bins_[k] - 1);
    double best = 0.0;
    for (const uint32_t i : bin_lists_[bin_index(b[0], b[1], b[2])])
        best = std::max(best, eval_entry(entries_[i], x));
    return std::min(best, kAlphaMax);
}

double OpacityField::eval_brute_force(const Vec3& x) const {
    double best = 0.0;
    for (const Entry& e : entries_) {
        const Vec3 d = x - e.position;
        best = std::max(best, e.opacity * std::exp(-0.5 * dot(d, e.sigma_inv * d)));
    }
    return std::min(best, kAlphaMax);
}

void OpacityField::collect_box(const Vec3& lo, const Vec3& hi, std::vector<uint32_t>& out) const {
    out.clear();
    int b_lo[3], b_hi[3];
    for (int k = 0; k < 3; ++k) {
        b_lo[k] = std::clamp(static_cast<int>(std::floor((lo[k] - bin_origin_[k]) / bin_size_)),
                             0, bins_[k] - 1);
        b_hi[k] = std::clamp(static_cast<int>(std::floor((hi[k] - bin_origin_[k]) / bin_size_)),
                             0, bins_[k] - 1);
    }
    for (int bz = b_lo[2]; bz <= b_hi[2]; ++bz)
        for (int by = b_lo[1]; by <= b_hi[1]; ++by)
            for (int bx = b_lo[0]; bx <= b_hi[0]; ++bx)
                for (const uint32_t i : bin_lists_[bin_index(bx, by, bz)]) out.push_back(i);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
}

double OpacityField::eval_candidates(const Vec3& x, const std::vector<uint32_t>& candidates) const {
    double best = 0.0;
    for (const uint32_t i : candidates) best = std::max(best, eval_entry(entries_[i], x));
    return std::min(best, kAlphaMax);
}

void OpacityField::fill_lattice(const Vec3& origin, const Vec3& cell, int n,
                                std::vector<double>& values) const {
    values.assign(static_cast<std::size_t>(n) * n * n, 0.0);
    // per-slab index lists keep the scatter race-free and deterministic
    std::vector<std::vector<uint32_t>> slab_lists(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const Entry& e = entries_[i];
        const int z0 = std::clamp(
            static_cast<int>(std::ceil((e.position.z - e.reach - origin.z) / cell.z)), 0, n - 1);
        const int z1 = std::clamp(
            static_cast<int>(std::floor((e.position.z + e.reach - origin.z) / cell.z)), 0, n - 1);
        for (int z = z0; z <= z1; ++z) slab_lists[static_cast<std::size_t>(z)].push_back(
            static_cast<uint32_t>(i));
    }
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
        for (std::size_t zs = begin; zs < end; ++zs) {
            const int z = static_cast<int>(zs);
            double* slab = values.data() + static_cast<std::size_t>(z) * n * n;
            for (const uint32_t i : slab_lists[zs]) {
                const Entry& e = entries_[i];
                const int y0 = std::clamp(
                    static_cast<int>(std::ceil((e.position.y - e.reach - origin.y) / cell.y)), 0,
                    n - 1);
                const int y1 = std::clamp(
                    static_cast<int>(std::floor((e.position.y + e.reach - origin.y) / cell.y)), 0,
                    n - 1);
                const int x0 = std::clamp(
                    static_cast<int>(std::ceil((e.position.x - e.reach - origin.x) / cell.x)), 0,
                    n - 1);
                const int x1 = std::clamp(
                    static_cast<int>(std::floor((e.position.x + e.reach - origin.x) / cell.x)), 0,
                    n - 1);
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x) {
                        const Vec3 p{origin.x + cell.x * x, origin.y + cell.y * y,
                                     origin.z + cell.z * z};
                        const double v = eval_entry(e, p);
                        double& slot = slab[static_cast<std::size_t>(y) * n + x];
                        if (v > slot) slot = v;
                    }
            }
        }
    });
    for (double& v : values) v = std::min(v, kAlphaMax);
}

}  // namespace csplat
