#pragma once

#include <vector>

#include "csplat/scene/gaussian.hpp"

namespace csplat {

// Pointwise 3D opacity field: max over primitives of o_i * exp(-half
// Mahalanobis^2), clamped to 0.999. A coarse bin grid over the inflated cloud
// AABB skips primitives whose contribution at the query point is below 1e-12
// (8 sigma), so accelerated queries match the brute-force max to that
// tolerance.
class OpacityField {
public:
    explicit OpacityField(const GaussianCloud& cloud);

    double eval(const Vec3& x) const;
    double eval_brute_force(const Vec3& x) const;

    Vec3 bounds_min() const { return bounds_min_; }
    Vec3 bounds_max() const { return bounds_max_; }

    // Candidate indices for any query point inside the axis-aligned box
    // (superset of every primitive within reach of such a point).
    void collect_box(const Vec3& lo, const Vec3& hi, std::vector<uint32_t>& out) const;

    // Same result as eval(x) when `candidates` came from a collect_box call
    // whose box contains x.
    double eval_candidates(const Vec3& x, const std::vector<uint32_t>& candidates) const;

    // Field values over a uniform corner lattice: values[(z*n + y)*n + x] at
    // origin + cell*(x,y,z). Gaussian-centric scatter; identical to eval() at
    // every lattice point.
    void fill_lattice(const Vec3& origin, const Vec3& cell, int n,
                      std::vector<double>& values) const;

private:
    struct Entry {
        Vec3 position;
        Mat3 sigma_inv;
        double opacity;
        double reach;  // 8 * max scale
    };
    std::vector<Entry> entries_;
    Vec3 bounds_min_, bounds_max_;
    Vec3 bin_origin_;
    double bin_size_ = 1.0;
    int bins_[3] = {1, 1, 1};
    std::vector<std::vector<uint32_t>> bin_lists_;

    std::size_t bin_index(int bx, int by, int bz) const {
        return (static_cast<std::size_t>(bz) * bins_[1] + by) * bins_[0] + bx;
    }
    double eval_entry(const Entry& e, const Vec3& x) const;
};

}  // namespace csplat
