#pragma once

#include "gausssurf/gaussian.hpp"
#include "gausssurf/kdtree.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace gausssurf {

inline constexpr int kDefaultNeighbors = 16;
inline constexpr double kScaleFloor = 1e-8;
inline constexpr double kDensityClampLo = 1e-12;
inline constexpr double kDensityClampHi = 1.0 - 1e-12;
inline constexpr double kZeroGradient = 1e-12;

/// K nearest Gaussians (by mean distance, self included) for every Gaussian,
/// plus a k-d tree over the means used to pick the query neighborhood.
struct NeighborIndex {
    int k = kDefaultNeighbors;
    int k_effective = 0;          // min(k, scene size)
    std::vector<int> ids;         // size() * k_effective, each row sorted by (distance, id)
    KdTree tree;
    int stale_counter = 0;        // optimizer steps since the last rebuild

    std::size_t size() const { return tree.size(); }
    std::span<const int> neighbors(int g) const
    {
        return {ids.data() + static_cast<std::size_t>(g) * k_effective, static_cast<std::size_t>(k_effective)};
    }
};

NeighborIndex rebuild_index(const Scene& scene, int k = kDefaultNeighbors);

/// Cached per-Gaussian quantities for field evaluation.
struct GaussianTerm {
    Vec3 mean;
    Mat3 rotation;
    Vec3 scales;      // floored at kScaleFloor
    Mat3 inv_cov;
    double alpha = 0;
    int thin_axis = 0;
    double thin_scale = 0;
    Vec3 thin_normal;

    explicit GaussianTerm(const Gaussian3D& g);
    /// (p - mu)^T Sigma^-1 (p - mu)
    double mahalanobis(const Vec3& p) const
    {
        const Vec3 d = p - mean;
        return d.dot(inv_cov * d);
    }
    /// Standard deviation along direction v: sqrt(v^T Sigma v) / |v|.
    double directional_std(const Vec3& v) const
    {
        const Vec3 local = rotation.transpose() * v.normalized();
        return std::sqrt(local.cwiseProduct(scales).squaredNorm());
    }
};

struct FieldSample {
    Vec3 p;
    double d = 0;          // density
    int g_star = -1;       // closest Gaussian (Mahalanobis)
    double f_ideal = 0;    // |f(p)| = s_{g*} sqrt(-2 log d)
    Vec3 grad_d = Vec3::Zero();
    bool zero_gradient = true;
};

/// Gaussian density field of a scene. In Neighborhood mode sums are restricted
/// to the K-list of the Gaussian whose mean is nearest to the query point; in
/// Exact mode every Gaussian contributes.
class DensityField {
public:
    enum class Mode { Neighborhood, Exact };

    DensityField(const Scene& scene, const NeighborIndex& index);   // Neighborhood
    explicit DensityField(const Scene& scene);                      // Exact

    Mode mode() const { return mode_; }
    const GaussianTerm& term(int g) const { return terms_[g]; }
    std::size_t size() const { return terms_.size(); }

    /// Gaussians contributing at p.
    std::span<const int> candidates(const Vec3& p) const;

    double density(const Vec3& p) const;
    int closest_gaussian(const Vec3& p) const;
    double ideal_density(const Vec3& p) const;
    double ideal_sdf(const Vec3& p) const;
    Vec3 density_gradient(const Vec3& p) const;
    FieldSample sample(const Vec3& p) const;

private:
    Mode mode_;
    std::vector<GaussianTerm> terms_;
    const NeighborIndex* index_ = nullptr;
    std::vector<int> all_ids_;
};

/// |f| for a given density and thin scale, with the density clamp applied.
double ideal_sdf_magnitude(double density, double thin_scale);

// Point-query conveniences. Each builds a field over the scene, so batch
// callers should hold a DensityField instead.
double density(const Vec3& p, const Scene& scene, const NeighborIndex& index);
int closest_gaussian(const Vec3& p, const Scene& scene, const NeighborIndex& index);
double ideal_density(const Vec3& p, const Scene& scene, const NeighborIndex& index);
double ideal_sdf(const Vec3& p, const Scene& scene, const NeighborIndex& index);
Vec3 density_gradient(const Vec3& p, const Scene& scene, const NeighborIndex& index);

} // namespace gausssurf
