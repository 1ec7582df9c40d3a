#include "gausssurf/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gausssurf {

NeighborIndex rebuild_index(const Scene& scene, int k)
{
    NeighborIndex index;
    index.k = k;
    std::vector<Vec3> means;
    means.reserve(scene.size());
    for (const auto& g : scene.gaussians) {
        means.push_back(g.mean);
    }
    index.tree = KdTree(std::move(means));
    index.k_effective = static_cast<int>(std::min<std::size_t>(k, scene.size()));
    index.ids.resize(scene.size() * index.k_effective);
    for (std::size_t g = 0; g < scene.size(); ++g) {
        const auto nn = index.tree.knn(scene.gaussians[g].mean, index.k_effective);
        for (int j = 0; j < index.k_effective; ++j) {
            index.ids[g * index.k_effective + j] = nn[j].second;
        }
    }
    index.stale_counter = 0;
    return index;
}

GaussianTerm::GaussianTerm(const Gaussian3D& g)
    : mean(g.mean), rotation(g.rotation()), scales(g.scales().cwiseMax(kScaleFloor)), alpha(g.opacity())
{
    inv_cov = rotation * scales.array().square().inverse().matrix().asDiagonal() * rotation.transpose();
    thin_axis = g.thin_axis();
    thin_scale = scales[thin_axis];
    thin_normal = rotation.col(thin_axis);
}

DensityField::DensityField(const Scene& scene, const NeighborIndex& index) : mode_(Mode::Neighborhood), index_(&index)
{
    if (index.size() != scene.size()) {
        throw ValidationError("neighbor index was built for a different scene size");
    }
    terms_.reserve(scene.size());
    for (const auto& g : scene.gaussians) {
        terms_.emplace_back(g);
    }
}

DensityField::DensityField(const Scene& scene) : mode_(Mode::Exact)
{
    terms_.reserve(scene.size());
    for (const auto& g : scene.gaussians) {
        terms_.emplace_back(g);
    }
    all_ids_.resize(scene.size());
    std::iota(all_ids_.begin(), all_ids_.end(), 0);
}

std::span<const int> DensityField::candidates(const Vec3& p) const
{
    if (mode_ == Mode::Exact) {
        return all_ids_;
    }
    return index_->neighbors(index_->tree.nearest(p).first);
}

double DensityField::density(const Vec3& p) const
{
    double d = 0;
    for (int g : candidates(p)) {
        d += terms_[g].alpha * std::exp(-0.5 * terms_[g].mahalanobis(p));
    }
    return d;
}

int DensityField::closest_gaussian(const Vec3& p) const
{
    int best = -1;
    double best_m = std::numeric_limits<double>::infinity();
    for (int g : candidates(p)) {
        const double m = terms_[g].mahalanobis(p);
        if (m < best_m || (m == best_m && g < best)) {
            best_m = m;
            best = g;
        }
    }
    return best;
}

double DensityField::ideal_density(const Vec3& p) const
{
    const GaussianTerm& t = terms_[closest_gaussian(p)];
    const double h = (p - t.mean).dot(t.thin_normal);
    return std::exp(-h * h / (2.0 * t.thin_scale * t.thin_scale));
}

double ideal_sdf_magnitude(double density, double thin_scale)
{
    const double d = std::clamp(density, kDensityClampLo, kDensityClampHi);
    return thin_scale * std::sqrt(-2.0 * std::log(d));
}

double DensityField::ideal_sdf(const Vec3& p) const
{
    return ideal_sdf_magnitude(density(p), terms_[closest_gaussian(p)].thin_scale);
}

Vec3 DensityField::density_gradient(const Vec3& p) const
{
    Vec3 grad = Vec3::Zero();
    for (int g : candidates(p)) {
        const GaussianTerm& t = terms_[g];
        const Vec3 a_delta = t.inv_cov * (p - t.mean);
        grad -= t.alpha * std::exp(-0.5 * (p - t.mean).dot(a_delta)) * a_delta;
    }
    return grad;
}

FieldSample DensityField::sample(const Vec3& p) const
{
    FieldSample s;
    s.p = p;
    double best_m = std::numeric_limits<double>::infinity();
    for (int g : candidates(p)) {
        const GaussianTerm& t = terms_[g];
        const Vec3 a_delta = t.inv_cov * (p - t.mean);
        const double m = (p - t.mean).dot(a_delta);
        const double e = t.alpha * std::exp(-0.5 * m);
        s.d += e;
        s.grad_d -= e * a_delta;
        if (m < best_m || (m == best_m && g < s.g_star)) {
            best_m = m;
            s.g_star = g;
        }
    }
    s.f_ideal = ideal_sdf_magnitude(s.d, terms_[s.g_star].thin_scale);
    s.zero_gradient = s.grad_d.norm() < kZeroGradient;
    return s;
}

double density(const Vec3& p, const Scene& scene, const NeighborIndex& index)
{
    return DensityField(scene, index).density(p);
}

int closest_gaussian(const Vec3& p, const Scene& scene, const NeighborIndex& index)
{
    return DensityField(scene, index).closest_gaussian(p);
}

double ideal_density(const Vec3& p, const Scene& scene, const NeighborIndex& index)
{
    return DensityField(scene, index).ideal_density(p);
}

double ideal_sdf(const Vec3& p, const Scene& scene, const NeighborIndex& index)
{
    return DensityField(scene, index).ideal_sdf(p);
}

Vec3 density_gradient(const Vec3& p, const Scene& scene, const NeighborIndex& index)
{
    return DensityField(scene, index).density_gradient(p);
}

} // namespace gausssurf
