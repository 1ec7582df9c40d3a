#pragma once

#include "gausssurf/camera.hpp"
#include "gausssurf/density.hpp"
#include "gausssurf/render.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gausssurf {

struct LevelSetConfig {
    double lambda = 0.3;
    int n_rays_per_view = 4096;
    int n_samples_per_ray = 21;
    double sigma_span = 3.0;
    double residual_tol = 1e-3;   // relative to lambda
    int max_refine_iters = 8;
    std::uint64_t seed = 0;
    RenderOptions render;

    void validate() const;
};

struct OrientedPointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<int> view_id;
    double residual_tol = 0;   // absolute |d - lambda| bound every point satisfies

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    void push_back(const Vec3& p, const Vec3& n, int view);
};

struct LevelSetStats {
    std::size_t rays = 0;            // covered pixels that were traced
    std::size_t points = 0;
    std::size_t no_crossing = 0;
    std::size_t zero_gradient = 0;
    std::size_t residual_dropped = 0;

    double yield() const { return rays ? static_cast<double>(points) / static_cast<double>(rays) : 0.0; }
};

/// sqrt(v^T Sigma v) for unit v.
double directional_std(const Gaussian3D& g, const Vec3& v);

struct Crossing {
    Vec3 point;
    Vec3 normal;
};

enum class CrossingStatus { Found, NoCrossing, ZeroGradient, Residual };

/// Scans n samples over [-span, span] * sigma_g(v) around p along v (camera side
/// first) and returns the first lambda crossing, refined until
/// |d - lambda| <= tol * lambda. The normal faces the camera.
std::optional<Crossing> ray_level_crossing(const Vec3& p, const Vec3& v, int g, const DensityField& field,
                                           const LevelSetConfig& cfg, CrossingStatus* status = nullptr);

/// Traces up to cfg.n_rays_per_view covered pixels (sampled without
/// replacement) per camera. Output order is (view, sampled pixel order).
/// Throws EmptyCloudError when nothing crosses the level.
OrientedPointCloud sample_level_set(const Scene& scene, std::span<const Camera> cams, const LevelSetConfig& cfg,
                                    LevelSetStats* stats = nullptr);

/// Foreground: points inside the axis-aligned box of the camera centers.
std::pair<OrientedPointCloud, OrientedPointCloud> split_fg_bg(const OrientedPointCloud& cloud,
                                                              std::span<const Camera> cams);

void save_point_cloud_ply(const OrientedPointCloud& cloud, const std::string& path);
OrientedPointCloud load_point_cloud_ply(const std::string& path);

} // namespace gausssurf
