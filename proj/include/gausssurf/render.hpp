#pragma once

#include "gausssurf/camera.hpp"
#include "gausssurf/gaussian.hpp"
#include "gausssurf/image.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gausssurf {

struct RenderOptions {
    Vec3 background = Vec3::Zero();
    double near = 0.01;
    double dilation = 0.3;            // added to the 2D covariance, pixels^2
    double alpha_max = 0.99;
    double alpha_min = 1.0 / 255.0;
    double min_transmittance = 1e-4;
    double coverage_threshold = 0.5;  // acc_alpha below this -> no depth
    int tile_size = 16;
};

/// A Gaussian after projection to the image plane. cov2d is the affine
/// projection J W Sigma W^T J^T before dilation.
struct Splat2D {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero();
    double depth = 0;
    Vec3 color = Vec3::Zero();
    double alpha = 0;
};

/// nullopt when the Gaussian is behind the near plane or its footprint misses the viewport.
std::optional<Splat2D> project_gaussian(const Gaussian3D& g, int sh_degree, const Camera& cam,
                                        const RenderOptions& opts = {});

struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> depth;       // 0 where not covered
    std::vector<double> acc_alpha;

    double depth_at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
    double alpha_at(int x, int y) const { return acc_alpha[static_cast<std::size_t>(y) * width + x]; }
};

/// Per-Gaussian partial derivatives of a scalar loss.
struct SceneGrads {
    std::vector<Vec3> mean;
    std::vector<Vec3> log_scale;
    std::vector<Vec4> rot;
    std::vector<double> opacity_logit;
    std::vector<std::vector<Vec3>> sh;
    std::vector<Mat3> cov;   // world-space covariance; filled by the renderer backward pass

    SceneGrads() = default;
    explicit SceneGrads(const Scene& scene);

    std::size_t size() const { return mean.size(); }
    void add_scaled(const SceneGrads& other, double w);
    bool all_finite() const;
    double max_abs() const;
};

/// Converts covariance gradients into log-scale and quaternion gradients
/// (accumulating into g.log_scale and g.rot).
void covariance_grads_to_params(const Scene& scene, SceneGrads& g);

namespace detail {

struct ProjectedSplat {
    int id = -1;
    Vec3 t_cam;
    Eigen::Matrix<double, 2, 3> jw;   // J * W
    Mat3 cov3d;
    Vec2 mean2d;
    Mat2 conic;
    double depth = 0;
    Vec3 color;
    Eigen::Array3d color_pass;        // 1 where the color clamp is inactive
    Vec3 view_dir;
    double view_dist = 0;
    double opacity = 0;
    int tx0 = 0, ty0 = 0, tx1 = 0, ty1 = 0;   // tile range, half-open
};

} // namespace detail

/// Forward rasterization with every intermediate the backward pass needs.
struct ForwardPass {
    Image color;
    DepthMap depth;
    std::vector<detail::ProjectedSplat> splats;   // sorted front to back
    std::vector<std::vector<int>> tile_lists;     // indices into splats, front to back
    std::vector<int> n_contrib;                   // per pixel: tile-list prefix that was composited
    std::vector<double> t_final;                  // per pixel final transmittance
    int tiles_x = 0, tiles_y = 0;
};

ForwardPass rasterize(const Scene& scene, const Camera& cam, const RenderOptions& opts = {});

Image render_image(const Scene& scene, const Camera& cam, const RenderOptions& opts = {});
DepthMap render_depth(const Scene& scene, const Camera& cam, const RenderOptions& opts = {});

/// Gradient of sum_pixels <loss_grad(pixel), C(pixel)> w.r.t. all Gaussian
/// parameters. Recomputes the forward pass.
SceneGrads backward_render(const Scene& scene, const Camera& cam, const Image& loss_grad,
                           const RenderOptions& opts = {});

/// Same as backward_render using a stored forward pass.
SceneGrads backward_render(const ForwardPass& fwd, const Scene& scene, const Camera& cam, const Image& loss_grad,
                           const RenderOptions& opts = {});

/// Depth map as raw float32 (row-major) plus a JSON sidecar with the layout.
void write_depth_map(const DepthMap& depth, const std::string& bin_path, const std::string& json_path);

} // namespace gausssurf
