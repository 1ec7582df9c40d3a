#pragma once

#include "gausssurf/camera.hpp"
#include "gausssurf/gaussian.hpp"
#include "gausssurf/image.hpp"
#include "gausssurf/mesh.hpp"
#include "gausssurf/render.hpp"

#include <atomic>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace gausssurf {

/// A flat Gaussian attached to one triangle. The mean is fixed in barycentric
/// coordinates; the thin axis follows the triangle normal.
struct BoundGaussian {
    int tri_id = 0;
    Vec3 bary = Vec3::Constant(1.0 / 3.0);
    Vec2 log_scale2 = Vec2::Zero();   // in-plane scales
    Vec2 rot2 = Vec2(1, 0);           // complex number x + iy
    double opacity_logit = 0;
    std::vector<Vec3> sh{Vec3::Zero()};
};

struct BoundScene {
    TriangleMesh mesh;
    std::vector<BoundGaussian> bound;
    int n_per_triangle = 1;
    int sh_degree = 0;

    std::size_t size() const { return bound.size(); }
    void validate() const;
};

/// Thin-axis scale relative to the triangle's mean side length.
inline constexpr double kThinScaleRatio = 1e-4;

/// Predefined barycentric coordinates for n in {1, 3, 6}.
std::vector<Vec3> bary_layout(int n);

/// 6 up to 200k vertices, 1 above.
int default_n_per_triangle(std::size_t n_vertices);

/// Columns: unit normal, unit first edge, normal x edge. Throws ValidationError
/// for a triangle with area <= 1e-12.
Mat3 triangle_frame(const TriangleMesh& mesh, int tri_id);

/// In-plane rotation applied to the triangle frame. rot2 is normalized to unit
/// modulus; a near-zero rot2 acts as (1, 0) and bumps *zero_rot_warnings.
Mat3 bound_rotation(const BoundGaussian& bg, const TriangleMesh& mesh, std::atomic<long>* zero_rot_warnings = nullptr);

Gaussian3D bound_to_world(const BoundGaussian& bg, const TriangleMesh& mesh,
                          std::atomic<long>* zero_rot_warnings = nullptr);

/// World-space splat scene, one Gaussian per bound Gaussian, same order.
Scene bound_scene_to_world(const BoundScene& bs, std::atomic<long>* zero_rot_warnings = nullptr);

/// n Gaussians per face. Colors come from the nearest Gaussian of init_scene
/// when given, otherwise gray.
BoundScene bind_gaussians(const TriangleMesh& mesh, int n_per_triangle, const Scene* init_scene = nullptr);

/// Gradients of a loss with respect to the bound parameters.
struct BoundGrads {
    std::vector<Vec3> vertices;
    std::vector<Vec2> log_scale2;
    std::vector<Vec2> rot2;
    std::vector<double> opacity_logit;
    std::vector<std::vector<Vec3>> sh;

    BoundGrads() = default;
    explicit BoundGrads(const BoundScene& bs);
    bool all_finite() const;
};

/// Chains world-space Gaussian gradients (mean, covariance, opacity, SH) back
/// onto the mesh vertices and the bound parameters, accumulating into out.
void chain_world_grads(const BoundScene& bs, const SceneGrads& world, BoundGrads& out);

/// Mean over interior edges of 1 - cos(angle between the two face normals).
/// Adds weight * gradient to vertex_grads when non-null.
double normal_consistency_loss(const TriangleMesh& mesh, std::vector<Vec3>* vertex_grads = nullptr,
                               double weight = 1.0);

struct RefineConfig {
    int iters = 2000;
    double photometric_weight = 1.0;
    double normal_weight = 0.1;
    double ssim_lambda = 0.2;
    double lr_vertex = 1e-4;      // times scene_scale
    double lr_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_opacity = 0.05;
    double lr_sh_dc = 2.5e-3;
    double lr_sh_rest = 2.5e-3 / 20.0;
    double scene_scale = 0;       // 0: derived from the camera centers
    std::uint64_t seed = 0;
    RenderOptions render;
    std::string snapshot_prefix;  // bound scene written here before a NaN abort

    int checkpoint_every = 0;
    std::function<void(int, const BoundScene&)> on_checkpoint;   // called after iteration k * checkpoint_every

    void validate() const;
};

struct RefineLogRow {
    int iter = 0;
    double photometric = 0;
    double normal = 0;
    double total = 0;
};

struct RefineLog {
    std::vector<RefineLogRow> rows;
    long zero_rot_warnings = 0;

    void write_csv(std::ostream& out) const;
};

/// Joint optimization of mesh vertices and bound Gaussians through the splat
/// renderer. Throws TrainingError on a non-finite loss.
BoundScene refine(const BoundScene& bs, std::span<const Image> images, std::span<const Camera> cams,
                  const RefineConfig& cfg, RefineLog* log = nullptr);

/// Scales each Gaussian by the ratio of its triangle's mean side length in
/// new_mesh to that in old_mesh. Faces must match exactly.
BoundScene edit_rescale(const BoundScene& bs, const TriangleMesh& old_mesh, const TriangleMesh& new_mesh);

/// Mesh at <prefix>.obj (or .ply via mesh_ext) and the Gaussian table at
/// <prefix>.bound: a magic line, a JSON header line, then float64 records.
void save_bound_scene(const BoundScene& bs, const std::string& prefix, const std::string& mesh_ext = ".obj");
BoundScene load_bound_scene(const std::string& prefix);

/// World-space splats in the standard checkpoint PLY layout.
void export_splat_ply(const BoundScene& bs, const std::string& path);

} // namespace gausssurf
