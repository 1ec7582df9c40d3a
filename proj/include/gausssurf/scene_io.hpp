#pragma once

#include "gausssurf/camera.hpp"
#include "gausssurf/gaussian.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace gausssurf {

/// Loads a splat checkpoint PLY (x,y,z, f_dc_0..2, f_rest_*, opacity,
/// scale_0..2, rot_0..3; scales and opacity in log / logit space).
/// Quaternions further than 1e-6 from unit norm are renormalized.
Scene load_gaussian_ply(const std::string& path);

/// Writes the reference checkpoint layout as float32, normals zeroed.
void save_gaussian_ply(const Scene& scene, const std::string& path);

/// Serialized size in bytes of one Gaussian record for a given SH degree.
std::size_t gaussian_record_size(int sh_degree);

enum class SurfaceKind { Sphere, Box, Plane };

SurfaceKind parse_surface_kind(const std::string& s);
std::string to_string(SurfaceKind k);

struct SyntheticSpec {
    SurfaceKind surface = SurfaceKind::Sphere;
    Vec3 center = Vec3::Zero();          // sphere / box center
    double radius = 1.0;                 // sphere
    Vec3 extents = Vec3(1.5, 1.0, 0.8);  // box edge lengths
    Vec3 normal = Vec3::UnitZ();         // plane
    double offset = 0.0;                 // plane: <p, normal> = offset
    int n_gaussians = 1000;
    double noise = 0.0;                  // max displacement of means along the surface normal
    std::uint64_t seed = 0;
    int n_views = 24;
    int n_holdout = 8;
    int width = 64;
    int height = 64;
    double thin_ratio = 0.01;            // thin-axis scale / object scale
    double tangent_ratio = 0.7;          // in-plane scale / mean point spacing; below ~0.6 the surface leaks light

    void validate() const;
};

/// Analytic ground-truth surface of a synthetic scene.
struct GroundTruthSurface {
    SurfaceKind kind = SurfaceKind::Sphere;
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
    Vec3 extents = Vec3::Ones();
    Vec3 normal = Vec3::UnitZ();
    double offset = 0.0;
    double patch_half_size = 1.0;   // plane patch used for sampling

    /// Exact signed distance, positive outside (or on the normal side of a plane).
    double sdf(const Vec3& p) const;
    Vec3 surface_normal(const Vec3& p) const;
    /// Area-uniform point samples on the surface.
    std::vector<Vec3> sample(std::size_t n, std::mt19937_64& rng) const;
    double object_scale() const;
};

struct SyntheticScene {
    Scene scene;
    std::vector<Camera> cameras;
    std::vector<Camera> holdout_cameras;
    GroundTruthSurface surface;
};

/// Flat, opaque, surface-aligned Gaussians on an analytic surface plus a ring
/// of training / held-out cameras looking at it.
SyntheticScene make_synthetic_scene(const SyntheticSpec& spec);

} // namespace gausssurf
