#pragma once

#include "gausssurf/common.hpp"

#include <vector>

namespace gausssurf {

inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;

/// Number of SH coefficients per channel for a given degree.
constexpr int sh_count(int degree) { return (degree + 1) * (degree + 1); }

/// One splatting primitive. Opacity is stored as a logit and scales as logs;
/// activations are applied on read.
struct Gaussian3D {
    Vec3 mean = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rot = Vec4(1, 0, 0, 0);   // scalar-first
    double opacity_logit = 0.0;
    std::vector<Vec3> sh{Vec3::Zero()};   // band 0 first, one RGB triple per coefficient

    double opacity() const { return sigmoid(opacity_logit); }
    Vec3 scales() const { return log_scale.array().exp(); }
    Mat3 rotation() const { return quat_to_rotation(rot); }
    Mat3 covariance() const;

    /// Index of the smallest scale; lowest index wins ties.
    int thin_axis() const;
};

struct Scene {
    std::vector<Gaussian3D> gaussians;
    int sh_degree = 0;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }

    /// Throws EmptySceneError / ValidationError when invariants are broken.
    void validate() const;
};

/// View-dependent color before the +0.5 offset and clamping. Bands above 1 are
/// carried through I/O but not evaluated.
Vec3 sh_radiance(const std::vector<Vec3>& sh, int sh_degree, const Vec3& dir);

/// SH basis values used by sh_radiance (length 1 or 4).
int sh_basis(int sh_degree, const Vec3& dir, double out[4]);

/// Rendered color: clamp(radiance + 0.5, 0, 1).
Vec3 sh_color(const std::vector<Vec3>& sh, int sh_degree, const Vec3& dir);

/// f_dc value that renders as the given flat RGB color.
Vec3 rgb_to_sh_dc(const Vec3& rgb);

/// Axis-aligned bounds of the Gaussian means.
std::pair<Vec3, Vec3> mean_bounds(const Scene& scene);

} // namespace gausssurf
