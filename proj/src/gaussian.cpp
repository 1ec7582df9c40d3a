#include "gausssurf/gaussian.hpp"

#include <algorithm>
#include <limits>

namespace gausssurf {

Mat3 Gaussian3D::covariance() const
{
    const Mat3 r = rotation();
    const Vec3 s = scales();
    return r * s.array().square().matrix().asDiagonal() * r.transpose();
}

int Gaussian3D::thin_axis() const
{
    int k = 0;
    for (int i = 1; i < 3; ++i) {
        if (log_scale[i] < log_scale[k]) {
            k = i;
        }
    }
    return k;
}

void Scene::validate() const
{
    if (gaussians.empty()) {
        throw EmptySceneError("scene contains no Gaussians");
    }
    if (sh_degree < 0) {
        throw ValidationError("negative SH degree");
    }
    const auto expected = static_cast<std::size_t>(sh_count(sh_degree));
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        if (gaussians[i].sh.size() != expected) {
            throw ValidationError("Gaussian " + std::to_string(i) + " has " +
                                  std::to_string(gaussians[i].sh.size()) + " SH coefficients, expected " +
                                  std::to_string(expected));
        }
    }
}

int sh_basis(int sh_degree, const Vec3& dir, double out[4])
{
    out[0] = kShC0;
    if (sh_degree < 1) {
        return 1;
    }
    out[1] = -kShC1 * dir.y();
    out[2] = kShC1 * dir.z();
    out[3] = -kShC1 * dir.x();
    return 4;
}

Vec3 sh_radiance(const std::vector<Vec3>& sh, int sh_degree, const Vec3& dir)
{
    double basis[4];
    const int n = sh_basis(sh_degree, dir, basis);
    Vec3 c = Vec3::Zero();
    for (int k = 0; k < n; ++k) {
        c += basis[k] * sh[k];
    }
    return c;
}

Vec3 sh_color(const std::vector<Vec3>& sh, int sh_degree, const Vec3& dir)
{
    return (sh_radiance(sh, sh_degree, dir).array() + 0.5).cwiseMax(0.0).cwiseMin(1.0);
}

Vec3 rgb_to_sh_dc(const Vec3& rgb) { return (rgb.array() - 0.5) / kShC0; }

std::pair<Vec3, Vec3> mean_bounds(const Scene& scene)
{
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& g : scene.gaussians) {
        lo = lo.cwiseMin(g.mean);
        hi = hi.cwiseMax(g.mean);
    }
    return {lo, hi};
}

} // namespace gausssurf
