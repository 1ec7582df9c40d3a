#pragma once

#include "gausssurf/render.hpp"
#include "gausssurf/scene_io.hpp"

#include <doctest.h>

#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace testutil {

using namespace gausssurf;

inline std::filesystem::path temp_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("gausssurf_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline Vec4 random_quat(std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized();
}

/// Random Gaussians inside a box of half-size `extent` around `center`.
inline Scene random_scene(std::size_t n, std::uint64_t seed, int sh_degree = 0, double extent = 1.0,
                          double log_scale_lo = -2.0, double log_scale_hi = -1.0, const Vec3& center = Vec3::Zero())
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> ls(log_scale_lo, log_scale_hi);
    Scene s;
    s.sh_degree = sh_degree;
    for (std::size_t i = 0; i < n; ++i) {
        Gaussian3D g;
        g.mean = center + extent * Vec3(u(rng), u(rng), u(rng));
        g.log_scale = Vec3(ls(rng), ls(rng), ls(rng));
        g.rot = random_quat(rng);
        g.opacity_logit = u(rng);
        g.sh.assign(sh_count(sh_degree), Vec3::Zero());
        for (auto& c : g.sh) {
            c = 0.5 * Vec3(u(rng), u(rng), u(rng));
        }
        s.gaussians.push_back(g);
    }
    return s;
}

/// Number of scalar parameters of Gaussian i and a reference to parameter k.
inline int param_count(const Gaussian3D& g) { return 11 + 3 * static_cast<int>(g.sh.size()); }

inline double& param_ref(Gaussian3D& g, int k)
{
    if (k < 3) return g.mean[k];
    if (k < 6) return g.log_scale[k - 3];
    if (k < 10) return g.rot[k - 6];
    if (k == 10) return g.opacity_logit;
    k -= 11;
    return g.sh[k / 3][k % 3];
}

inline double grad_ref(const SceneGrads& gr, std::size_t i, int k)
{
    if (k < 3) return gr.mean[i][k];
    if (k < 6) return gr.log_scale[i][k - 3];
    if (k < 10) return gr.rot[i][k - 6];
    if (k == 10) return gr.opacity_logit[i];
    k -= 11;
    return gr.sh[i][k / 3][k % 3];
}

struct GradCheck {
    double worst_excess = 0;   // max |a-n| / max(rel*|n|, abs_floor); <= 1 passes
    int checked = 0;
    std::string worst_where;
};

/// Central differences over every scalar parameter of every Gaussian.
/// Quaternions are perturbed raw (the loss must normalize internally).
inline GradCheck check_scene_gradient(Scene scene, const SceneGrads& analytic,
                                      const std::function<double(const Scene&)>& loss, double h, double rel,
                                      double abs_floor)
{
    GradCheck out;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const int np = param_count(scene.gaussians[i]);
        for (int k = 0; k < np; ++k) {
            double& p = param_ref(scene.gaussians[i], k);
            const double saved = p;
            p = saved + h;
            const double lp = loss(scene);
            p = saved - h;
            const double lm = loss(scene);
            p = saved;
            const double numeric = (lp - lm) / (2 * h);
            const double a = grad_ref(analytic, i, k);
            const double excess = std::abs(a - numeric) / std::max(rel * std::abs(numeric), abs_floor);
            ++out.checked;
            if (excess > out.worst_excess) {
                out.worst_excess = excess;
                out.worst_where = "gaussian " + std::to_string(i) + " param " + std::to_string(k) +
                                  " analytic " + std::to_string(a) + " numeric " + std::to_string(numeric);
            }
        }
    }
    return out;
}

/// Camera at distance `dist` on the +z side looking at the origin.
inline Camera front_camera(int w, int h, double fx, double dist = 3.0)
{
    Camera c;
    c.width = w;
    c.height = h;
    c.fx = c.fy = fx;
    c.cx = 0.5 * w;
    c.cy = 0.5 * h;
    c.world_to_cam.setIdentity();
    c.world_to_cam(2, 3) = dist;   // world origin sits at camera depth `dist`
    return c;
}

} // namespace testutil
