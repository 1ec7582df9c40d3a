#include "gausssurf/render.hpp"

#include "gausssurf/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace gausssurf {

SceneGrads::SceneGrads(const Scene& scene)
    : mean(scene.size(), Vec3::Zero()),
      log_scale(scene.size(), Vec3::Zero()),
      rot(scene.size(), Vec4::Zero()),
      opacity_logit(scene.size(), 0.0),
      sh(scene.size()),
      cov(scene.size(), Mat3::Zero())
{
    for (std::size_t i = 0; i < scene.size(); ++i) {
        sh[i].assign(scene.gaussians[i].sh.size(), Vec3::Zero());
    }
}

void SceneGrads::add_scaled(const SceneGrads& o, double w)
{
    for (std::size_t i = 0; i < size(); ++i) {
        mean[i] += w * o.mean[i];
        log_scale[i] += w * o.log_scale[i];
        rot[i] += w * o.rot[i];
        opacity_logit[i] += w * o.opacity_logit[i];
        cov[i] += w * o.cov[i];
        for (std::size_t k = 0; k < sh[i].size(); ++k) {
            sh[i][k] += w * o.sh[i][k];
        }
    }
}

bool SceneGrads::all_finite() const
{
    for (std::size_t i = 0; i < size(); ++i) {
        if (!mean[i].allFinite() || !log_scale[i].allFinite() || !rot[i].allFinite() ||
            !std::isfinite(opacity_logit[i]) || !cov[i].allFinite()) {
            return false;
        }
        for (const auto& s : sh[i]) {
            if (!s.allFinite()) return false;
        }
    }
    return true;
}

double SceneGrads::max_abs() const
{
    double m = 0;
    for (std::size_t i = 0; i < size(); ++i) {
        m = std::max({m, mean[i].cwiseAbs().maxCoeff(), log_scale[i].cwiseAbs().maxCoeff(),
                      rot[i].cwiseAbs().maxCoeff(), std::abs(opacity_logit[i])});
        for (const auto& s : sh[i]) {
            m = std::max(m, s.cwiseAbs().maxCoeff());
        }
    }
    return m;
}

void covariance_grads_to_params(const Scene& scene, SceneGrads& g)
{
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Gaussian3D& gs = scene.gaussians[i];
        const Mat3 gcov = 0.5 * (g.cov[i] + g.cov[i].transpose());
        const Mat3 r = gs.rotation();
        const Vec3 s = gs.scales();
        const Mat3 m = r * s.asDiagonal();
        const Mat3 dm = 2.0 * gcov * m;
        Mat3 dr;
        for (int k = 0; k < 3; ++k) {
            g.log_scale[i][k] += dm.col(k).dot(r.col(k)) * s[k];
            dr.col(k) = dm.col(k) * s[k];
        }
        g.rot[i] += rotation_grad_to_quat(gs.rot, dr);
    }
}

namespace {

using detail::ProjectedSplat;

std::optional<ProjectedSplat> project(const Gaussian3D& g, int index, int sh_degree, const Camera& cam,
                                      const RenderOptions& opts)
{
    const Mat3 w = cam.rotation();
    const Vec3 t = w * g.mean + cam.translation();
    if (t.z() <= opts.near) {
        return std::nullopt;
    }
    ProjectedSplat s;
    s.id = index;
    s.t_cam = t;
    s.depth = t.z();
    s.opacity = g.opacity();

    const double iz = 1.0 / t.z();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * iz, 0, -cam.fx * t.x() * iz * iz, 0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
    s.jw = j * w;
    s.cov3d = g.covariance();
    Mat2 cov2 = s.jw * s.cov3d * s.jw.transpose();
    cov2(0, 1) = cov2(1, 0) = 0.5 * (cov2(0, 1) + cov2(1, 0));
    cov2(0, 0) += opts.dilation;
    cov2(1, 1) += opts.dilation;
    const double det = cov2.determinant();
    if (!(det > 0)) {
        return std::nullopt;
    }
    s.conic << cov2(1, 1) / det, -cov2(0, 1) / det, -cov2(1, 0) / det, cov2(0, 0) / det;
    s.mean2d = Vec2(cam.fx * t.x() * iz + cam.cx, cam.fy * t.y() * iz + cam.cy);

    const double peak = std::min(s.opacity, opts.alpha_max);
    if (peak < opts.alpha_min) {
        return std::nullopt;
    }
    const double mid = 0.5 * (cov2(0, 0) + cov2(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double radius = std::sqrt(2.0 * std::log(peak / opts.alpha_min) * lambda_max) + 1e-9;

    const int ts = opts.tile_size;
    const int tiles_x = (cam.width + ts - 1) / ts;
    const int tiles_y = (cam.height + ts - 1) / ts;
    s.tx0 = std::max(0, static_cast<int>(std::floor((s.mean2d.x() - radius) / ts)));
    s.ty0 = std::max(0, static_cast<int>(std::floor((s.mean2d.y() - radius) / ts)));
    s.tx1 = std::min(tiles_x, static_cast<int>(std::floor((s.mean2d.x() + radius) / ts)) + 1);
    s.ty1 = std::min(tiles_y, static_cast<int>(std::floor((s.mean2d.y() + radius) / ts)) + 1);
    if (s.tx0 >= s.tx1 || s.ty0 >= s.ty1) {
        return std::nullopt;
    }

    const Vec3 offset = g.mean - cam.center();
    s.view_dist = offset.norm();
    s.view_dir = s.view_dist > 0 ? Vec3(offset / s.view_dist) : Vec3::UnitZ();
    const Vec3 raw = sh_radiance(g.sh, sh_degree, s.view_dir).array() + 0.5;
    s.color = raw.cwiseMax(0.0).cwiseMin(1.0);
    for (int c = 0; c < 3; ++c) {
        s.color_pass[c] = (raw[c] >= 0.0 && raw[c] <= 1.0) ? 1.0 : 0.0;
    }
    return s;
}

inline double splat_alpha(const ProjectedSplat& s, double px, double py, const RenderOptions& opts, double& gauss,
                          Vec2& delta)
{
    delta = Vec2(s.mean2d.x() - px, s.mean2d.y() - py);
    const double power = -0.5 * (s.conic(0, 0) * delta.x() * delta.x() + s.conic(1, 1) * delta.y() * delta.y()) -
                         s.conic(0, 1) * delta.x() * delta.y();
    gauss = std::exp(power);
    return std::min(opts.alpha_max, s.opacity * gauss);
}

} // namespace

std::optional<Splat2D> project_gaussian(const Gaussian3D& g, int sh_degree, const Camera& cam, const RenderOptions& opts)
{
    const auto p = project(g, 0, sh_degree, cam, opts);
    if (!p) {
        return std::nullopt;
    }
    Splat2D s;
    s.mean2d = p->mean2d;
    s.cov2d = p->jw * p->cov3d * p->jw.transpose();
    s.depth = p->depth;
    s.color = p->color;
    s.alpha = p->opacity;
    return s;
}

ForwardPass rasterize(const Scene& scene, const Camera& cam, const RenderOptions& opts)
{
    ForwardPass fwd;
    const int w = cam.width, h = cam.height, ts = opts.tile_size;
    fwd.tiles_x = (w + ts - 1) / ts;
    fwd.tiles_y = (h + ts - 1) / ts;
    fwd.color = Image(w, h);
    fwd.depth.width = w;
    fwd.depth.height = h;
    fwd.depth.depth.assign(static_cast<std::size_t>(w) * h, 0.0);
    fwd.depth.acc_alpha.assign(static_cast<std::size_t>(w) * h, 0.0);
    fwd.n_contrib.assign(static_cast<std::size_t>(w) * h, 0);
    fwd.t_final.assign(static_cast<std::size_t>(w) * h, 1.0);

    std::vector<std::optional<ProjectedSplat>> projected(scene.size());
    parallel_for(scene.size(), [&](std::size_t i) {
        projected[i] = project(scene.gaussians[i], static_cast<int>(i), scene.sh_degree, cam, opts);
    });
    for (auto& p : projected) {
        if (p) {
            fwd.splats.push_back(std::move(*p));
        }
    }
    std::stable_sort(fwd.splats.begin(), fwd.splats.end(),
                     [](const ProjectedSplat& a, const ProjectedSplat& b) { return a.depth < b.depth; });

    fwd.tile_lists.assign(static_cast<std::size_t>(fwd.tiles_x) * fwd.tiles_y, {});
    for (std::size_t k = 0; k < fwd.splats.size(); ++k) {
        const auto& s = fwd.splats[k];
        for (int ty = s.ty0; ty < s.ty1; ++ty) {
            for (int tx = s.tx0; tx < s.tx1; ++tx) {
                fwd.tile_lists[static_cast<std::size_t>(ty) * fwd.tiles_x + tx].push_back(static_cast<int>(k));
            }
        }
    }

    parallel_for(fwd.tile_lists.size(), [&](std::size_t tile) {
        const int tx = static_cast<int>(tile) % fwd.tiles_x;
        const int ty = static_cast<int>(tile) / fwd.tiles_x;
        const auto& list = fwd.tile_lists[tile];
        for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                const double px = x + 0.5, py = y + 0.5;
                double t = 1.0;
                Vec3 c = Vec3::Zero();
                double depth_sum = 0, weight_sum = 0;
                int contrib = 0;
                for (std::size_t k = 0; k < list.size(); ++k) {
                    const auto& s = fwd.splats[list[k]];
                    double gauss;
                    Vec2 delta;
                    const double alpha = splat_alpha(s, px, py, opts, gauss, delta);
                    if (alpha < opts.alpha_min) {
                        continue;
                    }
                    const double next_t = t * (1.0 - alpha);
                    if (next_t < opts.min_transmittance) {
                        break;
                    }
                    const double wgt = alpha * t;
                    c += wgt * s.color;
                    depth_sum += wgt * s.depth;
                    weight_sum += wgt;
                    t = next_t;
                    contrib = static_cast<int>(k) + 1;
                }
                const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                c += t * opts.background;
                for (int ch = 0; ch < 3; ++ch) {
                    fwd.color.at(x, y, ch) = c[ch];
                }
                fwd.n_contrib[pix] = contrib;
                fwd.t_final[pix] = t;
                fwd.depth.acc_alpha[pix] = weight_sum;
                fwd.depth.depth[pix] =
                    weight_sum >= opts.coverage_threshold ? depth_sum / std::max(weight_sum, 1e-12) : 0.0;
            }
        }
    });
    return fwd;
}

Image render_image(const Scene& scene, const Camera& cam, const RenderOptions& opts)
{
    return rasterize(scene, cam, opts).color;
}

DepthMap render_depth(const Scene& scene, const Camera& cam, const RenderOptions& opts)
{
    return rasterize(scene, cam, opts).depth;
}

SceneGrads backward_render(const Scene& scene, const Camera& cam, const Image& loss_grad, const RenderOptions& opts)
{
    return backward_render(rasterize(scene, cam, opts), scene, cam, loss_grad, opts);
}

namespace {

// Per-splat screen-space gradient accumulator.
struct ScreenGrad {
    Vec2 mean2d = Vec2::Zero();
    double conic00 = 0, conic01 = 0, conic11 = 0;
    double opacity = 0;
    Vec3 color = Vec3::Zero();
};

} // namespace

SceneGrads backward_render(const ForwardPass& fwd, const Scene& scene, const Camera& cam, const Image& loss_grad,
                           const RenderOptions& opts)
{
    if (loss_grad.width != cam.width || loss_grad.height != cam.height) {
        throw ValidationError("loss gradient image size does not match the camera");
    }
    const int w = cam.width, h = cam.height, ts = opts.tile_size;
    const std::size_t n_splats = fwd.splats.size();
    const std::size_t n_tiles = fwd.tile_lists.size();
    const std::size_t chunks = std::min(kReductionChunks, std::max<std::size_t>(1, n_tiles));
    std::vector<std::vector<ScreenGrad>> partial(chunks);

    parallel_chunks(n_tiles, chunks, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        auto& acc = partial[chunk];
        acc.assign(n_splats, ScreenGrad{});
        for (std::size_t tile = begin; tile < end; ++tile) {
            const int tx = static_cast<int>(tile) % fwd.tiles_x;
            const int ty = static_cast<int>(tile) / fwd.tiles_x;
            const auto& list = fwd.tile_lists[tile];
            for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
                for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                    const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                    const Vec3 dl_dc(loss_grad.at(x, y, 0), loss_grad.at(x, y, 1), loss_grad.at(x, y, 2));
                    if (dl_dc.isZero(0.0)) {
                        continue;
                    }
                    const double px = x + 0.5, py = y + 0.5;
                    const double t_final = fwd.t_final[pix];
                    const double bg_dot = opts.background.dot(dl_dc);
                    double t = t_final;
                    Vec3 accum = Vec3::Zero();
                    double last_alpha = 0;
                    Vec3 last_color = Vec3::Zero();
                    for (int k = fwd.n_contrib[pix] - 1; k >= 0; --k) {
                        const int si = list[k];
                        const auto& s = fwd.splats[si];
                        double gauss;
                        Vec2 delta;
                        const double alpha = splat_alpha(s, px, py, opts, gauss, delta);
                        if (alpha < opts.alpha_min) {
                            continue;
                        }
                        t /= (1.0 - alpha);
                        ScreenGrad& g = acc[si];
                        g.color += alpha * t * dl_dc;

                        accum = last_alpha * last_color + (1.0 - last_alpha) * accum;
                        last_alpha = alpha;
                        last_color = s.color;
                        double dl_dalpha = t * (s.color - accum).dot(dl_dc);
                        dl_dalpha += -t_final / (1.0 - alpha) * bg_dot;

                        if (s.opacity * gauss >= opts.alpha_max) {
                            continue;   // clamped: no gradient through alpha
                        }
                        g.opacity += gauss * dl_dalpha;
                        const double dl_dpower = s.opacity * gauss * dl_dalpha;
                        // power = -1/2 d^T conic d, d = mean2d - pixel
                        g.mean2d += -dl_dpower * (s.conic * delta);
                        g.conic00 += -0.5 * dl_dpower * delta.x() * delta.x();
                        g.conic01 += -0.5 * dl_dpower * delta.x() * delta.y();
                        g.conic11 += -0.5 * dl_dpower * delta.y() * delta.y();
                    }
                }
            }
        }
    });

    std::vector<ScreenGrad> total(n_splats);
    for (const auto& acc : partial) {
        if (acc.empty()) continue;
        for (std::size_t i = 0; i < n_splats; ++i) {
            total[i].mean2d += acc[i].mean2d;
            total[i].conic00 += acc[i].conic00;
            total[i].conic01 += acc[i].conic01;
            total[i].conic11 += acc[i].conic11;
            total[i].opacity += acc[i].opacity;
            total[i].color += acc[i].color;
        }
    }

    SceneGrads grads(scene);
    const Mat3 rot_w = cam.rotation();
    parallel_for(n_splats, [&](std::size_t k) {
        const auto& s = fwd.splats[k];
        const auto& sg = total[k];
        const int id = s.id;
        const Gaussian3D& g = scene.gaussians[id];

        Mat2 gconic;
        gconic << sg.conic00, sg.conic01, sg.conic01, sg.conic11;
        const Mat2 gcov2 = -s.conic * gconic * s.conic;
        const Mat3 gcov3 = s.jw.transpose() * gcov2 * s.jw;
        const Eigen::Matrix<double, 2, 3> gjw = 2.0 * gcov2 * s.jw * s.cov3d;
        const Eigen::Matrix<double, 2, 3> gj = gjw * rot_w.transpose();

        const double tx = s.t_cam.x(), ty = s.t_cam.y(), tz = s.t_cam.z();
        const double iz = 1.0 / tz, iz2 = iz * iz, iz3 = iz2 * iz;
        const double fx = cam.fx, fy = cam.fy;
        Vec3 gt;
        gt.x() = sg.mean2d.x() * fx * iz + gj(0, 2) * (-fx * iz2);
        gt.y() = sg.mean2d.y() * fy * iz + gj(1, 2) * (-fy * iz2);
        gt.z() = sg.mean2d.x() * (-fx * tx * iz2) + sg.mean2d.y() * (-fy * ty * iz2) + gj(0, 0) * (-fx * iz2) +
                 gj(0, 2) * (2 * fx * tx * iz3) + gj(1, 1) * (-fy * iz2) + gj(1, 2) * (2 * fy * ty * iz3);
        Vec3 gmean = rot_w.transpose() * gt;

        const Vec3 gcolor = sg.color.array() * s.color_pass;
        double basis[4];
        const int nb = sh_basis(scene.sh_degree, s.view_dir, basis);
        for (int b = 0; b < nb; ++b) {
            grads.sh[id][b] = basis[b] * gcolor;
        }
        if (nb == 4) {
            const Vec3 gdir(-kShC1 * g.sh[3].dot(gcolor), -kShC1 * g.sh[1].dot(gcolor), kShC1 * g.sh[2].dot(gcolor));
            gmean += (gdir - s.view_dir * s.view_dir.dot(gdir)) / s.view_dist;
        }

        grads.mean[id] = gmean;
        grads.cov[id] = gcov3;
        grads.opacity_logit[id] = sg.opacity * s.opacity * (1.0 - s.opacity);
    });
    covariance_grads_to_params(scene, grads);
    return grads;
}

void write_depth_map(const DepthMap& depth, const std::string& bin_path, const std::string& json_path)
{
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) {
        throw IoError("cannot write '" + bin_path + "'");
    }
    for (double d : depth.depth) {
        const float f = static_cast<float>(d);
        bin.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
    std::ofstream js(json_path);
    if (!js) {
        throw IoError("cannot write '" + json_path + "'");
    }
    nlohmann::json meta = {{"width", depth.width},
                           {"height", depth.height},
                           {"dtype", "float32"},
                           {"layout", "row-major"},
                           {"no_coverage_value", 0.0}};
    js << meta.dump(2) << '\n';
}

} // namespace gausssurf
