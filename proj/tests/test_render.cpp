#include "test_util.hpp"

using namespace gausssurf;
using namespace testutil;

namespace {

Gaussian3D isotropic(const Vec3& mean, double sigma, double opacity_logit, const Vec3& rgb)
{
    Gaussian3D g;
    g.mean = mean;
    g.log_scale = Vec3::Constant(std::log(sigma));
    g.opacity_logit = opacity_logit;
    g.sh = {rgb_to_sh_dc(rgb)};
    return g;
}

// A flat Gaussian whose thin axis is the camera z axis.
Gaussian3D facing_wall(double z, double tangent_sigma, const Vec3& rgb)
{
    Gaussian3D g = isotropic(Vec3(0, 0, z), tangent_sigma, 12.0, rgb);
    g.log_scale[2] = std::log(1e-3);
    return g;
}

Camera origin_camera(int w, int h, double f)
{
    Camera c;
    c.width = w;
    c.height = h;
    c.fx = c.fy = f;
    c.cx = 0.5 * w;
    c.cy = 0.5 * h;
    return c;
}

} // namespace

TEST_CASE("projection of an on-axis isotropic Gaussian")
{
    const double sigma = 0.05, z = 2.5, f = 120;
    const Camera cam = origin_camera(64, 64, f);
    const auto s = project_gaussian(isotropic(Vec3(0, 0, z), sigma, 0, Vec3::Constant(0.5)), 0, cam);
    REQUIRE(s.has_value());
    const double expected = std::pow(f * sigma / z, 2);
    CHECK(std::abs(s->cov2d(0, 0) - expected) < 1e-9);
    CHECK(std::abs(s->cov2d(1, 1) - expected) < 1e-9);
    CHECK(std::abs(s->cov2d(0, 1)) < 1e-9);
    CHECK(s->mean2d.isApprox(Vec2(32, 32)));
    CHECK(s->depth == doctest::Approx(z));

    CHECK_FALSE(project_gaussian(isotropic(Vec3(0, 0, -1), sigma, 0, Vec3::Zero()), 0, cam).has_value());
    CHECK_FALSE(project_gaussian(isotropic(Vec3(50, 0, 1), sigma, 0, Vec3::Zero()), 0, cam).has_value());
}

TEST_CASE("projection is invariant to a common translation of camera and scene")
{
    std::mt19937_64 rng(3);
    const Scene scene = random_scene(10, 8, 1, 0.5);
    const Camera cam = front_camera(48, 40, 60.0);
    const Vec3 shift(0.3, -1.2, 2.0);
    Camera moved = cam;
    moved.world_to_cam.topRightCorner<3, 1>() = cam.translation() - cam.rotation() * shift;
    for (const auto& g0 : scene.gaussians) {
        Gaussian3D g1 = g0;
        g1.mean += shift;
        const auto a = project_gaussian(g0, 1, cam);
        const auto b = project_gaussian(g1, 1, moved);
        REQUIRE(a.has_value() == b.has_value());
        if (a) {
            CHECK((a->mean2d - b->mean2d).norm() < 1e-9);
            CHECK((a->cov2d - b->cov2d).norm() < 1e-9);
            CHECK(std::abs(a->depth - b->depth) < 1e-9);
            CHECK((a->color - b->color).norm() < 1e-9);
        }
    }
}

TEST_CASE("render: background, single splat and two-splat composite")
{
    const Camera cam = origin_camera(32, 32, 40);
    RenderOptions opts;
    opts.background = Vec3(0.1, 0.2, 0.3);

    Scene empty_view;
    empty_view.gaussians.push_back(isotropic(Vec3(0, 0, -3), 0.1, 0, Vec3::Ones()));
    const Image bg = render_image(empty_view, cam, opts);
    for (int c = 0; c < 3; ++c) {
        CHECK(bg.at(5, 7, c) == doctest::Approx(opts.background[c]));
    }

    // Alpha is clamped to 0.99, so a dark color keeps the 1% leak under 1/255.
    Scene single;
    const Vec3 rgb(0.3, 0.2, 0.1);
    // projects onto the center (16.5, 16.5) of pixel (16, 16)
    single.gaussians.push_back(isotropic(Vec3(0.5 * 2 / 40.0, 0.5 * 2 / 40.0, 2), 0.2, 15.0, rgb));
    const Image img = render_image(single, cam);
    for (int c = 0; c < 3; ++c) {
        CHECK(std::abs(img.at(16, 16, c) - rgb[c]) < 1.0 / 255.0);
    }

    Scene two;
    const Vec3 ca(0.9, 0.1, 0.2), cb(0.1, 0.8, 0.4);
    two.gaussians.push_back(isotropic(Vec3(0.05, 0.0, 3.0), 0.3, 0.3, cb));
    two.gaussians.push_back(isotropic(Vec3(0.0, 0.02, 2.0), 0.2, -0.2, ca));
    const Image comp = render_image(two, cam, opts);
    // Direct evaluation of the compositing formula at pixel (20, 13).
    const double px = 20.5, py = 13.5;
    auto alpha_of = [&](const Gaussian3D& g) {
        const auto s = project_gaussian(g, 0, cam);
        Mat2 cov = s->cov2d + 0.3 * Mat2::Identity();
        const Vec2 d = s->mean2d - Vec2(px, py);
        return std::min(0.99, g.opacity() * std::exp(-0.5 * d.dot(cov.inverse() * d)));
    };
    const double a_front = alpha_of(two.gaussians[1]);
    const double a_back = alpha_of(two.gaussians[0]);
    REQUIRE(a_front > 1.0 / 255);
    REQUIRE(a_back > 1.0 / 255);
    const Vec3 expected = a_front * ca + (1 - a_front) * a_back * cb + (1 - a_front) * (1 - a_back) * opts.background;
    for (int c = 0; c < 3; ++c) {
        CHECK(comp.at(20, 13, c) == doctest::Approx(expected[c]).epsilon(1e-12));
    }
}

TEST_CASE("render_depth: walls, occlusion and empty frustum")
{
    const Camera cam = origin_camera(32, 32, 40);
    Scene wall;
    wall.gaussians.push_back(facing_wall(2.0, 0.5, Vec3::Constant(0.5)));
    const DepthMap d = render_depth(wall, cam);
    int covered = 0;
    for (std::size_t i = 0; i < d.depth.size(); ++i) {
        if (d.acc_alpha[i] >= 0.5) {
            ++covered;
            CHECK(std::abs(d.depth[i] - 2.0) < 1e-3);
        } else {
            CHECK(d.depth[i] == 0.0);
        }
    }
    CHECK(covered > 100);

    Scene layers = wall;
    layers.gaussians[0].mean.z() = 1.0;
    layers.gaussians.push_back(facing_wall(2.0, 0.5, Vec3::Constant(0.5)));
    const DepthMap dl = render_depth(layers, cam);
    // front weight 0.99, back weight 0.0099: expected depth (0.99 + 0.0198) / 0.9999
    CHECK(dl.depth_at(16, 16) == doctest::Approx((0.99 * 1.0 + 0.0099 * 2.0) / 0.9999).epsilon(1e-6));
    CHECK(std::abs(dl.depth_at(16, 16) - 1.0) < 0.02);

    Scene behind;
    behind.gaussians.push_back(facing_wall(-2.0, 0.5, Vec3::Constant(0.5)));
    const DepthMap none = render_depth(behind, cam);
    for (double v : none.depth) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("render properties: determinism, transmittance bounds, acc_alpha monotone in opacity")
{
    const Scene scene = random_scene(60, 21, 1, 0.8, -2.5, -1.5);
    const Camera cam = front_camera(40, 40, 45.0);
    const ForwardPass a = rasterize(scene, cam);
    const ForwardPass b = rasterize(scene, cam);
    CHECK(a.color.data == b.color.data);
    CHECK(a.depth.depth == b.depth.depth);
    for (double t : a.t_final) {
        CHECK(t >= 0.0);
        CHECK(t <= 1.0);
    }
    for (std::size_t gi = 0; gi < scene.size(); gi += 7) {
        Scene more = scene;
        more.gaussians[gi].opacity_logit += 0.5;
        const DepthMap d0 = render_depth(scene, cam);
        const DepthMap d1 = render_depth(more, cam);
        for (std::size_t p = 0; p < d0.acc_alpha.size(); ++p) {
            CHECK(d1.acc_alpha[p] >= d0.acc_alpha[p] - 1e-12);
        }
    }
}

TEST_CASE("backward_render: trivial cases")
{
    const Scene scene = random_scene(5, 4, 1, 0.3, 0.0, 0.4);
    const Camera cam = front_camera(16, 16, 16.0);
    const SceneGrads zero = backward_render(scene, cam, Image(16, 16, 0.0));
    CHECK(zero.max_abs() == 0.0);

    Scene with_culled = scene;
    with_culled.gaussians[2].mean = Vec3(0, 0, -10);   // behind the camera
    const SceneGrads g = backward_render(with_culled, cam, Image(16, 16, 1.0));
    CHECK(g.mean[2].isZero(0.0));
    CHECK(g.log_scale[2].isZero(0.0));
    CHECK(g.opacity_logit[2] == 0.0);
    CHECK(g.max_abs() > 0.0);
}

TEST_CASE("backward_render matches central differences")
{
    for (int sh_degree : {0, 1}) {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            CAPTURE(sh_degree);
            CAPTURE(seed);
            const Scene scene = random_scene(5, seed, sh_degree, 0.3, 0.0, 0.4);
            const Camera cam = front_camera(16, 16, 16.0);
            RenderOptions opts;
            opts.background = Vec3(0.2, 0.5, 0.7);
            std::mt19937_64 rng(seed + 100);
            std::uniform_real_distribution<double> u(-1, 1);
            Image weights(16, 16);
            for (auto& v : weights.data) v = u(rng);

            auto loss = [&](const Scene& s) {
                const Image img = render_image(s, cam, opts);
                double l = 0;
                for (std::size_t i = 0; i < img.data.size(); ++i) l += weights.data[i] * img.data[i];
                return l;
            };
            const SceneGrads analytic = backward_render(scene, cam, weights, opts);
            const GradCheck res = check_scene_gradient(scene, analytic, loss, 1e-4, 1e-3, 1e-5);
            CAPTURE(res.worst_where);
            CHECK(res.worst_excess <= 1.0);
            CHECK(res.checked > 0);
        }
    }
}
