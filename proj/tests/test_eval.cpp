#include "test_util.hpp"

#include "gausssurf/eval.hpp"

#include <json.hpp>

#include <sstream>

using namespace gausssurf;
using namespace testutil;

namespace {

Image random_image(int w, int h, std::uint64_t seed, bool avoid_mid_gray = false)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    Image img(w, h);
    for (auto& v : img.data) {
        v = u(rng);
        if (avoid_mid_gray) v = v < 0.5 ? 0.3 * v / 0.5 : 0.7 + 0.3 * (v - 0.5) / 0.5;
    }
    return img;
}

// Direct windowed SSIM on the channel-mean images, written independently of the library.
double brute_ssim(const Image& a, const Image& b)
{
    const int r = 5;
    double wsum = 0;
    double w[11][11];
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) wsum += w[dy + r][dx + r] = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
    auto g = [](const Image& img, int x, int y) { return (img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2)) / 3; };
    double total = 0;
    int count = 0;
    for (int y = r; y + r < a.height; ++y)
        for (int x = r; x + r < a.width; ++x) {
            double mx = 0, my = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const double k = w[dy + r][dx + r] / wsum;
                    mx += k * g(a, x + dx, y + dy);
                    my += k * g(b, x + dx, y + dy);
                }
            double vx = 0, vy = 0, cxy = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const double k = w[dy + r][dx + r] / wsum;
                    const double ex = g(a, x + dx, y + dy) - mx, ey = g(b, x + dx, y + dy) - my;
                    vx += k * ex * ex;
                    vy += k * ey * ey;
                    cxy += k * ex * ey;
                }
            const double c1 = 1e-4, c2 = 9e-4;
            total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return total / count;
}

} // namespace

TEST_CASE("psnr")
{
    const Image a = random_image(20, 15, 1);
    bool same = false;
    CHECK(psnr(a, a, &same) == kPsnrCap);
    CHECK(same);

    Image zero(8, 8, 0.0), tenth(8, 8, 0.1);
    CHECK(psnr(zero, tenth, &same) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK_FALSE(same);

    const Image b = random_image(20, 15, 2);
    double mse = 0;
    for (int y = 0; y < 15; ++y)
        for (int x = 0; x < 20; ++x)
            for (int c = 0; c < 3; ++c) mse += std::pow(a.at(x, y, c) - b.at(x, y, c), 2) / (20 * 15 * 3);
    CHECK(psnr(a, b) == doctest::Approx(10 * std::log10(1 / mse)).epsilon(1e-12));
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK_THROWS_AS(psnr(a, Image(20, 14)), ValidationError);
}

TEST_CASE("ssim")
{
    const Image a = random_image(24, 19, 3);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    const Image b = random_image(24, 19, 4);
    CHECK(ssim(a, b) == doctest::Approx(brute_ssim(a, b)).epsilon(1e-10));

    const Image c = random_image(32, 32, 5, true);
    Image inv = c;
    for (auto& v : inv.data) v = 1 - v;
    CHECK(ssim(c, inv) < 0.5);

    // permuting channels of both images together
    Image ap = a, bp = b;
    for (std::size_t i = 0; i < a.pixels(); ++i)
        for (int ch = 0; ch < 3; ++ch) {
            ap.data[3 * i + ch] = a.data[3 * i + (ch + 1) % 3];
            bp.data[3 * i + ch] = b.data[3 * i + (ch + 1) % 3];
        }
    CHECK(ssim(ap, bp) == doctest::Approx(ssim(a, b)).epsilon(1e-12));
    CHECK(ssim(a, b) >= -1.0);
    CHECK(ssim(a, b) <= 1.0);

    CHECK_THROWS_AS(ssim(Image(10, 30), Image(10, 30)), ValidationError);
    CHECK_THROWS_AS(ssim(a, Image(24, 20)), ValidationError);
}

TEST_CASE("chamfer and hausdorff")
{
    const TriangleMesh s = icosphere(4);
    GeometryError self = chamfer_hausdorff(s, s, 5000, 1);
    CHECK(self.chamfer < 1e-6);
    CHECK(self.hausdorff < 1e-6);

    GroundTruthSurface big;
    big.kind = SurfaceKind::Sphere;
    big.radius = 1.1;
    const GeometryError e = chamfer_hausdorff(icosphere(5), big, 20000, 2);
    // chord error of the subdivided sphere is below 1e-3
    CHECK(std::abs(e.chamfer - 0.1) < 2e-3);
    CHECK(std::abs(e.hausdorff - 0.1) < 2e-3);
    CHECK(e.chamfer <= e.hausdorff);

    TriangleMesh squashed = icosphere(4);
    for (auto& v : squashed.vertices) v.z() *= 0.8;
    const GeometryError ab = chamfer_hausdorff(s, squashed, 20000, 3), ba = chamfer_hausdorff(squashed, s, 20000, 3);
    CHECK(std::abs(ab.chamfer - ba.chamfer) < 2e-3);
    CHECK(std::abs(ab.hausdorff - ba.hausdorff) < 1e-2);
    CHECK(ab.hausdorff == doctest::Approx(0.2).epsilon(0.05));
    CHECK(ab.chamfer <= ab.hausdorff);

    CHECK_THROWS_AS(chamfer_hausdorff(TriangleMesh{}, s, 5000), ValidationError);
    CHECK_THROWS_AS(chamfer_hausdorff(s, s, 999), ValidationError);
}

TEST_CASE("MetricReport output")
{
    MetricReport rep;
    rep.views.push_back({"view_000", 31.5, 0.9, false});
    rep.views.push_back({"view_001", kPsnrCap, 1.0, true});
    rep.config["lambda"] = "0.3";
    const std::string text = rep.to_json();
    const auto j = nlohmann::json::parse(text);
    CHECK(j["lpips"].is_null());
    CHECK(j["geometry"].is_null());
    CHECK(j["views"].size() == 2);
    CHECK(j["mean_psnr"].get<double>() == doctest::Approx((31.5 + kPsnrCap) / 2));
    CHECK_FALSE(j.contains("timings"));
    CHECK(text.find("\"views\"") < text.find("\"lpips\""));
    CHECK(text == rep.to_json());

    rep.geometry = GeometryError{0.01, 0.05, 0.01, 0.01, 0.04, 0.05, 1000};
    rep.timings["eval"] = 1.5;
    const auto j2 = nlohmann::json::parse(rep.to_json());
    CHECK(j2["geometry"]["chamfer"].get<double>() == 0.01);
    CHECK(j2["timings"]["eval"].get<double>() == 1.5);

    std::ostringstream csv;
    rep.write_csv(csv);
    CHECK(csv.str() == "view,psnr,ssim,identical\nview_000,31.500000,0.900000,0\nview_001,99.000000,1.000000,1\n");
}
