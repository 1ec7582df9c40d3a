#include "gausssurf/eval.hpp"

#include "gausssurf/parallel.hpp"
#include "gausssurf/ssim.hpp"

#include <json.hpp>

#include <fstream>
#include <random>
#include <sstream>

namespace gausssurf {

namespace {

void check_same_shape(const Image& a, const Image& b)
{
    if (a.width != b.width || a.height != b.height || a.data.size() != b.data.size()) {
        throw ValidationError("image shapes differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                              " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
    }
}

std::vector<double> gray(const Image& img)
{
    std::vector<double> g(img.pixels());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (img.data[3 * i] + img.data[3 * i + 1] + img.data[3 * i + 2]) / 3.0;
    return g;
}

} // namespace

double psnr(const Image& a, const Image& b, bool* identical)
{
    check_same_shape(a, b);
    double sse = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sse += d * d;
    }
    const bool same = sse == 0;
    if (identical) *identical = same;
    if (same || a.data.empty()) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(sse / static_cast<double>(a.data.size())));
}

double ssim(const Image& a, const Image& b)
{
    check_same_shape(a, b);
    const SsimOptions opts;
    const int window = 2 * opts.radius + 1;
    if (a.width < window || a.height < window) {
        throw ValidationError("SSIM needs images of at least " + std::to_string(window) + "x" + std::to_string(window));
    }
    return ssim_channel(gray(a), gray(b), a.width, a.height, nullptr, opts);
}

namespace {

struct DistanceStats {
    double mean = 0, max = 0;
};

template <typename Fn>
DistanceStats distance_stats(const std::vector<Vec3>& pts, Fn&& dist)
{
    std::vector<double> d(pts.size());
    parallel_for(pts.size(), [&](std::size_t i) { d[i] = dist(pts[i]); });
    DistanceStats s;
    for (double v : d) {
        s.mean += v;
        s.max = std::max(s.max, v);
    }
    s.mean /= static_cast<double>(std::max<std::size_t>(d.size(), 1));
    return s;
}

GeometryError combine(const DistanceStats& ab, const DistanceStats& ba, std::size_t n)
{
    GeometryError e;
    e.mean_ab = ab.mean;
    e.mean_ba = ba.mean;
    e.max_ab = ab.max;
    e.max_ba = ba.max;
    e.chamfer = 0.5 * (ab.mean + ba.mean);
    e.hausdorff = std::max(ab.max, ba.max);
    e.n_samples = n;
    return e;
}

void check_inputs(const TriangleMesh& mesh, std::size_t n)
{
    if (mesh.empty()) throw ValidationError("cannot measure distances to an empty mesh");
    if (n < 1000) throw ValidationError("chamfer_hausdorff needs at least 1000 samples");
}

} // namespace

GeometryError chamfer_hausdorff(const TriangleMesh& mesh, const TriangleMesh& reference, std::size_t n_samples,
                                std::uint64_t seed)
{
    check_inputs(mesh, n_samples);
    check_inputs(reference, n_samples);
    std::mt19937_64 rng(seed);
    const auto pa = sample_surface(mesh, n_samples, rng);
    const auto pb = sample_surface(reference, n_samples, rng);
    const TriangleTree ta(mesh), tb(reference);
    return combine(distance_stats(pa, [&](const Vec3& p) { return tb.distance(p); }),
                   distance_stats(pb, [&](const Vec3& p) { return ta.distance(p); }), n_samples);
}

GeometryError chamfer_hausdorff(const TriangleMesh& mesh, const GroundTruthSurface& reference, std::size_t n_samples,
                                std::uint64_t seed)
{
    check_inputs(mesh, n_samples);
    std::mt19937_64 rng(seed);
    const auto pa = sample_surface(mesh, n_samples, rng);
    const auto pb = reference.sample(n_samples, rng);
    const TriangleTree ta(mesh);
    return combine(distance_stats(pa, [&](const Vec3& p) { return std::abs(reference.sdf(p)); }),
                   distance_stats(pb, [&](const Vec3& p) { return ta.distance(p); }), n_samples);
}

double MetricReport::mean_psnr() const
{
    double s = 0;
    for (const auto& v : views) s += v.psnr;
    return views.empty() ? 0.0 : s / static_cast<double>(views.size());
}

double MetricReport::mean_ssim() const
{
    double s = 0;
    for (const auto& v : views) s += v.ssim;
    return views.empty() ? 0.0 : s / static_cast<double>(views.size());
}

std::string MetricReport::to_json() const
{
    nlohmann::ordered_json j;
    j["views"] = nlohmann::ordered_json::array();
    for (const auto& v : views) {
        nlohmann::ordered_json row;
        row["name"] = v.name;
        row["psnr"] = v.psnr;
        row["ssim"] = v.ssim;
        row["identical"] = v.identical;
        j["views"].push_back(row);
    }
    j["mean_psnr"] = mean_psnr();
    j["mean_ssim"] = mean_ssim();
    j["lpips"] = nullptr;
    if (geometry) {
        nlohmann::ordered_json g;
        g["chamfer"] = geometry->chamfer;
        g["hausdorff"] = geometry->hausdorff;
        g["mean_mesh_to_reference"] = geometry->mean_ab;
        g["mean_reference_to_mesh"] = geometry->mean_ba;
        g["n_samples"] = geometry->n_samples;
        j["geometry"] = g;
    } else {
        j["geometry"] = nullptr;
    }
    j["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config) j["config"][k] = v;
    if (!timings.empty()) {
        j["timings"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : timings) j["timings"][k] = v;
    }
    return j.dump(2) + "\n";
}

void MetricReport::write_csv(std::ostream& out) const
{
    out << "view,psnr,ssim,identical\n";
    char line[64];
    for (const auto& v : views) {
        std::snprintf(line, sizeof line, ",%.6f,%.6f,%d\n", v.psnr, v.ssim, v.identical ? 1 : 0);
        out << v.name << line;
    }
}

void MetricReport::save(const std::string& json_path, const std::string& csv_path) const
{
    std::ofstream js(json_path);
    if (!js) throw IoError("cannot write '" + json_path + "'");
    js << to_json();
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) throw IoError("cannot write '" + csv_path + "'");
        write_csv(csv);
    }
}

} // namespace gausssurf
