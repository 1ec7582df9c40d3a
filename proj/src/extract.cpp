#include "gausssurf/poisson_mesh.hpp"

#include "gausssurf/density.hpp"

#include <spdlog/spdlog.h>

namespace gausssurf {

TriangleMesh extract_mesh(const Scene& scene, std::span<const Camera> cams, const ExtractOptions& opts,
                          ExtractionReport* report)
{
    opts.poisson.validate();
    ExtractionReport rep;
    rep.lambda = opts.level.lambda;
    rep.res = opts.poisson.res;
    const OrientedPointCloud cloud = sample_level_set(scene, cams, opts.level, &rep.level);
    const auto [fg, bg] = split_fg_bg(cloud, cams);
    rep.fg_points = fg.size();
    rep.bg_points = bg.size();
    if (fg.size() < kMinPoissonPoints) {
        throw ValidationError("only " + std::to_string(fg.size()) +
                              " level-set points fall inside the camera bounds; too few for Poisson reconstruction");
    }
    TriangleMesh mesh = poisson_reconstruct(fg, opts.poisson, &rep.fg);

    if (bg.size() >= kMinPoissonPoints) {
        Vec3 lo = cams[0].center(), hi = lo;
        for (const auto& c : cams) {
            lo = lo.cwiseMin(c.center());
            hi = hi.cwiseMax(c.center());
        }
        const Vec3 center = 0.5 * (lo + hi), half = 4.0 * (hi - lo);
        PoissonOptions bg_opts = opts.poisson;
        bg_opts.res = std::max(8, opts.poisson.res / 2);
        bg_opts.margin = 0.0;
        bg_opts.bounds = std::make_pair(Vec3(center - half), Vec3(center + half));
        mesh = merge_meshes(mesh, poisson_reconstruct(bg, bg_opts, &rep.bg));
        rep.bg_skipped = false;
    } else if (!bg.empty()) {
        spdlog::info("extract_mesh: {} background points are too few for a background mesh; skipped", bg.size());
    }

    rep.vertices_before_decimation = mesh.n_vertices();
    if (opts.target_vertices > 0 && opts.target_vertices < mesh.n_vertices()) {
        mesh = decimate_qem(mesh, opts.target_vertices, &rep.decimation);
    }
    compute_vertex_normals(mesh);
    if (report) *report = std::move(rep);
    return mesh;
}

TriangleMesh density_marching_cubes(const Scene& scene, double lambda, int res, double margin)
{
    if (scene.empty()) throw EmptySceneError("cannot mesh an empty scene");
    if (res < 2) throw ValidationError("grid resolution must be >= 2");
    auto [lo, hi] = mean_bounds(scene);
    const double extent = std::max((hi - lo).maxCoeff(), 1e-9);
    lo.array() -= margin * extent;
    hi.array() += margin * extent;
    const double h = (hi - lo).maxCoeff() / (res - 1);
    std::array<int, 3> r;
    for (int a = 0; a < 3; ++a) r[a] = std::clamp(static_cast<int>(std::ceil((hi[a] - lo[a]) / h)) + 1, 2, res);
    const NeighborIndex index = rebuild_index(scene);
    const DensityField field(scene, index);
    TriangleMesh mesh = marching_cubes([&](const Vec3& p) { return field.density(p); }, r, lo, h, lambda);
    compute_vertex_normals(mesh);
    return mesh;
}

} // namespace gausssurf
