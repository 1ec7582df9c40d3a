#pragma once

#include "gausssurf/camera.hpp"
#include "gausssurf/gaussian.hpp"
#include "gausssurf/level_set.hpp"
#include "gausssurf/mesh.hpp"

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace gausssurf {

/// Values on the nodes of a regular grid. Node (i, j, k) sits at
/// origin + spacing * (i, j, k); x varies fastest in `values`.
struct ScalarGrid {
    std::array<int, 3> res{2, 2, 2};
    Vec3 origin = Vec3::Zero();
    double spacing = 1.0;
    std::vector<double> values;

    ScalarGrid() = default;
    ScalarGrid(std::array<int, 3> res, const Vec3& origin, double spacing, double fill = 0.0);

    std::size_t size() const { return values.size(); }
    std::size_t index(int i, int j, int k) const
    {
        return static_cast<std::size_t>(i) + static_cast<std::size_t>(res[0]) * (j + static_cast<std::size_t>(res[1]) * k);
    }
    double at(int i, int j, int k) const { return values[index(i, j, k)]; }
    Vec3 position(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }

    /// Trilinear interpolation, clamped to the grid.
    double interpolate(const Vec3& p) const;

    void validate() const;

    /// Evaluates fn at every node (in parallel).
    static ScalarGrid sample(const std::function<double(const Vec3&)>& fn, std::array<int, 3> res,
                             const Vec3& origin, double spacing);
};

/// Iso-surface of a grid. Vertices lie on grid edges (linear interpolation)
/// and are shared between cells. Faces wind so their normals point toward
/// decreasing values: outward when the field decreases outward.
TriangleMesh marching_cubes(const ScalarGrid& grid, double iso);

TriangleMesh marching_cubes(const std::function<double(const Vec3&)>& field, std::array<int, 3> res,
                            const Vec3& origin, double spacing, double iso);

struct PoissonOptions {
    int res = 128;                          // grid nodes along the longest axis
    double screening = 4.0;                 // times spacing^-2
    double cg_tolerance = 1e-7;             // relative residual
    int cg_max_iters = 2000;
    double min_component_fraction = 1e-3;
    int area_neighbors = 8;                 // k for the per-sample area estimate
    double margin = 0.1;                    // bounding box padding, relative to its largest side
    std::optional<std::pair<Vec3, Vec3>> bounds;   // overrides the point bounding box

    void validate() const;
};

struct PoissonStats {
    std::array<int, 3> res{0, 0, 0};
    double spacing = 0;
    Vec3 origin = Vec3::Zero();
    int cg_iterations = 0;
    double cg_residual = 0;   // relative
    double iso = 0;
    std::size_t faces_before_filter = 0;
};

inline constexpr std::size_t kMinPoissonPoints = 100;

/// Screened Poisson reconstruction on a regular grid. Solves
/// (L + mu W) chi = -div V with a matrix-free Jacobi-preconditioned conjugate
/// gradient, where L is the graph Laplacian of the grid (Neumann boundary),
/// V the splatted normal field and W the splatted sample weight. chi is about
/// +1/2 inside and -1/2 outside; the mesh is its level at the mean of chi over
/// the samples, oriented outward.
TriangleMesh poisson_reconstruct(const OrientedPointCloud& cloud, const PoissonOptions& opts = {},
                                 PoissonStats* stats = nullptr);

struct DecimateStats {
    std::size_t collapses = 0;
    std::size_t rejected_link = 0;       // would break manifoldness
    std::size_t rejected_flip = 0;       // would flip or squash a face
    std::size_t singular_quadrics = 0;   // fell back to the edge midpoint
    std::size_t nonmanifold_edges = 0;   // in the input
    std::vector<double> costs;           // quadric cost of each executed collapse, in order
};

/// Garland-Heckbert edge-collapse simplification down to target_vertices
/// (referenced vertices). Stops early when no valid collapse remains.
TriangleMesh decimate_qem(const TriangleMesh& mesh, std::size_t target_vertices, DecimateStats* stats = nullptr);

struct ExtractOptions {
    LevelSetConfig level;
    PoissonOptions poisson;
    std::size_t target_vertices = 200000;   // 0 disables decimation
};

struct ExtractionReport {
    double lambda = 0;
    int res = 0;
    LevelSetStats level;
    std::size_t fg_points = 0;
    std::size_t bg_points = 0;
    PoissonStats fg;
    PoissonStats bg;
    bool bg_skipped = true;
    std::size_t vertices_before_decimation = 0;
    DecimateStats decimation;
};

/// Level-set points -> foreground / background split -> one Poisson solve per
/// part (the background on a res/2 grid over the foreground box grown 8x) ->
/// merge -> QEM decimation.
TriangleMesh extract_mesh(const Scene& scene, std::span<const Camera> cams, const ExtractOptions& opts,
                          ExtractionReport* report = nullptr);

/// Baseline: marching cubes directly on the Gaussian density at level lambda,
/// over the bounding box of the means (padded by `margin`).
TriangleMesh density_marching_cubes(const Scene& scene, double lambda, int res, double margin = 0.1);

} // namespace gausssurf
