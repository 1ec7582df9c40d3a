#pragma once

#include "gausssurf/image.hpp"
#include "gausssurf/mesh.hpp"
#include "gausssurf/scene_io.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gausssurf {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all channels. Identical images report kPsnrCap and
/// set *identical.
double psnr(const Image& a, const Image& b, bool* identical = nullptr);

/// Mean SSIM (11x11 Gaussian window, sigma 1.5) of the channel-mean grayscale
/// images. Throws ValidationError when an image is smaller than the window.
double ssim(const Image& a, const Image& b);

struct GeometryError {
    double chamfer = 0;     // (mean_ab + mean_ba) / 2
    double hausdorff = 0;   // max(max_ab, max_ba)
    double mean_ab = 0, mean_ba = 0;
    double max_ab = 0, max_ba = 0;
    std::size_t n_samples = 0;
};

/// Area-weighted samples on both surfaces, nearest-surface distances both ways.
GeometryError chamfer_hausdorff(const TriangleMesh& mesh, const TriangleMesh& reference, std::size_t n_samples,
                                std::uint64_t seed = 0);

/// Same against an analytic surface: mesh samples use its exact distance.
GeometryError chamfer_hausdorff(const TriangleMesh& mesh, const GroundTruthSurface& reference, std::size_t n_samples,
                                std::uint64_t seed = 0);

struct ViewMetrics {
    std::string name;
    double psnr = 0;
    double ssim = 0;
    bool identical = false;
};

struct MetricReport {
    std::vector<ViewMetrics> views;
    std::optional<GeometryError> geometry;
    std::map<std::string, std::string> config;   // echoed settings
    std::map<std::string, double> timings;       // seconds; left out of the output when empty

    double mean_psnr() const;
    double mean_ssim() const;

    /// Fixed key order; "lpips" is always null.
    std::string to_json() const;
    /// One row per view: view,psnr,ssim,identical
    void write_csv(std::ostream& out) const;
    void save(const std::string& json_path, const std::string& csv_path = "") const;
};

} // namespace gausssurf
