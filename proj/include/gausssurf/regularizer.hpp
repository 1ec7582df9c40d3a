#pragma once

#include "gausssurf/density.hpp"
#include "gausssurf/render.hpp"

#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gausssurf {

struct LossWeights {
    double photometric = 1.0;
    double entropy = 0.1;
    double sdf = 1.0;
    double normal = 0.1;
};

/// Constant per-group Adam learning rates. position is multiplied by the
/// scene extent at train time.
struct LearningRates {
    double position = 1.6e-4;
    double sh_dc = 2.5e-3;
    double sh_rest = 2.5e-3 / 20.0;
    double opacity = 0.05;
    double scale = 5e-3;
    double rotation = 1e-3;
};

struct TrainConfig {
    int iters_free = 7000;
    int iters_entropy = 2000;
    int iters_reg = 6000;
    double prune_alpha = 0.5;
    int knn_refresh = 500;
    int n_reg_points = 1024;
    int knn = kDefaultNeighbors;
    LossWeights weights;
    LearningRates lr;
    double ssim_lambda = 0.2;           // photometric = (1 - l) L1 + l (1 - SSIM)
    bool entropy_during_reg = false;
    bool opacity_weighted_sampling = false;
    double visibility_sigmas = 3.0;     // occlusion test for f_hat, in units of sigma along the ray
    double spatial_extent = 0;          // 0: derived from the camera centers
    std::uint64_t seed = 0;
    RenderOptions render;
    std::string snapshot_path;          // written before a NaN abort when non-empty

    int total_iters() const { return iters_free + iters_entropy + iters_reg; }
    void validate() const;
};

struct RegSample {
    Vec3 p;
    int source = -1;
};

struct RegPointBatch {
    std::vector<Vec3> points;
    std::vector<int> source;
    std::vector<double> f_hat;     // NaN when invalid
    std::vector<int> view;         // view that supplied f_hat, -1 when invalid

    std::size_t size() const { return points.size(); }
    bool valid(std::size_t i) const { return view[i] >= 0; }
    std::size_t n_valid() const;
};

/// One training view with its current depth map.
struct RegView {
    const Camera* camera = nullptr;
    const DepthMap* depth = nullptr;
};

struct LossResult {
    double value = 0;
    SceneGrads grads;
    std::size_t n_used = 0;
};

/// Mixture sampling: Gaussian chosen uniformly (or by opacity), then p ~ N(mu, Sigma)
/// with scales floored like the density field.
std::vector<RegSample> sample_reg_points(const Scene& scene, std::size_t n, std::mt19937_64& rng,
                                         bool opacity_weighted = false);

/// Signed distance along the line of sight between p and the depth surface,
/// positive behind it. nullopt when p is behind the camera, outside the image,
/// or on a pixel with acc_alpha below the coverage threshold.
std::optional<double> estimate_sdf_hat(const Vec3& p, const Camera& cam, const DepthMap& depth,
                                       double coverage_threshold = 0.5);

/// Assigns f_hat to each sample from the first view (in a random order) where it
/// is valid. Samples lying more than visibility_sigmas source-Gaussian standard
/// deviations behind the depth surface are treated as occluded.
RegPointBatch build_reg_batch(const Scene& scene, const std::vector<RegSample>& samples,
                              std::span<const RegView> views, std::mt19937_64& rng,
                              double visibility_sigmas = 3.0, double coverage_threshold = 0.5);

/// Mean |f_hat - f| over valid points with sign(f) = sign(f_hat); f_hat is a constant.
LossResult reg_loss_sdf(const Scene& scene, const NeighborIndex& index, const RegPointBatch& batch);

/// Mean of ||grad f / |grad f| - n_{g*}||^2 with n_{g*} flipped toward grad f.
LossResult reg_loss_normal(const Scene& scene, const NeighborIndex& index, const RegPointBatch& batch);

/// Mean binary entropy of the opacities.
LossResult opacity_entropy_loss(const Scene& scene);

/// Gaussians with opacity >= threshold, in their original order.
Scene prune_transparent(const Scene& scene, double threshold);
std::vector<char> survivors(const Scene& scene, double threshold);

struct PhotometricLoss {
    double value = 0;
    double l1 = 0;
    double ssim = 0;
    Image grad;
};

/// (1 - lambda) * mean |x - y| + lambda * (1 - mean per-channel SSIM).
PhotometricLoss photometric_loss(const Image& rendered, const Image& target, double ssim_lambda);

/// Adam with one learning rate per parameter group.
class Adam {
public:
    Adam() = default;
    Adam(const Scene& scene, const LearningRates& lr, double position_scale);

    void step(Scene& scene, const SceneGrads& grads);
    /// Drops state for Gaussians with keep[i] == 0.
    void keep(const std::vector<char>& keep);
    long long step_count() const { return t_; }

    void save(const std::string& path) const;
    static Adam load(const std::string& path);

    double beta1 = 0.9, beta2 = 0.999, eps = 1e-15;

private:
    LearningRates lr_;
    double position_scale_ = 1;
    long long t_ = 0;
    SceneGrads m_, v_;
};

struct TrainLogRow {
    int iter = 0;
    int phase = 0;
    std::size_t n_gaussians = 0;
    double photometric = 0;
    double entropy = 0;
    double sdf = 0;
    double normal = 0;
    double total = 0;
    std::size_t n_reg_valid = 0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
    std::size_t pruned = 0;
    int index_rebuilds = 0;

    void write_csv(std::ostream& out) const;
    void write_csv(const std::string& path) const;
};

/// Scene extent used to scale the position learning rate: 1.1x the largest
/// distance of a camera center from their centroid.
double camera_extent(std::span<const Camera> cams);

/// Three-phase optimization: photometric only, + opacity entropy, prune, then
/// + SDF and normal regularization. Throws TrainingError on a non-finite loss.
Scene train(const Scene& init, std::span<const Image> images, std::span<const Camera> cams, const TrainConfig& cfg,
            TrainLog* log = nullptr, Adam* optimizer_out = nullptr);

} // namespace gausssurf
