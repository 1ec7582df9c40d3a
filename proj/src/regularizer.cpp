#include "gausssurf/regularizer.hpp"

#include "gausssurf/parallel.hpp"
#include "gausssurf/ply.hpp"
#include "gausssurf/scene_io.hpp"
#include "gausssurf/ssim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gausssurf {

void TrainConfig::validate() const
{
    if (iters_free < 0 || iters_entropy < 0 || iters_reg < 0) {
        throw ValidationError("iteration counts must be >= 0");
    }
    if (!(prune_alpha > 0.0 && prune_alpha < 1.0)) {
        throw ValidationError("prune_alpha must be in (0, 1)");
    }
    if (knn_refresh <= 0 || knn <= 0) {
        throw ValidationError("knn and knn_refresh must be positive");
    }
    if (iters_reg > 0 && n_reg_points <= 0) {
        throw ValidationError("n_reg_points must be positive when regularizing");
    }
    if (!(ssim_lambda >= 0.0 && ssim_lambda <= 1.0)) {
        throw ValidationError("ssim_lambda must be in [0, 1]");
    }
}

std::size_t RegPointBatch::n_valid() const
{
    return static_cast<std::size_t>(std::count_if(view.begin(), view.end(), [](int v) { return v >= 0; }));
}

std::vector<RegSample> sample_reg_points(const Scene& scene, std::size_t n, std::mt19937_64& rng, bool opacity_weighted)
{
    if (scene.empty()) {
        throw EmptySceneError("cannot sample points from an empty scene");
    }
    std::vector<double> weights(scene.size(), 1.0);
    if (opacity_weighted) {
        for (std::size_t i = 0; i < scene.size(); ++i) weights[i] = scene.gaussians[i].opacity();
    }
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<RegSample> out(n);
    for (auto& s : out) {
        s.source = pick(rng);
        const Gaussian3D& g = scene.gaussians[s.source];
        const Vec3 z(normal(rng), normal(rng), normal(rng));
        s.p = g.mean + g.rotation() * g.scales().cwiseMax(kScaleFloor).cwiseProduct(z);
    }
    return out;
}

std::optional<double> estimate_sdf_hat(const Vec3& p, const Camera& cam, const DepthMap& depth,
                                       double coverage_threshold)
{
    const auto uvz = cam.project(p);
    if (!uvz) return std::nullopt;
    const int x = static_cast<int>(std::floor((*uvz)[0]));
    const int y = static_cast<int>(std::floor((*uvz)[1]));
    if (x < 0 || y < 0 || x >= depth.width || y >= depth.height) return std::nullopt;
    if (depth.alpha_at(x, y) < coverage_threshold) return std::nullopt;
    const double z = (*uvz)[2];
    // distance along the line of sight, not along the optical axis
    const double ray_len = cam.to_camera(p).norm();
    return (z - depth.depth_at(x, y)) * ray_len / z;
}

RegPointBatch build_reg_batch(const Scene& scene, const std::vector<RegSample>& samples,
                              std::span<const RegView> views, std::mt19937_64& rng, double visibility_sigmas,
                              double coverage_threshold)
{
    RegPointBatch b;
    const std::size_t n = samples.size();
    b.points.resize(n);
    b.source.resize(n);
    b.f_hat.assign(n, std::numeric_limits<double>::quiet_NaN());
    b.view.assign(n, -1);
    std::vector<int> order(views.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        b.points[i] = samples[i].p;
        b.source[i] = samples[i].source;
        if (order.size() > 1) std::shuffle(order.begin(), order.end(), rng);
        for (int vi : order) {
            const RegView& v = views[vi];
            const auto fh = estimate_sdf_hat(samples[i].p, *v.camera, *v.depth, coverage_threshold);
            if (!fh) continue;
            if (samples[i].source >= 0) {
                const GaussianTerm src(scene.gaussians[samples[i].source]);
                const double sigma = src.directional_std(samples[i].p - v.camera->center());
                if (*fh > visibility_sigmas * sigma) continue;   // hidden behind the visible surface
            }
            b.f_hat[i] = *fh;
            b.view[i] = vi;
            break;
        }
    }
    return b;
}

namespace {

// Gradients with respect to the field parameterization: mean, precision
// matrix A = Sigma^-1, opacity logit, rotation columns and the floored thin
// scale of g*.
struct FieldGrads {
    std::vector<Vec3> mean;
    std::vector<Mat3> prec;
    std::vector<double> logit;
    std::vector<Mat3> rot;
    std::vector<double> thin_scale;

    explicit FieldGrads(std::size_t n)
        : mean(n, Vec3::Zero()), prec(n, Mat3::Zero()), logit(n, 0.0), rot(n, Mat3::Zero()), thin_scale(n, 0.0)
    {
    }

    void merge(const FieldGrads& o)
    {
        for (std::size_t i = 0; i < mean.size(); ++i) {
            mean[i] += o.mean[i];
            prec[i] += o.prec[i];
            logit[i] += o.logit[i];
            rot[i] += o.rot[i];
            thin_scale[i] += o.thin_scale[i];
        }
    }
};

SceneGrads to_scene_grads(const Scene& scene, const DensityField& field, const FieldGrads& fg)
{
    SceneGrads out(scene);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Gaussian3D& g = scene.gaussians[i];
        const GaussianTerm& t = field.term(static_cast<int>(i));
        out.mean[i] = fg.mean[i];
        out.opacity_logit[i] = fg.logit[i];
        const Vec3 dinv = t.scales.array().square().inverse();
        const Mat3 a_bar = fg.prec[i];
        // A = R D R^T
        Mat3 dr = (a_bar + a_bar.transpose()) * t.rotation * dinv.asDiagonal();
        dr += fg.rot[i];
        const Mat3 local = t.rotation.transpose() * a_bar * t.rotation;
        const Vec3 raw = g.scales();
        for (int k = 0; k < 3; ++k) {
            if (raw[k] < kScaleFloor) continue;   // floored: constant in log_scale
            out.log_scale[i][k] = -2.0 * dinv[k] * local(k, k);
            if (k == t.thin_axis) out.log_scale[i][k] += fg.thin_scale[i] * raw[k];
        }
        out.rot[i] = rotation_grad_to_quat(g.rot, dr);
    }
    return out;
}

struct Contribution {
    int g;
    double e;      // alpha * exp(-m / 2)
    Vec3 delta;
    Vec3 a_delta;
};

// Evaluates the neighborhood of p once, keeping per-Gaussian terms.
double gather(const DensityField& field, const Vec3& p, std::vector<Contribution>& out, int& g_star)
{
    out.clear();
    double d = 0, best_m = std::numeric_limits<double>::infinity();
    g_star = -1;
    for (int g : field.candidates(p)) {
        const GaussianTerm& t = field.term(g);
        Contribution c;
        c.g = g;
        c.delta = p - t.mean;
        c.a_delta = t.inv_cov * c.delta;
        const double m = c.delta.dot(c.a_delta);
        c.e = t.alpha * std::exp(-0.5 * m);
        d += c.e;
        if (m < best_m || (m == best_m && g < g_star)) {
            best_m = m;
            g_star = g;
        }
        out.push_back(c);
    }
    return d;
}

template <typename PointFn>
LossResult reduce_points(const Scene& scene, const DensityField& field, std::size_t n, PointFn&& fn)
{
    std::vector<FieldGrads> partial(kReductionChunks, FieldGrads(0));
    std::vector<double> sums(kReductionChunks, 0.0);
    std::vector<std::size_t> counts(kReductionChunks, 0);
    parallel_chunks(n, kReductionChunks, [&](std::size_t c, std::size_t b, std::size_t e) {
        FieldGrads fg(scene.size());
        std::vector<Contribution> scratch;
        for (std::size_t i = b; i < e; ++i) {
            double value = 0;
            if (fn(i, fg, scratch, value)) {
                sums[c] += value;
                ++counts[c];
            }
        }
        partial[c] = std::move(fg);
    });
    FieldGrads total(scene.size());
    LossResult res;
    for (std::size_t c = 0; c < kReductionChunks; ++c) {
        if (!partial[c].mean.empty()) total.merge(partial[c]);
        res.value += sums[c];
        res.n_used += counts[c];
    }
    if (res.n_used == 0) {
        res.grads = SceneGrads(scene);
        return res;
    }
    // per-point callbacks accumulate unnormalized gradients
    const double inv = 1.0 / static_cast<double>(res.n_used);
    res.value *= inv;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        total.mean[i] *= inv;
        total.prec[i] *= inv;
        total.logit[i] *= inv;
        total.rot[i] *= inv;
        total.thin_scale[i] *= inv;
    }
    res.grads = to_scene_grads(scene, field, total);
    return res;
}

} // namespace

LossResult reg_loss_sdf(const Scene& scene, const NeighborIndex& index, const RegPointBatch& batch)
{
    const DensityField field(scene, index);
    return reduce_points(scene, field, batch.size(),
                         [&](std::size_t i, FieldGrads& fg, std::vector<Contribution>& cs, double& value) {
        if (!batch.valid(i)) return false;
        int g_star = -1;
        const double d = gather(field, batch.points[i], cs, g_star);
        const double s = field.term(g_star).thin_scale;
        const bool clamped = d <= kDensityClampLo || d >= kDensityClampHi;
        const double dc = std::clamp(d, kDensityClampLo, kDensityClampHi);
        const double root = std::sqrt(-2.0 * std::log(dc));
        const double f_hat = batch.f_hat[i];
        const double sign = f_hat >= 0 ? 1.0 : -1.0;
        const double r = f_hat - sign * s * root;
        value = std::abs(r);
        const double dl_df = r > 0 ? -1.0 : (r < 0 ? 1.0 : 0.0);
        fg.thin_scale[g_star] += dl_df * sign * root;
        if (clamped) return true;
        const double dl_dd = dl_df * (-sign * s / (d * root));
        for (const auto& c : cs) {
            const GaussianTerm& t = field.term(c.g);
            fg.mean[c.g] += dl_dd * c.e * c.a_delta;
            fg.prec[c.g] += (-0.5 * dl_dd * c.e) * c.delta * c.delta.transpose();
            fg.logit[c.g] += dl_dd * c.e * (1.0 - t.alpha);
        }
        return true;
    });
}

LossResult reg_loss_normal(const Scene& scene, const NeighborIndex& index, const RegPointBatch& batch)
{
    const DensityField field(scene, index);
    return reduce_points(scene, field, batch.size(),
                         [&](std::size_t i, FieldGrads& fg, std::vector<Contribution>& cs, double& value) {
        int g_star = -1;
        const double d = gather(field, batch.points[i], cs, g_star);
        if (d <= kDensityClampLo || d >= kDensityClampHi) return false;   // f is flat under the clamp
        Vec3 v = Vec3::Zero();
        for (const auto& c : cs) v -= c.e * c.a_delta;
        const double vn = v.norm();
        const GaussianTerm& ts = field.term(g_star);
        const double grad_f = ts.thin_scale * vn / (d * std::sqrt(-2.0 * std::log(d)));
        if (!(grad_f >= 1e-9)) return false;
        const Vec3& n = ts.thin_normal;
        const double dot = v.dot(n);
        const double sigma = dot >= 0 ? 1.0 : -1.0;
        value = 2.0 - 2.0 * sigma * dot / vn;
        const Vec3 gv = -2.0 * sigma * (n / vn - dot * v / (vn * vn * vn));
        fg.rot[g_star].col(ts.thin_axis) += -2.0 * sigma * v / vn;
        for (const auto& c : cs) {
            const GaussianTerm& t = field.term(c.g);
            const double ag = c.a_delta.dot(gv);
            fg.mean[c.g] += c.e * (t.inv_cov * gv - c.a_delta * ag);
            fg.prec[c.g] += -c.e * (gv * c.delta.transpose() - 0.5 * ag * c.delta * c.delta.transpose());
            fg.logit[c.g] += -(1.0 - t.alpha) * c.e * ag;
        }
        return true;
    });
}

LossResult opacity_entropy_loss(const Scene& scene)
{
    LossResult r;
    r.grads = SceneGrads(scene);
    if (scene.empty()) return r;
    const double lo = 1e-6, hi = 1.0 - 1e-6;
    const double inv = 1.0 / static_cast<double>(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const double raw = scene.gaussians[i].opacity();
        const double a = std::clamp(raw, lo, hi);
        r.value += (-a * std::log(a) - (1 - a) * std::log(1 - a)) * inv;
        if (raw > lo && raw < hi) {
            r.grads.opacity_logit[i] = std::log((1 - a) / a) * a * (1 - a) * inv;
        }
    }
    r.n_used = scene.size();
    return r;
}

std::vector<char> survivors(const Scene& scene, double threshold)
{
    std::vector<char> keep(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        keep[i] = scene.gaussians[i].opacity() >= threshold ? 1 : 0;
    }
    return keep;
}

Scene prune_transparent(const Scene& scene, double threshold)
{
    if (!(threshold >= 0.0 && threshold < 1.0)) {
        throw ValidationError("prune threshold must be in [0, 1)");
    }
    Scene out;
    out.sh_degree = scene.sh_degree;
    const auto keep = survivors(scene, threshold);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (keep[i]) out.gaussians.push_back(scene.gaussians[i]);
    }
    if (out.empty()) {
        throw EmptySceneError("pruning at alpha " + std::to_string(threshold) + " removed every Gaussian");
    }
    return out;
}

PhotometricLoss photometric_loss(const Image& rendered, const Image& target, double ssim_lambda)
{
    if (rendered.width != target.width || rendered.height != target.height) {
        throw ValidationError("rendered and target image sizes differ");
    }
    PhotometricLoss out;
    out.grad = Image(rendered.width, rendered.height, 0.0);
    const std::size_t np = static_cast<std::size_t>(rendered.width) * rendered.height;
    const double l1_scale = (1.0 - ssim_lambda) / static_cast<double>(np * 3);
    for (std::size_t i = 0; i < np * 3; ++i) {
        const double diff = rendered.data[i] - target.data[i];
        out.l1 += std::abs(diff);
        out.grad.data[i] = diff > 0 ? l1_scale : (diff < 0 ? -l1_scale : 0.0);
    }
    out.l1 /= static_cast<double>(np * 3);
    std::vector<double> x(np), y(np), gx;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < np; ++i) {
            x[i] = rendered.data[3 * i + c];
            y[i] = target.data[3 * i + c];
        }
        out.ssim += ssim_channel(x, y, rendered.width, rendered.height, ssim_lambda > 0 ? &gx : nullptr) / 3.0;
        if (ssim_lambda > 0) {
            for (std::size_t i = 0; i < np; ++i) out.grad.data[3 * i + c] -= ssim_lambda * gx[i] / 3.0;
        }
    }
    out.value = (1.0 - ssim_lambda) * out.l1 + ssim_lambda * (1.0 - out.ssim);
    return out;
}

Adam::Adam(const Scene& scene, const LearningRates& lr, double position_scale)
    : lr_(lr), position_scale_(position_scale), m_(scene), v_(scene)
{
}

namespace {

template <typename T>
void adam_update(T& p, T& m, T& v, const T& g, double lr, double b1, double b2, double c1, double c2, double eps)
{
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    p -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
}

template <int N>
void adam_update(Eigen::Matrix<double, N, 1>& p, Eigen::Matrix<double, N, 1>& m, Eigen::Matrix<double, N, 1>& v,
                 const Eigen::Matrix<double, N, 1>& g, double lr, double b1, double b2, double c1, double c2,
                 double eps)
{
    for (int k = 0; k < N; ++k) adam_update(p[k], m[k], v[k], g[k], lr, b1, b2, c1, c2, eps);
}

} // namespace

void Adam::step(Scene& scene, const SceneGrads& grads)
{
    if (grads.size() != scene.size() || m_.size() != scene.size()) {
        throw ValidationError("optimizer state does not match the scene");
    }
    ++t_;
    const double c1 = 1 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < scene.size(); ++i) {
        Gaussian3D& g = scene.gaussians[i];
        adam_update(g.mean, m_.mean[i], v_.mean[i], grads.mean[i], lr_.position * position_scale_, beta1, beta2, c1,
                    c2, eps);
        adam_update(g.log_scale, m_.log_scale[i], v_.log_scale[i], grads.log_scale[i], lr_.scale, beta1, beta2, c1,
                    c2, eps);
        adam_update(g.rot, m_.rot[i], v_.rot[i], grads.rot[i], lr_.rotation, beta1, beta2, c1, c2, eps);
        adam_update(g.opacity_logit, m_.opacity_logit[i], v_.opacity_logit[i], grads.opacity_logit[i], lr_.opacity,
                    beta1, beta2, c1, c2, eps);
        for (std::size_t k = 0; k < g.sh.size(); ++k) {
            adam_update(g.sh[k], m_.sh[i][k], v_.sh[i][k], grads.sh[i][k], k == 0 ? lr_.sh_dc : lr_.sh_rest, beta1,
                        beta2, c1, c2, eps);
        }
    }
}

void Adam::keep(const std::vector<char>& keep)
{
    auto filter = [&](auto& vec) {
        std::size_t j = 0;
        for (std::size_t i = 0; i < vec.size(); ++i) {
            if (!keep[i]) continue;
            if (i != j) vec[j] = std::move(vec[i]);
            ++j;
        }
        vec.resize(j);
    };
    for (SceneGrads* s : {&m_, &v_}) {
        if (keep.size() != s->size()) throw ValidationError("keep mask does not match optimizer state");
        filter(s->mean);
        filter(s->log_scale);
        filter(s->rot);
        filter(s->opacity_logit);
        filter(s->sh);
        filter(s->cov);
    }
}

namespace {

constexpr char kAdamMagic[8] = {'G', 'S', 'A', 'D', 'A', 'M', '1', '\0'};

void append_raw(std::vector<char>& out, const void* p, std::size_t n)
{
    const char* c = static_cast<const char*>(p);
    out.insert(out.end(), c, c + n);
}

void put_doubles(std::vector<char>& out, const double* p, std::size_t n) { append_raw(out, p, n * sizeof(double)); }

} // namespace

void Adam::save(const std::string& path) const
{
    std::vector<char> buf(kAdamMagic, kAdamMagic + sizeof(kAdamMagic));
    const double header[9] = {beta1, beta2, eps, lr_.position, lr_.sh_dc, lr_.sh_rest, lr_.opacity, lr_.scale,
                              lr_.rotation};
    put_doubles(buf, header, 9);
    put_doubles(buf, &position_scale_, 1);
    const std::int64_t meta[2] = {t_, static_cast<std::int64_t>(m_.size())};
    append_raw(buf, meta, sizeof(meta));
    for (const SceneGrads* s : {&m_, &v_}) {
        for (std::size_t i = 0; i < s->size(); ++i) {
            const std::int64_t nsh = static_cast<std::int64_t>(s->sh[i].size());
            append_raw(buf, &nsh, sizeof(nsh));
            put_doubles(buf, s->mean[i].data(), 3);
            put_doubles(buf, s->log_scale[i].data(), 3);
            put_doubles(buf, s->rot[i].data(), 4);
            put_doubles(buf, &s->opacity_logit[i], 1);
            for (const auto& c : s->sh[i]) put_doubles(buf, c.data(), 3);
        }
    }
    ply::write_file(path, "", buf);
}

Adam Adam::load(const std::string& path)
{
    const std::vector<char> buf = ply::read_file(path);
    std::size_t pos = 0;
    auto take = [&](void* dst, std::size_t n) {
        if (pos + n > buf.size()) throw FormatError("truncated optimizer state: " + path);
        std::memcpy(dst, buf.data() + pos, n);
        pos += n;
    };
    char magic[8];
    take(magic, 8);
    if (std::memcmp(magic, kAdamMagic, 8) != 0) throw FormatError("not an optimizer state file: " + path);
    Adam a;
    double header[9];
    take(header, sizeof(header));
    a.beta1 = header[0];
    a.beta2 = header[1];
    a.eps = header[2];
    a.lr_ = {header[3], header[4], header[5], header[6], header[7], header[8]};
    take(&a.position_scale_, sizeof(double));
    std::int64_t meta[2];
    take(meta, sizeof(meta));
    a.t_ = meta[0];
    for (SceneGrads* s : {&a.m_, &a.v_}) {
        const auto n = static_cast<std::size_t>(meta[1]);
        s->mean.resize(n);
        s->log_scale.resize(n);
        s->rot.resize(n);
        s->opacity_logit.resize(n);
        s->sh.resize(n);
        s->cov.assign(n, Mat3::Zero());
        for (std::size_t i = 0; i < n; ++i) {
            std::int64_t nsh;
            take(&nsh, sizeof(nsh));
            if (nsh < 0 || nsh > 64) throw FormatError("bad SH count in optimizer state: " + path);
            take(s->mean[i].data(), 3 * sizeof(double));
            take(s->log_scale[i].data(), 3 * sizeof(double));
            take(s->rot[i].data(), 4 * sizeof(double));
            take(&s->opacity_logit[i], sizeof(double));
            s->sh[i].resize(static_cast<std::size_t>(nsh));
            for (auto& c : s->sh[i]) take(c.data(), 3 * sizeof(double));
        }
    }
    if (pos != buf.size()) throw FormatError("trailing bytes in optimizer state: " + path);
    return a;
}

void TrainLog::write_csv(std::ostream& out) const
{
    out << "iter,phase,n_gaussians,photometric,entropy,sdf,normal,total,n_reg_valid\n";
    out.precision(9);
    for (const auto& r : rows) {
        out << r.iter << ',' << r.phase << ',' << r.n_gaussians << ',' << r.photometric << ',' << r.entropy << ','
            << r.sdf << ',' << r.normal << ',' << r.total << ',' << r.n_reg_valid << '\n';
    }
}

void TrainLog::write_csv(const std::string& path) const
{
    std::ofstream f(path);
    if (!f) throw IoError("cannot write loss log: " + path);
    write_csv(f);
}

double camera_extent(std::span<const Camera> cams)
{
    if (cams.empty()) return 1.0;
    Vec3 centroid = Vec3::Zero();
    for (const auto& c : cams) centroid += c.center();
    centroid /= static_cast<double>(cams.size());
    double r = 0;
    for (const auto& c : cams) r = std::max(r, (c.center() - centroid).norm());
    return r > 0 ? 1.1 * r : 1.0;
}

Scene train(const Scene& init, std::span<const Image> images, std::span<const Camera> cams, const TrainConfig& cfg,
            TrainLog* log, Adam* optimizer_out)
{
    cfg.validate();
    if (images.size() != cams.size()) {
        throw ValidationError("got " + std::to_string(images.size()) + " images for " + std::to_string(cams.size()) +
                              " cameras");
    }
    Scene scene = init;
    const double extent = cfg.spatial_extent > 0 ? cfg.spatial_extent : camera_extent(cams);
    Adam adam(scene, cfg.lr, extent);
    const int total = cfg.total_iters();
    if (total == 0) {
        if (optimizer_out) *optimizer_out = adam;
        return scene;
    }
    scene.validate();
    if (cams.empty()) throw ValidationError("training needs at least one camera");
    for (std::size_t i = 0; i < cams.size(); ++i) {
        if (images[i].width != cams[i].width || images[i].height != cams[i].height) {
            throw ValidationError("image " + std::to_string(i) + " does not match its camera size");
        }
    }

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick_cam(0, cams.size() - 1);
    const int prune_at = cfg.iters_free + cfg.iters_entropy;
    const bool do_prune = cfg.iters_entropy > 0 || cfg.iters_reg > 0;
    bool pruned = false;
    NeighborIndex index;

    auto prune_now = [&] {
        const auto keep = survivors(scene, cfg.prune_alpha);
        const std::size_t before = scene.size();
        scene = prune_transparent(scene, cfg.prune_alpha);
        adam.keep(keep);
        if (log) log->pruned = before - scene.size();
        pruned = true;
    };

    for (int it = 0; it < total; ++it) {
        if (it == prune_at && do_prune && !pruned) prune_now();
        const int phase = it < cfg.iters_free ? 1 : (it < prune_at ? 2 : 3);
        const Camera& cam = cams[pick_cam(rng)];
        const std::size_t ci = static_cast<std::size_t>(&cam - cams.data());

        TrainLogRow row;
        row.iter = it;
        row.phase = phase;
        row.n_gaussians = scene.size();

        const ForwardPass fwd = rasterize(scene, cam, cfg.render);
        PhotometricLoss photo = photometric_loss(fwd.color, images[ci], cfg.ssim_lambda);
        for (auto& v : photo.grad.data) v *= cfg.weights.photometric;
        SceneGrads grads = backward_render(fwd, scene, cam, photo.grad, cfg.render);
        row.photometric = photo.value;
        row.total = cfg.weights.photometric * photo.value;

        if (phase == 2 || (phase == 3 && cfg.entropy_during_reg)) {
            const LossResult ent = opacity_entropy_loss(scene);
            grads.add_scaled(ent.grads, cfg.weights.entropy);
            row.entropy = ent.value;
            row.total += cfg.weights.entropy * ent.value;
        }
        if (phase == 3) {
            if (index.size() != scene.size() || index.stale_counter >= cfg.knn_refresh) {
                index = rebuild_index(scene, cfg.knn);
                if (log) ++log->index_rebuilds;
            }
            const auto samples = sample_reg_points(scene, cfg.n_reg_points, rng, cfg.opacity_weighted_sampling);
            const RegView view{&cam, &fwd.depth};
            const RegPointBatch batch = build_reg_batch(scene, samples, std::span<const RegView>(&view, 1), rng,
                                                        cfg.visibility_sigmas, cfg.render.coverage_threshold);
            const LossResult sdf = reg_loss_sdf(scene, index, batch);
            const LossResult nrm = reg_loss_normal(scene, index, batch);
            grads.add_scaled(sdf.grads, cfg.weights.sdf);
            grads.add_scaled(nrm.grads, cfg.weights.normal);
            row.sdf = sdf.value;
            row.normal = nrm.value;
            row.n_reg_valid = sdf.n_used;
            row.total += cfg.weights.sdf * sdf.value + cfg.weights.normal * nrm.value;
        }

        if (!std::isfinite(row.total) || !grads.all_finite()) {
            if (!cfg.snapshot_path.empty()) save_gaussian_ply(scene, cfg.snapshot_path);
            std::ostringstream msg;
            msg << "non-finite loss at iteration " << it << " (phase " << phase << "): photometric "
                << row.photometric << ", entropy " << row.entropy << ", sdf " << row.sdf << ", normal " << row.normal;
            if (!cfg.snapshot_path.empty()) msg << "; scene snapshot written to " << cfg.snapshot_path;
            throw TrainingError(msg.str());
        }

        adam.step(scene, grads);
        for (auto& g : scene.gaussians) normalize_quat(g.rot, 0.0);
        ++index.stale_counter;
        if (log) log->rows.push_back(row);
    }
    if (do_prune && !pruned) prune_now();
    if (optimizer_out) *optimizer_out = std::move(adam);
    return scene;
}

} // namespace gausssurf
