#include "gausssurf/ssim.hpp"

#include "gausssurf/common.hpp"

#include <algorithm>
#include <cmath>

namespace gausssurf {

namespace {

std::vector<double> gaussian_kernel(int radius, double sigma)
{
    std::vector<double> k(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable correlation keeping only fully covered outputs: (w-2r) x (h-2r).
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h, const std::vector<double>& k)
{
    const int r = static_cast<int>(k.size() / 2);
    const int ow = w - 2 * r, oh = h - 2 * r;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h), out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i <= 2 * r; ++i) s += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i <= 2 * r; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    return out;
}

// Adjoint of filter_valid: scatters a (w-2r) x (h-2r) map back to w x h.
std::vector<double> filter_valid_adjoint(const std::vector<double>& map, int w, int h, const std::vector<double>& k)
{
    const int r = static_cast<int>(k.size() / 2);
    const int ow = w - 2 * r, oh = h - 2 * r;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0), out(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            const double v = map[static_cast<std::size_t>(y) * ow + x];
            for (int i = 0; i <= 2 * r; ++i) tmp[static_cast<std::size_t>(y + i) * ow + x] += k[i] * v;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            const double v = tmp[static_cast<std::size_t>(y) * ow + x];
            for (int i = 0; i <= 2 * r; ++i) out[static_cast<std::size_t>(y) * w + x + i] += k[i] * v;
        }
    }
    return out;
}

} // namespace

double ssim_channel(const std::vector<double>& x, const std::vector<double>& y, int w, int h,
                    std::vector<double>* grad_x, const SsimOptions& opts)
{
    if (w <= 0 || h <= 0 || x.size() != static_cast<std::size_t>(w) * h || y.size() != x.size()) {
        throw ValidationError("ssim: image size mismatch");
    }
    const int r = std::min(opts.radius, (std::min(w, h) - 1) / 2);
    const auto k = gaussian_kernel(r, opts.sigma);

    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h, k), my = filter_valid(y, w, h, k);
    const auto exx = filter_valid(xx, w, h, k), eyy = filter_valid(yy, w, h, k), exy = filter_valid(xy, w, h, k);
    const std::size_t n = mx.size();

    std::vector<double> d_mu, d_exx, d_exy;
    if (grad_x) {
        d_mu.resize(n);
        d_exx.resize(n);
        d_exy.resize(n);
    }
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double vx = exx[i] - mx[i] * mx[i];
        const double vy = eyy[i] - my[i] * my[i];
        const double cxy = exy[i] - mx[i] * my[i];
        const double a1 = 2 * mx[i] * my[i] + opts.c1, a2 = 2 * cxy + opts.c2;
        const double b1 = mx[i] * mx[i] + my[i] * my[i] + opts.c1, b2 = vx + vy + opts.c2;
        const double s = a1 * a2 / (b1 * b2);
        total += s;
        if (grad_x) {
            const double ds_dmx = 2 * my[i] * a2 / (b1 * b2) - s * 2 * mx[i] / b1;
            const double ds_dvx = -s / b2;
            const double ds_dcxy = 2 * a1 / (b1 * b2);
            // back to raw moments: vx = E[x^2] - mx^2, cxy = E[xy] - mx my
            d_mu[i] = (ds_dmx - 2 * mx[i] * ds_dvx - my[i] * ds_dcxy) / n;
            d_exx[i] = ds_dvx / n;
            d_exy[i] = ds_dcxy / n;
        }
    }
    if (grad_x) {
        const auto g_mu = filter_valid_adjoint(d_mu, w, h, k);
        const auto g_xx = filter_valid_adjoint(d_exx, w, h, k);
        const auto g_xy = filter_valid_adjoint(d_exy, w, h, k);
        grad_x->resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            (*grad_x)[i] = g_mu[i] + 2 * x[i] * g_xx[i] + y[i] * g_xy[i];
        }
    }
    return total / n;
}

} // namespace gausssurf
