#pragma once

#include <vector>

namespace gausssurf {

struct SsimOptions {
    int radius = 5;        // 11x11 window
    double sigma = 1.5;
    double c1 = 1e-4;      // (0.01 * L)^2 with L = 1
    double c2 = 9e-4;      // (0.03 * L)^2
};

/// Mean SSIM over every window that fits inside a single-channel w x h image
/// (no padding). Images smaller than the window shrink the radius to fit.
/// If grad_x is given it receives d(mean SSIM)/dx, sized w * h.
double ssim_channel(const std::vector<double>& x, const std::vector<double>& y, int w, int h,
                    std::vector<double>* grad_x = nullptr, const SsimOptions& opts = {});

} // namespace gausssurf
