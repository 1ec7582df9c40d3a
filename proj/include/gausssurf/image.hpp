#pragma once

#include "gausssurf/common.hpp"

#include <string>
#include <vector>

namespace gausssurf {

/// Row-major RGB image with channels interleaved, values nominally in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

/// 8-bit RGB PNG. Values are clamped to [0, 1] and rounded.
void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);

} // namespace gausssurf
