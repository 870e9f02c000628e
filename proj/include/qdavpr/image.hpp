#pragma once

#include <filesystem>
#include <vector>

#include "qdavpr/types.hpp"

namespace qdavpr {

/// Planar (channel, row, column) float image with values in [0, 1].
struct Image {
    int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    [[nodiscard]] float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    [[nodiscard]] bool empty() const { return data.empty(); }
    bool operator==(const Image&) const = default;
};

/// Mean Rec.601 luma.
[[nodiscard]] double mean_luminance(const Image& img);

void clamp01(Image& img);

/// Bilinear resampling (align-corners = false).
[[nodiscard]] Image resize_bilinear(const Image& img, int height, int width);

/// Binary PPM (P6, 3 channels) or PGM (P5, 1 channel), 8-bit.
[[nodiscard]] Image read_pnm(const std::filesystem::path& path);
void write_pnm(const Image& img, const std::filesystem::path& path);

}  // namespace qdavpr
