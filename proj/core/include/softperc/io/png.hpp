#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softperc/tensor.hpp"

namespace softperc::io {

/// Plain 8-bit RGB raster.
struct Image8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // width * height * 3, row-major
};

/// Minimal truecolor PNG writer (zlib deflate, filter 0 scanlines).
void write_png(const std::string& path, const Image8& img);

/// [3, H, W] (or [1, 3, H, W]) floats in [0, 1] to an 8-bit raster.
Image8 render_vision(const num::TensorT<float>& chw);

/// [2, H, W] (or [1, 2, H, W]) flow to the angle-hue / magnitude-saturation
/// color wheel. max_magnitude <= 0 normalizes by the field's own maximum.
Image8 render_flow(const num::TensorT<float>& flow, double max_magnitude = 0.0);

/// Monotone-luminance colormap (viridis-like), t clamped to [0, 1].
void colormap(double t, std::uint8_t rgb[3]);

/// Scatter plot of an embedding, points colored by `value` through the
/// colormap. Axes are fit to the data with a small margin.
Image8 scatter(const std::vector<double>& x, const std::vector<double>& y,
               const std::vector<double>& value, int size = 512);

/// Side-by-side strip with a thin separator, for per-trial flow panels.
Image8 hstack(const std::vector<Image8>& panels, int gap = 2);

}  // namespace softperc::io
