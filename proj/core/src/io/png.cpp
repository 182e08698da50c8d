#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "softperc/common.hpp"
#include "softperc/io/png.hpp"

namespace softperc::io {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
    put_u32(out, std::uint32_t(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const auto crc = std::uint32_t(
        ::crc32(0, out.data() + crc_start, uInt(out.size() - crc_start)));
    put_u32(out, crc);
}

}  // namespace

void write_png(const std::string& path, const Image8& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.rgb.size() != std::size_t(img.width) * img.height * 3)
        throw UsageError("png: raster is " + std::to_string(img.rgb.size()) +
                         " bytes for " + std::to_string(img.width) + "x" +
                         std::to_string(img.height));

    // Filter byte 0 in front of every scanline, then one deflate stream.
    std::vector<std::uint8_t> raw;
    raw.reserve(std::size_t(img.height) * (std::size_t(img.width) * 3 + 1));
    for (int r = 0; r < img.height; ++r) {
        raw.push_back(0);
        const std::uint8_t* row = img.rgb.data() + std::size_t(r) * img.width * 3;
        raw.insert(raw.end(), row, row + std::size_t(img.width) * 3);
    }
    uLongf zcap = ::compressBound(uLong(raw.size()));
    std::vector<std::uint8_t> zbuf(zcap);
    if (::compress2(zbuf.data(), &zcap, raw.data(), uLong(raw.size()), 9) != Z_OK)
        throw NumericError("png: deflate failed");
    zbuf.resize(zcap);

    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, std::uint32_t(img.width));
    put_u32(ihdr, std::uint32_t(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace

    std::vector<std::uint8_t> png{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    put_chunk(png, "IHDR", ihdr);
    put_chunk(png, "IDAT", zbuf);
    put_chunk(png, "IEND", {});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError("png: cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(png.data()), std::streamsize(png.size()));
    if (!out) throw DataFormatError("png: short write to '" + path + "'");
}

namespace {

const num::TensorT<float>& strip_batch(const num::TensorT<float>& t, int channels,
                                       const char* who) {
    const bool ok = (t.ndim() == 3 && t.dim(0) == channels) ||
                    (t.ndim() == 4 && t.dim(0) == 1 && t.dim(1) == channels);
    if (!ok)
        throw UsageError(std::string(who) + ": expected [" + std::to_string(channels) +
                         ", H, W] (optionally with a leading batch of 1)");
    return t;
}

std::uint8_t to_byte(float v) {
    return std::uint8_t(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

void hsv_to_rgb(double h, double s, double v, std::uint8_t rgb[3]) {
    h = h - std::floor(h);  // wrap to [0, 1)
    const double f = h * 6.0;
    const int sector = int(f) % 6;
    const double frac = f - std::floor(f);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * frac);
    const double t = v * (1.0 - s * (1.0 - frac));
    double r = 0, g = 0, b = 0;
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
    rgb[0] = std::uint8_t(std::lround(r * 255.0));
    rgb[1] = std::uint8_t(std::lround(g * 255.0));
    rgb[2] = std::uint8_t(std::lround(b * 255.0));
}

}  // namespace

Image8 render_vision(const num::TensorT<float>& chw) {
    const auto& t = strip_batch(chw, 3, "render_vision");
    const int h = int(t.dim(t.ndim() - 2));
    const int w = int(t.dim(t.ndim() - 1));
    const std::int64_t hw = std::int64_t(h) * w;
    Image8 img{w, h, std::vector<std::uint8_t>(std::size_t(hw) * 3)};
    for (std::int64_t p = 0; p < hw; ++p)
        for (int c = 0; c < 3; ++c) img.rgb[p * 3 + c] = to_byte(t[c * hw + p]);
    return img;
}

Image8 render_flow(const num::TensorT<float>& flow, double max_magnitude) {
    const auto& t = strip_batch(flow, 2, "render_flow");
    const int h = int(t.dim(t.ndim() - 2));
    const int w = int(t.dim(t.ndim() - 1));
    const std::int64_t hw = std::int64_t(h) * w;
    double vmax = max_magnitude;
    if (vmax <= 0.0) {
        for (std::int64_t p = 0; p < hw; ++p)
            vmax = std::max(vmax, std::hypot(double(t[p]), double(t[hw + p])));
        if (vmax == 0.0) vmax = 1.0;  // all-zero field renders white
    }
    Image8 img{w, h, std::vector<std::uint8_t>(std::size_t(hw) * 3)};
    for (std::int64_t p = 0; p < hw; ++p) {
        const double du = t[p];
        const double dv = t[hw + p];
        const double angle = std::atan2(dv, du);  // [-pi, pi]
        const double hue = (angle + M_PI) / (2.0 * M_PI);
        const double sat = std::min(std::hypot(du, dv) / vmax, 1.0);
        hsv_to_rgb(hue, sat, 1.0, &img.rgb[p * 3]);
    }
    return img;
}

void colormap(double t, std::uint8_t rgb[3]) {
    // Piecewise-linear path through viridis anchor colors.
    static constexpr double kAnchor[6][3] = {
        {0.267, 0.005, 0.329}, {0.283, 0.141, 0.458}, {0.254, 0.265, 0.530},
        {0.164, 0.471, 0.558}, {0.478, 0.821, 0.318}, {0.993, 0.906, 0.144}};
    t = std::clamp(t, 0.0, 1.0) * 5.0;
    const int lo = std::min(int(t), 4);
    const double f = t - lo;
    for (int c = 0; c < 3; ++c) {
        const double v = kAnchor[lo][c] * (1.0 - f) + kAnchor[lo + 1][c] * f;
        rgb[c] = std::uint8_t(std::lround(v * 255.0));
    }
}

Image8 scatter(const std::vector<double>& x, const std::vector<double>& y,
               const std::vector<double>& value, int size) {
    if (x.size() != y.size() || x.size() != value.size() || x.empty())
        throw UsageError("scatter: x, y, and value must be non-empty and equal-length");
    if (size < 16) throw UsageError("scatter: canvas below 16 px");

    const auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
    const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
    const auto [vmin_it, vmax_it] = std::minmax_element(value.begin(), value.end());
    const double xspan = std::max(*xmax_it - *xmin_it, 1e-12);
    const double yspan = std::max(*ymax_it - *ymin_it, 1e-12);
    const double vspan = std::max(*vmax_it - *vmin_it, 1e-12);

    Image8 img{size, size, std::vector<std::uint8_t>(std::size_t(size) * size * 3, 250)};
    const int margin = size / 16;
    const int inner = size - 2 * margin;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const int px = margin + int(std::lround((x[i] - *xmin_it) / xspan * (inner - 1)));
        const int py =
            margin + int(std::lround((1.0 - (y[i] - *ymin_it) / yspan) * (inner - 1)));
        std::uint8_t rgb[3];
        colormap((value[i] - *vmin_it) / vspan, rgb);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int cx = std::clamp(px + dx, 0, size - 1);
                const int cy = std::clamp(py + dy, 0, size - 1);
                std::memcpy(&img.rgb[(std::size_t(cy) * size + cx) * 3], rgb, 3);
            }
    }
    return img;
}

Image8 hstack(const std::vector<Image8>& panels, int gap) {
    if (panels.empty()) throw UsageError("hstack: no panels");
    const int h = panels.front().height;
    int w = 0;
    for (const Image8& p : panels) {
        if (p.height != h) throw UsageError("hstack: panel heights differ");
        w += p.width;
    }
    w += gap * int(panels.size() - 1);
    Image8 img{w, h, std::vector<std::uint8_t>(std::size_t(w) * h * 3, 32)};
    int at = 0;
    for (const Image8& p : panels) {
        for (int r = 0; r < h; ++r)
            std::memcpy(&img.rgb[(std::size_t(r) * w + at) * 3],
                        &p.rgb[std::size_t(r) * p.width * 3], std::size_t(p.width) * 3);
        at += p.width + gap;
    }
    return img;
}

}  // namespace softperc::io
