#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "gf/tensor.hpp"

// Images are float tensors of shape (3, H, W) with values in [0, 1].
namespace gf {

struct RGB {
    float r = 0, g = 0, b = 0;
};

inline TensorF make_image(int64_t h, int64_t w, RGB c = {}) {
    TensorF img({3, h, w});
    for (int64_t i = 0; i < h * w; ++i) {
        img[i] = c.r;
        img[h * w + i] = c.g;
        img[2 * h * w + i] = c.b;
    }
    return img;
}

inline int64_t img_h(const TensorF& img) { return img.dim(1); }
inline int64_t img_w(const TensorF& img) { return img.dim(2); }

inline TensorF crop_image(const TensorF& img, int64_t x0, int64_t y0, int64_t x1, int64_t y1) {
    if (x0 < 0 || y0 < 0 || x1 > img_w(img) || y1 > img_h(img) || x0 >= x1 || y0 >= y1)
        throw std::invalid_argument("crop_image: bad rect");
    TensorF out({img.dim(0), y1 - y0, x1 - x0});
    for (int64_t c = 0; c < img.dim(0); ++c)
        for (int64_t y = y0; y < y1; ++y)
            for (int64_t x = x0; x < x1; ++x)
                out.at(c, y - y0, x - x0) = img.at(c, y, x);
    return out;
}

inline TensorF resize_bilinear(const TensorF& img, int64_t oh, int64_t ow) {
    int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    TensorF out({C, oh, ow});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < oh; ++y) {
            double sy = (static_cast<double>(y) + 0.5) * H / oh - 0.5;
            int64_t y0 = static_cast<int64_t>(std::floor(sy));
            double fy = sy - y0;
            int64_t ya = std::clamp<int64_t>(y0, 0, H - 1);
            int64_t yb = std::clamp<int64_t>(y0 + 1, 0, H - 1);
            for (int64_t x = 0; x < ow; ++x) {
                double sx = (static_cast<double>(x) + 0.5) * W / ow - 0.5;
                int64_t x0 = static_cast<int64_t>(std::floor(sx));
                double fx = sx - x0;
                int64_t xa = std::clamp<int64_t>(x0, 0, W - 1);
                int64_t xb = std::clamp<int64_t>(x0 + 1, 0, W - 1);
                double v = (1 - fy) * ((1 - fx) * img.at(c, ya, xa) + fx * img.at(c, ya, xb)) +
                           fy * ((1 - fx) * img.at(c, yb, xa) + fx * img.at(c, yb, xb));
                out.at(c, y, x) = static_cast<float>(v);
            }
        }
    return out;
}

// Snap to the 256-level grid used by dataset storage; keeps round-trips exact.
inline void quantize_u8_inplace(TensorF& img) {
    for (int64_t i = 0; i < img.numel(); ++i) {
        float v = std::clamp(img[i], 0.f, 1.f);
        img[i] = std::round(v * 255.f) / 255.f;
    }
}

inline TensorU8 to_u8(const TensorF& img) {
    TensorU8 out(img.shape());
    for (int64_t i = 0; i < img.numel(); ++i)
        out[i] = static_cast<uint8_t>(std::lround(std::clamp(img[i], 0.f, 1.f) * 255.f));
    return out;
}

inline TensorF from_u8(const TensorU8& img) {
    TensorF out(img.shape());
    for (int64_t i = 0; i < img.numel(); ++i) out[i] = static_cast<float>(img[i]) / 255.f;
    return out;
}

// Debug output; 8-bit binary PPM.
inline void write_ppm(const std::string& path, const TensorF& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
    int64_t H = img_h(img), W = img_w(img);
    f << "P6\n" << W << " " << H << "\n255\n";
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                float v = std::clamp(img.at(c, y, x), 0.f, 1.f);
                f.put(static_cast<char>(std::lround(v * 255.f)));
            }
}

}  // namespace gf
