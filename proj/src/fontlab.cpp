#include "gf/fontlab/fontlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "gf/fontlab/atlas.hpp"
#include "gf/hash.hpp"

namespace gf::fontlab {

namespace {

constexpr double kMinScale = 0.5;
constexpr int S = kSupersample;

bool atlas_bit(int glyph, int row, int col) {
    if (row < 0 || row >= 8 || col < 0 || col >= 8) return false;
    return (kGlyphAtlas[glyph][row] >> (7 - col)) & 1;
}

// Horizontal-then-vertical sliding Chebyshev max over a binary grid.
void dilate(std::vector<uint8_t>& g, int64_t w, int64_t h, int64_t r) {
    if (r <= 0) return;
    std::vector<uint8_t> tmp(g.size());
    for (int64_t y = 0; y < h; ++y) {
        const uint8_t* row = g.data() + y * w;
        uint8_t* out = tmp.data() + y * w;
        for (int64_t x = 0; x < w; ++x) {
            uint8_t v = 0;
            for (int64_t k = std::max<int64_t>(0, x - r); k <= std::min(w - 1, x + r) && !v; ++k)
                v = row[k];
            out[x] = v;
        }
    }
    for (int64_t x = 0; x < w; ++x)
        for (int64_t y = 0; y < h; ++y) {
            uint8_t v = 0;
            for (int64_t k = std::max<int64_t>(0, y - r); k <= std::min(h - 1, y + r) && !v; ++k)
                v = tmp[k * w + x];
            g[y * w + x] = v;
        }
}

void erode(std::vector<uint8_t>& g, int64_t w, int64_t h, int64_t r) {
    if (r <= 0) return;
    for (auto& v : g) v = !v;
    dilate(g, w, h, r);
    for (auto& v : g) v = !v;
}

// Box-mean then re-threshold; rounds corners without growing strokes much.
void soften(std::vector<uint8_t>& g, int64_t w, int64_t h, int64_t r) {
    if (r <= 0) return;
    std::vector<float> acc(g.size());
    std::vector<float> tmp(g.size());
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            float s = 0;
            int64_t n = 0;
            for (int64_t k = std::max<int64_t>(0, x - r); k <= std::min(w - 1, x + r); ++k, ++n)
                s += g[y * w + k];
            tmp[y * w + x] = s / static_cast<float>(n);
        }
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            float s = 0;
            int64_t n = 0;
            for (int64_t k = std::max<int64_t>(0, y - r); k <= std::min(h - 1, y + r); ++k, ++n)
                s += tmp[k * w + x];
            acc[y * w + x] = s / static_cast<float>(n);
        }
    for (size_t i = 0; i < g.size(); ++i) g[i] = acc[i] >= 0.5f;
}

struct Layout {
    // per character: glyph index and pen position (atlas units)
    std::vector<int> glyphs;
    std::vector<double> pens;
    std::vector<int> col0;  // tight span start in the atlas cell
    double total_units = 0;
};

Layout layout_text(const std::string& text) {
    Layout lo;
    double pen = 0;
    for (size_t i = 0; i < text.size(); ++i) {
        int g = charset_index(text[i]);
        if (g < 0) throw UnsupportedCharacter(text[i]);
        auto [c0, c1] = glyph_col_span(g);
        lo.glyphs.push_back(g);
        lo.pens.push_back(pen);
        lo.col0.push_back(c0);
        pen += (c1 - c0) + (i + 1 < text.size() ? 1 : 0);
    }
    lo.total_units = pen;
    return lo;
}

bool layout_ink(const Layout& lo, double u, double v) {
    if (v < 0 || v >= 8) return false;
    int row = static_cast<int>(v);
    for (size_t i = 0; i < lo.glyphs.size(); ++i) {
        double rel = u - lo.pens[i];
        if (rel < 0) continue;
        auto [c0, c1] = glyph_col_span(lo.glyphs[i]);
        if (rel >= c1 - c0) continue;
        return atlas_bit(lo.glyphs[i], row, c0 + static_cast<int>(rel));
    }
    return false;
}

double margin_pad(const FontStyle& st, double scale) {
    return std::ceil(std::fabs(st.slant_shear) * 4.0 * scale) + st.stroke_dilation +
           st.corner_soften + 1.0;
}

std::vector<FontStyle> build_registry() {
    std::vector<FontStyle> v;
    auto add = [&](int dil, double shear, bool outline, int soft) {
        FontStyle s;
        s.style_id = static_cast<int>(v.size());
        s.stroke_dilation = dil;
        s.slant_shear = shear;
        s.outline_only = outline;
        s.corner_soften = soft;
        v.push_back(s);
    };
    add(0, 0.0, false, 0);   // regular
    add(1, 0.0, false, 0);   // bold
    add(0, 0.3, false, 0);   // italic
    add(1, 0.0, true, 0);    // outline
    add(1, 0.0, false, 1);   // rounded bold
    add(0, -0.3, false, 0);  // back-slant
    add(1, 0.3, false, 0);   // bold italic
    add(2, 0.0, false, 0);   // heavy
    return v;
}

}  // namespace

int charset_index(char c) {
    const char* p = std::strchr(kCharset, c);
    return (p && c != '\0') ? static_cast<int>(p - kCharset) : -1;
}

bool text_in_charset(const std::string& text) {
    for (char c : text)
        if (charset_index(c) < 0) return false;
    return true;
}

std::pair<int, int> glyph_col_span(int glyph) {
    int c0 = 8, c1 = 0;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c)
            if (atlas_bit(glyph, r, c)) {
                c0 = std::min(c0, c);
                c1 = std::max(c1, c + 1);
            }
    if (c1 <= c0) return {0, 0};
    return {c0, c1};
}

double text_layout_units(const std::string& text) { return layout_text(text).total_units; }

std::pair<double, double> render_extent(const std::string& text, const FontStyle& style,
                                        double scale) {
    double units = text_layout_units(text);
    double pad = margin_pad(style, scale);
    return {units * scale + 2 * pad, 8 * scale + 2 * pad};
}

RenderedText render_text(const std::string& text, const FontStyle& style, RGB color,
                         int64_t canvas_w, int64_t canvas_h, double origin_x, double origin_y,
                         double scale) {
    if (scale <= 0) scale = style.scale;
    RenderedText out;
    out.pixels = TensorF({3, canvas_h, canvas_w});
    out.coverage = TensorF({canvas_h, canvas_w});
    out.ink_mask = TensorU8({canvas_h, canvas_w});
    if (text.empty()) return out;

    Layout lo = layout_text(text);
    double pad = margin_pad(style, scale);
    int64_t bx0 = static_cast<int64_t>(std::floor(origin_x - pad));
    int64_t by0 = static_cast<int64_t>(std::floor(origin_y - pad));
    int64_t bx1 = static_cast<int64_t>(std::ceil(origin_x + lo.total_units * scale + pad));
    int64_t by1 = static_cast<int64_t>(std::ceil(origin_y + 8 * scale + pad));
    int64_t bw = (bx1 - bx0) * S, bh = (by1 - by0) * S;

    std::vector<uint8_t> grid(static_cast<size_t>(bw * bh), 0);
    double inv_scale = 1.0 / scale;
    for (int64_t iy = 0; iy < bh; ++iy) {
        double y = by0 + (iy + 0.5) / S - origin_y;
        double v = y * inv_scale;
        if (v < 0 || v >= 8) continue;
        // positive shear slants like an italic: top half shifts right
        double shear_shift = style.slant_shear * (4 * scale - y);
        for (int64_t ix = 0; ix < bw; ++ix) {
            double x = bx0 + (ix + 0.5) / S - origin_x;
            double u = (x - shear_shift) * inv_scale;
            if (layout_ink(lo, u, v)) grid[static_cast<size_t>(iy * bw + ix)] = 1;
        }
    }
    dilate(grid, bw, bh, static_cast<int64_t>(style.stroke_dilation) * S);
    if (style.outline_only) {
        std::vector<uint8_t> interior = grid;
        erode(interior, bw, bh, S);
        for (size_t i = 0; i < grid.size(); ++i) grid[i] = grid[i] && !interior[i];
    }
    soften(grid, bw, bh, static_cast<int64_t>(style.corner_soften) * S);

    // box-downsample into canvas-aligned coverage
    for (int64_t py = 0; py < by1 - by0; ++py) {
        int64_t cy = by0 + py;
        for (int64_t px = 0; px < bx1 - bx0; ++px) {
            int64_t cx = bx0 + px;
            int sum = 0;
            for (int64_t sy = 0; sy < S; ++sy)
                for (int64_t sx = 0; sx < S; ++sx)
                    sum += grid[static_cast<size_t>((py * S + sy) * bw + px * S + sx)];
            if (sum == 0) continue;
            float cov = static_cast<float>(sum) / (S * S);
            if (cx < 0 || cx >= canvas_w || cy < 0 || cy >= canvas_h)
                throw OutOfCanvas("ink at (" + std::to_string(cx) + "," + std::to_string(cy) +
                                  ") outside " + std::to_string(canvas_w) + "x" +
                                  std::to_string(canvas_h));
            out.coverage.at(cy, cx) = cov;
            out.pixels.at(0, cy, cx) = color.r * cov;
            out.pixels.at(1, cy, cx) = color.g * cov;
            out.pixels.at(2, cy, cx) = color.b * cov;
            out.ink_mask.at(cy, cx) = cov >= 0.5f;
        }
    }

    // tight bbox over ink_mask
    int64_t x0 = canvas_w, y0 = canvas_h, x1 = 0, y1 = 0;
    for (int64_t y = 0; y < canvas_h; ++y)
        for (int64_t x = 0; x < canvas_w; ++x)
            if (out.ink_mask.at(y, x)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x + 1);
                y1 = std::max(y1, y + 1);
            }
    if (x1 > x0) {
        out.x0 = x0;
        out.y0 = y0;
        out.x1 = x1;
        out.y1 = y1;
    }
    return out;
}

double fit_scale(const std::string& text, const FontStyle& style, int64_t box_w, int64_t box_h,
                 int64_t margin) {
    double avail_w = static_cast<double>(box_w - 2 * margin);
    double avail_h = static_cast<double>(box_h - 2 * margin);
    if (avail_w <= 0 || avail_h <= 0) return 0;
    auto fits = [&](double s) {
        auto [w, h] = render_extent(text, style, s);
        return w <= avail_w && h <= avail_h;
    };
    if (!fits(kMinScale)) return 0;
    double lo = kMinScale, hi = 16.0;
    if (fits(hi)) return hi;
    for (int it = 0; it < 48; ++it) {
        double mid = 0.5 * (lo + hi);
        (fits(mid) ? lo : hi) = mid;
    }
    return lo;
}

RenderedText render_glyph_patch(const std::string& chars, const FontStyle& style,
                                int64_t patch_w, int64_t patch_h, RGB color) {
    if (chars.empty()) throw GlyphTooLarge("empty glyph string");
    double s = fit_scale(chars, style, patch_w, patch_h, 1);
    if (s <= 0)
        throw GlyphTooLarge("'" + chars + "' cannot fit " + std::to_string(patch_w) + "x" +
                            std::to_string(patch_h));
    auto [ew, eh] = render_extent(chars, style, s);
    double pad = margin_pad(style, s);
    double ox = (patch_w - ew) / 2 + pad;
    double oy = (patch_h - eh) / 2 + pad;
    return render_text(chars, style, color, patch_w, patch_h, ox, oy, s);
}

const std::vector<FontStyle>& list_styles() {
    static const std::vector<FontStyle> registry = build_registry();
    return registry;
}

std::string style_registry_json() {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& s : list_styles()) {
        j.push_back({{"style_id", s.style_id},
                     {"base_atlas", s.base_atlas},
                     {"stroke_dilation", s.stroke_dilation},
                     {"slant_shear", s.slant_shear},
                     {"scale", s.scale},
                     {"outline_only", s.outline_only},
                     {"corner_soften", s.corner_soften}});
    }
    return j.dump(2);
}

uint64_t style_registry_hash() {
    Hasher h;
    h.update(style_registry_json());
    h.update(kCharset, std::strlen(kCharset));
    h.update(&kGlyphAtlas[0][0], sizeof(kGlyphAtlas));
    return h.digest();
}

}  // namespace gf::fontlab
