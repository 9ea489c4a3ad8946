#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "gf/image.hpp"
#include "gf/tensor.hpp"

// Procedural typography: one embedded 8x8 atlas plus per-style geometric
// transforms (dilation, shear, outline, corner smoothing). Rendering is a pure
// function of its arguments; masks and bounding boxes are exact.
namespace gf::fontlab {

inline constexpr const char* kCharset = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
inline constexpr int kCharsetSize = 36;
inline constexpr int kAtlasSize = 8;
inline constexpr int kSupersample = 4;

struct UnsupportedCharacter : std::runtime_error {
    explicit UnsupportedCharacter(char c)
        : std::runtime_error(std::string("UnsupportedCharacter: '") + c + "'") {}
};

struct OutOfCanvas : std::runtime_error {
    explicit OutOfCanvas(const std::string& m) : std::runtime_error("OutOfCanvas: " + m) {}
};

struct GlyphTooLarge : std::runtime_error {
    explicit GlyphTooLarge(const std::string& m) : std::runtime_error("GlyphTooLarge: " + m) {}
};

// -1 if the character is outside the charset.
int charset_index(char c);
bool text_in_charset(const std::string& text);

struct FontStyle {
    int style_id = 0;
    int base_atlas = 0;        // only one embedded atlas in this build
    int stroke_dilation = 0;   // output pixels
    double slant_shear = 0.0;  // horizontal shift per vertical pixel, in [-0.5, 0.5]
    double scale = 1.0;        // nominal; render calls may override for fitting
    bool outline_only = false;
    int corner_soften = 0;     // smoothing radius in output pixels
};

struct RenderedText {
    TensorF pixels;    // (3, H, W): color premultiplied by coverage
    TensorF coverage;  // (H, W) in [0, 1]; the compositing alpha
    TensorU8 ink_mask; // (H, W) 0/1, coverage >= 0.5
    // Tight bbox over ink_mask, half-open pixel coords; (0,0,0,0) when empty.
    int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

// Tight column span of one glyph in atlas units (first, last+1).
std::pair<int, int> glyph_col_span(int glyph);

// Layout width of `text` in atlas units: tight spans plus 1-unit spacing.
double text_layout_units(const std::string& text);

// Renders `text` with `style` at `scale` onto a W x H canvas. `origin` is the
// top-left of the layout box in canvas pixels, before shear/dilation margins.
// Throws UnsupportedCharacter / OutOfCanvas.
RenderedText render_text(const std::string& text, const FontStyle& style, RGB color,
                         int64_t canvas_w, int64_t canvas_h, double origin_x, double origin_y,
                         double scale = 0.0 /* 0 -> style.scale */);

// Renders `chars` scale-fit and centered into a patch of the given size.
RenderedText render_glyph_patch(const std::string& chars, const FontStyle& style,
                                int64_t patch_w, int64_t patch_h, RGB color = {1, 1, 1});

// Largest scale at which `text` in `style` fits a box_w x box_h region with
// `margin` pixels on each side; 0 if even the minimum scale overflows.
double fit_scale(const std::string& text, const FontStyle& style, int64_t box_w, int64_t box_h,
                 int64_t margin);

// Rendered extent (w, h) in output pixels at the given scale, margins included.
std::pair<double, double> render_extent(const std::string& text, const FontStyle& style,
                                        double scale);

// The K registered styles, stable order, styles[i].style_id == i.
const std::vector<FontStyle>& list_styles();

// JSON manifest of the registry (style_id -> parameters) for reproducibility.
std::string style_registry_json();
uint64_t style_registry_hash();

}  // namespace gf::fontlab
