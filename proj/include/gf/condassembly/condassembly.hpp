#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "gf/fontlab/fontlab.hpp"
#include "gf/image.hpp"
#include "gf/scenegen/scenegen.hpp"
#include "gf/tensor.hpp"

// Assembles the editor's two visual conditions from an edit request: the
// reference poster (content + layout, canonical font) and the glyph map
// (style exemplars on a blank canvas), plus pixel and latent region masks.
namespace gf::condassembly {

inline constexpr float kBlankValue = 0.5f;  // glyph-map canvas, mid-gray
inline constexpr int64_t kDefaultMaskDilation = 1;

struct TextOverflow : std::runtime_error {
    explicit TextOverflow(const std::string& m) : std::runtime_error("TextOverflow: " + m) {}
};

struct Edit {
    std::string text;             // target string, charset-restricted
    scenegen::Rect rect;          // where it goes
    TensorF glyph_patch;          // style exemplar image (3,h,w)
};

struct EditRequest {
    TensorF x_src;                // (3,H,W)
    std::vector<Edit> edits;      // nonempty, rects in-bounds, pairwise disjoint
    std::string prompt;           // metadata only; not consumed by the model
};

// Throws std::invalid_argument naming the violated invariant.
void validate_request(const EditRequest& req);

struct ConditionBundle {
    TensorF x_ref;        // source with target texts rendered in the content font
    TensorF x_glyph;      // blank canvas with style exemplars at their rects
    TensorU8 mask;        // (H,W) union of rects dilated by `dilation`
    TensorF mask_latent;  // (H/f, W/f), exact block-average of mask
};

// Per region: neutral fill, then the target text in the canonical content
// font (base atlas, no style transforms), scale-fit with a contrast color.
TensorF build_reference_poster(const TensorF& x_src, const std::vector<Edit>& edits);

TensorF build_glyph_map(int64_t width, int64_t height, const std::vector<Edit>& edits);

void build_region_mask(int64_t width, int64_t height, const std::vector<Edit>& edits,
                       int64_t dilation, int64_t latent_f, TensorU8& mask_out,
                       TensorF& mask_latent_out);

ConditionBundle assemble(const EditRequest& req, int64_t latent_f,
                         int64_t dilation = kDefaultMaskDilation);

// A training pair is itself an edit request: targets from regions_tgt, style
// exemplars from the stored glyph refs.
EditRequest request_from_pair(const scenegen::SamplePair& pair);

// JSON file: {"image": path.ppm|path.pgm raw container, "prompt": ...,
//  "edits": [{"text": ..., "rect": [x0,y0,x1,y1], "glyph_image": path}]}.
// Image files are the dataset's raw u8 format written by save_image_u8.
EditRequest load_request(const std::string& json_path);
void save_image_u8(const TensorF& image, const std::string& path);
TensorF load_image_u8(const std::string& path);

}  // namespace gf::condassembly
