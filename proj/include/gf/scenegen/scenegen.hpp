#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gf/fontlab/fontlab.hpp"
#include "gf/image.hpp"
#include "gf/rng.hpp"
#include "gf/tensor.hpp"

// Synthetic poster scenes and aligned (source, edited) training pairs. Every
// pair is a pure function of (seed, width, height, region count), so datasets
// can be regenerated bit-exactly from their manifest.
namespace gf::scenegen {

inline constexpr const char* kGeneratorVersion = "scenegen-1";
inline constexpr int kSchemaVersion = 1;
inline constexpr int64_t kMinRegionW = 12;
inline constexpr int64_t kMinRegionH = 8;
inline constexpr int64_t kRegionDilation = 2;  // pixels, for overlap/equality tests

struct PlacementFailure : std::runtime_error {
    explicit PlacementFailure(const std::string& m)
        : std::runtime_error("PlacementFailure: " + m) {}
};

struct CharsetExhausted : std::runtime_error {
    explicit CharsetExhausted(const std::string& m)
        : std::runtime_error("CharsetExhausted: " + m) {}
};

struct DatasetError : std::runtime_error {
    explicit DatasetError(const std::string& m) : std::runtime_error("DatasetError: " + m) {}
};

enum class Background : int { Flat = 0, LinearGradient, RadialGradient, BlobField, StripeField };
inline constexpr int kBackgroundCount = 5;
const char* background_name(Background b);

struct Rect {
    int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    int64_t w() const { return x1 - x0; }
    int64_t h() const { return y1 - y0; }
    int64_t area() const { return w() * h(); }
};

// Intersection-over-union after dilating both rects by `dil` pixels.
double dilated_iou(const Rect& a, const Rect& b, int64_t dil = kRegionDilation);

struct TextRegion {
    std::string text;
    Rect rect;
    int style_id = 0;
    RGB color;
    // Style exemplar: characters disjoint from both source and target texts,
    // rendered in this region's style. Keeps the style reference content-free.
    std::string glyph_text;
    fontlab::RenderedText glyph_ref;
};

struct SceneSpec {
    uint64_t seed = 0;
    int64_t width = 64, height = 64;
    Background background = Background::Flat;
    std::vector<TextRegion> regions;  // source texts; glyph refs filled by build_pair
};

struct SamplePair {
    SceneSpec spec;
    TensorF x_src;        // (3,H,W), u8-quantized
    TensorF x_gt;         // (3,H,W), u8-quantized
    TensorU8 region_mask; // (H,W) union of region rects
    std::vector<TextRegion> regions_src;
    std::vector<TextRegion> regions_tgt;
};

// Default minimum region area: 8% of min(W,H)^2.
int64_t min_region_area(int64_t w, int64_t h);

TensorF gen_background(uint64_t seed, int64_t w, int64_t h, Background recipe);

std::vector<Rect> propose_regions(uint64_t seed, int64_t w, int64_t h, int n);

// Same length +/-1 (at least 1) with a character set disjoint from `original`.
std::string make_replacement_text(const std::string& original, Rng& rng);

// Building blocks shared with other synthetic-data producers.
std::string random_text(Rng& rng, int len, const std::string& exclude = "");
int max_fit_len(const fontlab::FontStyle& style, const Rect& r);
fontlab::RenderedText render_into_rect(TensorF& canvas, const std::string& text,
                                       const fontlab::FontStyle& style, RGB color,
                                       const Rect& r);
RGB contrasting_color(Rng& rng, const TensorF& bg, const Rect& r);

// Fully deterministic scene from the seed: background recipe, regions, texts,
// styles, colors.
SceneSpec make_scene_spec(uint64_t seed, int64_t w, int64_t h, int n);

SamplePair build_pair(const SceneSpec& spec);
inline SamplePair build_pair(uint64_t seed, int64_t w, int64_t h, int n) {
    return build_pair(make_scene_spec(seed, w, h, n));
}

struct RegionReport {
    std::string expected_text;
    std::string recognized_text;
    bool content_ok = false;
    double style_sim = 0.0;
};

struct VerificationReport {
    std::vector<RegionReport> regions;
    bool accepted = false;
};

// `recognize` maps an image crop to a string; `embed` maps a crop to a style
// feature vector. The pair is accepted iff every target text is recognized
// exactly and every region's style similarity (crop vs. its style exemplar)
// reaches tau_style.
VerificationReport verify_pair(
    const SamplePair& pair,
    const std::function<std::string(const TensorF&)>& recognize,
    const std::function<std::vector<float>(const TensorF&)>& embed, double tau_style = 0.9);

struct Dataset {
    int64_t width = 0, height = 0;
    std::vector<SamplePair> pairs;
};

void write_dataset(const std::vector<SamplePair>& pairs, const std::string& dir);
Dataset read_dataset(const std::string& dir);

}  // namespace gf::scenegen
