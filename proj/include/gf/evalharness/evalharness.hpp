#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gf/percept/percept.hpp"
#include "gf/scenegen/scenegen.hpp"
#include "gf/tensor.hpp"

// Metric suite over edited images: recognition accuracy, edit distance,
// detection IoU, style similarity, background fidelity, and a Fréchet
// distance over style-embedder features.
namespace gf::evalharness {

struct LengthMismatch : std::runtime_error {
    explicit LengthMismatch(const std::string& m) : std::runtime_error("LengthMismatch: " + m) {}
};

struct EmptyBackground : std::runtime_error {
    explicit EmptyBackground(const std::string& m)
        : std::runtime_error("EmptyBackground: " + m) {}
};

// 1 - Levenshtein(a,b) / max(|a|,|b|); ned("","") = 1.
double ned(const std::string& a, const std::string& b);

// Fraction of exact (case-sensitive) matches; optional whitespace stripping.
double sen_acc(const std::vector<std::string>& pred, const std::vector<std::string>& gt,
               bool strip_whitespace = false);

// Intersection over union; a missing detection scores 0.
double spatial_iou(const std::optional<scenegen::Rect>& detected, const scenegen::Rect& gt);

// Cosine of unit style embeddings of the two crops.
double style_sim(const TensorF& gen_crop, const TensorF& ref_crop,
                 const percept::StyleEmbedder& embedder);

// PSNR restricted to pixels where mask == 0 (peak 1.0, capped at 99 dB).
// Throws EmptyBackground when the mask covers everything.
double b_psnr(const TensorF& gen, const TensorF& gt, const TensorU8& mask);

struct SFidResult {
    double value = 0;
    bool regularized = false;  // covariance needed the eps*I fallback
};

// Fréchet distance between Gaussian fits of two feature sets, each row one
// sample: |mu1-mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}).
SFidResult s_fid(const std::vector<std::vector<float>>& gen_features,
                 const std::vector<std::vector<float>>& real_features);

// ---------------------------------------------------------------------------
// Full evaluation over a dataset of synthetic pairs.

struct SampleRecord {
    int sen_acc = 0;          // 1 iff every region's text is read back exactly
    double ned = 0;           // mean over regions
    double spatial_iou = 0;   // mean over regions
    double style_sim = 0;     // mean over regions
    double b_psnr = 0;
};

struct EvalReport {
    std::vector<SampleRecord> records;
    double mean_sen_acc = 0;
    double mean_ned = 0;
    double mean_spatial_iou = 0;
    double mean_style_sim = 0;
    double mean_b_psnr = 0;
    SFidResult s_fid;
    bool s_fid_valid = false;  // requires enough samples for covariance
    std::string metadata_json;  // hashes, seeds, config snapshot
};

struct PerceptModels {
    const percept::Recognizer* recognizer = nullptr;
    const percept::StyleEmbedder* embedder = nullptr;
    const percept::InkDetector* detector = nullptr;
};

struct EvalConfig {
    bool strip_whitespace = false;
    std::string metadata_json = "{}";
};

// Produces the edited image for one pair; index identifies the pair so
// implementations can derive per-item seeds.
using EditImageFn = std::function<TensorF(const scenegen::SamplePair&, size_t index)>;

// For each pair: run `edit`, recognize each target region crop, detect the
// text box, compare styles against the stored glyph exemplars, and measure
// background PSNR against the ground truth; aggregates means and S-FID.
EvalReport evaluate_run(const EditImageFn& edit, const std::vector<scenegen::SamplePair>& pairs,
                        const PerceptModels& models, const EvalConfig& cfg = {});

// Ready-made stubs for metric calibration: the ground-truth image (ceiling)
// and the unedited source (floor).
EditImageFn ground_truth_stub();
EditImageFn unedited_source_stub();

// Composite a glyph exemplar over the neutral canvas, as the editor sees it.
TensorF glyph_ref_image(const fontlab::RenderedText& glyph_ref);

// Ground-truth tight ink bbox of a region, recomputed from the renderer.
scenegen::Rect region_tight_bbox(const scenegen::TextRegion& region, int64_t w, int64_t h);

std::string report_to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::string& path);

}  // namespace gf::evalharness
