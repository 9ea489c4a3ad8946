#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gf/fontlab/fontlab.hpp"
#include "gf/image.hpp"
#include "gf/nn/modules.hpp"
#include "gf/nn/tape.hpp"
#include "gf/scenegen/scenegen.hpp"
#include "gf/tensor.hpp"

// Surrogate perception models trained on synthetic data: a fixed-slot region
// text recognizer, a font-style embedder (metric feature space), and a
// per-pixel ink detector that supplies detected text bounding boxes.
namespace gf::percept {

inline constexpr int64_t kMaxLen = 8;                              // decoder slots
inline constexpr int64_t kBlank = fontlab::kCharsetSize;           // class 36
inline constexpr int64_t kNumClasses = fontlab::kCharsetSize + 1;  // charset + blank
inline constexpr int64_t kCropH = 24;  // recognition / embedding input size
inline constexpr int64_t kCropW = 64;

struct NonConvergence : std::runtime_error {
    explicit NonConvergence(const std::string& m) : std::runtime_error("NonConvergence: " + m) {}
};

uint64_t charset_hash();

// Any region crop, brought to the models' input geometry. The resize
// preserves aspect ratio (glyph geometry carries the text signal); leftover
// canvas is filled by edge replication.
TensorF to_crop(const TensorF& region);

// ---------------------------------------------------------------------------
// Synthetic supervision, labels free from the renderer.

struct LabeledCrop {
    TensorF image;  // (3, kCropH, kCropW)
    std::string text;
    int style_id = 0;
    // Renderer-side supervision, filled by make_crop_dataset and consumed only
    // by training; crops built from plain images leave these empty.
    TensorU8 ink;           // (kCropH, kCropW) ink mask
    scenegen::Rect tight;   // tight ink bbox in crop coordinates
};

// Random text (length 1..max_len) in a random registered style over a random
// background; deterministic in the seed. `styles` optionally restricts the
// style pool (empty = all registered styles).
std::vector<LabeledCrop> make_crop_dataset(uint64_t seed, int n, int max_len = 6,
                                           const std::vector<int>& styles = {});

struct InkScene {
    TensorF image;        // (3, h, w)
    TensorU8 ink;         // (h, w) renderer ink mask
    scenegen::Rect tight; // renderer tight bbox of the ink
    scenegen::Rect roi;   // the region rect the text was fit into
};

std::vector<InkScene> make_ink_dataset(uint64_t seed, int n, int64_t w = 64, int64_t h = 64);

// ---------------------------------------------------------------------------
// Recognizer. Two small nets share one parameter store: a per-pixel ink
// localizer (text bbox + pixel-per-unit scale, since every glyph spans the
// full 8 atlas rows) and a single-character window classifier. Decoding
// hypothesizes each length L, places character windows along the bbox with
// the glyphs' known atlas widths (the font is proportional), refines the
// placement from the predicted characters, and keeps the hypothesis with the
// best confidence among those whose implied width matches the bbox.

struct RecognizerConfig {
    int64_t width = 16;  // first conv width; doubles per stage
    int epochs = 8;
    int64_t batch = 32;
    float lr = 2e-3f;
    uint64_t seed = 11;
    double accuracy_threshold = 0.99;  // held-out exact-string gate
};

struct Recognition {
    std::string text;
    double confidence = 0;  // mean max-probability over non-blank slots
};

class Recognizer {
public:
    explicit Recognizer(const RecognizerConfig& cfg);

    // (kMaxLen, kNumClasses), each row a distribution summing to 1.
    TensorF slot_probs(const TensorF& crop) const;
    Recognition recognize(const TensorF& crop) const;

    const RecognizerConfig& config() const { return cfg_; }
    uint64_t weights_hash() const;
    void save(const std::string& path) const;
    static Recognizer load(const std::string& path);

    friend Recognizer train_recognizer(const std::vector<LabeledCrop>& train,
                                       const std::vector<LabeledCrop>& eval,
                                       const RecognizerConfig& cfg, double* out_accuracy);
    friend Recognizer train_recognizer_stream(
        const std::function<std::vector<LabeledCrop>(int)>& source,
        const std::vector<LabeledCrop>& eval, const RecognizerConfig& cfg,
        double* out_accuracy);

private:
    nn::Tape<float>::Id ink_forward(nn::Tape<float>& t, nn::Tape<float>::Id x) const;
    nn::Tape<float>::Id cell_forward(nn::Tape<float>& t, nn::Tape<float>::Id x) const;
    Recognition decode(const TensorF& crop, TensorF* probs) const;

    RecognizerConfig cfg_;
    mutable nn::ParamStore<float> ps_;
    nn::Conv2d<float> ink1_, ink2_, ink3_;   // stride-1, per-pixel ink logits
    nn::Conv2d<float> cell1_, cell2_;        // stride-2 window feature stack
    nn::Linear<float> cfc1_, cfc2_;          // window -> charset logits
};

Recognizer train_recognizer(const std::vector<LabeledCrop>& train,
                            const std::vector<LabeledCrop>& eval, const RecognizerConfig& cfg,
                            double* out_accuracy = nullptr);

// Streaming variant: `source(epoch)` supplies that epoch's training crops.
// With procedurally generated supervision this makes the effective dataset
// unbounded, which is what the exact-string accuracy gate needs.
using CropSource = std::function<std::vector<LabeledCrop>(int epoch)>;
Recognizer train_recognizer_stream(const CropSource& source,
                                   const std::vector<LabeledCrop>& eval,
                                   const RecognizerConfig& cfg, double* out_accuracy = nullptr);

// Fraction of crops whose recognized string matches the label exactly.
double exact_accuracy(const Recognizer& model, const std::vector<LabeledCrop>& crops);

// ---------------------------------------------------------------------------
// Style embedder: K-way font classifier; embedding = L2-normalized penult.

struct EmbedderConfig {
    int64_t width = 16;
    int64_t embed_dim = 64;
    int epochs = 8;
    int64_t batch = 32;
    float lr = 2e-3f;
    uint64_t seed = 12;
    double accuracy_threshold = 0.95;  // held-out K-way gate
};

class StyleEmbedder {
public:
    explicit StyleEmbedder(const EmbedderConfig& cfg);

    std::vector<float> embed(const TensorF& crop) const;     // unit L2 norm
    std::vector<float> features(const TensorF& crop) const;  // pre-normalization
    int classify(const TensorF& crop) const;                 // argmax style id

    const EmbedderConfig& config() const { return cfg_; }
    uint64_t weights_hash() const;
    void save(const std::string& path) const;
    static StyleEmbedder load(const std::string& path);

    friend StyleEmbedder train_style_embedder(const std::vector<LabeledCrop>& train,
                                              const std::vector<LabeledCrop>& eval,
                                              const EmbedderConfig& cfg, double* out_accuracy);
    friend StyleEmbedder train_style_embedder_stream(
        const std::function<std::vector<LabeledCrop>(int)>& source,
        const std::vector<LabeledCrop>& eval, const EmbedderConfig& cfg, double* out_accuracy);

private:
    nn::Tape<float>::Id penult(nn::Tape<float>& t, nn::Tape<float>::Id x) const;

    EmbedderConfig cfg_;
    mutable nn::ParamStore<float> ps_;
    nn::Conv2d<float> c1_, c2_, c3_;
    nn::Linear<float> fc1_, fc_embed_, fc_cls_;
};

StyleEmbedder train_style_embedder(const std::vector<LabeledCrop>& train,
                                   const std::vector<LabeledCrop>& eval,
                                   const EmbedderConfig& cfg, double* out_accuracy = nullptr);

StyleEmbedder train_style_embedder_stream(const CropSource& source,
                                          const std::vector<LabeledCrop>& eval,
                                          const EmbedderConfig& cfg,
                                          double* out_accuracy = nullptr);

double classify_accuracy(const StyleEmbedder& model, const std::vector<LabeledCrop>& crops);

double cosine(const std::vector<float>& a, const std::vector<float>& b);

// ---------------------------------------------------------------------------
// Ink detector: per-pixel text-ink probability; bbox via largest component.

struct DetectorConfig {
    int64_t width = 8;
    int epochs = 6;
    int64_t batch = 8;
    float lr = 2e-3f;
    uint64_t seed = 13;
    double threshold = 0.5;  // ink decision threshold theta
};

class InkDetector {
public:
    explicit InkDetector(const DetectorConfig& cfg);

    TensorF prob_map(const TensorF& image) const;  // (H, W) in [0,1]

    const DetectorConfig& config() const { return cfg_; }
    uint64_t weights_hash() const;
    void save(const std::string& path) const;
    static InkDetector load(const std::string& path);

    friend InkDetector train_ink_detector(const std::vector<InkScene>& train,
                                          const DetectorConfig& cfg);

private:
    nn::Tape<float>::Id forward(nn::Tape<float>& t, nn::Tape<float>::Id x) const;

    DetectorConfig cfg_;
    mutable nn::ParamStore<float> ps_;
    nn::Conv2d<float> c1_, c2_, c3_;
};

InkDetector train_ink_detector(const std::vector<InkScene>& train, const DetectorConfig& cfg);

// Thresholds ink probability inside `roi` expanded by 25% per side (clamped),
// returns the tight bbox of the largest 4-connected component in image
// coordinates, or nothing if no pixel reaches the threshold.
std::optional<scenegen::Rect> detect_bbox(const InkDetector& det, const TensorF& image,
                                          const scenegen::Rect& roi);

// The geometry step of detect_bbox on a precomputed (H, W) probability map:
// threshold inside the 25%-expanded roi, largest 4-connected component.
std::optional<scenegen::Rect> bbox_from_probs(const TensorF& prob, const scenegen::Rect& roi,
                                              double theta);

// Plain rect IoU (no dilation), for detection quality measurements.
double rect_iou(const scenegen::Rect& a, const scenegen::Rect& b);

}  // namespace gf::percept
