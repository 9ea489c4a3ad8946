#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gf/editnet/editnet.hpp"
#include "gf/evalharness/evalharness.hpp"
#include "gf/latentcodec/latentcodec.hpp"
#include "gf/sampler/sampler.hpp"
#include "gf/scenegen/scenegen.hpp"

// Orchestration: builds latent training sets through a frozen codec, runs the
// editor training loop, wires trained models into the sampler and metric
// suite, and drives the ablation grid.
namespace gf::pipeline {

struct PipelineError : std::runtime_error {
    explicit PipelineError(const std::string& m) : std::runtime_error("PipelineError: " + m) {}
};

// One training example in normalized latent space.
struct LatentItem {
    TensorF z1;        // (c, Hl, Wl) encoded ground-truth image
    TensorF z_ref;     // encoded reference poster
    TensorF z_glyph;   // encoded glyph map (or encoded blank canvas)
    TensorF m_latent;  // (Hl, Wl) block-averaged region mask
};

struct LatentSet {
    std::vector<LatentItem> items;
    uint64_t codec_id = 0;
    int64_t c = 0, h = 0, w = 0;
};

// Encodes every pair's ground truth and condition images through the frozen
// codec. With use_style_reference = false the glyph stream encodes a blank
// mid-gray canvas instead of the style exemplars (the ablation baseline).
LatentSet build_latent_set(const std::vector<scenegen::SamplePair>& pairs,
                           const latentcodec::Codec& codec, bool use_style_reference = true);

struct EditorTrainConfig {
    int steps = 2000;
    int64_t batch = 8;
    uint64_t seed = 0;
    int log_every = 50;
};

struct TrainLogEntry {
    int step = 0;
    double loss = 0;
    double grad_norm = 0;
};

// Trains a fresh editor on the latent set. Each step re-seeds its RNG from
// (seed, step), so the whole run is a pure function of its inputs.
editnet::Editor train_editor(const LatentSet& data, const editnet::EditorConfig& model_cfg,
                             const EditorTrainConfig& train_cfg,
                             std::vector<TrainLogEntry>* log = nullptr);

// Editor checkpoints carry the full EditorConfig plus the codec identity, so
// loading rebuilds the exact architecture and refuses a mismatched codec.
void save_editor(const editnet::Editor& model, uint64_t codec_id, const std::string& path);
editnet::Editor load_editor(const std::string& path, uint64_t* codec_id = nullptr);

// Metric-suite adapter: edits each pair with the sampler (per-item seeds
// derived from cfg.seed and the pair index). With use_style_reference =
// false the glyph patches are blanked, matching the ablation baseline.
evalharness::EditImageFn make_edit_fn(const editnet::Editor& model,
                                      const latentcodec::Codec& codec,
                                      const sampler::SampleConfig& cfg,
                                      bool use_style_reference = true);

// ---------------------------------------------------------------------------
// Ablation grid: {style reference on/off} x lambda values x seeds.

struct AblationCell {
    bool style_reference = true;
    double lambda_weight = 5.0;
    uint64_t seed = 0;
};

struct AblationResult {
    AblationCell cell;
    double sen_acc = 0;
    double ned = 0;
    double style_sim = 0;
    double b_psnr = 0;
    double font_match_rate = 0;  // generated crops classified as the reference font
    double train_loss = 0;       // final training loss of the cell's editor
};

struct AblationConfig {
    editnet::EditorConfig editor;     // lambda and seed overridden per cell
    EditorTrainConfig train;          // seed overridden per cell
    sampler::SampleConfig sample;
    std::vector<double> lambdas{0.0, 5.0};
    std::vector<uint64_t> seeds{0, 1};
};

// Trains one editor per cell and scores it on the eval pairs. Deterministic
// in the configuration; cells are independent.
std::vector<AblationResult> ablate(const std::vector<scenegen::SamplePair>& train_pairs,
                                   const std::vector<scenegen::SamplePair>& eval_pairs,
                                   const latentcodec::Codec& codec,
                                   const evalharness::PerceptModels& models,
                                   const AblationConfig& cfg);

// Fraction of generated region crops whose predicted font class equals the
// region's reference style (chance = 1/K over K registered styles).
double font_match_rate(const std::vector<TensorF>& edited,
                       const std::vector<scenegen::SamplePair>& pairs,
                       const percept::StyleEmbedder& embedder);

std::string ablation_to_json(const std::vector<AblationResult>& results);

}  // namespace gf::pipeline
