#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gf/condassembly/condassembly.hpp"
#include "gf/editnet/editnet.hpp"
#include "gf/latentcodec/latentcodec.hpp"
#include "gf/tensor.hpp"

// Deterministic Euler ODE sampling of edited images from a trained editor,
// with optional classifier-free guidance and background compositing.
namespace gf::sampler {

struct SampleConfig {
    int steps = 50;                     // Euler steps on a uniform time grid
    double guidance_scale = 1.0;        // 1 = guidance off
    uint64_t seed = 0;
    bool composite_background = false;  // paste the source outside the edit mask
    int64_t composite_dilation = 2;     // pixels of extra slack around the mask
};

struct EditResult {
    TensorF image;      // (3,H,W), empty when !ok
    TensorU8 mask;      // (H,W) edit-region mask used for this request
    uint64_t seed = 0;  // effective per-request seed
    double seconds = 0;
    bool ok = true;
    std::string error;  // nonempty iff !ok (batch_edit only; sample_edit throws)
};

// Chebyshev (square structuring element) binary dilation by `radius` pixels.
TensorU8 dilate_mask(const TensorU8& mask, int64_t radius);

// Core integrator in normalized latent space: starts from a seeded unit
// Gaussian, integrates dz/dt = v(z, t, conds) with Euler from t=0 to t=1.
// With guidance_scale w != 1, v = v_uncond + w * (v_cond - v_uncond) where
// the unconditional branch nulls both condition streams; w == 1 runs a
// single conditional forward per step.
TensorF integrate(const editnet::Editor& model, const TensorF& z_ref, const TensorF& z_glyph,
                  const SampleConfig& cfg);

// Full pipeline: request -> condition bundle -> latent sampling -> decode.
// Throws latentcodec::CodecMismatch if the codec geometry does not match the
// editor, nn::NonFinite if the trajectory diverges.
EditResult sample_edit(const editnet::Editor& model, const latentcodec::Codec& codec,
                       const condassembly::EditRequest& request, const SampleConfig& cfg);

// Order-preserving; per-item seeds derived from (cfg.seed, index). A failing
// request yields a result with ok=false and its error message; the rest of
// the batch still runs.
std::vector<EditResult> batch_edit(const editnet::Editor& model,
                                   const latentcodec::Codec& codec,
                                   const std::vector<condassembly::EditRequest>& requests,
                                   const SampleConfig& cfg);

}  // namespace gf::sampler
