#include "gf/sampler/sampler.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "gf/rng.hpp"

namespace gf::sampler {

namespace {

void validate_config(const SampleConfig& cfg) {
    if (cfg.steps < 1) throw std::invalid_argument("SampleConfig.steps must be >= 1");
    if (!std::isfinite(cfg.guidance_scale) || cfg.guidance_scale < 0)
        throw std::invalid_argument("SampleConfig.guidance_scale must be finite and >= 0");
    if (cfg.composite_dilation < 0)
        throw std::invalid_argument("SampleConfig.composite_dilation must be >= 0");
}

}  // namespace

TensorU8 dilate_mask(const TensorU8& mask, int64_t radius) {
    if (radius <= 0) return mask;
    int64_t h = mask.dim(0), w = mask.dim(1);
    // separable: horizontal max run, then vertical
    TensorU8 tmp({h, w}), out({h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            uint8_t v = 0;
            for (int64_t dx = -radius; dx <= radius && !v; ++dx) {
                int64_t xx = x + dx;
                if (xx >= 0 && xx < w) v = mask[y * w + xx];
            }
            tmp[y * w + x] = v;
        }
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            uint8_t v = 0;
            for (int64_t dy = -radius; dy <= radius && !v; ++dy) {
                int64_t yy = y + dy;
                if (yy >= 0 && yy < h) v = tmp[yy * w + x];
            }
            out[y * w + x] = v;
        }
    return out;
}

TensorF integrate(const editnet::Editor& model, const TensorF& z_ref, const TensorF& z_glyph,
                  const SampleConfig& cfg) {
    validate_config(cfg);
    const auto& mc = model.config();
    std::vector<int64_t> want{mc.latent_c, mc.latent_h, mc.latent_w};
    if (z_ref.shape() != want || z_glyph.shape() != want)
        throw nn::ShapeMismatch("integrate: condition latents " + z_ref.shape_str());

    editnet::EditorBatch<float> batch;
    batch.z_ref = z_ref.reshaped({1, mc.latent_c, mc.latent_h, mc.latent_w});
    batch.z_glyph = z_glyph.reshaped({1, mc.latent_c, mc.latent_h, mc.latent_w});
    batch.t = {0.f};
    batch.drop_ref = {0};
    batch.drop_glyph = {0};

    Rng rng(derive_seed(cfg.seed, 0x0de));
    batch.z_t = TensorF({1, mc.latent_c, mc.latent_h, mc.latent_w});
    for (int64_t i = 0; i < batch.z_t.numel(); ++i)
        batch.z_t[i] = static_cast<float>(rng.normal());

    const float dt = 1.0f / static_cast<float>(cfg.steps);
    const auto w = static_cast<float>(cfg.guidance_scale);
    for (int step = 0; step < cfg.steps; ++step) {
        batch.t[0] = static_cast<float>(step) * dt;
        TensorF v = model.predict(batch);
        if (cfg.guidance_scale != 1.0) {
            auto uncond = batch;
            uncond.drop_ref[0] = 1;
            uncond.drop_glyph[0] = 1;
            TensorF vu = model.predict(uncond);
            for (int64_t i = 0; i < v.numel(); ++i) v[i] = vu[i] + w * (v[i] - vu[i]);
        }
        for (int64_t i = 0; i < v.numel(); ++i) {
            batch.z_t[i] += dt * v[i];
            if (!std::isfinite(batch.z_t[i])) throw nn::NonFinite("sampler trajectory");
        }
    }
    return batch.z_t.reshaped({mc.latent_c, mc.latent_h, mc.latent_w});
}

EditResult sample_edit(const editnet::Editor& model, const latentcodec::Codec& codec,
                       const condassembly::EditRequest& request, const SampleConfig& cfg) {
    validate_config(cfg);
    auto t0 = std::chrono::steady_clock::now();
    const auto& mc = model.config();
    const auto& cc = codec.config();
    int64_t H = request.x_src.shape().size() == 3 ? request.x_src.dim(1) : 0;
    int64_t W = request.x_src.shape().size() == 3 ? request.x_src.dim(2) : 0;
    if (cc.c != mc.latent_c || H != mc.latent_h * cc.f || W != mc.latent_w * cc.f)
        throw latentcodec::CodecMismatch(
            "codec latent geometry does not match the editor: image " + std::to_string(H) + "x" +
            std::to_string(W) + ", f=" + std::to_string(cc.f) + ", c=" + std::to_string(cc.c));

    auto bundle = condassembly::assemble(request, cc.f);
    TensorF z_ref = codec.normalize(codec.encode(bundle.x_ref));
    TensorF z_glyph = codec.normalize(codec.encode(bundle.x_glyph));

    TensorF z = integrate(model, z_ref, z_glyph, cfg);
    TensorF image = codec.decode(codec.denormalize(z));

    TensorU8 region = bundle.mask;
    if (cfg.composite_background) {
        region = dilate_mask(region, cfg.composite_dilation);
        int64_t hw = H * W;
        for (int64_t i = 0; i < hw; ++i)
            if (!region[i])
                for (int64_t c = 0; c < 3; ++c)
                    image[c * hw + i] = request.x_src[c * hw + i];
    }

    EditResult res;
    res.image = std::move(image);
    res.mask = std::move(region);
    res.seed = cfg.seed;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

std::vector<EditResult> batch_edit(const editnet::Editor& model,
                                   const latentcodec::Codec& codec,
                                   const std::vector<condassembly::EditRequest>& requests,
                                   const SampleConfig& cfg) {
    validate_config(cfg);
    std::vector<EditResult> out;
    out.reserve(requests.size());
    for (size_t i = 0; i < requests.size(); ++i) {
        SampleConfig item = cfg;
        item.seed = derive_seed(cfg.seed, i);
        try {
            out.push_back(sample_edit(model, codec, requests[i], item));
        } catch (const std::exception& e) {
            EditResult bad;
            bad.ok = false;
            bad.error = e.what();
            bad.seed = item.seed;
            out.push_back(std::move(bad));
        }
    }
    return out;
}

}  // namespace gf::sampler
