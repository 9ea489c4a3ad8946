#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gf/nn/modules.hpp"
#include "gf/nn/tape.hpp"
#include "gf/tensor.hpp"

// Convolutional autoencoder, trained once then frozen: the latent space every
// other model works in. Images (3,H,W) in [0,1] map to grids (c, H/f, W/f).
namespace gf::latentcodec {

struct CodecMismatch : std::runtime_error {
    explicit CodecMismatch(const std::string& m) : std::runtime_error("CodecMismatch: " + m) {}
};

struct NonConvergence : std::runtime_error {
    explicit NonConvergence(const std::string& m) : std::runtime_error("NonConvergence: " + m) {}
};

struct CodecConfig {
    int64_t f = 4;       // downsample factor, power of two (4 = two stride-2 stages)
    int64_t c = 4;       // latent channels
    int64_t width = 32;  // base conv width
    int epochs = 12;
    int64_t batch = 8;
    float lr = 2e-3f;
    uint64_t seed = 1;
    double psnr_threshold = 30.0;  // held-out gate; NonConvergence below this
};

struct LatentGrid {
    TensorF values;  // (c, H/f, W/f)
    uint64_t codec_id = 0;
};

class Codec {
public:
    explicit Codec(const CodecConfig& cfg);

    // Raw (unnormalized) encode/decode. decode clamps to [0,1].
    LatentGrid encode(const TensorF& image) const;
    TensorF decode(const LatentGrid& latent) const;

    // Editor-facing space: per-channel standardization with training-split
    // statistics stored in the checkpoint.
    TensorF normalize(const LatentGrid& latent) const;
    LatentGrid denormalize(const TensorF& values) const;

    const CodecConfig& config() const { return cfg_; }
    uint64_t id() const { return id_; }
    const std::vector<float>& channel_mean() const { return mean_; }
    const std::vector<float>& channel_std() const { return std_; }

    void save(const std::string& path) const;
    static Codec load(const std::string& path);

    // Training entry point; returns the held-out PSNR reached.
    friend Codec train_codec(const std::vector<TensorF>& train_images,
                             const std::vector<TensorF>& eval_images, const CodecConfig& cfg,
                             double* out_psnr);

    // Batched graphs shared by training and inference.
    nn::Tape<float>::Id encode_graph(nn::Tape<float>& t, nn::Tape<float>::Id x) const;
    nn::Tape<float>::Id decode_graph(nn::Tape<float>& t, nn::Tape<float>::Id z) const;

private:
    void build(Rng& rng);
    void refresh_id();

    CodecConfig cfg_;
    mutable nn::ParamStore<float> ps_;
    nn::Conv2d<float> e1_, e2_, e3_, e4_, e5_;
    nn::Conv2d<float> d1_, d2_, d3_, d4_, d5_;
    std::vector<float> mean_, std_;
    uint64_t id_ = 0;
};

// Trains on train_images, gates on eval_images PSNR, freezes, content-hashes.
Codec train_codec(const std::vector<TensorF>& train_images,
                  const std::vector<TensorF>& eval_images, const CodecConfig& cfg,
                  double* out_psnr = nullptr);

double psnr(const TensorF& a, const TensorF& b);

}  // namespace gf::latentcodec
