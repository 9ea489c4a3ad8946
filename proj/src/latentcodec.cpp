#include "gf/latentcodec/latentcodec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "gf/hash.hpp"
#include "gf/nn/checkpoint.hpp"
#include "gf/rng.hpp"

using nlohmann::json;

namespace gf::latentcodec {

using nn::Tape;
using Id = Tape<float>::Id;

double psnr(const TensorF& a, const TensorF& b) {
    if (a.shape() != b.shape()) throw nn::ShapeMismatch("psnr");
    double mse = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(a[i]) - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse <= 0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

Codec::Codec(const CodecConfig& cfg) : cfg_(cfg) {
    if (cfg_.f != 2 && cfg_.f != 4)
        throw std::invalid_argument("CodecConfig.f must be 2 or 4 in this build");
    if (cfg_.c < 1) throw std::invalid_argument("CodecConfig.c must be >= 1");
    Rng rng(derive_seed(cfg_.seed, 0xc0dec));
    build(rng);
    mean_.assign(static_cast<size_t>(cfg_.c), 0.f);
    std_.assign(static_cast<size_t>(cfg_.c), 1.f);
    refresh_id();
}

void Codec::build(Rng& rng) {
    int64_t w = cfg_.width;
    int64_t s2 = cfg_.f == 4 ? 2 : 1;
    e1_.init(ps_, "enc1", 3, w, 3, 1, 1, rng);
    e2_.init(ps_, "enc2", w, w, 3, 2, 1, rng);
    e3_.init(ps_, "enc3", w, 2 * w, 3, s2, 1, rng);
    e4_.init(ps_, "enc4", 2 * w, 2 * w, 3, 1, 1, rng);
    e5_.init(ps_, "enc5", 2 * w, cfg_.c, 3, 1, 1, rng);
    d1_.init(ps_, "dec1", cfg_.c, 2 * w, 3, 1, 1, rng);
    d2_.init(ps_, "dec2", 2 * w, 2 * w, 3, 1, 1, rng);
    d3_.init(ps_, "dec3", 2 * w, w, 3, 1, 1, rng);
    d4_.init(ps_, "dec4", w, w, 3, 1, 1, rng);
    d5_.init(ps_, "dec5", w, 3, 3, 1, 1, rng);  // linear output; clamp at decode
}

Id Codec::encode_graph(Tape<float>& t, Id x) const {
    auto h = t.relu(e1_(t, ps_, x));
    h = t.relu(e2_(t, ps_, h));
    h = t.relu(e3_(t, ps_, h));
    h = t.relu(e4_(t, ps_, h));
    return e5_(t, ps_, h);
}

Id Codec::decode_graph(Tape<float>& t, Id z) const {
    auto h = t.relu(d1_(t, ps_, z));
    h = t.relu(d2_(t, ps_, h));
    if (cfg_.f == 4) h = t.upsample2x(h);
    h = t.relu(d3_(t, ps_, h));
    h = t.upsample2x(h);
    h = t.relu(d4_(t, ps_, h));
    return d5_(t, ps_, h);
}

LatentGrid Codec::encode(const TensorF& image) const {
    if (image.shape().size() != 3 || image.dim(0) != 3)
        throw nn::ShapeMismatch("encode expects (3,H,W), got " + image.shape_str());
    if (image.dim(1) % cfg_.f != 0 || image.dim(2) % cfg_.f != 0)
        throw nn::ShapeMismatch("encode: dims must be divisible by f=" + std::to_string(cfg_.f));
    Tape<float> t;
    TensorF batched = image.reshaped({1, 3, image.dim(1), image.dim(2)});
    auto z = encode_graph(t, t.constant(batched));
    LatentGrid out;
    out.values = t.val(z).reshaped({cfg_.c, image.dim(1) / cfg_.f, image.dim(2) / cfg_.f});
    out.codec_id = id_;
    return out;
}

TensorF Codec::decode(const LatentGrid& latent) const {
    if (latent.codec_id != id_)
        throw CodecMismatch("latent was produced by codec " + std::to_string(latent.codec_id) +
                            ", this codec is " + std::to_string(id_));
    if (latent.values.shape().size() != 3 || latent.values.dim(0) != cfg_.c)
        throw nn::ShapeMismatch("decode expects (c,h,w), got " + latent.values.shape_str());
    Tape<float> t;
    TensorF batched = latent.values.reshaped(
        {1, cfg_.c, latent.values.dim(1), latent.values.dim(2)});
    auto x = decode_graph(t, t.constant(batched));
    TensorF img = t.val(x).reshaped(
        {3, latent.values.dim(1) * cfg_.f, latent.values.dim(2) * cfg_.f});
    for (int64_t i = 0; i < img.numel(); ++i) img[i] = std::clamp(img[i], 0.f, 1.f);
    return img;
}

TensorF Codec::normalize(const LatentGrid& latent) const {
    if (latent.codec_id != id_) throw CodecMismatch("normalize: wrong codec");
    TensorF out = latent.values;
    int64_t hw = out.dim(1) * out.dim(2);
    for (int64_t c = 0; c < cfg_.c; ++c)
        for (int64_t i = 0; i < hw; ++i)
            out[c * hw + i] = (out[c * hw + i] - mean_[c]) / std_[c];
    return out;
}

LatentGrid Codec::denormalize(const TensorF& values) const {
    LatentGrid out;
    out.values = values;
    out.codec_id = id_;
    int64_t hw = values.dim(1) * values.dim(2);
    for (int64_t c = 0; c < cfg_.c; ++c)
        for (int64_t i = 0; i < hw; ++i)
            out.values[c * hw + i] = out.values[c * hw + i] * std_[c] + mean_[c];
    return out;
}

void Codec::refresh_id() {
    Hasher h;
    h.update_pod(nn::params_hash(ps_));
    h.update_pod(cfg_.f);
    h.update_pod(cfg_.c);
    h.update_pod(cfg_.width);
    h.update_vec(mean_);
    h.update_vec(std_);
    id_ = h.digest();
}

void Codec::save(const std::string& path) const {
    json meta = {{"kind", "latent_codec"}, {"f", cfg_.f},         {"c", cfg_.c},
                 {"width", cfg_.width},    {"seed", cfg_.seed},   {"mean", mean_},
                 {"std", std_},            {"codec_id", id_}};
    nn::save_checkpoint(ps_, meta.dump(), path);
}

Codec Codec::load(const std::string& path) {
    // First pass just to read metadata and size the model.
    json meta = json::parse(nn::peek_checkpoint_metadata(path));
    if (meta.value("kind", "") != "latent_codec")
        throw nn::CheckpointError(path + ": not a codec checkpoint");

    CodecConfig cfg;
    cfg.f = meta.at("f").get<int64_t>();
    cfg.c = meta.at("c").get<int64_t>();
    cfg.width = meta.at("width").get<int64_t>();
    cfg.seed = meta.at("seed").get<uint64_t>();
    Codec codec(cfg);
    nn::load_checkpoint(codec.ps_, path);
    codec.mean_ = meta.at("mean").get<std::vector<float>>();
    codec.std_ = meta.at("std").get<std::vector<float>>();
    codec.refresh_id();
    if (codec.id_ != meta.at("codec_id").get<uint64_t>())
        throw CodecMismatch(path + ": stored codec_id does not match weights");
    return codec;
}

Codec train_codec(const std::vector<TensorF>& train_images,
                  const std::vector<TensorF>& eval_images, const CodecConfig& cfg,
                  double* out_psnr) {
    if (train_images.empty()) throw std::invalid_argument("train_codec: empty dataset");
    Codec codec(cfg);
    int64_t h = train_images[0].dim(1), w = train_images[0].dim(2);
    for (const auto& img : train_images)
        if (img.dim(1) != h || img.dim(2) != w)
            throw nn::ShapeMismatch("train_codec: mixed image sizes");

    Rng rng(derive_seed(cfg.seed, 0x7261));
    nn::AdamW<float> opt({.lr = cfg.lr});
    std::vector<size_t> order(train_images.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // step decay: full lr, then 1/3, then 1/9 over the run
        double frac = static_cast<double>(epoch) / std::max(1, cfg.epochs);
        opt.set_lr(cfg.lr * (frac < 0.6 ? 1.0 : frac < 0.85 ? 1.0 / 3 : 1.0 / 9));
        // deterministic Fisher-Yates
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, (int64_t)i - 1))]);
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch)) {
            size_t bs = std::min(static_cast<size_t>(cfg.batch), order.size() - b);
            TensorF x({static_cast<int64_t>(bs), 3, h, w});
            for (size_t i = 0; i < bs; ++i)
                std::copy_n(train_images[order[b + i]].data(), 3 * h * w,
                            x.data() + static_cast<int64_t>(i) * 3 * h * w);
            codec.ps_.zero_grad();
            Tape<float> t;
            auto xi = t.constant(x);
            auto recon = codec.decode_graph(t, codec.encode_graph(t, xi));
            auto diff = t.sub(recon, xi);
            auto loss = t.mean_all(t.mul(diff, diff));
            t.backward(loss);
            opt.step(codec.ps_);
        }
    }

    // per-channel latent statistics on the training split
    codec.mean_.assign(static_cast<size_t>(cfg.c), 0.f);
    codec.std_.assign(static_cast<size_t>(cfg.c), 1.f);
    codec.refresh_id();
    std::vector<double> mean(static_cast<size_t>(cfg.c), 0.0), var(static_cast<size_t>(cfg.c), 0.0);
    int64_t count = 0;
    for (const auto& img : train_images) {
        LatentGrid z = codec.encode(img);
        int64_t hw = z.values.dim(1) * z.values.dim(2);
        for (int64_t c = 0; c < cfg.c; ++c)
            for (int64_t i = 0; i < hw; ++i) mean[static_cast<size_t>(c)] += z.values[c * hw + i];
        count += hw;
    }
    for (auto& m : mean) m /= static_cast<double>(count);
    for (const auto& img : train_images) {
        LatentGrid z = codec.encode(img);
        int64_t hw = z.values.dim(1) * z.values.dim(2);
        for (int64_t c = 0; c < cfg.c; ++c)
            for (int64_t i = 0; i < hw; ++i) {
                double d = z.values[c * hw + i] - mean[static_cast<size_t>(c)];
                var[static_cast<size_t>(c)] += d * d;
            }
    }
    for (int64_t c = 0; c < cfg.c; ++c) {
        codec.mean_[static_cast<size_t>(c)] = static_cast<float>(mean[static_cast<size_t>(c)]);
        codec.std_[static_cast<size_t>(c)] = static_cast<float>(
            std::sqrt(var[static_cast<size_t>(c)] / static_cast<double>(count) + 1e-8));
    }
    codec.refresh_id();

    const auto& gate = eval_images.empty() ? train_images : eval_images;
    double total = 0;
    for (const auto& img : gate) total += psnr(img, codec.decode(codec.encode(img)));
    double mean_psnr = total / static_cast<double>(gate.size());
    if (out_psnr) *out_psnr = mean_psnr;
    if (mean_psnr < cfg.psnr_threshold)
        throw NonConvergence("held-out PSNR " + std::to_string(mean_psnr) + " dB below " +
                             std::to_string(cfg.psnr_threshold) + " dB");
    return codec;
}

}  // namespace gf::latentcodec
