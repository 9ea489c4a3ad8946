#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gf/nn/modules.hpp"
#include "gf/nn/tape.hpp"
#include "gf/rng.hpp"
#include "gf/tensor.hpp"

// Conditional flow-matching transformer over latent grids. Three token
// streams — noisy latent, reference poster, glyph map — are concatenated
// along the sequence; the velocity head reads only the noisy stream.
namespace gf::editnet {

struct EditorConfig {
    int64_t patch = 2;      // latent cells per token side
    int64_t dim = 256;      // model width
    int64_t depth = 8;      // transformer blocks
    int64_t heads = 4;
    double lambda_weight = 5.0;   // text-region loss amplification
    double cond_dropout = 0.1;    // independent per-stream drop probability
    uint64_t seed = 0;
    int64_t latent_c = 4;   // latent grid geometry, fixed at build time
    int64_t latent_h = 16;
    int64_t latent_w = 16;
    float lr = 1e-4f;

    int64_t tokens_per_stream() const { return (latent_h / patch) * (latent_w / patch); }
    int64_t seq_len() const { return 3 * tokens_per_stream(); }
    int64_t patch_dim() const { return latent_c * patch * patch; }
};

enum class Stream : int { Noisy = 0, Reference = 1, Glyph = 2 };

// z_t = (1-t) x0 + t x1, velocity target x1 - x0.
template <class T>
void flow_interpolate(const Tensor<T>& x0, const Tensor<T>& x1, T t, Tensor<T>& z_t,
                      Tensor<T>& v_star) {
    if (!x0.same_shape(x1)) throw nn::ShapeMismatch("flow_interpolate");
    if (t < T(0) || t > T(1)) throw std::invalid_argument("flow_interpolate: t outside [0,1]");
    z_t = Tensor<T>(x0.shape());
    v_star = Tensor<T>(x0.shape());
    for (int64_t i = 0; i < x0.numel(); ++i) {
        z_t[i] = (T(1) - t) * x0[i] + t * x1[i];
        v_star[i] = x1[i] - x0[i];
    }
}

// mean( err^2 * (1 + lambda * M) ), M broadcast over channels.
template <class T>
T weighted_loss(const Tensor<T>& v_pred, const Tensor<T>& v_star, const Tensor<T>& m_latent,
                T lambda) {
    if (!v_pred.same_shape(v_star)) throw nn::ShapeMismatch("weighted_loss: pred vs target");
    if (lambda < T(0) || !std::isfinite(static_cast<double>(lambda)))
        throw std::invalid_argument("weighted_loss: bad lambda");
    // v: (B,c,h,w) or (c,h,w); M: (B,h,w) or (h,w)
    int64_t hw = m_latent.dim(m_latent.shape().size() - 2) * m_latent.shape().back();
    int64_t chw = v_pred.shape().back() * v_pred.dim(v_pred.shape().size() - 2);
    (void)chw;
    int64_t c = v_pred.numel() / m_latent.numel();
    if (c * m_latent.numel() != v_pred.numel())
        throw nn::ShapeMismatch("weighted_loss: mask does not tile prediction");
    int64_t batches = m_latent.numel() / hw;
    T acc = T(0);
    for (int64_t b = 0; b < batches; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t i = 0; i < hw; ++i) {
                T m = m_latent[b * hw + i];
                T e = v_pred[(b * c + ch) * hw + i] - v_star[(b * c + ch) * hw + i];
                acc += e * e * (T(1) + lambda * m);
            }
    return acc / static_cast<T>(v_pred.numel());
}

template <class T>
struct EditorBatch {
    Tensor<T> z_t;      // (B, c, Hl, Wl), normalized latent space
    Tensor<T> z_ref;    // same shape
    Tensor<T> z_glyph;  // same shape
    std::vector<T> t;                // per-sample time in [0,1]
    std::vector<uint8_t> drop_ref;   // per-sample condition dropout flags
    std::vector<uint8_t> drop_glyph;
};

template <class T>
class EditorT {
public:
    using Tape = nn::Tape<T>;
    using Id = typename Tape::Id;

    explicit EditorT(const EditorConfig& cfg) : cfg_(cfg) {
        if (cfg_.latent_h % cfg_.patch != 0 || cfg_.latent_w % cfg_.patch != 0)
            throw std::invalid_argument("EditorConfig: grid not divisible by patch");
        if (cfg_.dim % cfg_.heads != 0)
            throw std::invalid_argument("EditorConfig: dim not divisible by heads");
        if (!std::isfinite(cfg_.lambda_weight) || cfg_.lambda_weight < 0)
            throw std::invalid_argument("EditorConfig: bad lambda");
        Rng rng(derive_seed(cfg_.seed, 0xed17));
        int64_t d = cfg_.dim, pc = cfg_.patch_dim(), L = cfg_.tokens_per_stream();
        proj_.init(ps_, "proj", pc, d, rng);
        pos_ = ps_.add("pos", nn::randn<T>(rng, {L, d}, T(0.02)), false);
        tags_ = ps_.add("tags", nn::randn<T>(rng, {3, d}, T(0.02)), false);
        nulls_ = ps_.add("nulls", nn::randn<T>(rng, {2, d}, T(0.02)), false);
        t1_.init(ps_, "time1", kTimeDim, d, rng);
        t2_.init(ps_, "time2", d, d, rng);
        blocks_.resize(static_cast<size_t>(cfg_.depth));
        for (int64_t i = 0; i < cfg_.depth; ++i) {
            auto& b = blocks_[static_cast<size_t>(i)];
            std::string p = "blk" + std::to_string(i) + ".";
            b.ln1.init(ps_, p + "ln1", d);
            b.q.init(ps_, p + "q", d, d, rng);
            b.k.init(ps_, p + "k", d, d, rng);
            b.v.init(ps_, p + "v", d, d, rng);
            b.o.init(ps_, p + "o", d, d, rng);
            b.ln2.init(ps_, p + "ln2", d);
            b.m1.init(ps_, p + "mlp1", d, 4 * d, rng);
            b.m2.init(ps_, p + "mlp2", 4 * d, d, rng);
        }
        lnf_.init(ps_, "ln_f", d);
        head_.init_zero(ps_, "head", d, pc);  // zero output at step 0
    }

    const EditorConfig& config() const { return cfg_; }
    nn::ParamStore<T>& params() { return ps_; }
    const nn::ParamStore<T>& params() const { return ps_; }

    // Stream of sequence position s in [0, 3L).
    Stream stream_tag(int64_t s) const {
        return static_cast<Stream>(s / cfg_.tokens_per_stream());
    }
    // Shared 2D grid coordinates (py, px) in token units.
    std::pair<int64_t, int64_t> token_position(int64_t s) const {
        int64_t L = cfg_.tokens_per_stream(), wp = cfg_.latent_w / cfg_.patch;
        return {(s % L) / wp, (s % L) % wp};
    }

    // Token assembly: patchify + shared projection, shared positions,
    // per-stream tags, time on the noisy stream, null embeddings on dropped
    // streams. Returns (B*3L, d).
    Id assemble(Tape& t, const EditorBatch<T>& batch) const {
        check_batch(batch);
        int64_t B = batch.z_t.dim(0), L = cfg_.tokens_per_stream(), S = cfg_.seq_len();
        int64_t d = cfg_.dim, pc = cfg_.patch_dim();
        const Maps& mp = maps(B);

        Tensor<T> tok_in({B * S, pc});
        patchify(batch.z_t, tok_in, 0);
        patchify(batch.z_ref, tok_in, L);
        patchify(batch.z_glyph, tok_in, 2 * L);
        Id x = proj_(t, ps_, t.constant(std::move(tok_in)));
        x = t.add(x, t.gather(t.param(ps_, pos_), mp.pos, {B * S, d}));
        x = t.add(x, t.gather(t.param(ps_, tags_), mp.tags, {B * S, d}));

        // time embedding, added to noisy-stream rows only
        Tensor<T> tf({B, kTimeDim});
        for (int64_t b = 0; b < B; ++b) {
            T tv = batch.t[static_cast<size_t>(b)];
            for (int64_t k = 0; k < kTimeDim / 2; ++k) {
                T w = static_cast<T>(std::pow(2.0, static_cast<double>(k)));
                tf.at(b, 2 * k) = std::sin(w * tv);
                tf.at(b, 2 * k + 1) = std::cos(w * tv);
            }
        }
        Id temb = t2_(t, ps_, t.gelu(t1_(t, ps_, t.constant(std::move(tf)))));
        x = t.add(x, t.gather(temb, mp.time, {B * S, d}));

        // condition dropout: dropped stream rows become the null embedding
        bool any_drop = false;
        for (int64_t b = 0; b < B; ++b)
            any_drop |= batch.drop_ref[static_cast<size_t>(b)] ||
                        batch.drop_glyph[static_cast<size_t>(b)];
        if (any_drop) {
            Tensor<T> keep({B * S, d});
            auto sel = std::make_shared<std::vector<int64_t>>(
                static_cast<size_t>(B * S * d), int64_t{-1});
            for (int64_t b = 0; b < B; ++b)
                for (int64_t s = 0; s < S; ++s) {
                    Stream st = stream_tag(s);
                    bool drop = (st == Stream::Reference &&
                                 batch.drop_ref[static_cast<size_t>(b)]) ||
                                (st == Stream::Glyph &&
                                 batch.drop_glyph[static_cast<size_t>(b)]);
                    int64_t row = b * S + s;
                    for (int64_t j = 0; j < d; ++j) {
                        keep[row * d + j] = drop ? T(0) : T(1);
                        if (drop)
                            (*sel)[static_cast<size_t>(row * d + j)] =
                                (st == Stream::Reference ? 0 : 1) * d + j;
                    }
                }
            Id kept = t.mul(x, t.constant(std::move(keep)));
            Id nul = t.gather(t.param(ps_, nulls_), sel, {B * S, d});
            x = t.add(kept, nul);
        }
        return x;
    }

    // Full forward: assembled tokens -> transformer -> velocity (B,c,Hl,Wl).
    Id forward(Tape& t, const EditorBatch<T>& batch) const {
        int64_t B = batch.z_t.dim(0);
        Id x = assemble(t, batch);
        x = transformer(t, x, B);
        Id v = velocity_head(t, x, B);
        t.check_finite(v, "editnet forward output");
        return v;
    }

    // Convenience for samplers: single forward pass, plain tensors.
    Tensor<T> predict(const EditorBatch<T>& batch) const {
        Tape t;
        return t.val(forward(t, batch));
    }

private:
    static constexpr int64_t kTimeDim = 16;

    struct Block {
        nn::LayerNorm<T> ln1, ln2;
        nn::Linear<T> q, k, v, o, m1, m2;
    };

    struct Maps {
        std::shared_ptr<std::vector<int64_t>> pos, tags, time, split, merge, noisy, unpatch;
    };

    void check_batch(const EditorBatch<T>& b) const {
        std::vector<int64_t> want{b.z_t.dim(0), cfg_.latent_c, cfg_.latent_h, cfg_.latent_w};
        if (b.z_t.shape().size() != 4 || b.z_t.shape() != want)
            throw nn::ShapeMismatch("editor batch z_t " + b.z_t.shape_str());
        if (b.z_ref.shape() != want || b.z_glyph.shape() != want)
            throw nn::ShapeMismatch("editor batch stream shapes differ");
        size_t B = static_cast<size_t>(b.z_t.dim(0));
        if (b.t.size() != B || b.drop_ref.size() != B || b.drop_glyph.size() != B)
            throw nn::ShapeMismatch("editor batch per-sample vectors");
        for (T tv : b.t)
            if (tv < T(0) || tv > T(1))
                throw std::invalid_argument("editor batch: t outside [0,1]");
    }

    // Copy one stream's latents into rows [stream_off, stream_off+L) per batch.
    void patchify(const Tensor<T>& z, Tensor<T>& tok, int64_t stream_off) const {
        int64_t B = z.dim(0), c = cfg_.latent_c, hl = cfg_.latent_h, wl = cfg_.latent_w;
        int64_t p = cfg_.patch, wp = wl / p, L = cfg_.tokens_per_stream(), S = cfg_.seq_len();
        int64_t pc = cfg_.patch_dim();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t l = 0; l < L; ++l) {
                int64_t py = l / wp, px = l % wp;
                T* row = tok.data() + ((b * S) + stream_off + l) * pc;
                for (int64_t ch = 0; ch < c; ++ch)
                    for (int64_t dy = 0; dy < p; ++dy)
                        for (int64_t dx = 0; dx < p; ++dx)
                            row[(ch * p + dy) * p + dx] =
                                z[((b * c + ch) * hl + py * p + dy) * wl + px * p + dx];
            }
    }

    const Maps& maps(int64_t B) const {
        auto it = maps_.find(B);
        if (it != maps_.end()) return it->second;
        int64_t L = cfg_.tokens_per_stream(), S = cfg_.seq_len(), d = cfg_.dim;
        int64_t H = cfg_.heads, dh = d / H;
        int64_t c = cfg_.latent_c, hl = cfg_.latent_h, wl = cfg_.latent_w, p = cfg_.patch;
        int64_t wp = wl / p, pc = cfg_.patch_dim();
        Maps m;
        m.pos = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * S * d));
        m.tags = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * S * d));
        m.time = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * S * d));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t s = 0; s < S; ++s)
                for (int64_t j = 0; j < d; ++j) {
                    size_t i = static_cast<size_t>((b * S + s) * d + j);
                    (*m.pos)[i] = (s % L) * d + j;
                    (*m.tags)[i] = (s / L) * d + j;
                    (*m.time)[i] = s < L ? b * d + j : -1;
                }
        m.split = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * H * S * dh));
        m.merge = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * S * d));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t s = 0; s < S; ++s)
                    for (int64_t j = 0; j < dh; ++j) {
                        (*m.split)[static_cast<size_t>((((b * H + h) * S) + s) * dh + j)] =
                            (b * S + s) * d + h * dh + j;
                        (*m.merge)[static_cast<size_t>((b * S + s) * d + h * dh + j)] =
                            (((b * H + h) * S) + s) * dh + j;
                    }
        m.noisy = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * L * d));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t l = 0; l < L; ++l)
                for (int64_t j = 0; j < d; ++j)
                    (*m.noisy)[static_cast<size_t>((b * L + l) * d + j)] = (b * S + l) * d + j;
        m.unpatch = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * c * hl * wl));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t y = 0; y < hl; ++y)
                    for (int64_t x = 0; x < wl; ++x) {
                        int64_t l = (y / p) * wp + x / p;
                        int64_t k = (ch * p + y % p) * p + x % p;
                        (*m.unpatch)[static_cast<size_t>(((b * c + ch) * hl + y) * wl + x)] =
                            (b * L + l) * pc + k;
                    }
        return maps_.emplace(B, std::move(m)).first->second;
    }

    Id transformer(Tape& t, Id x, int64_t B) const {
        int64_t S = cfg_.seq_len(), d = cfg_.dim, H = cfg_.heads, dh = d / H;
        const Maps& mp = maps(B);
        T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        for (const auto& b : blocks_) {
            Id h = b.ln1(t, ps_, x);
            Id qh = t.gather(b.q(t, ps_, h), mp.split, {B * H, S, dh});
            Id kh = t.gather(b.k(t, ps_, h), mp.split, {B * H, S, dh});
            Id vh = t.gather(b.v(t, ps_, h), mp.split, {B * H, S, dh});
            Id att = t.softmax_last(t.scale(t.bmm_nt(qh, kh), att_scale));
            Id ctx = t.gather(t.bmm_nn(att, vh), mp.merge, {B * S, d});
            x = t.add(x, b.o(t, ps_, ctx));
            Id m = b.ln2(t, ps_, x);
            m = b.m2(t, ps_, t.gelu(b.m1(t, ps_, m)));
            x = t.add(x, m);
        }
        return x;
    }

    Id velocity_head(Tape& t, Id x, int64_t B) const {
        int64_t L = cfg_.tokens_per_stream(), d = cfg_.dim;
        const Maps& mp = maps(B);
        Id noisy = t.gather(x, mp.noisy, {B * L, d});
        Id out = head_(t, ps_, lnf_(t, ps_, noisy));
        Id grid = t.gather(out, mp.unpatch,
                           {B, cfg_.latent_c, cfg_.latent_h, cfg_.latent_w});
        return grid;
    }

    EditorConfig cfg_;
    mutable nn::ParamStore<T> ps_;
    nn::Linear<T> proj_, t1_, t2_, head_;
    int pos_ = -1, tags_ = -1, nulls_ = -1;
    std::vector<Block> blocks_;
    nn::LayerNorm<T> lnf_;
    mutable std::map<int64_t, Maps> maps_;
};

using Editor = EditorT<float>;

struct StepStats {
    double loss = 0;
    double grad_norm = 0;
};

// One optimizer update on a batch of (target latent, conditions, mask).
// Samples t per element, draws flow noise, applies independent condition
// dropout, computes the text-region weighted loss, steps AdamW.
template <class T>
StepStats train_step(EditorT<T>& model, nn::AdamW<T>& opt, const Tensor<T>& z1,
                     const Tensor<T>& z_ref, const Tensor<T>& z_glyph,
                     const Tensor<T>& m_latent, Rng& rng) {
    const EditorConfig& cfg = model.config();
    int64_t B = z1.dim(0), c = cfg.latent_c, hl = cfg.latent_h, wl = cfg.latent_w;
    EditorBatch<T> batch;
    batch.z_ref = z_ref;
    batch.z_glyph = z_glyph;
    batch.z_t = Tensor<T>({B, c, hl, wl});
    Tensor<T> v_star({B, c, hl, wl});
    batch.t.resize(static_cast<size_t>(B));
    batch.drop_ref.resize(static_cast<size_t>(B));
    batch.drop_glyph.resize(static_cast<size_t>(B));
    int64_t chw = c * hl * wl;
    for (int64_t b = 0; b < B; ++b) {
        T tv = static_cast<T>(rng.uniform());
        batch.t[static_cast<size_t>(b)] = tv;
        batch.drop_ref[static_cast<size_t>(b)] = rng.bernoulli(cfg.cond_dropout);
        batch.drop_glyph[static_cast<size_t>(b)] = rng.bernoulli(cfg.cond_dropout);
        for (int64_t i = 0; i < chw; ++i) {
            T x0 = static_cast<T>(rng.normal());
            T x1 = z1[b * chw + i];
            batch.z_t[b * chw + i] = (T(1) - tv) * x0 + tv * x1;
            v_star[b * chw + i] = x1 - x0;
        }
    }
    // weight = 1 + lambda * M, broadcast over channels
    Tensor<T> weight({B, c, hl, wl});
    int64_t hw = hl * wl;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t i = 0; i < hw; ++i)
                weight[(b * c + ch) * hw + i] =
                    T(1) + static_cast<T>(cfg.lambda_weight) * m_latent[b * hw + i];

    model.params().zero_grad();
    nn::Tape<T> t;
    auto v = model.forward(t, batch);
    auto err = t.sub(v, t.constant(std::move(v_star)));
    auto loss = t.mean_all(t.mul(t.mul(err, err), t.constant(std::move(weight))));
    t.check_finite(loss, "editnet loss");
    t.backward(loss);
    StepStats st;
    st.loss = static_cast<double>(t.val(loss)[0]);
    st.grad_norm = opt.grad_norm(model.params());
    opt.step(model.params());
    return st;
}

}  // namespace gf::editnet
