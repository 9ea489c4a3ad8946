#include "gf/percept/percept.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include <json.hpp>

#include "gf/hash.hpp"
#include "gf/nn/checkpoint.hpp"
#include "gf/rng.hpp"

using nlohmann::json;

namespace gf::percept {

using nn::Tape;
using Id = Tape<float>::Id;
using scenegen::Rect;

uint64_t charset_hash() {
    return Hasher{}.update(std::string(fontlab::kCharset)).digest();
}

TensorF to_crop(const TensorF& region) {
    if (region.shape().size() != 3 || region.dim(0) != 3)
        throw nn::ShapeMismatch("to_crop expects (3,H,W), got " + region.shape_str());
    int64_t h = region.dim(1), w = region.dim(2);
    if (h == kCropH && w == kCropW) return region;
    double sc = std::min(static_cast<double>(kCropH) / static_cast<double>(h),
                         static_cast<double>(kCropW) / static_cast<double>(w));
    int64_t rh = std::clamp<int64_t>(std::llround(h * sc), 1, kCropH);
    int64_t rw = std::clamp<int64_t>(std::llround(w * sc), 1, kCropW);
    TensorF r = resize_bilinear(region, rh, rw);
    if (rh == kCropH && rw == kCropW) return r;
    int64_t oy = (kCropH - rh) / 2, ox = (kCropW - rw) / 2;
    TensorF out({3, kCropH, kCropW});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < kCropH; ++y)
            for (int64_t x = 0; x < kCropW; ++x)
                out.at(c, y, x) = r.at(c, std::clamp<int64_t>(y - oy, 0, rh - 1),
                                       std::clamp<int64_t>(x - ox, 0, rw - 1));
    return out;
}

namespace {

// Photometric canonicalization applied in front of every model: collapses
// background recipe, ink hue, and ink/background polarity, which otherwise
// dominate the generalization gap. Channels: luminance, local contrast
// (luminance minus a 5x5 box blur, clamped at the borders), and its
// magnitude (polarity-invariant ink signal).
TensorF canon_channels(const TensorF& img) {
    int64_t h = img.dim(1), w = img.dim(2);
    TensorF out({3, h, w});
    std::vector<float> lum(static_cast<size_t>(h * w)), tmp(static_cast<size_t>(h * w));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            lum[static_cast<size_t>(y * w + x)] = 0.299f * img.at(0, y, x) +
                                                  0.587f * img.at(1, y, x) +
                                                  0.114f * img.at(2, y, x);
    // separable 5x5 box blur, borders clamped
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            float s = 0;
            for (int64_t d = -2; d <= 2; ++d)
                s += lum[static_cast<size_t>(y * w + std::clamp(x + d, int64_t{0}, w - 1))];
            tmp[static_cast<size_t>(y * w + x)] = s / 5.0f;
        }
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            float s = 0;
            for (int64_t d = -2; d <= 2; ++d)
                s += tmp[static_cast<size_t>(std::clamp(y + d, int64_t{0}, h - 1) * w + x)];
            float blur = s / 5.0f;
            float l = lum[static_cast<size_t>(y * w + x)];
            out.at(0, y, x) = l;
            out.at(1, y, x) = l - blur;
            out.at(2, y, x) = std::fabs(l - blur);
        }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic supervision

std::vector<LabeledCrop> make_crop_dataset(uint64_t seed, int n, int max_len,
                                           const std::vector<int>& styles) {
    if (max_len < 1 || max_len > kMaxLen)
        throw std::invalid_argument("make_crop_dataset: max_len outside [1, 8]");
    const auto& all = fontlab::list_styles();
    std::vector<int> pool = styles;
    if (pool.empty())
        for (const auto& s : all) pool.push_back(s.style_id);
    for (int id : pool)
        if (id < 0 || id >= static_cast<int>(all.size()))
            throw std::invalid_argument("make_crop_dataset: unknown style id");

    std::vector<LabeledCrop> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<uint64_t>(i)));
        auto recipe = static_cast<scenegen::Background>(
            rng.uniform_int(0, scenegen::kBackgroundCount - 1));
        LabeledCrop c;
        c.image = scenegen::gen_background(derive_seed(seed, 0xb60000 + (uint64_t)i), kCropW,
                                           kCropH, recipe);
        c.style_id = pool[static_cast<size_t>(rng.uniform_int(0, (int64_t)pool.size() - 1))];
        const auto& style = all[static_cast<size_t>(c.style_id)];
        Rect r{0, 0, kCropW, kCropH};
        int cap = std::min(max_len, scenegen::max_fit_len(style, r));
        int len = static_cast<int>(rng.uniform_int(1, std::max(1, cap)));
        c.text = scenegen::random_text(rng, len);
        RGB color = scenegen::contrasting_color(rng, c.image, r);
        auto rt = scenegen::render_into_rect(c.image, c.text, style, color, r);
        c.ink = rt.ink_mask;
        c.tight = Rect{rt.x0, rt.y0, rt.x1, rt.y1};
        quantize_u8_inplace(c.image);
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<InkScene> make_ink_dataset(uint64_t seed, int n, int64_t w, int64_t h) {
    const auto& all = fontlab::list_styles();
    std::vector<InkScene> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, 0x12c000 + static_cast<uint64_t>(i)));
        auto recipe = static_cast<scenegen::Background>(
            rng.uniform_int(0, scenegen::kBackgroundCount - 1));
        InkScene s;
        s.image = scenegen::gen_background(derive_seed(seed, 0xd0000 + (uint64_t)i), w, h, recipe);
        // one text region at a random admissible rect
        auto rects = scenegen::propose_regions(derive_seed(seed, 0xe0000 + (uint64_t)i), w, h, 1);
        s.roi = rects.at(0);
        // fall back to the plain style if the drawn one cannot fit a glyph here
        int sid = static_cast<int>(rng.uniform_int(0, (int64_t)all.size() - 1));
        if (scenegen::max_fit_len(all[static_cast<size_t>(sid)], s.roi) < 1) sid = 0;
        const auto& style = all[static_cast<size_t>(sid)];
        int cap = std::max(1, scenegen::max_fit_len(style, s.roi));
        std::string text = scenegen::random_text(rng, (int)rng.uniform_int(1, cap));
        RGB color = scenegen::contrasting_color(rng, s.image, s.roi);
        auto rt = scenegen::render_into_rect(s.image, text, style, color, s.roi);
        s.ink = rt.ink_mask;
        s.tight = Rect{rt.x0, rt.y0, rt.x1, rt.y1};
        quantize_u8_inplace(s.image);
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shared training utilities

namespace {

// (B,3,H,W) batch from crop images listed by index.
TensorF gather_batch(const std::vector<LabeledCrop>& crops, const std::vector<size_t>& order,
                     size_t off, size_t bs) {
    int64_t h = crops[0].image.dim(1), w = crops[0].image.dim(2);
    TensorF x({static_cast<int64_t>(bs), 3, h, w});
    for (size_t i = 0; i < bs; ++i) {
        TensorF c = canon_channels(crops[order[off + i]].image);
        std::copy_n(c.data(), 3 * h * w, x.data() + static_cast<int64_t>(i) * 3 * h * w);
    }
    return x;
}

void shuffle(std::vector<size_t>& order, Rng& rng) {
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, (int64_t)i - 1))]);
}

// --- character-window geometry -------------------------------------------
// Layout units: glyph i occupies [pen_i, pen_i + width_i) with width_i its
// tight atlas column span; consecutive glyphs are separated by one unit.

constexpr int64_t kCellSize = 24;      // classifier window resolution
constexpr double kAvgCharUnits = 5.3;  // registry average, initial placement

double char_units(char c) {
    auto [c0, c1] = fontlab::glyph_col_span(fontlab::charset_index(c));
    return static_cast<double>(c1 - c0);
}

// pen positions (units) for the given per-char widths; returns total units.
double layout_pens(const std::vector<double>& widths, std::vector<double>& pens) {
    pens.resize(widths.size());
    double pen = 0;
    for (size_t i = 0; i < widths.size(); ++i) {
        pens[i] = pen;
        pen += widths[i] + 1.0;
    }
    return pen - 1.0;  // no trailing gap
}

// Bilinear sample of the fractional-coordinate window [x0,x1)x[y0,y1) of a
// (C,H,W) tensor, resized to (oh,ow); source coordinates clamp at borders.
TensorF sample_window(const TensorF& img, double x0, double y0, double x1, double y1,
                      int64_t oh, int64_t ow) {
    int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    TensorF out({C, oh, ow});
    double sx = (x1 - x0) / static_cast<double>(ow);
    double sy = (y1 - y0) / static_cast<double>(oh);
    for (int64_t y = 0; y < oh; ++y) {
        double fy = y0 + (y + 0.5) * sy - 0.5;
        int64_t y0i = static_cast<int64_t>(std::floor(fy));
        double wy = fy - y0i;
        int64_t ya = std::clamp<int64_t>(y0i, 0, H - 1), yb = std::clamp<int64_t>(y0i + 1, 0, H - 1);
        for (int64_t x = 0; x < ow; ++x) {
            double fx = x0 + (x + 0.5) * sx - 0.5;
            int64_t x0i = static_cast<int64_t>(std::floor(fx));
            double wx = fx - x0i;
            int64_t xa = std::clamp<int64_t>(x0i, 0, W - 1),
                    xb = std::clamp<int64_t>(x0i + 1, 0, W - 1);
            for (int64_t c = 0; c < C; ++c) {
                double top = (1 - wx) * img.at(c, ya, xa) + wx * img.at(c, ya, xb);
                double bot = (1 - wx) * img.at(c, yb, xa) + wx * img.at(c, yb, xb);
                out.at(c, y, x) = static_cast<float>((1 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

// Window of character i given per-char unit widths and the ink bbox: the unit
// axis maps linearly onto the bbox width, half a unit of context per side.
struct Window {
    double x0, y0, x1, y1;
};
Window char_window(const Rect& box, const std::vector<double>& pens, double total_units,
                   size_t i, double width_i) {
    double px_per_unit = static_cast<double>(box.w()) / std::max(1.0, total_units);
    auto map = [&](double u) { return static_cast<double>(box.x0) + u * px_per_unit; };
    return {map(pens[i] - 0.5), static_cast<double>(box.y0), map(pens[i] + width_i + 0.5),
            static_cast<double>(box.y1)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Recognizer

Recognizer::Recognizer(const RecognizerConfig& cfg) : cfg_(cfg) {
    Rng rng(derive_seed(cfg_.seed, 0x0c6));
    int64_t w = cfg_.width;
    ink1_.init(ps_, "ink1", 3, w, 3, 1, 1, rng);
    ink2_.init(ps_, "ink2", w, w, 3, 1, 1, rng);
    ink3_.init(ps_, "ink3", w, 1, 3, 1, 1, rng);
    cell1_.init(ps_, "cell1", 3, w, 3, 2, 1, rng);      // (w, 12, 12)
    cell2_.init(ps_, "cell2", w, 2 * w, 3, 2, 1, rng);  // (2w, 6, 6)
    cfc1_.init(ps_, "cfc1", 2 * w * 6 * 6, 128, rng);
    cfc2_.init(ps_, "cfc2", 128, fontlab::kCharsetSize, rng);
}

Id Recognizer::ink_forward(Tape<float>& t, Id x) const {
    auto h = t.relu(ink1_(t, ps_, x));
    h = t.relu(ink2_(t, ps_, h));
    return ink3_(t, ps_, h);  // (B, 1, H, W) per-pixel ink logits
}

Id Recognizer::cell_forward(Tape<float>& t, Id x) const {
    int64_t B = t.val(x).dim(0);
    auto h = t.relu(cell1_(t, ps_, x));
    h = t.relu(cell2_(t, ps_, h));
    h = t.reshape(h, {B, 2 * cfg_.width * 6 * 6});
    h = t.relu(cfc1_(t, ps_, h));
    return cfc2_(t, ps_, h);  // (B, kCharsetSize) logits
}

Recognition Recognizer::decode(const TensorF& crop, TensorF* probs_out) const {
    TensorF cc = canon_channels(to_crop(crop));
    TensorF ink_prob;
    {
        Tape<float> t;
        auto logits = ink_forward(t, t.constant(cc.reshaped({1, 3, kCropH, kCropW})));
        ink_prob = t.val(t.sigmoid(logits)).reshaped({kCropH, kCropW});
    }
    if (probs_out) {
        *probs_out = TensorF({kMaxLen, kNumClasses});
        for (int64_t s = 0; s < kMaxLen; ++s) probs_out->at(s, kBlank) = 1.0f;
    }
    Recognition rec;
    auto box = bbox_from_probs(ink_prob, Rect{0, 0, kCropW, kCropH}, 0.5);
    if (!box || box->w() < 1 || box->h() < 2) {
        rec.confidence = 1.0 / static_cast<double>(kNumClasses);  // floor: nothing to read
        return rec;
    }

    double px_per_unit_y = static_cast<double>(box->h()) / 8.0;  // glyphs span 8 rows
    double best_score = -1e30;
    for (int64_t L = 1; L <= kMaxLen; ++L) {
        std::vector<double> widths(static_cast<size_t>(L), kAvgCharUnits), pens;
        std::vector<int> chars(static_cast<size_t>(L), -1);
        TensorF cell_probs;  // (L, kCharsetSize)
        double total = 0;
        for (int iter = 0; iter < 4; ++iter) {
            total = layout_pens(widths, pens);
            TensorF cells({L, 3, kCellSize, kCellSize});
            for (int64_t i = 0; i < L; ++i) {
                Window wd = char_window(*box, pens, total, static_cast<size_t>(i),
                                        widths[static_cast<size_t>(i)]);
                TensorF c = sample_window(cc, wd.x0, wd.y0, wd.x1, wd.y1, kCellSize, kCellSize);
                std::copy_n(c.data(), c.numel(), cells.data() + i * 3 * kCellSize * kCellSize);
            }
            Tape<float> t;
            auto logits = cell_forward(t, t.constant(std::move(cells)));
            cell_probs = t.val(t.softmax_last(logits));
            bool changed = false;
            for (int64_t i = 0; i < L; ++i) {
                const float* row = cell_probs.data() + i * fontlab::kCharsetSize;
                int arg = 0;
                for (int c = 1; c < fontlab::kCharsetSize; ++c)
                    if (row[c] > row[arg]) arg = c;
                if (arg != chars[static_cast<size_t>(i)]) changed = true;
                chars[static_cast<size_t>(i)] = arg;
                widths[static_cast<size_t>(i)] = char_units(fontlab::kCharset[arg]);
            }
            if (!changed) break;
        }
        total = layout_pens(widths, pens);
        double conf = 0;
        for (int64_t i = 0; i < L; ++i)
            conf += cell_probs[i * fontlab::kCharsetSize + chars[static_cast<size_t>(i)]];
        conf /= static_cast<double>(L);
        // penalize hypotheses whose implied pixel width disagrees with the bbox
        double resid_units =
            std::fabs(total * px_per_unit_y - static_cast<double>(box->w())) / px_per_unit_y;
        double score = conf - 0.25 * std::max(0.0, resid_units - 1.5);
        if (score > best_score) {
            best_score = score;
            rec.text.clear();
            for (int64_t i = 0; i < L; ++i)
                rec.text.push_back(fontlab::kCharset[chars[static_cast<size_t>(i)]]);
            rec.confidence = conf;
            if (probs_out) {
                probs_out->fill(0.0f);
                for (int64_t s = 0; s < kMaxLen; ++s) {
                    if (s < L)
                        std::copy_n(cell_probs.data() + s * fontlab::kCharsetSize,
                                    fontlab::kCharsetSize, probs_out->data() + s * kNumClasses);
                    else
                        probs_out->at(s, kBlank) = 1.0f;
                }
            }
        }
    }
    return rec;
}

TensorF Recognizer::slot_probs(const TensorF& crop) const {
    TensorF probs;
    decode(crop, &probs);
    return probs;
}

Recognition Recognizer::recognize(const TensorF& crop) const { return decode(crop, nullptr); }

uint64_t Recognizer::weights_hash() const { return nn::params_hash(ps_); }

void Recognizer::save(const std::string& path) const {
    json meta = {{"kind", "recognizer"},
                 {"width", cfg_.width},
                 {"seed", cfg_.seed},
                 {"charset_hash", charset_hash()},
                 {"crop", {kCropH, kCropW}}};
    nn::save_checkpoint(ps_, meta.dump(), path);
}

Recognizer Recognizer::load(const std::string& path) {
    json meta = json::parse(nn::peek_checkpoint_metadata(path));
    if (meta.value("kind", "") != "recognizer")
        throw nn::CheckpointError(path + ": not a recognizer checkpoint");
    if (meta.at("charset_hash").get<uint64_t>() != charset_hash())
        throw nn::CheckpointError(path + ": charset hash mismatch");
    RecognizerConfig cfg;
    cfg.width = meta.at("width").get<int64_t>();
    cfg.seed = meta.at("seed").get<uint64_t>();
    Recognizer model(cfg);
    nn::load_checkpoint(model.ps_, path);
    return model;
}

double exact_accuracy(const Recognizer& model, const std::vector<LabeledCrop>& crops) {
    if (crops.empty()) return 0;
    int64_t hit = 0;
    for (const auto& c : crops) hit += model.recognize(c.image).text == c.text;
    return static_cast<double>(hit) / static_cast<double>(crops.size());
}

Recognizer train_recognizer_stream(const CropSource& source,
                                   const std::vector<LabeledCrop>& eval,
                                   const RecognizerConfig& cfg, double* out_accuracy) {
    Recognizer model(cfg);
    Rng rng(derive_seed(cfg.seed, 0x7206));
    nn::AdamW<float> opt({.lr = cfg.lr});
    std::vector<LabeledCrop> fallback;  // non-empty gate set when eval is empty
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<LabeledCrop> train = source(epoch);
        if (train.empty()) throw std::invalid_argument("train_recognizer: empty dataset");
        if (eval.empty() && epoch == 0) fallback = train;
        double frac = static_cast<double>(epoch) / std::max(1, cfg.epochs);
        opt.set_lr(cfg.lr * (frac < 0.6 ? 1.0 : frac < 0.85 ? 1.0 / 3 : 1.0 / 9));
        std::vector<size_t> order(train.size());
        std::iota(order.begin(), order.end(), size_t{0});
        shuffle(order, rng);
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch)) {
            size_t bs = std::min(static_cast<size_t>(cfg.batch), order.size() - b);
            // one canonicalization per crop, shared by both losses
            std::vector<TensorF> canon(bs);
            TensorF x({static_cast<int64_t>(bs), 3, kCropH, kCropW});
            auto ink = std::make_shared<Tensor<float>>(
                std::vector<int64_t>{static_cast<int64_t>(bs), 1, kCropH, kCropW});
            std::vector<TensorF> cells;
            auto labels = std::make_shared<std::vector<int>>();
            for (size_t i = 0; i < bs; ++i) {
                const LabeledCrop& c = train[order[b + i]];
                if (c.ink.numel() != kCropH * kCropW || c.tight.w() < 1)
                    throw std::invalid_argument(
                        "train_recognizer: crops need renderer ink supervision");
                canon[i] = canon_channels(c.image);
                std::copy_n(canon[i].data(), 3 * kCropH * kCropW,
                            x.data() + static_cast<int64_t>(i) * 3 * kCropH * kCropW);
                for (int64_t p = 0; p < kCropH * kCropW; ++p)
                    (*ink)[static_cast<int64_t>(i) * kCropH * kCropW + p] =
                        static_cast<float>(c.ink[p]);
                // character windows from the oracle layout, edges jittered to
                // cover predicted-bbox and placement noise at inference
                std::vector<double> widths, pens;
                for (char ch : c.text) widths.push_back(char_units(ch));
                double total = layout_pens(widths, pens);
                Rect box = c.tight;
                for (size_t k = 0; k < c.text.size(); ++k) {
                    Window wd = char_window(box, pens, total, k, widths[k]);
                    wd.x0 += rng.uniform(-1.5, 1.5);
                    wd.x1 += rng.uniform(-1.5, 1.5);
                    wd.y0 += rng.uniform(-1.5, 1.5);
                    wd.y1 += rng.uniform(-1.5, 1.5);
                    cells.push_back(sample_window(canon[i], wd.x0, wd.y0, wd.x1, wd.y1,
                                                  kCellSize, kCellSize));
                    labels->push_back(fontlab::charset_index(c.text[k]));
                }
            }
            TensorF cx({static_cast<int64_t>(cells.size()), 3, kCellSize, kCellSize});
            for (size_t i = 0; i < cells.size(); ++i)
                std::copy_n(cells[i].data(), 3 * kCellSize * kCellSize,
                            cx.data() + static_cast<int64_t>(i) * 3 * kCellSize * kCellSize);
            model.ps_.zero_grad();
            {
                Tape<float> t;
                t.backward(t.bce_logits(model.ink_forward(t, t.constant(std::move(x))), ink));
            }
            {
                Tape<float> t;
                t.backward(
                    t.softmax_xent(model.cell_forward(t, t.constant(std::move(cx))), labels));
            }
            opt.step(model.ps_);
        }
    }
    double acc = exact_accuracy(model, eval.empty() ? fallback : eval);
    if (out_accuracy) *out_accuracy = acc;
    if (acc < cfg.accuracy_threshold)
        throw NonConvergence("recognizer exact accuracy " + std::to_string(acc) + " below " +
                             std::to_string(cfg.accuracy_threshold));
    return model;
}

Recognizer train_recognizer(const std::vector<LabeledCrop>& train,
                            const std::vector<LabeledCrop>& eval, const RecognizerConfig& cfg,
                            double* out_accuracy) {
    return train_recognizer_stream([&](int) { return train; }, eval, cfg, out_accuracy);
}

// ---------------------------------------------------------------------------
// Style embedder

StyleEmbedder::StyleEmbedder(const EmbedderConfig& cfg) : cfg_(cfg) {
    Rng rng(derive_seed(cfg_.seed, 0x0e3b));
    int64_t w = cfg_.width;
    int64_t K = static_cast<int64_t>(fontlab::list_styles().size());
    c1_.init(ps_, "c1", 3, w, 3, 2, 1, rng);
    c2_.init(ps_, "c2", w, 2 * w, 3, 2, 1, rng);
    c3_.init(ps_, "c3", 2 * w, 4 * w, 3, 2, 1, rng);
    fc1_.init(ps_, "fc1", 4 * w * 3 * 8, 2 * cfg_.embed_dim, rng);
    fc_embed_.init(ps_, "fc_embed", 2 * cfg_.embed_dim, cfg_.embed_dim, rng);
    fc_cls_.init(ps_, "fc_cls", cfg_.embed_dim, K, rng);
}

Id StyleEmbedder::penult(Tape<float>& t, Id x) const {
    int64_t B = t.val(x).dim(0);
    auto h = t.relu(c1_(t, ps_, x));
    h = t.relu(c2_(t, ps_, h));
    h = t.relu(c3_(t, ps_, h));
    h = t.reshape(h, {B, 4 * cfg_.width * 3 * 8});
    h = t.relu(fc1_(t, ps_, h));
    return fc_embed_(t, ps_, h);  // (B, e) penultimate activations
}

std::vector<float> StyleEmbedder::features(const TensorF& crop) const {
    TensorF in = canon_channels(to_crop(crop));
    Tape<float> t;
    TensorF p = t.val(penult(t, t.constant(in.reshaped({1, 3, kCropH, kCropW}))));
    return std::vector<float>(p.data(), p.data() + p.numel());
}

std::vector<float> StyleEmbedder::embed(const TensorF& crop) const {
    std::vector<float> out = features(crop);
    double n2 = 0;
    for (float v : out) n2 += static_cast<double>(v) * v;
    float inv = static_cast<float>(1.0 / std::sqrt(n2 + 1e-12));
    for (float& v : out) v *= inv;
    return out;
}

int StyleEmbedder::classify(const TensorF& crop) const {
    TensorF in = canon_channels(to_crop(crop));
    Tape<float> t;
    auto logits = fc_cls_(t, ps_, t.relu(penult(t, t.constant(in.reshaped({1, 3, kCropH, kCropW})))));
    const TensorF& v = t.val(logits);
    int64_t arg = 0;
    for (int64_t i = 1; i < v.numel(); ++i)
        if (v[i] > v[arg]) arg = i;
    return static_cast<int>(arg);
}

uint64_t StyleEmbedder::weights_hash() const { return nn::params_hash(ps_); }

void StyleEmbedder::save(const std::string& path) const {
    json meta = {{"kind", "style_embedder"},   {"width", cfg_.width},
                 {"embed_dim", cfg_.embed_dim}, {"seed", cfg_.seed},
                 {"charset_hash", charset_hash()},
                 {"style_registry_hash", fontlab::style_registry_hash()}};
    nn::save_checkpoint(ps_, meta.dump(), path);
}

StyleEmbedder StyleEmbedder::load(const std::string& path) {
    json meta = json::parse(nn::peek_checkpoint_metadata(path));
    if (meta.value("kind", "") != "style_embedder")
        throw nn::CheckpointError(path + ": not a style embedder checkpoint");
    if (meta.at("style_registry_hash").get<uint64_t>() != fontlab::style_registry_hash())
        throw nn::CheckpointError(path + ": style registry hash mismatch");
    EmbedderConfig cfg;
    cfg.width = meta.at("width").get<int64_t>();
    cfg.embed_dim = meta.at("embed_dim").get<int64_t>();
    cfg.seed = meta.at("seed").get<uint64_t>();
    StyleEmbedder model(cfg);
    nn::load_checkpoint(model.ps_, path);
    return model;
}

double classify_accuracy(const StyleEmbedder& model, const std::vector<LabeledCrop>& crops) {
    if (crops.empty()) return 0;
    int64_t hit = 0;
    for (const auto& c : crops) hit += model.classify(c.image) == c.style_id;
    return static_cast<double>(hit) / static_cast<double>(crops.size());
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw nn::ShapeMismatch("cosine: length mismatch");
    double num = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    return num / std::sqrt(na * nb + 1e-24);
}

StyleEmbedder train_style_embedder_stream(const CropSource& source,
                                          const std::vector<LabeledCrop>& eval,
                                          const EmbedderConfig& cfg, double* out_accuracy) {
    StyleEmbedder model(cfg);
    Rng rng(derive_seed(cfg.seed, 0x7263));
    nn::AdamW<float> opt({.lr = cfg.lr});
    std::vector<LabeledCrop> fallback;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<LabeledCrop> train = source(epoch);
        if (train.empty()) throw std::invalid_argument("train_style_embedder: empty dataset");
        if (eval.empty() && epoch == 0) fallback = train;
        double frac = static_cast<double>(epoch) / std::max(1, cfg.epochs);
        opt.set_lr(cfg.lr * (frac < 0.6 ? 1.0 : frac < 0.85 ? 1.0 / 3 : 1.0 / 9));
        std::vector<size_t> order(train.size());
        std::iota(order.begin(), order.end(), size_t{0});
        shuffle(order, rng);
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch)) {
            size_t bs = std::min(static_cast<size_t>(cfg.batch), order.size() - b);
            auto labels = std::make_shared<std::vector<int>>();
            for (size_t i = 0; i < bs; ++i) labels->push_back(train[order[b + i]].style_id);
            model.ps_.zero_grad();
            Tape<float> t;
            auto p = model.penult(t, t.constant(gather_batch(train, order, b, bs)));
            auto logits = model.fc_cls_(t, model.ps_, t.relu(p));
            t.backward(t.softmax_xent(logits, labels));
            opt.step(model.ps_);
        }
    }
    double acc = classify_accuracy(model, eval.empty() ? fallback : eval);
    if (out_accuracy) *out_accuracy = acc;
    if (acc < cfg.accuracy_threshold)
        throw NonConvergence("style classification accuracy " + std::to_string(acc) +
                             " below " + std::to_string(cfg.accuracy_threshold));
    return model;
}

StyleEmbedder train_style_embedder(const std::vector<LabeledCrop>& train,
                                   const std::vector<LabeledCrop>& eval,
                                   const EmbedderConfig& cfg, double* out_accuracy) {
    return train_style_embedder_stream([&](int) { return train; }, eval, cfg, out_accuracy);
}

// ---------------------------------------------------------------------------
// Ink detector

InkDetector::InkDetector(const DetectorConfig& cfg) : cfg_(cfg) {
    if (cfg_.threshold <= 0 || cfg_.threshold >= 1)
        throw std::invalid_argument("DetectorConfig.threshold must lie in (0,1)");
    Rng rng(derive_seed(cfg_.seed, 0x12d));
    int64_t w = cfg_.width;
    c1_.init(ps_, "c1", 3, w, 3, 1, 1, rng);
    c2_.init(ps_, "c2", w, 2 * w, 3, 1, 1, rng);
    c3_.init(ps_, "c3", 2 * w, 1, 3, 1, 1, rng);
}

Id InkDetector::forward(Tape<float>& t, Id x) const {
    auto h = t.relu(c1_(t, ps_, x));
    h = t.relu(c2_(t, ps_, h));
    return c3_(t, ps_, h);  // per-pixel logits
}

TensorF InkDetector::prob_map(const TensorF& image) const {
    if (image.shape().size() != 3 || image.dim(0) != 3)
        throw nn::ShapeMismatch("prob_map expects (3,H,W), got " + image.shape_str());
    int64_t h = image.dim(1), w = image.dim(2);
    Tape<float> t;
    auto logits = forward(t, t.constant(canon_channels(image).reshaped({1, 3, h, w})));
    TensorF out = t.val(t.sigmoid(logits)).reshaped({h, w});
    return out;
}

uint64_t InkDetector::weights_hash() const { return nn::params_hash(ps_); }

void InkDetector::save(const std::string& path) const {
    json meta = {{"kind", "ink_detector"},
                 {"width", cfg_.width},
                 {"seed", cfg_.seed},
                 {"threshold", cfg_.threshold}};
    nn::save_checkpoint(ps_, meta.dump(), path);
}

InkDetector InkDetector::load(const std::string& path) {
    json meta = json::parse(nn::peek_checkpoint_metadata(path));
    if (meta.value("kind", "") != "ink_detector")
        throw nn::CheckpointError(path + ": not an ink detector checkpoint");
    DetectorConfig cfg;
    cfg.width = meta.at("width").get<int64_t>();
    cfg.seed = meta.at("seed").get<uint64_t>();
    cfg.threshold = meta.at("threshold").get<double>();
    InkDetector model(cfg);
    nn::load_checkpoint(model.ps_, path);
    return model;
}

InkDetector train_ink_detector(const std::vector<InkScene>& train, const DetectorConfig& cfg) {
    if (train.empty()) throw std::invalid_argument("train_ink_detector: empty dataset");
    InkDetector model(cfg);
    int64_t h = train[0].image.dim(1), w = train[0].image.dim(2);
    Rng rng(derive_seed(cfg.seed, 0x7212));
    nn::AdamW<float> opt({.lr = cfg.lr});
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, rng);
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch)) {
            size_t bs = std::min(static_cast<size_t>(cfg.batch), order.size() - b);
            TensorF x({static_cast<int64_t>(bs), 3, h, w});
            auto target = std::make_shared<Tensor<float>>(
                std::vector<int64_t>{static_cast<int64_t>(bs), 1, h, w});
            for (size_t i = 0; i < bs; ++i) {
                const auto& s = train[order[b + i]];
                std::copy_n(s.image.data(), 3 * h * w, x.data() + (int64_t)i * 3 * h * w);
                for (int64_t p = 0; p < h * w; ++p)
                    (*target)[(int64_t)i * h * w + p] = static_cast<float>(s.ink[p]);
            }
            model.ps_.zero_grad();
            Tape<float> t;
            auto logits = model.forward(t, t.constant(std::move(x)));
            t.backward(t.bce_logits(logits, target));
            opt.step(model.ps_);
        }
    }
    return model;
}

double rect_iou(const Rect& a, const Rect& b) { return scenegen::dilated_iou(a, b, 0); }

std::optional<Rect> detect_bbox(const InkDetector& det, const TensorF& image, const Rect& roi) {
    return bbox_from_probs(det.prob_map(image), roi, det.config().threshold);
}

std::optional<Rect> bbox_from_probs(const TensorF& prob, const Rect& roi, double theta) {
    int64_t H = prob.dim(0), W = prob.dim(1);
    // expand the roi by 25% per side, clamped to the image
    int64_t ex = static_cast<int64_t>(std::lround(roi.w() * 0.25));
    int64_t ey = static_cast<int64_t>(std::lround(roi.h() * 0.25));
    Rect r{std::max<int64_t>(0, roi.x0 - ex), std::max<int64_t>(0, roi.y0 - ey),
           std::min<int64_t>(W, roi.x1 + ex), std::min<int64_t>(H, roi.y1 + ey)};
    if (r.w() <= 0 || r.h() <= 0) return std::nullopt;
    int64_t rw = r.w(), rh = r.h();
    std::vector<uint8_t> on(static_cast<size_t>(rw * rh), 0);
    for (int64_t y = 0; y < rh; ++y)
        for (int64_t x = 0; x < rw; ++x)
            on[static_cast<size_t>(y * rw + x)] = prob[(r.y0 + y) * W + (r.x0 + x)] >= theta;

    // morphological closing: bridges inter-character gaps so one text run
    // forms one component, without moving the outer boundary
    constexpr int64_t kCloseRadius = 2;
    auto cheb = [&](const std::vector<uint8_t>& src, bool grow) {
        std::vector<uint8_t> tmp(src.size()), dst(src.size());
        for (int64_t y = 0; y < rh; ++y)
            for (int64_t x = 0; x < rw; ++x) {
                uint8_t v = grow ? 0 : 1;
                for (int64_t dx = -kCloseRadius; dx <= kCloseRadius; ++dx) {
                    int64_t xx = x + dx;
                    uint8_t s = (xx >= 0 && xx < rw) ? src[static_cast<size_t>(y * rw + xx)]
                                                     : uint8_t{0};
                    v = grow ? (v | s) : (v & s);
                }
                tmp[static_cast<size_t>(y * rw + x)] = v;
            }
        for (int64_t y = 0; y < rh; ++y)
            for (int64_t x = 0; x < rw; ++x) {
                uint8_t v = grow ? 0 : 1;
                for (int64_t dy = -kCloseRadius; dy <= kCloseRadius; ++dy) {
                    int64_t yy = y + dy;
                    uint8_t s = (yy >= 0 && yy < rh) ? tmp[static_cast<size_t>(yy * rw + x)]
                                                     : uint8_t{0};
                    v = grow ? (v | s) : (v & s);
                }
                dst[static_cast<size_t>(y * rw + x)] = v;
            }
        return dst;
    };
    std::vector<uint8_t> closed = cheb(cheb(on, true), false);
    // keep only originally-on pixels plus the bridging fill
    for (size_t i = 0; i < on.size(); ++i) on[i] = closed[i];

    // largest 4-connected component, tight bbox in image coordinates
    std::vector<uint8_t> seen(on.size(), 0);
    Rect best{};
    int64_t best_size = 0;
    for (int64_t start = 0; start < rw * rh; ++start) {
        if (!on[static_cast<size_t>(start)] || seen[static_cast<size_t>(start)]) continue;
        std::queue<int64_t> q;
        q.push(start);
        seen[static_cast<size_t>(start)] = 1;
        Rect box{start % rw, start / rw, start % rw + 1, start / rw + 1};
        int64_t size = 0;
        while (!q.empty()) {
            int64_t p = q.front();
            q.pop();
            ++size;
            int64_t y = p / rw, x = p % rw;
            box.x0 = std::min(box.x0, x);
            box.y0 = std::min(box.y0, y);
            box.x1 = std::max(box.x1, x + 1);
            box.y1 = std::max(box.y1, y + 1);
            const int64_t ny[4] = {y - 1, y + 1, y, y};
            const int64_t nx[4] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (ny[k] < 0 || ny[k] >= rh || nx[k] < 0 || nx[k] >= rw) continue;
                int64_t np = ny[k] * rw + nx[k];
                if (on[static_cast<size_t>(np)] && !seen[static_cast<size_t>(np)]) {
                    seen[static_cast<size_t>(np)] = 1;
                    q.push(np);
                }
            }
        }
        if (size > best_size) {
            best_size = size;
            best = box;
        }
    }
    if (best_size == 0) return std::nullopt;
    return Rect{best.x0 + r.x0, best.y0 + r.y0, best.x1 + r.x0, best.y1 + r.y0};
}

}  // namespace gf::percept
