#include "gf/scenegen/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gf/hash.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gf::scenegen {

namespace {

using fontlab::FontStyle;
using fontlab::kCharset;
using fontlab::kCharsetSize;

constexpr int kMaxRegionTries = 500;
constexpr int kMaxSceneRestarts = 20;

std::pair<int64_t, int64_t> rect_w_bounds(int64_t w) {
    return {kMinRegionW, std::min(w - 2, std::max(kMinRegionW, 3 * w / 5))};
}
std::pair<int64_t, int64_t> rect_h_bounds(int64_t h) {
    return {kMinRegionH, std::max(kMinRegionH, h / 2)};
}

double luminance(RGB c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

RGB random_color(Rng& rng, float lo = 0.05f, float hi = 0.95f) {
    auto u = [&] { return lo + static_cast<float>(rng.uniform()) * (hi - lo); };
    return {u(), u(), u()};
}

}  // namespace

std::string random_text(Rng& rng, int len, const std::string& exclude) {
    std::string pool;
    for (int i = 0; i < kCharsetSize; ++i)
        if (exclude.find(kCharset[i]) == std::string::npos) pool.push_back(kCharset[i]);
    if (pool.empty()) throw CharsetExhausted("no characters left outside '" + exclude + "'");
    std::string out;
    for (int i = 0; i < len; ++i) out.push_back(pool[rng.uniform_int(0, (int)pool.size() - 1)]);
    return out;
}

// Longest text guaranteed to fit the rect in this style, probed with the
// widest glyph so any same-length replacement also fits.
int max_fit_len(const FontStyle& style, const Rect& r) {
    int len = 0;
    while (len < 8 &&
           fontlab::fit_scale(std::string(len + 1, 'W'), style, r.w(), r.h(), 1) > 0)
        ++len;
    return len;
}

// Scale-fit and centre `text` inside `rect`, composited over `canvas`.
fontlab::RenderedText render_into_rect(TensorF& canvas, const std::string& text,
                                       const FontStyle& style, RGB color, const Rect& r) {
    double s = fontlab::fit_scale(text, style, r.w(), r.h(), 1);
    if (s <= 0) throw PlacementFailure("'" + text + "' does not fit region");
    auto [ew, eh] = fontlab::render_extent(text, style, s);
    // render_extent pads both sides; the origin is the unpadded layout corner
    double pad = (ew - fontlab::text_layout_units(text) * s) / 2;
    double ox = r.x0 + (r.w() - ew) / 2 + pad;
    double oy = r.y0 + (r.h() - eh) / 2 + pad;
    auto rt = fontlab::render_text(text, style, color, canvas.dim(2), canvas.dim(1), ox, oy, s);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < canvas.dim(1); ++y)
            for (int64_t x = 0; x < canvas.dim(2); ++x) {
                float a = rt.coverage.at(y, x);
                if (a > 0)
                    canvas.at(c, y, x) = canvas.at(c, y, x) * (1 - a) + rt.pixels.at(c, y, x);
            }
    return rt;
}

RGB contrasting_color(Rng& rng, const TensorF& bg, const Rect& r) {
    double lum = 0;
    for (int64_t y = r.y0; y < r.y1; ++y)
        for (int64_t x = r.x0; x < r.x1; ++x)
            lum += luminance({bg.at(0, y, x), bg.at(1, y, x), bg.at(2, y, x)});
    lum /= static_cast<double>(r.area());
    for (int t = 0; t < 16; ++t) {
        RGB c = random_color(rng);
        if (std::fabs(luminance(c) - lum) >= 0.35) return c;
    }
    return lum > 0.5 ? RGB{0.02f, 0.02f, 0.02f} : RGB{0.98f, 0.98f, 0.98f};
}

namespace {

json rect_json(const Rect& r) { return {r.x0, r.y0, r.x1, r.y1}; }

template <typename T>
T field(const json& j, const char* name) {
    if (!j.contains(name)) throw DatasetError("manifest missing field '" + std::string(name) + "'");
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw DatasetError("manifest field '" + std::string(name) + "' has wrong type");
    }
}

}  // namespace

const char* background_name(Background b) {
    switch (b) {
        case Background::Flat: return "flat";
        case Background::LinearGradient: return "linear_gradient";
        case Background::RadialGradient: return "radial_gradient";
        case Background::BlobField: return "blob_field";
        case Background::StripeField: return "stripe_field";
    }
    return "?";
}

double dilated_iou(const Rect& a, const Rect& b, int64_t dil) {
    Rect da{a.x0 - dil, a.y0 - dil, a.x1 + dil, a.y1 + dil};
    Rect db{b.x0 - dil, b.y0 - dil, b.x1 + dil, b.y1 + dil};
    int64_t ix = std::max<int64_t>(0, std::min(da.x1, db.x1) - std::max(da.x0, db.x0));
    int64_t iy = std::max<int64_t>(0, std::min(da.y1, db.y1) - std::max(da.y0, db.y0));
    double inter = static_cast<double>(ix * iy);
    double uni = static_cast<double>(da.area() + db.area()) - inter;
    return uni > 0 ? inter / uni : 0.0;
}

int64_t min_region_area(int64_t w, int64_t h) {
    int64_t m = std::min(w, h);
    return static_cast<int64_t>(0.08 * static_cast<double>(m * m));
}

TensorF gen_background(uint64_t seed, int64_t w, int64_t h, Background recipe) {
    Rng rng(derive_seed(seed, 0x6267 /* 'bg' */ + static_cast<uint64_t>(recipe)));
    TensorF img({3, h, w});
    auto mix = [](RGB a, RGB b, double t) {
        float tf = static_cast<float>(std::clamp(t, 0.0, 1.0));
        return RGB{a.r + (b.r - a.r) * tf, a.g + (b.g - a.g) * tf, a.b + (b.b - a.b) * tf};
    };
    auto put = [&](int64_t y, int64_t x, RGB c) {
        img.at(0, y, x) = c.r;
        img.at(1, y, x) = c.g;
        img.at(2, y, x) = c.b;
    };
    switch (recipe) {
        case Background::Flat: {
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) put(y, x, {0.5f, 0.5f, 0.5f});
            break;
        }
        case Background::LinearGradient: {
            RGB c0 = random_color(rng), c1 = random_color(rng);
            double th = rng.uniform() * 2 * M_PI, cx = std::cos(th), cy = std::sin(th);
            double lo = std::min({0.0, cx * (w - 1)}) + std::min(0.0, cy * (h - 1));
            double hi = std::max({0.0, cx * (w - 1)}) + std::max(0.0, cy * (h - 1));
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x)
                    put(y, x, mix(c0, c1, (cx * x + cy * y - lo) / (hi - lo + 1e-12)));
            break;
        }
        case Background::RadialGradient: {
            RGB c0 = random_color(rng), c1 = random_color(rng);
            double px = rng.uniform() * (w - 1), py = rng.uniform() * (h - 1);
            double rmax = std::sqrt(static_cast<double>(w * w + h * h));
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x)
                    put(y, x, mix(c0, c1, std::hypot(x - px, y - py) / rmax * 1.6));
            break;
        }
        case Background::BlobField: {
            RGB base = random_color(rng, 0.2f, 0.8f);
            struct Blob {
                double x, y, s;
                RGB c;
                double amp;
            };
            std::vector<Blob> blobs;
            for (int i = 0; i < 4; ++i)
                blobs.push_back({rng.uniform() * w, rng.uniform() * h,
                                 4 + rng.uniform() * (std::min(w, h) / 3.0), random_color(rng),
                                 0.3 + rng.uniform() * 0.5});
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    RGB c = base;
                    for (const auto& b : blobs) {
                        double d2 = (x - b.x) * (x - b.x) + (y - b.y) * (y - b.y);
                        double g = b.amp * std::exp(-d2 / (2 * b.s * b.s));
                        c = mix(c, b.c, g);
                    }
                    put(y, x, c);
                }
            break;
        }
        case Background::StripeField: {
            RGB c0 = random_color(rng), c1 = random_color(rng);
            double th = rng.uniform() * M_PI, cx = std::cos(th), cy = std::sin(th);
            double period = 6 + rng.uniform() * 10;
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    int64_t band = static_cast<int64_t>(
                        std::floor((cx * x + cy * y) / period + 1e4));
                    put(y, x, band % 2 == 0 ? c0 : c1);
                }
            break;
        }
    }
    for (int64_t i = 0; i < img.numel(); ++i) img[i] = std::clamp(img[i], 0.f, 1.f);
    return img;
}

std::vector<Rect> propose_regions(uint64_t seed, int64_t w, int64_t h, int n) {
    if (n < 1 || n > 3) throw std::invalid_argument("propose_regions: n must be in [1,3]");
    auto [wmin, wmax] = rect_w_bounds(w);
    auto [hmin, hmax] = rect_h_bounds(h);
    int64_t amin = min_region_area(w, h);
    if (wmax < wmin || hmax < hmin)
        throw PlacementFailure("image " + std::to_string(w) + "x" + std::to_string(h) +
                               " too small for any region");
    Rng rng(derive_seed(seed, 0x7267 /* 'rg' */));
    for (int restart = 0; restart < kMaxSceneRestarts; ++restart) {
        std::vector<Rect> rects;
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
            bool placed = false;
            for (int t = 0; t < kMaxRegionTries && !placed; ++t) {
                int64_t rw = rng.uniform_int(wmin, wmax);
                int64_t rh = rng.uniform_int(hmin, hmax);
                if (rw * rh < amin) continue;
                if (w - 1 - rw < 1 || h - 1 - rh < 1) continue;
                int64_t x0 = rng.uniform_int(int64_t{1}, w - 1 - rw);
                int64_t y0 = rng.uniform_int(int64_t{1}, h - 1 - rh);
                Rect r{x0, y0, x0 + rw, y0 + rh};
                bool clash = false;
                for (const auto& q : rects)
                    if (dilated_iou(r, q) > 0) clash = true;
                if (!clash) {
                    rects.push_back(r);
                    placed = true;
                }
            }
            ok = placed;
        }
        if (ok) return rects;
    }
    throw PlacementFailure("cannot place " + std::to_string(n) + " regions in " +
                           std::to_string(w) + "x" + std::to_string(h));
}

std::string make_replacement_text(const std::string& original, Rng& rng) {
    if (original.empty())
        throw std::invalid_argument("make_replacement_text: empty original");
    int len = static_cast<int>(original.size()) + rng.uniform_int(-1, 1);
    len = std::max(1, len);
    return random_text(rng, len, original);
}

SceneSpec make_scene_spec(uint64_t seed, int64_t w, int64_t h, int n) {
    SceneSpec spec;
    spec.seed = seed;
    spec.width = w;
    spec.height = h;
    Rng rng(derive_seed(seed, 0x7370 /* 'sp' */));
    spec.background = static_cast<Background>(rng.uniform_int(0, kBackgroundCount - 1));
    auto rects = propose_regions(derive_seed(seed, 1), w, h, n);
    TensorF bg = gen_background(derive_seed(seed, 2), w, h, spec.background);
    const auto& styles = fontlab::list_styles();
    for (const auto& r : rects) {
        TextRegion reg;
        reg.rect = r;
        reg.style_id = rng.uniform_int(0, (int)styles.size() - 1);
        if (max_fit_len(styles[reg.style_id], r) < 1) reg.style_id = 0;
        int cap = max_fit_len(styles[reg.style_id], r);
        if (cap < 1) throw PlacementFailure("region too small for any text");
        // keep one character of headroom so a +1-length replacement also fits
        int len = rng.uniform_int(1, std::min(5, std::max(1, cap - 1)));
        reg.text = random_text(rng, len);
        reg.color = contrasting_color(rng, bg, r);
        spec.regions.push_back(reg);
    }
    return spec;
}

SamplePair build_pair(const SceneSpec& spec) {
    SamplePair out;
    out.spec = spec;
    TensorF bg = gen_background(derive_seed(spec.seed, 2), spec.width, spec.height,
                                spec.background);
    out.x_src = bg;
    out.x_gt = bg;
    out.region_mask = TensorU8({spec.height, spec.width});
    Rng rng(derive_seed(spec.seed, 0x7067 /* 'pg' */));
    const auto& styles = fontlab::list_styles();
    for (const auto& reg : spec.regions) {
        const FontStyle& st = styles[reg.style_id];
        int cap = max_fit_len(st, reg.rect);
        TextRegion src = reg, tgt = reg;
        // replacement: same length +/-1, disjoint characters, guaranteed fit
        std::string rep;
        for (int t = 0;; ++t) {
            rep = make_replacement_text(reg.text, rng);
            if ((int)rep.size() <= cap) break;
            if (t > 50) {
                rep.resize(cap);
                break;
            }
        }
        tgt.text = rep;
        // style exemplar disjoint from both texts
        std::string both = src.text + tgt.text;
        int glen = std::min(2, std::max(1, cap));
        std::string gl = random_text(rng, glen, both);
        src.glyph_text = tgt.glyph_text = gl;
        src.glyph_ref = tgt.glyph_ref =
            fontlab::render_glyph_patch(gl, st, reg.rect.w(), reg.rect.h());
        render_into_rect(out.x_src, src.text, st, reg.color, reg.rect);
        render_into_rect(out.x_gt, tgt.text, st, reg.color, reg.rect);
        for (int64_t y = reg.rect.y0; y < reg.rect.y1; ++y)
            for (int64_t x = reg.rect.x0; x < reg.rect.x1; ++x)
                out.region_mask.at(y, x) = 1;
        out.regions_src.push_back(std::move(src));
        out.regions_tgt.push_back(std::move(tgt));
    }
    quantize_u8_inplace(out.x_src);
    quantize_u8_inplace(out.x_gt);
    return out;
}

VerificationReport verify_pair(
    const SamplePair& pair, const std::function<std::string(const TensorF&)>& recognize,
    const std::function<std::vector<float>(const TensorF&)>& embed, double tau_style) {
    VerificationReport rep;
    rep.accepted = true;
    for (const auto& reg : pair.regions_tgt) {
        RegionReport rr;
        rr.expected_text = reg.text;
        TensorF crop = crop_image(pair.x_gt, reg.rect.x0, reg.rect.y0, reg.rect.x1, reg.rect.y1);
        rr.recognized_text = recognize(crop);
        rr.content_ok = rr.recognized_text == rr.expected_text;
        // compare the edited region's style against its content-free exemplar
        TensorF exemplar = reg.glyph_ref.pixels;
        auto ea = embed(crop);
        auto eb = embed(exemplar);
        double num = 0, na = 0, nb = 0;
        for (size_t i = 0; i < ea.size(); ++i) {
            num += static_cast<double>(ea[i]) * eb[i];
            na += static_cast<double>(ea[i]) * ea[i];
            nb += static_cast<double>(eb[i]) * eb[i];
        }
        rr.style_sim = num / (std::sqrt(na) * std::sqrt(nb) + 1e-12);
        if (!rr.content_ok || rr.style_sim < tau_style) rep.accepted = false;
        rep.regions.push_back(std::move(rr));
    }
    return rep;
}

namespace {
constexpr char kMagic[4] = {'G', 'F', 'D', 'S'};

json region_to_json(const TextRegion& r) {
    return {{"text", r.text},
            {"rect", rect_json(r.rect)},
            {"style_id", r.style_id},
            {"color", {r.color.r, r.color.g, r.color.b}},
            {"glyph_text", r.glyph_text}};
}

TextRegion region_from_json(const json& j) {
    TextRegion r;
    r.text = field<std::string>(j, "text");
    auto rect = field<std::vector<int64_t>>(j, "rect");
    if (rect.size() != 4) throw DatasetError("manifest field 'rect' must have 4 entries");
    r.rect = {rect[0], rect[1], rect[2], rect[3]};
    r.style_id = field<int>(j, "style_id");
    auto col = field<std::vector<float>>(j, "color");
    if (col.size() != 3) throw DatasetError("manifest field 'color' must have 3 entries");
    r.color = {col[0], col[1], col[2]};
    r.glyph_text = field<std::string>(j, "glyph_text");
    return r;
}
}  // namespace

void write_dataset(const std::vector<SamplePair>& pairs, const std::string& dir) {
    if (pairs.empty()) throw DatasetError("write_dataset: no pairs");
    fs::create_directories(dir);
    int64_t w = pairs[0].spec.width, h = pairs[0].spec.height;
    std::ofstream bin(fs::path(dir) / "images.bin", std::ios::binary);
    if (!bin) throw DatasetError("cannot open images.bin for writing in " + dir);
    bin.write(kMagic, 4);
    uint32_t hdr[3] = {static_cast<uint32_t>(pairs.size()), static_cast<uint32_t>(w),
                       static_cast<uint32_t>(h)};
    bin.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    json samples = json::array();
    for (const auto& p : pairs) {
        if (p.spec.width != w || p.spec.height != h)
            throw DatasetError("write_dataset: mixed image sizes");
        TensorU8 src = to_u8(p.x_src), gt = to_u8(p.x_gt);
        bin.write(reinterpret_cast<const char*>(src.data()), src.numel());
        bin.write(reinterpret_cast<const char*>(gt.data()), gt.numel());
        bin.write(reinterpret_cast<const char*>(p.region_mask.data()), p.region_mask.numel());
        json js = json::array(), jt = json::array();
        for (const auto& r : p.regions_src) js.push_back(region_to_json(r));
        for (const auto& r : p.regions_tgt) jt.push_back(region_to_json(r));
        samples.push_back({{"seed", p.spec.seed},
                           {"background", static_cast<int>(p.spec.background)},
                           {"regions_src", js},
                           {"regions_tgt", jt}});
    }
    json manifest = {{"schema_version", kSchemaVersion},
                     {"generator_version", kGeneratorVersion},
                     {"style_registry_hash", fontlab::style_registry_hash()},
                     {"width", w},
                     {"height", h},
                     {"count", pairs.size()},
                     {"samples", samples}};
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw DatasetError("cannot open manifest.json for writing in " + dir);
    mf << manifest.dump(1);
}

Dataset read_dataset(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw DatasetError("missing manifest.json in " + dir);
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw DatasetError(std::string("manifest parse error: ") + e.what());
    }
    if (field<int>(manifest, "schema_version") != kSchemaVersion)
        throw DatasetError("manifest field 'schema_version' unsupported");
    if (field<uint64_t>(manifest, "style_registry_hash") != fontlab::style_registry_hash())
        throw DatasetError("manifest field 'style_registry_hash' does not match this build");
    Dataset ds;
    ds.width = field<int64_t>(manifest, "width");
    ds.height = field<int64_t>(manifest, "height");
    size_t count = field<size_t>(manifest, "count");
    const json& samples = manifest.at("samples");
    if (samples.size() != count)
        throw DatasetError("manifest field 'count' disagrees with samples array");

    std::ifstream bin(fs::path(dir) / "images.bin", std::ios::binary);
    if (!bin) throw DatasetError("missing images.bin in " + dir);
    char magic[4];
    uint32_t hdr[3];
    bin.read(magic, 4);
    bin.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    if (!bin || std::memcmp(magic, kMagic, 4) != 0)
        throw DatasetError("images.bin has a bad header");
    if (hdr[0] != count || hdr[1] != ds.width || hdr[2] != ds.height)
        throw DatasetError("images.bin header disagrees with manifest");

    const auto& styles = fontlab::list_styles();
    for (size_t i = 0; i < count; ++i) {
        const json& s = samples.at(i);
        SamplePair p;
        p.spec.seed = field<uint64_t>(s, "seed");
        p.spec.width = ds.width;
        p.spec.height = ds.height;
        p.spec.background = static_cast<Background>(field<int>(s, "background"));
        TensorU8 src({3, ds.height, ds.width}), gt({3, ds.height, ds.width});
        p.region_mask = TensorU8({ds.height, ds.width});
        bin.read(reinterpret_cast<char*>(src.data()), src.numel());
        bin.read(reinterpret_cast<char*>(gt.data()), gt.numel());
        bin.read(reinterpret_cast<char*>(p.region_mask.data()), p.region_mask.numel());
        if (!bin) throw DatasetError("images.bin truncated at sample " + std::to_string(i));
        p.x_src = from_u8(src);
        p.x_gt = from_u8(gt);
        for (const auto& rj : s.at("regions_src")) p.regions_src.push_back(region_from_json(rj));
        for (const auto& rj : s.at("regions_tgt")) p.regions_tgt.push_back(region_from_json(rj));
        for (size_t k = 0; k < p.regions_tgt.size(); ++k) {
            auto& r = p.regions_tgt[k];
            r.glyph_ref = fontlab::render_glyph_patch(r.glyph_text, styles[r.style_id],
                                                      r.rect.w(), r.rect.h());
            p.regions_src[k].glyph_ref = r.glyph_ref;
        }
        p.spec.regions = p.regions_src;
        ds.pairs.push_back(std::move(p));
    }
    return ds;
}

}  // namespace gf::scenegen
