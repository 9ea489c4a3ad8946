#include "gf/condassembly/condassembly.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace gf::condassembly {

namespace {

// Composite premultiplied rendered text over a canvas.
void composite(TensorF& canvas, const fontlab::RenderedText& rt) {
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < canvas.dim(1); ++y)
            for (int64_t x = 0; x < canvas.dim(2); ++x) {
                float a = rt.coverage.at(y, x);
                if (a > 0)
                    canvas.at(c, y, x) = canvas.at(c, y, x) * (1 - a) + rt.pixels.at(c, y, x);
            }
}

// Scale-fit `text` centred inside the rect, rendered onto the full canvas.
void render_centered(TensorF& canvas, const std::string& text, const fontlab::FontStyle& style,
                     RGB color, const scenegen::Rect& r) {
    double s = fontlab::fit_scale(text, style, r.w(), r.h(), 1);
    if (s <= 0)
        throw TextOverflow("'" + text + "' does not fit " + std::to_string(r.w()) + "x" +
                           std::to_string(r.h()));
    auto [ew, eh] = fontlab::render_extent(text, style, s);
    double pad = (ew - fontlab::text_layout_units(text) * s) / 2;
    composite(canvas, fontlab::render_text(text, style, color, canvas.dim(2), canvas.dim(1),
                                           r.x0 + (r.w() - ew) / 2 + pad,
                                           r.y0 + (r.h() - eh) / 2 + pad, s));
}

}  // namespace

void validate_request(const EditRequest& req) {
    if (req.x_src.shape().size() != 3 || req.x_src.dim(0) != 3)
        throw std::invalid_argument("EditRequest: x_src must be (3,H,W)");
    if (req.edits.empty()) throw std::invalid_argument("EditRequest: edits must be nonempty");
    int64_t h = req.x_src.dim(1), w = req.x_src.dim(2);
    for (size_t i = 0; i < req.edits.size(); ++i) {
        const Edit& e = req.edits[i];
        if (e.text.empty() || !fontlab::text_in_charset(e.text))
            throw std::invalid_argument("EditRequest: edit " + std::to_string(i) +
                                        " text not in charset: '" + e.text + "'");
        const auto& r = e.rect;
        if (r.x0 < 0 || r.y0 < 0 || r.x1 > w || r.y1 > h || r.w() <= 0 || r.h() <= 0)
            throw std::invalid_argument("EditRequest: edit " + std::to_string(i) +
                                        " rect out of bounds");
        if (e.glyph_patch.shape().size() != 3 || e.glyph_patch.dim(0) != 3 ||
            e.glyph_patch.dim(1) < 1 || e.glyph_patch.dim(2) < 1)
            throw std::invalid_argument("EditRequest: edit " + std::to_string(i) +
                                        " glyph patch must be (3,h,w)");
        for (size_t j = 0; j < i; ++j)
            if (scenegen::dilated_iou(r, req.edits[j].rect, 0) > 0)
                throw std::invalid_argument("EditRequest: edits " + std::to_string(j) + " and " +
                                            std::to_string(i) + " overlap");
    }
}

TensorF build_reference_poster(const TensorF& x_src, const std::vector<Edit>& edits) {
    TensorF out = x_src;
    const RGB fill{kBlankValue, kBlankValue, kBlankValue};
    const RGB ink{0.f, 0.f, 0.f};  // fixed contrast against the mid-gray fill
    const fontlab::FontStyle content_font{};  // base atlas, no transforms
    for (const auto& e : edits) {
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = e.rect.y0; y < e.rect.y1; ++y)
                for (int64_t x = e.rect.x0; x < e.rect.x1; ++x)
                    out.at(c, y, x) = c == 0 ? fill.r : (c == 1 ? fill.g : fill.b);
        render_centered(out, e.text, content_font, ink, e.rect);
    }
    return out;
}

TensorF build_glyph_map(int64_t width, int64_t height, const std::vector<Edit>& edits) {
    TensorF canvas = make_image(height, width, {kBlankValue, kBlankValue, kBlankValue});
    for (const auto& e : edits) {
        int64_t gh = e.glyph_patch.dim(1), gw = e.glyph_patch.dim(2);
        double s = std::min(static_cast<double>(e.rect.w()) / gw,
                            static_cast<double>(e.rect.h()) / gh);
        int64_t tw = std::max<int64_t>(1, std::llround(gw * s));
        int64_t th = std::max<int64_t>(1, std::llround(gh * s));
        tw = std::min(tw, e.rect.w());
        th = std::min(th, e.rect.h());
        TensorF patch = (tw == gw && th == gh) ? e.glyph_patch
                                               : resize_bilinear(e.glyph_patch, th, tw);
        int64_t ox = e.rect.x0 + (e.rect.w() - tw) / 2;
        int64_t oy = e.rect.y0 + (e.rect.h() - th) / 2;
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < th; ++y)
                for (int64_t x = 0; x < tw; ++x)
                    canvas.at(c, oy + y, ox + x) = patch.at(c, y, x);
    }
    return canvas;
}

void build_region_mask(int64_t width, int64_t height, const std::vector<Edit>& edits,
                       int64_t dilation, int64_t latent_f, TensorU8& mask_out,
                       TensorF& mask_latent_out) {
    if (width % latent_f != 0 || height % latent_f != 0)
        throw std::invalid_argument("build_region_mask: size not divisible by latent factor");
    mask_out = TensorU8({height, width});
    for (const auto& e : edits)
        for (int64_t y = std::max<int64_t>(0, e.rect.y0 - dilation);
             y < std::min(height, e.rect.y1 + dilation); ++y)
            for (int64_t x = std::max<int64_t>(0, e.rect.x0 - dilation);
                 x < std::min(width, e.rect.x1 + dilation); ++x)
                mask_out.at(y, x) = 1;
    mask_latent_out = TensorF({height / latent_f, width / latent_f});
    float inv = 1.0f / static_cast<float>(latent_f * latent_f);
    for (int64_t by = 0; by < height / latent_f; ++by)
        for (int64_t bx = 0; bx < width / latent_f; ++bx) {
            int sum = 0;
            for (int64_t y = 0; y < latent_f; ++y)
                for (int64_t x = 0; x < latent_f; ++x)
                    sum += mask_out.at(by * latent_f + y, bx * latent_f + x);
            mask_latent_out.at(by, bx) = static_cast<float>(sum) * inv;
        }
}

ConditionBundle assemble(const EditRequest& req, int64_t latent_f, int64_t dilation) {
    validate_request(req);
    ConditionBundle b;
    b.x_ref = build_reference_poster(req.x_src, req.edits);
    b.x_glyph = build_glyph_map(req.x_src.dim(2), req.x_src.dim(1), req.edits);
    build_region_mask(req.x_src.dim(2), req.x_src.dim(1), req.edits, dilation, latent_f, b.mask,
                      b.mask_latent);
    return b;
}

EditRequest request_from_pair(const scenegen::SamplePair& pair) {
    EditRequest req;
    req.x_src = pair.x_src;
    for (const auto& reg : pair.regions_tgt) {
        Edit e;
        e.text = reg.text;
        e.rect = reg.rect;
        // style exemplar composited over the glyph-map blank value
        const auto& rt = reg.glyph_ref;
        e.glyph_patch = make_image(rt.coverage.dim(0), rt.coverage.dim(1),
                                   {kBlankValue, kBlankValue, kBlankValue});
        composite(e.glyph_patch, rt);
        if (!req.prompt.empty()) req.prompt += ' ';
        req.prompt += reg.text;
        req.edits.push_back(std::move(e));
    }
    return req;
}

void save_image_u8(const TensorF& image, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_image_u8: cannot open " + path);
    TensorU8 u = to_u8(image);
    const char magic[4] = {'G', 'F', 'I', 'M'};
    uint32_t hdr[3] = {static_cast<uint32_t>(image.dim(0)), static_cast<uint32_t>(image.dim(1)),
                       static_cast<uint32_t>(image.dim(2))};
    f.write(magic, 4);
    f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    f.write(reinterpret_cast<const char*>(u.data()), u.numel());
    if (!f) throw std::runtime_error("save_image_u8: short write to " + path);
}

TensorF load_image_u8(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_image_u8: cannot open " + path);
    char magic[4];
    uint32_t hdr[3];
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    if (!f || std::memcmp(magic, "GFIM", 4) != 0)
        throw std::runtime_error("load_image_u8: bad header in " + path);
    TensorU8 u({hdr[0], hdr[1], hdr[2]});
    f.read(reinterpret_cast<char*>(u.data()), u.numel());
    if (!f) throw std::runtime_error("load_image_u8: truncated " + path);
    return from_u8(u);
}

EditRequest load_request(const std::string& json_path) {
    std::ifstream f(json_path);
    if (!f) throw std::runtime_error("load_request: cannot open " + json_path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("load_request: parse error: " + std::string(e.what()));
    }
    fs::path base = fs::path(json_path).parent_path();
    auto resolve = [&](const std::string& p) {
        fs::path q(p);
        return q.is_absolute() ? q.string() : (base / q).string();
    };
    EditRequest req;
    if (!j.contains("image")) throw std::runtime_error("load_request: missing field 'image'");
    req.x_src = load_image_u8(resolve(j.at("image").get<std::string>()));
    req.prompt = j.value("prompt", "");
    if (!j.contains("edits")) throw std::runtime_error("load_request: missing field 'edits'");
    for (const auto& ej : j.at("edits")) {
        Edit e;
        e.text = ej.at("text").get<std::string>();
        auto r = ej.at("rect").get<std::vector<int64_t>>();
        if (r.size() != 4) throw std::runtime_error("load_request: rect must have 4 entries");
        e.rect = {r[0], r[1], r[2], r[3]};
        e.glyph_patch = load_image_u8(resolve(ej.at("glyph_image").get<std::string>()));
        req.edits.push_back(std::move(e));
    }
    validate_request(req);
    return req;
}

}  // namespace gf::condassembly
