#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "gf/fontlab/atlas.hpp"
#include "gf/fontlab/fontlab.hpp"

using namespace gf;
using namespace gf::fontlab;

namespace {

// Independent atlas scan: tight column span of one glyph, bypassing
// glyph_col_span so the two implementations check each other.
std::pair<int, int> scan_span(int g) {
    int c0 = 8, c1 = 0;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c)
            if ((kGlyphAtlas[g][r] >> (7 - c)) & 1) {
                c0 = std::min(c0, c);
                c1 = std::max(c1, c + 1);
            }
    return {c0, c1};
}

int64_t mask_area(const TensorU8& m) {
    int64_t n = 0;
    for (int64_t i = 0; i < m.numel(); ++i) n += m[i];
    return n;
}

int64_t mask_xor(const TensorU8& a, const TensorU8& b) {
    int64_t n = 0;
    for (int64_t i = 0; i < a.numel(); ++i) n += a[i] != b[i];
    return n;
}

}  // namespace

TEST_CASE("charset lookup") {
    CHECK(charset_index('A') == 0);
    CHECK(charset_index('Z') == 25);
    CHECK(charset_index('0') == 26);
    CHECK(charset_index('9') == 35);
    CHECK(charset_index('a') == -1);
    CHECK(charset_index(' ') == -1);
    CHECK(text_in_charset("HELLO123"));
    CHECK_FALSE(text_in_charset("Hello"));
}

TEST_CASE("empty text renders an empty result") {
    auto r = render_text("", list_styles()[0], {1, 1, 1}, 64, 32, 10, 10, 2.0);
    CHECK(r.x0 == 0);
    CHECK(r.y0 == 0);
    CHECK(r.x1 == 0);
    CHECK(r.y1 == 0);
    CHECK(mask_area(r.ink_mask) == 0);
    for (int64_t i = 0; i < r.coverage.numel(); ++i) CHECK(r.coverage[i] == 0.0f);
}

TEST_CASE("unsupported characters throw") {
    CHECK_THROWS_AS(render_text("a", list_styles()[0], {1, 1, 1}, 64, 32, 8, 8, 2.0),
                    UnsupportedCharacter);
    CHECK_THROWS_AS(render_text("A B", list_styles()[0], {1, 1, 1}, 64, 32, 8, 8, 2.0),
                    UnsupportedCharacter);
}

TEST_CASE("rendering is deterministic") {
    auto a = render_text("QUARTZ7", list_styles()[6], {0.9f, 0.2f, 0.1f}, 160, 48, 20, 10, 3.0);
    auto b = render_text("QUARTZ7", list_styles()[6], {0.9f, 0.2f, 0.1f}, 160, 48, 20, 10, 3.0);
    CHECK(a.pixels == b.pixels);
    CHECK(a.coverage == b.coverage);
    CHECK(a.ink_mask == b.ink_mask);
    CHECK(a.x0 == b.x0);
    CHECK(a.y1 == b.y1);
}

TEST_CASE("advance width matches an independent atlas scan") {
    // With no shear/dilation at an integer scale and integer origin, the mask
    // width of "AB" must equal (span(A) + 1 + span(B)) * scale exactly.
    auto [a0, a1] = scan_span(charset_index('A'));
    auto [b0, b1] = scan_span(charset_index('B'));
    const double s = 3.0;
    auto r = render_text("AB", list_styles()[0], {1, 1, 1}, 120, 40, 12, 6, s);
    CHECK(r.x1 - r.x0 == static_cast<int64_t>(((a1 - a0) + 1 + (b1 - b0)) * s));
    CHECK(r.y1 - r.y0 == static_cast<int64_t>(8 * s));
    CHECK(r.x0 == 12);
    CHECK(r.y0 == 6);
    CHECK(text_layout_units("AB") == doctest::Approx((a1 - a0) + 1 + (b1 - b0)));
}

TEST_CASE("stroke dilation strictly grows ink and stays a superset") {
    FontStyle plain = list_styles()[0];
    FontStyle fat = plain;
    fat.stroke_dilation = 1;
    auto r0 = render_text("OK", plain, {1, 1, 1}, 96, 48, 16, 12, 3.0);
    auto r1 = render_text("OK", fat, {1, 1, 1}, 96, 48, 16, 12, 3.0);
    for (int64_t i = 0; i < r0.ink_mask.numel(); ++i)
        if (r0.ink_mask[i]) CHECK(r1.ink_mask[i]);
    CHECK(mask_area(r1.ink_mask) > mask_area(r0.ink_mask));

    // Each dilated pixel has an original ink pixel within Chebyshev radius 1
    // plus the half-pixel sampling slack.
    int64_t H = r0.ink_mask.dim(0), W = r0.ink_mask.dim(1);
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            if (!r1.ink_mask.at(y, x)) continue;
            bool near = false;
            for (int64_t dy = -2; dy <= 2 && !near; ++dy)
                for (int64_t dx = -2; dx <= 2 && !near; ++dx) {
                    int64_t yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < H && xx >= 0 && xx < W && r0.ink_mask.at(yy, xx))
                        near = true;
                }
            CHECK(near);
        }
}

TEST_CASE("outline is a subset of the filled mask with a hollow interior") {
    FontStyle filled = list_styles()[0];
    filled.stroke_dilation = 1;
    FontStyle outline = filled;
    outline.outline_only = true;
    auto rf = render_text("O", filled, {1, 1, 1}, 64, 48, 12, 8, 4.0);
    auto ro = render_text("O", outline, {1, 1, 1}, 64, 48, 12, 8, 4.0);
    for (int64_t i = 0; i < ro.ink_mask.numel(); ++i)
        if (ro.ink_mask[i]) CHECK(rf.ink_mask[i]);
    CHECK(mask_area(ro.ink_mask) < mask_area(rf.ink_mask));
    CHECK(mask_area(ro.ink_mask) > 0);
}

TEST_CASE("shear moves the top and bottom rows apart horizontally") {
    FontStyle sheared = list_styles()[0];
    sheared.slant_shear = 0.4;
    auto r = render_text("H", sheared, {1, 1, 1}, 80, 48, 30, 8, 4.0);
    int64_t H = r.ink_mask.dim(0), W = r.ink_mask.dim(1);
    auto row_min = [&](int64_t y) {
        for (int64_t x = 0; x < W; ++x)
            if (r.ink_mask.at(y, x)) return x;
        return int64_t{-1};
    };
    int64_t top = row_min(r.y0);
    int64_t bot = row_min(r.y1 - 1);
    REQUIRE(top >= 0);
    REQUIRE(bot >= 0);
    // positive shear shifts ink right above the centre, left below it
    CHECK(top - bot >= static_cast<int64_t>(0.4 * 4.0 * 8) - 2);
}

TEST_CASE("ink mask lies inside the reported bbox and bbox is tight") {
    for (const auto& st : list_styles()) {
        auto r = render_text("AXE", st, {1, 1, 1}, 160, 64, 30, 16, 3.0);
        REQUIRE(mask_area(r.ink_mask) > 0);
        bool edge_x0 = false, edge_x1 = false, edge_y0 = false, edge_y1 = false;
        for (int64_t y = 0; y < r.ink_mask.dim(0); ++y)
            for (int64_t x = 0; x < r.ink_mask.dim(1); ++x) {
                if (!r.ink_mask.at(y, x)) continue;
                CHECK(x >= r.x0);
                CHECK(x < r.x1);
                CHECK(y >= r.y0);
                CHECK(y < r.y1);
                edge_x0 |= x == r.x0;
                edge_x1 |= x == r.x1 - 1;
                edge_y0 |= y == r.y0;
                edge_y1 |= y == r.y1 - 1;
            }
        CHECK(edge_x0);
        CHECK(edge_x1);
        CHECK(edge_y0);
        CHECK(edge_y1);
    }
}

TEST_CASE("coverage is the compositing alpha for premultiplied pixels") {
    RGB col{0.8f, 0.4f, 0.2f};
    auto r = render_text("G5", list_styles()[4], col, 96, 48, 16, 10, 3.0);
    bool saw_partial = false;
    for (int64_t y = 0; y < r.coverage.dim(0); ++y)
        for (int64_t x = 0; x < r.coverage.dim(1); ++x) {
            float a = r.coverage.at(y, x);
            CHECK(a >= 0.0f);
            CHECK(a <= 1.0f);
            if (a > 0.0f && a < 1.0f) saw_partial = true;
            CHECK(r.pixels.at(0, y, x) == doctest::Approx(col.r * a));
            CHECK(r.pixels.at(1, y, x) == doctest::Approx(col.g * a));
            CHECK(r.pixels.at(2, y, x) == doctest::Approx(col.b * a));
        }
    CHECK(saw_partial);  // supersampling must produce soft edges somewhere
}

TEST_CASE("out-of-canvas ink is rejected, in-canvas placement is accepted") {
    CHECK_THROWS_AS(render_text("WWWW", list_styles()[0], {1, 1, 1}, 40, 32, 2, 8, 2.0),
                    OutOfCanvas);
    CHECK_THROWS_AS(render_text("A", list_styles()[0], {1, 1, 1}, 64, 20, 8, 15, 2.0),
                    OutOfCanvas);
    CHECK_NOTHROW(render_text("A", list_styles()[0], {1, 1, 1}, 64, 32, 8, 6, 2.0));
}

TEST_CASE("fit_scale is maximal and respects margins") {
    const std::string text = "SCALE";
    for (int sid : {0, 2, 7}) {
        const auto& st = list_styles()[sid];
        double s = fit_scale(text, st, 128, 40, 2);
        REQUIRE(s > 0);
        auto [w, h] = render_extent(text, st, s);
        CHECK(w <= 128 - 4);
        CHECK(h <= 40 - 4);
        auto [w2, h2] = render_extent(text, st, s * 1.05);
        CHECK((w2 > 128 - 4 || h2 > 40 - 4));
    }
    CHECK(fit_scale("WWWWWWWWWW", list_styles()[0], 20, 12, 1) == 0.0);
}

TEST_CASE("render_glyph_patch centres and fits, or throws") {
    auto r = render_glyph_patch("HB", list_styles()[1], 64, 24);
    REQUIRE(mask_area(r.ink_mask) > 0);
    double cx = (r.x0 + r.x1) / 2.0, cy = (r.y0 + r.y1) / 2.0;
    CHECK(std::fabs(cx - 32) <= 2.0);
    CHECK(std::fabs(cy - 12) <= 2.0);
    double occ = static_cast<double>(mask_area(r.ink_mask)) / (64.0 * 24.0);
    CHECK(occ > 0.02);
    CHECK(occ < 0.9);
    CHECK_THROWS_AS(render_glyph_patch("WWWWWWWWWWWW", list_styles()[7], 16, 16), GlyphTooLarge);
}

TEST_CASE("style registry is stable and separable") {
    const auto& styles = list_styles();
    REQUIRE(styles.size() >= 8);
    for (size_t i = 0; i < styles.size(); ++i) CHECK(styles[i].style_id == static_cast<int>(i));
    CHECK(style_registry_hash() == style_registry_hash());
    CHECK(style_registry_json().find("stroke_dilation") != std::string::npos);

    // Every pair of styles must disagree on at least 2% of probe pixels.
    const std::string probe = "HAMBURG01";
    std::vector<TensorU8> masks;
    for (const auto& st : styles) masks.push_back(render_glyph_patch(probe, st, 96, 32).ink_mask);
    int64_t total = masks[0].numel();
    for (size_t i = 0; i < masks.size(); ++i)
        for (size_t j = i + 1; j < masks.size(); ++j) {
            double frac = static_cast<double>(mask_xor(masks[i], masks[j])) / total;
            INFO("styles ", i, " vs ", j, " differ on ", frac);
            CHECK(frac >= 0.02);
        }
}

TEST_CASE("every charset glyph renders non-empty with a sane span") {
    for (int g = 0; g < kCharsetSize; ++g) {
        auto [c0, c1] = glyph_col_span(g);
        CHECK(c0 >= 0);
        CHECK(c1 > c0);
        CHECK(c1 <= 8);
        auto r = render_text(std::string(1, kCharset[g]), list_styles()[0], {1, 1, 1}, 48, 32, 8,
                             8, 2.0);
        CHECK(mask_area(r.ink_mask) > 0);
    }
}
