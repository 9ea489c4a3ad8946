#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gf/condassembly/condassembly.hpp"

using namespace gf;
using namespace gf::condassembly;

namespace {

Edit make_edit(const std::string& text, scenegen::Rect r) {
    Edit e;
    e.text = text;
    e.rect = r;
    e.glyph_patch = make_image(8, 16, {0.2f, 0.7f, 0.3f});
    return e;
}

EditRequest simple_request() {
    EditRequest req;
    req.x_src = make_image(64, 64, {0.9f, 0.8f, 0.2f});
    req.edits.push_back(make_edit("HI", {8, 8, 40, 24}));
    return req;
}

}  // namespace

TEST_CASE("request validation names the violated invariant") {
    auto check_throws_with = [](EditRequest req, const std::string& needle) {
        try {
            validate_request(req);
            FAIL("expected invalid_argument for ", needle);
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    CHECK_NOTHROW(validate_request(simple_request()));

    auto r1 = simple_request();
    r1.edits.clear();
    check_throws_with(r1, "nonempty");

    auto r2 = simple_request();
    r2.edits[0].text = "hi";
    check_throws_with(r2, "charset");

    auto r3 = simple_request();
    r3.edits[0].rect = {8, 8, 70, 24};
    check_throws_with(r3, "out of bounds");

    auto r4 = simple_request();
    r4.edits.push_back(make_edit("NO", {30, 10, 60, 30}));  // overlaps first rect
    check_throws_with(r4, "overlap");
}

TEST_CASE("reference poster differs from source only inside edit rects") {
    auto req = simple_request();
    auto x_ref = build_reference_poster(req.x_src, req.edits);
    const auto& r = req.edits[0].rect;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 64; ++y)
            for (int64_t x = 0; x < 64; ++x) {
                bool inside = x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1;
                if (!inside) CHECK(x_ref.at(c, y, x) == req.x_src.at(c, y, x));
            }
    // something got rendered: interior no longer uniform fill
    bool non_fill = false;
    for (int64_t y = r.y0; y < r.y1 && !non_fill; ++y)
        for (int64_t x = r.x0; x < r.x1 && !non_fill; ++x)
            if (x_ref.at(0, y, x) != kBlankValue) non_fill = true;
    CHECK(non_fill);
}

TEST_CASE("reference poster ignores the glyph patch entirely") {
    auto req = simple_request();
    auto a = build_reference_poster(req.x_src, req.edits);
    req.edits[0].glyph_patch = make_image(12, 12, {0.99f, 0.01f, 0.5f});
    auto b = build_reference_poster(req.x_src, req.edits);
    CHECK(a == b);
}

TEST_CASE("reference text fits its rect with margin, against the renderer oracle") {
    std::vector<Edit> edits{make_edit("WXYZ", {10, 10, 34, 20})};  // 24x10 rect
    auto x_src = make_image(48, 48, {0.1f, 0.1f, 0.1f});
    auto x_ref = build_reference_poster(x_src, edits);
    // ink (black on mid-gray fill) stays >= 1 px inside the rect
    const auto& r = edits[0].rect;
    for (int64_t y = 0; y < 48; ++y)
        for (int64_t x = 0; x < 48; ++x) {
            bool interior = x >= r.x0 + 1 && x < r.x1 - 1 && y >= r.y0 + 1 && y < r.y1 - 1;
            if (!interior && x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1)
                CHECK(x_ref.at(0, y, x) == kBlankValue);  // border row/col untouched
        }
    CHECK_THROWS_AS(
        build_reference_poster(x_src, {make_edit("WWWWWWWWWW", {10, 10, 24, 19})}),
        TextOverflow);
}

TEST_CASE("glyph map is blank outside rects and independent of source/text") {
    auto req = simple_request();
    auto g = build_glyph_map(64, 64, req.edits);
    const auto& r = req.edits[0].rect;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 64; ++y)
            for (int64_t x = 0; x < 64; ++x)
                if (!(x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1))
                    CHECK(g.at(c, y, x) == kBlankValue);

    auto req2 = simple_request();
    req2.x_src = make_image(64, 64, {0.0f, 0.0f, 0.0f});
    req2.edits[0].text = "ZZ";
    CHECK(build_glyph_map(64, 64, req2.edits) == g);
}

TEST_CASE("identical glyph patches in same-size rects place identically") {
    std::vector<Edit> edits{make_edit("AA", {4, 4, 28, 16}), make_edit("BB", {32, 40, 56, 52})};
    edits[1].glyph_patch = edits[0].glyph_patch;
    auto g = build_glyph_map(64, 64, edits);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 12; ++y)
            for (int64_t x = 0; x < 24; ++x)
                CHECK(g.at(c, 4 + y, 4 + x) == g.at(c, 40 + y, 32 + x));
}

TEST_CASE("3:1 glyph patch into a 30x20 rect becomes 30x10, vertically centred") {
    std::vector<Edit> edits{make_edit("A", {10, 10, 40, 30})};
    edits[0].glyph_patch = make_image(10, 30, {1.f, 0.f, 0.f});  // aspect 3:1
    auto g = build_glyph_map(64, 64, edits);
    // placed rows: rect height 20, patch height 10, offset (20-10)/2 = 5
    for (int64_t y = 0; y < 64; ++y)
        for (int64_t x = 0; x < 64; ++x) {
            bool placed = x >= 10 && x < 40 && y >= 15 && y < 25;
            CHECK(g.at(0, y, x) == (placed ? 1.f : kBlankValue));
        }
}

TEST_CASE("region mask and its exact latent block-average") {
    std::vector<Edit> edits{make_edit("A", {0, 0, 64, 64})};
    TensorU8 m;
    TensorF ml;
    build_region_mask(64, 64, edits, 1, 4, m, ml);
    for (int64_t i = 0; i < m.numel(); ++i) CHECK(m[i] == 1);
    for (int64_t i = 0; i < ml.numel(); ++i) CHECK(ml[i] == 1.0f);

    // rect aligned to 4-blocks, no dilation -> binary latent mask
    std::vector<Edit> aligned{make_edit("A", {8, 8, 24, 16})};
    build_region_mask(64, 64, aligned, 0, 4, m, ml);
    for (int64_t i = 0; i < ml.numel(); ++i) CHECK((ml[i] == 0.0f || ml[i] == 1.0f));

    // rect covering exactly half of one 4x4 block -> that cell = 0.5
    std::vector<Edit> half{make_edit("A", {8, 8, 24, 18})};
    build_region_mask(64, 64, half, 0, 4, m, ml);
    CHECK(ml.at(4, 2) == 0.5f);  // rows 16..17 of block rows 16..19

    // brute-force block average equals the reported latent mask everywhere
    std::vector<Edit> odd{make_edit("A", {3, 5, 31, 27}), make_edit("B", {40, 40, 61, 57})};
    build_region_mask(64, 64, odd, 2, 4, m, ml);
    for (int64_t by = 0; by < 16; ++by)
        for (int64_t bx = 0; bx < 16; ++bx) {
            double s = 0;
            for (int64_t y = 0; y < 4; ++y)
                for (int64_t x = 0; x < 4; ++x) s += m.at(by * 4 + y, bx * 4 + x);
            CHECK(ml.at(by, bx) == doctest::Approx(s / 16.0).epsilon(1e-12));
        }
}

TEST_CASE("assemble on a generated pair keeps X_ref/X_src outside-mask identity") {
    auto pair = scenegen::build_pair(555, 64, 64, 2);
    auto req = request_from_pair(pair);
    auto b = assemble(req, 4);
    CHECK(b.x_ref.shape() == pair.x_src.shape());
    CHECK(b.mask_latent.shape() == std::vector<int64_t>{16, 16});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 64; ++y)
            for (int64_t x = 0; x < 64; ++x)
                if (!b.mask.at(y, x)) {
                    CHECK(b.x_ref.at(c, y, x) == pair.x_src.at(c, y, x));
                    CHECK(b.x_glyph.at(c, y, x) == kBlankValue);
                }
}

TEST_CASE("edit request JSON round-trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "gf_req_test";
    fs::create_directories(dir);

    auto pair = scenegen::build_pair(808, 64, 64, 1);
    auto req = request_from_pair(pair);
    save_image_u8(req.x_src, (dir / "src.img").string());
    save_image_u8(req.edits[0].glyph_patch, (dir / "glyph0.img").string());
    std::ofstream j(dir / "request.json");
    j << "{\"image\": \"src.img\", \"prompt\": \"demo\", \"edits\": [{\"text\": \""
      << req.edits[0].text << "\", \"rect\": [" << req.edits[0].rect.x0 << ","
      << req.edits[0].rect.y0 << "," << req.edits[0].rect.x1 << "," << req.edits[0].rect.y1
      << "], \"glyph_image\": \"glyph0.img\"}]}";
    j.close();

    auto loaded = load_request((dir / "request.json").string());
    CHECK(loaded.prompt == "demo");
    CHECK(loaded.edits[0].text == req.edits[0].text);
    // u8 quantization round-trips exactly because sources are grid-aligned
    CHECK(loaded.x_src == req.x_src);
    auto b1 = assemble(req, 4);
    auto b2 = assemble(loaded, 4);
    CHECK(b1.x_ref == b2.x_ref);
    CHECK(b1.mask == b2.mask);

    std::ofstream bad(dir / "bad.json");
    bad << "{\"prompt\": \"no image\"}";
    bad.close();
    CHECK_THROWS_WITH_AS(load_request((dir / "bad.json").string()),
                         doctest::Contains("image"), std::runtime_error);
    fs::remove_all(dir);
}
