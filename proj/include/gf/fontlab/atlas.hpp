#pragma once

// 8x8 monochrome glyph atlas for A-Z then 0-9. Bit 7 of each row byte is the
// leftmost column. Glyphs are left-aligned with tight column spans; the
// renderer derives per-glyph advances by scanning these bitmaps.
namespace gf::fontlab {

inline constexpr unsigned char kGlyphAtlas[36][8] = {
    {0x10, 0x30, 0x28, 0x28, 0x78, 0x44, 0x44, 0x84},  // A
    {0xf0, 0x88, 0x88, 0x80, 0xf8, 0x88, 0x88, 0xf0},  // B
    {0x78, 0x44, 0x84, 0x80, 0x80, 0x84, 0x44, 0x78},  // C
    {0xf0, 0x88, 0x84, 0x84, 0x84, 0x84, 0x88, 0xf0},  // D
    {0xf8, 0x80, 0x80, 0x80, 0xf0, 0x80, 0x80, 0xf8},  // E
    {0xf8, 0x80, 0x80, 0x80, 0xf0, 0x80, 0x80, 0x80},  // F
    {0x78, 0x4c, 0x84, 0x80, 0x9c, 0x84, 0x4c, 0x74},  // G
    {0x84, 0x84, 0x84, 0x84, 0xfc, 0x84, 0x84, 0x84},  // H
    {0x80, 0x80, 0x80, 0x80, 0x80, 0x80, 0x80, 0x80},  // I
    {0x10, 0x10, 0x10, 0x10, 0x10, 0x90, 0x90, 0x60},  // J
    {0x88, 0x90, 0xa0, 0xe0, 0xe0, 0xb0, 0x90, 0x88},  // K
    {0x80, 0x80, 0x80, 0x80, 0x80, 0x80, 0x80, 0xf8},  // L
    {0xc6, 0xc6, 0xc6, 0xaa, 0xaa, 0xaa, 0xba, 0x92},  // M
    {0xc4, 0xc4, 0xa4, 0xa4, 0x94, 0x94, 0x8c, 0x8c},  // N
    {0x38, 0x44, 0x82, 0x82, 0x82, 0x82, 0x44, 0x38},  // O
    {0xf0, 0x88, 0x88, 0x88, 0xf0, 0x80, 0x80, 0x80},  // P
    {0x38, 0x44, 0x82, 0x82, 0x82, 0x82, 0x44, 0x3e},  // Q
    {0xf0, 0x88, 0x88, 0x88, 0xf0, 0x98, 0x88, 0x88},  // R
    {0x38, 0x44, 0x40, 0x30, 0x0c, 0x04, 0x44, 0x38},  // S
    {0x7c, 0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x10},  // T
    {0x88, 0x88, 0x88, 0x88, 0x88, 0x88, 0x88, 0x70},  // U
    {0x84, 0x44, 0x44, 0x48, 0x28, 0x28, 0x30, 0x30},  // V
    {0x99, 0x9a, 0x5a, 0x5a, 0x66, 0x64, 0x64, 0x64},  // W
    {0x44, 0x48, 0x28, 0x30, 0x30, 0x28, 0x48, 0xc4},  // X
    {0x44, 0x44, 0x28, 0x38, 0x10, 0x10, 0x10, 0x10},  // Y
    {0xf8, 0x18, 0x10, 0x20, 0x20, 0x40, 0xc0, 0xf8},  // Z
    {0x70, 0xd8, 0x88, 0x88, 0x88, 0x88, 0xd8, 0x70},  // 0
    {0x60, 0xe0, 0x20, 0x20, 0x20, 0x20, 0x20, 0x20},  // 1
    {0x30, 0x48, 0x08, 0x08, 0x10, 0x20, 0x40, 0x78},  // 2
    {0x70, 0xc8, 0x08, 0x30, 0x08, 0x88, 0x88, 0x70},  // 3
    {0x08, 0x18, 0x28, 0x28, 0x48, 0x7c, 0x08, 0x08},  // 4
    {0x78, 0x40, 0x80, 0xf0, 0xc8, 0x08, 0x88, 0x70},  // 5
    {0x70, 0xc8, 0x88, 0xf0, 0x88, 0x88, 0x88, 0x70},  // 6
    {0xf8, 0x08, 0x10, 0x10, 0x20, 0x20, 0x40, 0x40},  // 7
    {0x70, 0x88, 0x88, 0x70, 0x88, 0x88, 0x88, 0x70},  // 8
    {0x70, 0x88, 0x88, 0x88, 0x78, 0x88, 0x98, 0x70},  // 9
};

}  // namespace gf::fontlab
