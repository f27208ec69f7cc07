#pragma once

#include <png.h>

#include <array>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "dbtanet/core/tensor.hpp"

namespace dbtanet {

struct ImageU8 {
  int h = 0;
  int w = 0;
  int channels = 0;  // 1 or 3
  std::vector<uint8_t> pixels;  // interleaved, row-major

  uint8_t at(int r, int c, int ch = 0) const {
    return pixels[(size_t(r) * w + c) * channels + ch];
  }
};

namespace detail {

struct PngReader {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriter {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

inline void open_reader(PngReader& r, const std::string& path) {
  r.fp = std::fopen(path.c_str(), "rb");
  if (!r.fp) throw ValidationError("cannot open PNG file: " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, r.fp) != 8 || png_sig_cmp(sig, 0, 8))
    throw ValidationError("not a PNG file: " + path);
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  if (!r.png || !r.info) throw TrainingError("libpng allocation failure");
  png_init_io(r.png, r.fp);
  png_set_sig_bytes(r.png, 8);
}

inline ImageU8 finish_read(PngReader& r, const std::string& path) {
  png_read_update_info(r.png, r.info);
  int w = static_cast<int>(png_get_image_width(r.png, r.info));
  int h = static_cast<int>(png_get_image_height(r.png, r.info));
  int ch = static_cast<int>(png_get_channels(r.png, r.info));
  size_t rowbytes = png_get_rowbytes(r.png, r.info);
  if (rowbytes != size_t(w) * ch)
    throw ValidationError("unexpected PNG row layout in " + path);
  ImageU8 img;
  img.h = h;
  img.w = w;
  img.channels = ch;
  img.pixels.resize(size_t(h) * rowbytes);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) rows[size_t(y)] = img.pixels.data() + size_t(y) * rowbytes;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

}  // namespace detail

// Reads any 8/16-bit PNG as 3-channel RGB (palette expanded, gray
// replicated, alpha stripped).
inline ImageU8 read_png_rgb(const std::string& path) {
  detail::PngReader r;
  detail::open_reader(r, path);
  if (setjmp(png_jmpbuf(r.png))) throw ValidationError("corrupt PNG file: " + path);
  png_read_info(r.png, r.info);
  png_byte color = png_get_color_type(r.png, r.info);
  png_byte depth = png_get_bit_depth(r.png, r.info);
  if (depth == 16) png_set_strip_16(r.png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
  if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(r.png);
  png_set_strip_alpha(r.png);
  ImageU8 img = detail::finish_read(r, path);
  if (img.channels != 3) throw ValidationError("expected RGB content in " + path);
  return img;
}

// Reads a single-channel PNG (grayscale or palette) as raw 8-bit indices.
inline ImageU8 read_png_index(const std::string& path) {
  detail::PngReader r;
  detail::open_reader(r, path);
  if (setjmp(png_jmpbuf(r.png))) throw ValidationError("corrupt PNG file: " + path);
  png_read_info(r.png, r.info);
  png_byte color = png_get_color_type(r.png, r.info);
  png_byte depth = png_get_bit_depth(r.png, r.info);
  if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_PALETTE)
    throw ValidationError("label file must be single-channel (gray or palette): " + path);
  if (depth == 16) png_set_strip_16(r.png);
  if (depth < 8) png_set_packing(r.png);
  ImageU8 img = detail::finish_read(r, path);
  if (img.channels != 1) throw ValidationError("expected single-channel content in " + path);
  return img;
}

// Palette entries of an indexed PNG; empty for non-palette files.
inline std::vector<std::array<uint8_t, 3>> read_png_plte(const std::string& path) {
  detail::PngReader r;
  detail::open_reader(r, path);
  if (setjmp(png_jmpbuf(r.png))) throw ValidationError("corrupt PNG file: " + path);
  png_read_info(r.png, r.info);
  std::vector<std::array<uint8_t, 3>> out;
  png_colorp plte = nullptr;
  int n = 0;
  if (png_get_PLTE(r.png, r.info, &plte, &n) == PNG_INFO_PLTE) {
    out.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out[size_t(i)] = {plte[i].red, plte[i].green, plte[i].blue};
  }
  return out;
}

namespace detail {

inline void write_png(const std::string& path, int w, int h, int color_type,
                      const uint8_t* data, size_t rowbytes,
                      const std::vector<std::array<uint8_t, 3>>* palette) {
  PngWriter wr;
  wr.fp = std::fopen(path.c_str(), "wb");
  if (!wr.fp) throw ValidationError("cannot write PNG file: " + path);
  wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  wr.info = png_create_info_struct(wr.png);
  if (!wr.png || !wr.info) throw TrainingError("libpng allocation failure");
  if (setjmp(png_jmpbuf(wr.png))) throw TrainingError("PNG write failure: " + path);
  png_init_io(wr.png, wr.fp);
  png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_color> plte;
  if (palette) {
    plte.resize(palette->size());
    for (size_t i = 0; i < palette->size(); ++i)
      plte[i] = {(*palette)[i][0], (*palette)[i][1], (*palette)[i][2]};
    png_set_PLTE(wr.png, wr.info, plte.data(), static_cast<int>(plte.size()));
  }
  png_write_info(wr.png, wr.info);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[size_t(y)] = const_cast<png_bytep>(data + size_t(y) * rowbytes);
  png_write_image(wr.png, rows.data());
  png_write_end(wr.png, nullptr);
}

}  // namespace detail

inline void write_png_rgb(const std::string& path, int w, int h,
                          const std::vector<uint8_t>& rgb) {
  if (rgb.size() != size_t(w) * h * 3) throw ValidationError("write_png_rgb: buffer size mismatch");
  detail::write_png(path, w, h, PNG_COLOR_TYPE_RGB, rgb.data(), size_t(w) * 3, nullptr);
}

inline void write_png_gray(const std::string& path, int w, int h,
                           const std::vector<uint8_t>& gray) {
  if (gray.size() != size_t(w) * h) throw ValidationError("write_png_gray: buffer size mismatch");
  detail::write_png(path, w, h, PNG_COLOR_TYPE_GRAY, gray.data(), size_t(w), nullptr);
}

inline void write_png_palette(const std::string& path, int w, int h,
                              const std::vector<uint8_t>& indices,
                              const std::vector<std::array<uint8_t, 3>>& palette) {
  if (indices.size() != size_t(w) * h)
    throw ValidationError("write_png_palette: buffer size mismatch");
  detail::write_png(path, w, h, PNG_COLOR_TYPE_PALETTE, indices.data(), size_t(w), &palette);
}

}  // namespace dbtanet
