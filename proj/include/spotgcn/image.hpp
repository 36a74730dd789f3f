#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>

#include "spotgcn/common.hpp"

namespace spotgcn {

// Grayscale frame, intensities in [0, 255] as floats.
struct Image {
  std::size_t width = 0, height = 0;
  std::vector<float> pixels;

  float at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  float& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }

  static Image zeros(std::size_t w, std::size_t h) {
    Image im;
    im.width = w;
    im.height = h;
    im.pixels.assign(w * h, 0.0f);
    return im;
  }
};

inline void write_pgm(const std::string& path, const Image& im) {
  FilePtr f = open_file(path, "wb");
  require(f != nullptr, Errc::io, "cannot open image for writing: " + path);
  std::fprintf(f.get(), "P5\n%zu %zu\n255\n", im.width, im.height);
  std::vector<unsigned char> row(im.width);
  for (std::size_t y = 0; y < im.height; ++y) {
    for (std::size_t x = 0; x < im.width; ++x) {
      const float v = std::min(std::max(im.at(x, y), 0.0f), 255.0f);
      row[x] = static_cast<unsigned char>(std::lround(v));
    }
    if (std::fwrite(row.data(), 1, row.size(), f.get()) != row.size()) raise(Errc::io, "short write");
  }
}

namespace detail {

inline int pgm_read_token(std::FILE* f) {
  int c = std::fgetc(f);
  for (;;) {
    while (c != EOF && std::isspace(c)) c = std::fgetc(f);
    if (c == '#') {
      while (c != EOF && c != '\n') c = std::fgetc(f);
      continue;
    }
    break;
  }
  if (c == EOF || !std::isdigit(c)) raise(Errc::data, "malformed PGM header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = std::fgetc(f);
  }
  return value;
}

}  // namespace detail

inline Image read_pgm(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  require(f != nullptr, Errc::io, "cannot open image: " + path);
  char m0 = static_cast<char>(std::fgetc(f.get()));
  char m1 = static_cast<char>(std::fgetc(f.get()));
  require(m0 == 'P' && m1 == '5', Errc::data, "not a binary PGM file: " + path);
  const int w = detail::pgm_read_token(f.get());
  const int h = detail::pgm_read_token(f.get());
  const int maxval = detail::pgm_read_token(f.get());
  require(w > 0 && h > 0 && maxval > 0 && maxval < 256, Errc::data, "unsupported PGM header: " + path);
  Image im = Image::zeros(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
  std::vector<unsigned char> row(im.width);
  for (std::size_t y = 0; y < im.height; ++y) {
    if (std::fread(row.data(), 1, row.size(), f.get()) != row.size())
      raise(Errc::data, "truncated PGM payload: " + path);
    for (std::size_t x = 0; x < im.width; ++x) im.at(x, y) = static_cast<float>(row[x]);
  }
  return im;
}

// 8-bit PNG ingestion; color inputs are converted with the usual luma
// weights 0.299 R + 0.587 G + 0.114 B.
inline Image read_png(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  require(f != nullptr, Errc::io, "cannot open image: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, Errc::io, "png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    raise(Errc::io, "png reader allocation failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<unsigned char> raw;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise(Errc::data, "malformed PNG file: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  const std::size_t channels = png_get_channels(png, info);
  raw.resize(rowbytes * h);
  row_ptrs.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = raw.data() + y * rowbytes;
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image im = Image::zeros(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const unsigned char* row = raw.data() + y * rowbytes;
    for (std::size_t x = 0; x < w; ++x) {
      if (channels >= 3) {
        const unsigned char* px = row + x * channels;
        im.at(x, y) = 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2];
      } else {
        im.at(x, y) = static_cast<float>(row[x * channels]);
      }
    }
  }
  return im;
}

inline Image read_image(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == "png") return read_png(path);
  if (ext == "pgm") return read_pgm(path);
  raise(Errc::data, "unsupported image format: " + path);
}

// Lists frame files in a directory ordered by the numeric index embedded
// in each filename; `stride` keeps every stride-th frame (frame-rate
// normalization for high-fps sources).
inline std::vector<std::string> list_frame_files(const std::string& dir, std::size_t stride = 1) {
  require(stride >= 1, Errc::invalid_argument, "stride must be >= 1");
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), Errc::io, "not a directory: " + dir);
  std::vector<std::pair<long long, std::string>> indexed;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::string ext = entry.path().extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
    if (ext != ".png" && ext != ".pgm") continue;
    long long index = -1;
    for (std::size_t i = 0; i < name.size(); ++i) {
      if (std::isdigit(static_cast<unsigned char>(name[i]))) {
        index = 0;
        while (i < name.size() && std::isdigit(static_cast<unsigned char>(name[i])))
          index = index * 10 + (name[i++] - '0');
        break;
      }
    }
    require(index >= 0, Errc::data, "frame filename has no numeric index: " + name);
    indexed.emplace_back(index, entry.path().string());
  }
  require(!indexed.empty(), Errc::data, "no frames found in: " + dir);
  std::sort(indexed.begin(), indexed.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < indexed.size(); i += stride) out.push_back(indexed[i].second);
  return out;
}

inline std::vector<Image> load_frame_dir(const std::string& dir, std::size_t stride = 1) {
  const auto files = list_frame_files(dir, stride);
  std::vector<Image> frames(files.size());
  parallel_for(files.size(), [&](std::size_t i) { frames[i] = read_image(files[i]); });
  for (const auto& im : frames)
    require(im.width == frames[0].width && im.height == frames[0].height, Errc::data,
            "inconsistent frame sizes in: " + dir);
  return frames;
}

}  // namespace spotgcn
