// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#include "nmvs/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace nmvs {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("read_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: failed to decode " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize every input to 8-bit RGBA, then composite over white.
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_add_alpha(png, 0xFF, PNG_FILLER_AFTER);
  png_read_update_info(png, info);

  const int w = int(png_get_image_width(png, info));
  const int h = int(png_get_image_height(png, info));
  std::vector<png_byte> raw(std::size_t(w) * h * 4);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = raw.data() + std::size_t(y) * w * 4;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img;
  img.width = w;
  img.height = h;
  img.channels = 3;
  img.data.resize(3, Eigen::Index(w) * h);
  for (Eigen::Index p = 0; p < Eigen::Index(w) * h; ++p) {
    const float a = raw[p * 4 + 3] / 255.f;
    for (int c = 0; c < 3; ++c)
      img.data(c, p) = a * (raw[p * 4 + c] / 255.f) + (1.f - a);
  }
  return img;
}

void write_png(const std::string& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3 && image.channels != 4)
    throw std::invalid_argument("write_png: only 1-, 3- or 4-channel images");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("write_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: failed to encode " + path);
  }

  png_init_io(png, fp.get());
  const int color_type = image.channels == 3   ? PNG_COLOR_TYPE_RGB
                         : image.channels == 4 ? PNG_COLOR_TYPE_RGB_ALPHA
                                               : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, image.width, image.height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const int C = image.channels;
  std::vector<png_byte> row(std::size_t(image.width) * C);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < C; ++c) {
        const float v = std::min(1.f, std::max(0.f, image.at(x, y, c)));
        row[std::size_t(x) * C + c] = png_byte(std::lround(255.f * v));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_pfm(const std::string& path, const Eigen::MatrixXf& data, int width, int height) {
  if (data.size() != Eigen::Index(width) * height)
    throw std::invalid_argument("write_pfm: data size does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pfm: cannot open " + path);
  out << "Pf\n" << width << " " << height << "\n-1.0\n";
  std::vector<float> row(width);
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) row[x] = data(Eigen::Index(y) * width + x);
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(width) * 4);
  }
  if (!out) throw std::runtime_error("write_pfm: write failed for " + path);
}

Eigen::MatrixXf read_pfm(const std::string& path, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pfm: cannot open " + path);
  std::string magic;
  double scale = 0;
  in >> magic >> width >> height >> scale;
  if (magic != "Pf" || width <= 0 || height <= 0)
    throw std::runtime_error("read_pfm: not a grayscale PFM: " + path);
  if (scale > 0) throw std::runtime_error("read_pfm: big-endian PFM unsupported: " + path);
  in.get();  // single whitespace after the scale line

  Eigen::MatrixXf data(1, Eigen::Index(width) * height);
  std::vector<float> row(width);
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), std::streamsize(width) * 4);
    for (int x = 0; x < width; ++x) data(Eigen::Index(y) * width + x) = row[x];
  }
  if (!in) throw std::runtime_error("read_pfm: truncated file: " + path);
  return data;
}

}  // namespace nmvs
