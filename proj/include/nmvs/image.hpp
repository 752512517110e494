// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <Eigen/Dense>

namespace nmvs {

/// Dense float image in [0,1]; data is (channels x width*height) with
/// row-major pixel index p = y*width + x.
struct Image {
  int width = 0, height = 0, channels = 0;
  Eigen::MatrixXf data;

  float at(int x, int y, int c) const { return data(c, Eigen::Index(y) * width + x); }
  float& at(int x, int y, int c) { return data(c, Eigen::Index(y) * width + x); }
};

/// Reads an 8/16-bit PNG as RGB in [0,1]; grayscale is expanded, alpha is
/// composited over a white background.
Image read_png(const std::string& path);

/// Writes an RGB (3-channel) or grayscale (1-channel) 8-bit PNG with values
/// quantized as round(255*v).
void write_png(const std::string& path, const Image& image);

/// Portable Float Map, grayscale variant: "Pf\n<w> <h>\n-1.0\n" followed by
/// little-endian float32 rows, bottom-to-top. Round-trips bit-exactly.
void write_pfm(const std::string& path, const Eigen::MatrixXf& data, int width, int height);
Eigen::MatrixXf read_pfm(const std::string& path, int& width, int& height);

}  // namespace nmvs
