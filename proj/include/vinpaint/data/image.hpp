#pragma once

#include <cstdio>
#include <stdexcept>

#include "vinpaint/core/tensor.hpp"

namespace vinpaint {

// Interleaved image with values in [0,1]. channels is 1 (grey) or 3 (RGB).
struct Image {
  int height = 0, width = 0, channels = 1;
  std::vector<real> data;  // H*W*C, row major, channel innermost

  static Image zeros(int h, int w, int c) {
    Image im;
    im.height = h;
    im.width = w;
    im.channels = c;
    im.data.assign((size_t)h * w * c, 0.0);
    return im;
  }

  real& at(int y, int x, int c) {
    return data[((size_t)y * width + x) * channels + c];
  }
  real at(int y, int x, int c) const {
    return data[((size_t)y * width + x) * channels + c];
  }
};

// Planar [1,C,H,W] tensor from an image.
inline Tensor image_to_tensor(const Image& im) {
  std::vector<real> d((size_t)im.channels * im.height * im.width);
  int64_t plane = (int64_t)im.height * im.width;
  for (int c = 0; c < im.channels; ++c)
    for (int64_t i = 0; i < plane; ++i)
      d[c * plane + i] = im.data[i * im.channels + c];
  return Tensor::from_data({1, im.channels, im.height, im.width},
                           std::move(d));
}

inline Image tensor_to_image(const Tensor& t) {
  if (t.ndim() != 4 || t.dim(0) != 1)
    tensor_fail("tensor_to_image: expects [1,C,H,W]");
  Image im = Image::zeros(t.dim(2), t.dim(3), t.dim(1));
  int64_t plane = (int64_t)im.height * im.width;
  for (int c = 0; c < im.channels; ++c)
    for (int64_t i = 0; i < plane; ++i)
      im.data[i * im.channels + c] =
          std::clamp(t.values()[c * plane + i], 0.0, 1.0);
  return im;
}

// Binary PNM: P5 for single channel, P6 for three channels, 8 bits per
// sample. Quantization rounds to the nearest level.
inline void write_pnm(const Image& im, const std::string& path) {
  if (im.channels != 1 && im.channels != 3)
    throw std::runtime_error("pnm: unsupported channel count " +
                             std::to_string(im.channels));
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("pnm: cannot open " + path);
  std::fprintf(fp, "%s\n%d %d\n255\n", im.channels == 1 ? "P5" : "P6",
               im.width, im.height);
  std::vector<unsigned char> row((size_t)im.width * im.channels);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < im.channels; ++c) {
        real v = std::clamp(im.at(y, x, c), 0.0, 1.0);
        row[(size_t)x * im.channels + c] =
            (unsigned char)std::lround(v * 255.0);
      }
    if (std::fwrite(row.data(), 1, row.size(), fp) != row.size()) {
      std::fclose(fp);
      throw std::runtime_error("pnm: short write " + path);
    }
  }
  std::fclose(fp);
}

inline Image read_pnm(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("pnm: cannot open " + path);
  auto fail = [&](const std::string& msg) -> void {
    std::fclose(fp);
    throw std::runtime_error("pnm: " + msg + " in " + path);
  };
  char m0 = (char)std::fgetc(fp), m1 = (char)std::fgetc(fp);
  int channels = 0;
  if (m0 == 'P' && m1 == '5')
    channels = 1;
  else if (m0 == 'P' && m1 == '6')
    channels = 3;
  else
    fail("unsupported magic");
  // header tokens may be separated by whitespace and '#' comments
  auto next_int = [&]() -> int {
    int c;
    do {
      c = std::fgetc(fp);
      if (c == '#')
        while (c != '\n' && c != EOF) c = std::fgetc(fp);
    } while (c == ' ' || c == '\t' || c == '\n' || c == '\r');
    int val = 0;
    bool any = false;
    while (c >= '0' && c <= '9') {
      val = val * 10 + (c - '0');
      any = true;
      c = std::fgetc(fp);
    }
    if (!any) fail("malformed header");
    return val;
  };
  int w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0) fail("bad extent");
  if (maxval != 255) fail("unsupported maxval " + std::to_string(maxval));
  Image im = Image::zeros(h, w, channels);
  std::vector<unsigned char> buf((size_t)w * h * channels);
  if (std::fread(buf.data(), 1, buf.size(), fp) != buf.size())
    fail("truncated pixel data");
  std::fclose(fp);
  for (size_t i = 0; i < buf.size(); ++i) im.data[i] = buf[i] / 255.0;
  return im;
}

}  // namespace vinpaint
