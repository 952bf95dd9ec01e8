#pragma once

#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "vinpaint/data/flow_field.hpp"

namespace vinpaint {

// Interchange format: float32 magic 202021.25, int32 width, int32 height,
// then height*width interleaved float32 (u, v) pairs, row major, all
// little-endian. Values are stored as float32; FlowField keeps doubles, and
// since every float32 is exactly representable as a double, write-then-read
// reproduces a freshly read field bit for bit.

constexpr float kFloMagic = 202021.25f;

inline std::string write_flo_bytes(const FlowField& f) {
  std::string out;
  out.reserve(12 + f.uv.size() * 4);
  auto put = [&out](const void* p, size_t n) {
    out.append(static_cast<const char*>(p), n);
  };
  float magic = kFloMagic;
  int32_t w = f.width, h = f.height;
  put(&magic, 4);
  put(&w, 4);
  put(&h, 4);
  for (real d : f.uv) {
    float v = (float)d;
    put(&v, 4);
  }
  return out;
}

inline FlowField read_flo_bytes(const std::string& bytes) {
  if (bytes.size() < 12)
    throw std::runtime_error("flo: truncated header (" +
                             std::to_string(bytes.size()) + " bytes)");
  float magic;
  int32_t w, h;
  std::memcpy(&magic, bytes.data(), 4);
  std::memcpy(&w, bytes.data() + 4, 4);
  std::memcpy(&h, bytes.data() + 8, 4);
  if (magic != kFloMagic)
    throw std::runtime_error("flo: bad magic number");
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16)
    throw std::runtime_error("flo: implausible extent " + std::to_string(w) +
                             "x" + std::to_string(h));
  size_t need = 12 + (size_t)w * h * 2 * 4;
  if (bytes.size() < need)
    throw std::runtime_error("flo: truncated payload, need " +
                             std::to_string(need) + " bytes, have " +
                             std::to_string(bytes.size()));
  FlowField f = FlowField::zeros(h, w);
  const char* p = bytes.data() + 12;
  for (size_t i = 0; i < f.uv.size(); ++i) {
    float v;
    std::memcpy(&v, p + i * 4, 4);
    f.uv[i] = v;
  }
  return f;
}

inline void write_flo(const FlowField& f, const std::string& path) {
  std::string bytes = write_flo_bytes(f);
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("flo: cannot open " + path);
  size_t w = std::fwrite(bytes.data(), 1, bytes.size(), fp);
  std::fclose(fp);
  if (w != bytes.size()) throw std::runtime_error("flo: short write " + path);
}

inline FlowField read_flo(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("flo: cannot open " + path);
  std::fseek(fp, 0, SEEK_END);
  long sz = std::ftell(fp);
  std::fseek(fp, 0, SEEK_SET);
  std::string bytes((size_t)sz, '\0');
  size_t r = std::fread(bytes.data(), 1, bytes.size(), fp);
  std::fclose(fp);
  if (r != bytes.size()) throw std::runtime_error("flo: short read " + path);
  return read_flo_bytes(bytes);
}

}  // namespace vinpaint
