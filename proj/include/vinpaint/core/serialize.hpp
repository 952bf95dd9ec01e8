#pragma once

#include <cstdio>
#include <cstring>
#include <map>
#include <stdexcept>

#include "vinpaint/core/adam.hpp"
#include "vinpaint/core/hash.hpp"
#include "vinpaint/core/tensor.hpp"

namespace vinpaint {

// Versioned binary container of named tensors and byte blobs, with a
// trailing content hash. Entries are stored sorted by name, so two archives
// with equal content are byte-identical regardless of insertion order.
class Archive {
 public:
  struct Entry {
    int kind = 0;  // 0 tensor, 1 blob
    Shape shape;
    std::vector<real> data;
    std::string blob;
  };

  static constexpr uint32_t kVersion = 1;

  void put_tensor(const std::string& name, const Shape& shape,
                  const std::vector<real>& data) {
    if (shape_numel(shape) != (int64_t)data.size())
      throw std::runtime_error("archive: shape/data mismatch for '" + name +
                               "'");
    Entry e;
    e.kind = 0;
    e.shape = shape;
    e.data = data;
    entries_[name] = std::move(e);
  }

  void put_scalar(const std::string& name, real v) {
    put_tensor(name, {1}, {v});
  }

  void put_blob(const std::string& name, const std::string& bytes) {
    Entry e;
    e.kind = 1;
    e.blob = bytes;
    entries_[name] = std::move(e);
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  const Entry& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
      throw std::runtime_error("archive: missing entry '" + name + "'");
    return it->second;
  }

  const std::vector<real>& tensor_data(const std::string& name) const {
    const Entry& e = at(name);
    if (e.kind != 0)
      throw std::runtime_error("archive: '" + name + "' is not a tensor");
    return e.data;
  }

  real scalar(const std::string& name) const {
    const auto& d = tensor_data(name);
    if (d.size() != 1)
      throw std::runtime_error("archive: '" + name + "' is not a scalar");
    return d[0];
  }

  const std::string& blob(const std::string& name) const {
    const Entry& e = at(name);
    if (e.kind != 1)
      throw std::runtime_error("archive: '" + name + "' is not a blob");
    return e.blob;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
  }

  std::string to_bytes() const {
    std::string buf;
    auto raw = [&buf](const void* p, size_t n) {
      buf.append(static_cast<const char*>(p), n);
    };
    auto u32 = [&](uint32_t v) { raw(&v, 4); };
    auto u64 = [&](uint64_t v) { raw(&v, 8); };
    raw("VINPARCH", 8);
    u32(kVersion);
    u64(entries_.size());
    for (const auto& [name, e] : entries_) {
      u32((uint32_t)name.size());
      raw(name.data(), name.size());
      buf.push_back((char)e.kind);
      if (e.kind == 0) {
        u32((uint32_t)e.shape.size());
        for (int d : e.shape) {
          int32_t v = d;
          raw(&v, 4);
        }
        raw(e.data.data(), e.data.size() * sizeof(real));
      } else {
        u64(e.blob.size());
        raw(e.blob.data(), e.blob.size());
      }
    }
    u64(fnv1a64(buf.data(), buf.size()));
    return buf;
  }

  static Archive from_bytes(const std::string& buf) {
    Archive a;
    size_t pos = 0;
    auto need = [&](size_t n) {
      if (pos + n > buf.size())
        throw std::runtime_error("archive: truncated file");
    };
    auto raw = [&](void* p, size_t n) {
      need(n);
      std::memcpy(p, buf.data() + pos, n);
      pos += n;
    };
    auto u32 = [&]() {
      uint32_t v;
      raw(&v, 4);
      return v;
    };
    auto u64 = [&]() {
      uint64_t v;
      raw(&v, 8);
      return v;
    };
    if (buf.size() < 16 + 8)
      throw std::runtime_error("archive: file too small");
    uint64_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
    if (fnv1a64(buf.data(), buf.size() - 8) != stored)
      throw std::runtime_error("archive: checksum mismatch");
    char magic[8];
    raw(magic, 8);
    if (std::memcmp(magic, "VINPARCH", 8) != 0)
      throw std::runtime_error("archive: bad magic");
    uint32_t ver = u32();
    if (ver != kVersion)
      throw std::runtime_error("archive: unsupported version " +
                               std::to_string(ver));
    uint64_t count = u64();
    for (uint64_t i = 0; i < count; ++i) {
      uint32_t nl = u32();
      need(nl);
      std::string name(buf.data() + pos, nl);
      pos += nl;
      need(1);
      int kind = (unsigned char)buf[pos++];
      Entry e;
      e.kind = kind;
      if (kind == 0) {
        uint32_t nd = u32();
        e.shape.resize(nd);
        for (uint32_t d = 0; d < nd; ++d) {
          int32_t v;
          raw(&v, 4);
          e.shape[d] = v;
        }
        int64_t n = shape_numel(e.shape);
        e.data.resize(n);
        raw(e.data.data(), (size_t)n * sizeof(real));
      } else if (kind == 1) {
        uint64_t sz = u64();
        need(sz);
        e.blob.assign(buf.data() + pos, sz);
        pos += sz;
      } else {
        throw std::runtime_error("archive: unknown entry kind");
      }
      a.entries_[name] = std::move(e);
    }
    return a;
  }

  void save(const std::string& path) const {
    std::string bytes = to_bytes();
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("archive: cannot open " + path);
    size_t w = std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (w != bytes.size())
      throw std::runtime_error("archive: short write to " + path);
  }

  static Archive load(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("archive: cannot open " + path);
    std::fseek(f, 0, SEEK_END);
    long sz = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::string buf((size_t)sz, '\0');
    size_t r = std::fread(buf.data(), 1, buf.size(), f);
    std::fclose(f);
    if (r != buf.size())
      throw std::runtime_error("archive: short read from " + path);
    return from_bytes(buf);
  }

 private:
  std::map<std::string, Entry> entries_;
};

inline void archive_put_params(Archive& a,
                               const std::vector<Parameter>& params,
                               const std::string& prefix = "param/") {
  for (const Parameter& p : params)
    a.put_tensor(prefix + p.name, p.tensor.shape(), p.tensor.values());
}

inline void archive_get_params(const Archive& a,
                               std::vector<Parameter>& params,
                               const std::string& prefix = "param/") {
  for (Parameter& p : params) {
    const Archive::Entry& e = a.at(prefix + p.name);
    if (e.shape != p.tensor.shape())
      throw std::runtime_error("archive: shape mismatch for '" + p.name +
                               "': file " + shape_str(e.shape) + " vs model " +
                               shape_str(p.tensor.shape()));
    p.tensor.values_mut() = e.data;
  }
}

inline void archive_put_adam(Archive& a, const AdamState& st,
                             const std::string& prefix = "adam/") {
  a.put_scalar(prefix + "step", (real)st.step);
  for (const auto& [name, m] : st.m)
    a.put_tensor(prefix + "m/" + name, {(int)m.size()}, m);
  for (const auto& [name, v] : st.v)
    a.put_tensor(prefix + "v/" + name, {(int)v.size()}, v);
}

inline void archive_get_adam(const Archive& a, AdamState& st,
                             const std::vector<Parameter>& params,
                             const std::string& prefix = "adam/") {
  st.step = (int64_t)a.scalar(prefix + "step");
  st.m.clear();
  st.v.clear();
  for (const Parameter& p : params) {
    st.m[p.name] = a.tensor_data(prefix + "m/" + p.name);
    st.v[p.name] = a.tensor_data(prefix + "v/" + p.name);
  }
}

}  // namespace vinpaint
