#pragma once

// Little-endian binary packing for snapshots, checkpoints, and dataset files.
// Assumes a little-endian host (checked at startup by static_assert in
// checkpoint.cpp; all deployment targets here are x86-64).

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "emcom/errors.hpp"

namespace emcom {

class ByteWriter {
public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void i64(std::int64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void bytes(const std::string& s) { buf_.append(s); }

  const std::string& data() const { return buf_; }
  std::string take() { return std::move(buf_); }

private:
  void raw(const void* p, std::size_t n) {
    buf_.append(reinterpret_cast<const char*>(p), n);
  }
  std::string buf_;
};

class ByteReader {
public:
  explicit ByteReader(const std::string& data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(data_[need(1)]); }
  std::uint32_t u32() { std::uint32_t v; get(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; get(&v, 8); return v; }
  std::int32_t i32() { std::int32_t v; get(&v, 4); return v; }
  std::int64_t i64() { std::int64_t v; get(&v, 8); return v; }
  float f32() { float v; get(&v, 4); return v; }
  double f64() { double v; get(&v, 8); return v; }
  std::string str() {
    const std::uint64_t n = u64();
    const std::size_t at = need(n);
    return data_.substr(at, n);
  }

  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

private:
  std::size_t need(std::size_t n) {
    if (pos_ + n > data_.size()) throw ArtifactError("truncated binary payload");
    const std::size_t at = pos_;
    pos_ += n;
    return at;
  }
  void get(void* p, std::size_t n) { std::memcpy(p, data_.data() + need(n), n); }

  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace emcom
