#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "sasg/common.hpp"

namespace sasg::io {

static_assert(std::endian::native == std::endian::little, "container formats assume a little-endian host");

/// Append-only little-endian byte buffer.
class Writer {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  template <typename Derived>
  void put_f32(const Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) put<float>(static_cast<float>(m.derived().data()[i]));
  }

  const std::vector<char>& bytes() const { return bytes_; }

  void write_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError(ParseError::Kind::Io, "cannot open for writing: " + path.string());
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw ParseError(ParseError::Kind::Io, "write failed: " + path.string());
  }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  static Reader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(ParseError::Kind::Io, "cannot open: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Reader(std::move(bytes));
  }

  void expect_magic(std::string_view m) {
    if (remaining() < m.size() || std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0)
      throw ParseError(ParseError::Kind::BadMagic, "bad magic: expected \"" + std::string(m) + "\"");
    pos_ += m.size();
  }

  template <typename T>
  T get() {
    require(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    require(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  template <typename Scalar>
  void get_f32(Scalar* out, std::size_t count) {
    require(count * sizeof(float));
    for (std::size_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, bytes_.data() + pos_, sizeof(float));
      pos_ += sizeof(float);
      out[i] = static_cast<Scalar>(f);
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void expect_end() const {
    if (remaining() != 0) throw ParseError(ParseError::Kind::ShapeMismatch, "trailing bytes after payload");
  }

 private:
  void require(std::size_t n) const {
    if (remaining() < n) throw ParseError(ParseError::Kind::Truncated, "truncated payload");
  }

  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace sasg::io
