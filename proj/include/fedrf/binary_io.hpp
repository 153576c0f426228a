// Copyright 2026 The fedrf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Little-endian byte buffers shared by the checkpoint, adapter and dataset
// file formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace fedrf {

namespace detail {

template <typename U>
U byteswap_if_big(U v) {
  if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
    U out{};
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(U); ++i) dst[i] = src[sizeof(U) - 1 - i];
    return out;
  } else {
    return v;
  }
}

template <typename T>
using uint_of = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                std::conditional_t<sizeof(T) == 2, std::uint16_t,
                std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;

}  // namespace detail

class ByteWriter {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    using U = detail::uint_of<T>;
    const U le = detail::byteswap_if_big(std::bit_cast<U>(v));
    const auto* p = reinterpret_cast<const char*>(&le);
    buf_.insert(buf_.end(), p, p + sizeof(U));
  }

  void put_bytes(std::string_view bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  void put_f32(std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* p = reinterpret_cast<const char*>(values.data());
      buf_.insert(buf_.end(), p, p + values.size_bytes());
    } else {
      for (const float v : values) put(v);
    }
  }

  const std::vector<char>& bytes() const noexcept { return buf_; }
  std::size_t size() const noexcept { return buf_.size(); }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    using U = detail::uint_of<T>;
    U raw{};
    std::memcpy(&raw, take(sizeof(U)), sizeof(U));
    return std::bit_cast<T>(detail::byteswap_if_big(raw));
  }

  std::string get_bytes(std::size_t n) {
    const char* p = take(n);
    return std::string(p, n);
  }

  void get_f32(std::span<float> out) {
    const char* p = take(out.size_bytes());
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), p, out.size_bytes());
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t raw{};
        std::memcpy(&raw, p + 4 * i, 4);
        out[i] = std::bit_cast<float>(detail::byteswap_if_big(raw));
      }
    }
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }
  const std::string& source() const noexcept { return source_; }

 private:
  const char* take(std::size_t n) {
    if (n > remaining())
      throw std::runtime_error(source_ + ": truncated (needed " + std::to_string(n) +
                               " bytes at offset " + std::to_string(pos_) + ", " +
                               std::to_string(remaining()) + " left)");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::vector<char> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<char> data(size);
  in.seekg(0);
  if (size && !in.read(data.data(), static_cast<std::streamsize>(size)))
    throw std::runtime_error("failed reading '" + path + "'");
  return data;
}

inline void write_file_bytes(const std::string& path, const std::vector<char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace fedrf
