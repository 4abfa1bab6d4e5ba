// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace lwssl {

// CRC-32 (IEEE 802.3 polynomial), table driven. Used by the FSEQ and LWCK
// container formats.
class Crc32 {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint32_t c = crc_;
    for (std::size_t i = 0; i < n; ++i) c = table()[(c ^ p[i]) & 0xffu] ^ (c >> 8);
    crc_ = c;
  }

  std::uint32_t value() const { return crc_ ^ 0xffffffffu; }

  static std::uint32_t of(const void* data, std::size_t n) {
    Crc32 c;
    c.update(data, n);
    return c.value();
  }

 private:
  static const std::array<std::uint32_t, 256>& table() {
    static const std::array<std::uint32_t, 256> t = [] {
      std::array<std::uint32_t, 256> tt{};
      for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : (c >> 1);
        tt[i] = c;
      }
      return tt;
    }();
    return t;
  }

  std::uint32_t crc_ = 0xffffffffu;
};

}  // namespace lwssl
