#pragma once

// UTF-8 <-> Unicode scalar value conversion. Every offset in the library is a
// count of scalar values, so documents are decoded once into std::u32string.

#include <cstdint>
#include <string>
#include <string_view>

#include "codetations/errors.hpp"

namespace codetations {

using Text = std::u32string;
using TextView = std::u32string_view;

inline Text decode_utf8(std::string_view bytes) {
  Text out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  auto cont = [&](std::size_t k) -> char32_t {
    if (i + k >= n) throw PreconditionError("invalid UTF-8: truncated sequence");
    auto c = static_cast<unsigned char>(bytes[i + k]);
    if ((c & 0xC0) != 0x80) throw PreconditionError("invalid UTF-8: bad continuation byte");
    return c & 0x3F;
  };
  while (i < n) {
    auto b0 = static_cast<unsigned char>(bytes[i]);
    char32_t cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = (char32_t(b0 & 0x1F) << 6) | cont(1);
      len = 2;
      if (cp < 0x80) throw PreconditionError("invalid UTF-8: overlong encoding");
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = (char32_t(b0 & 0x0F) << 12) | (cont(1) << 6) | cont(2);
      len = 3;
      if (cp < 0x800) throw PreconditionError("invalid UTF-8: overlong encoding");
      if (cp >= 0xD800 && cp <= 0xDFFF) throw PreconditionError("invalid UTF-8: surrogate");
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = (char32_t(b0 & 0x07) << 18) | (cont(1) << 12) | (cont(2) << 6) | cont(3);
      len = 4;
      if (cp < 0x10000 || cp > 0x10FFFF) throw PreconditionError("invalid UTF-8: out of range");
    } else {
      throw PreconditionError("invalid UTF-8: bad lead byte");
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode_utf8(TextView text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) append_utf8(out, cp);
  return out;
}

inline std::size_t scalar_length(std::string_view utf8) { return decode_utf8(utf8).size(); }

}  // namespace codetations
