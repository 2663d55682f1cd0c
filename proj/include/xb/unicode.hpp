#pragma once

// UTF-8 decoding and simple case folding.
//
// Invalid bytes decode to U+DC80..U+DCFF (one code unit per byte) so that
// distinct byte strings always decode to distinct code point sequences.

#include <cstdint>
#include <string>
#include <string_view>

namespace xb::unicode {

inline std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    unsigned char c = s[i];
    std::size_t len = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if (c < 0x80) {
      out.push_back(c);
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2, cp = c & 0x1F, min = 0x80;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3, cp = c & 0x0F, min = 0x800;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4, cp = c & 0x07, min = 0x10000;
    }
    bool ok = len != 0 && i + len <= n;
    for (std::size_t k = 1; ok && k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (s[i + k] & 0x3F);
      }
    }
    ok = ok && cp >= min && cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
    if (ok) {
      out.push_back(cp);
      i += len;
    } else {
      out.push_back(0xDC00 + c);
      ++i;
    }
  }
  return out;
}

inline std::string encode_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) {
    if (cp >= 0xDC80 && cp <= 0xDCFF) {
      out.push_back(static_cast<char>(cp - 0xDC00));
    } else if (cp < 0x80) {
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
  return out;
}

/// Simple (one-to-one) default case folding. Covers Basic Latin, Latin-1,
/// Latin Extended-A, Latin Extended Additional, Greek, Cyrillic, Armenian
/// and the fullwidth Latin block; other code points fold to themselves.
/// Locale independent.
inline char32_t fold_code_point(char32_t c) {
  auto even_pair = [c](char32_t lo, char32_t hi) {
    return c >= lo && c <= hi && (c - lo) % 2 == 0;
  };
  if (c < 0x80) return (c >= 'A' && c <= 'Z') ? c + 32 : c;
  if (c == 0x00B5) return 0x03BC;
  if (c >= 0x00C0 && c <= 0x00DE && c != 0x00D7) return c + 32;
  if (c < 0x0100) return c;
  if (even_pair(0x0100, 0x012E)) return c + 1;
  if (even_pair(0x0132, 0x0136)) return c + 1;
  if (c >= 0x0139 && c <= 0x0147 && (c - 0x0139) % 2 == 0) return c + 1;
  if (even_pair(0x014A, 0x0176)) return c + 1;
  if (c == 0x0178) return 0x00FF;
  if (c >= 0x0179 && c <= 0x017D && (c - 0x0179) % 2 == 0) return c + 1;
  if (c == 0x017F) return 's';
  if (c == 0x0386) return 0x03AC;
  if (c >= 0x0388 && c <= 0x038A) return c + 37;
  if (c == 0x038C) return 0x03CC;
  if (c == 0x038E || c == 0x038F) return c + 63;
  if (c >= 0x0391 && c <= 0x03AB && c != 0x03A2) return c + 32;
  if (c == 0x03C2) return 0x03C3;
  if (c >= 0x0400 && c <= 0x040F) return c + 80;
  if (c >= 0x0410 && c <= 0x042F) return c + 32;
  if (even_pair(0x0460, 0x0480)) return c + 1;
  if (even_pair(0x048A, 0x04BE)) return c + 1;
  if (c == 0x04C0) return 0x04CF;
  if (c >= 0x04C1 && c <= 0x04CD && (c - 0x04C1) % 2 == 0) return c + 1;
  if (even_pair(0x04D0, 0x052E)) return c + 1;
  if (c >= 0x0531 && c <= 0x0556) return c + 48;
  if (even_pair(0x1E00, 0x1E94)) return c + 1;
  if (c == 0x1E9E) return 0x00DF;
  if (even_pair(0x1EA0, 0x1EFE)) return c + 1;
  if (c >= 0xFF21 && c <= 0xFF3A) return c + 32;
  return c;
}

inline std::u32string casefold(std::u32string_view text) {
  std::u32string out(text);
  for (auto& c : out) c = fold_code_point(c);
  return out;
}

inline std::string casefold(std::string_view utf8) {
  return encode_utf8(casefold(decode_utf8(utf8)));
}

}  // namespace xb::unicode
