#include "tads/text.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <numeric>
#include <vector>

namespace tads {

std::u32string utf8_codepoints(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t extra = 0;
    char32_t cp = lead;
    if (lead >= 0xC2 && lead <= 0xDF) {
      extra = 1;
      cp = lead & 0x1F;
    } else if (lead >= 0xE0 && lead <= 0xEF) {
      extra = 2;
      cp = lead & 0x0F;
    } else if (lead >= 0xF0 && lead <= 0xF4) {
      extra = 3;
      cp = lead & 0x07;
    }
    bool valid = extra > 0 && i + extra < text.size();
    for (std::size_t k = 1; valid && k <= extra; ++k) {
      const auto cont = static_cast<unsigned char>(text[i + k]);
      if ((cont & 0xC0) != 0x80) {
        valid = false;
      } else {
        cp = (cp << 6) | (cont & 0x3F);
      }
    }
    if (valid) {
      out.push_back(cp);
      i += extra + 1;
    } else {
      out.push_back(lead);
      ++i;
    }
  }
  return out;
}

std::size_t char_length(std::string_view text) { return utf8_codepoints(text).size(); }

std::size_t token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + cost});
      diag = up;
    }
  }
  return row[b.size()];
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(utf8_codepoints(a), utf8_codepoints(b));
}

std::size_t levenshtein_bounded(std::u32string_view a, std::u32string_view b,
                                std::size_t max_distance) {
  const std::size_t cap = max_distance + 1;
  const std::size_t la = a.size();
  const std::size_t lb = b.size();
  if ((la > lb ? la - lb : lb - la) > max_distance) return cap;
  if (la == 0 || lb == 0) return std::min(std::max(la, lb), cap);

  constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max() / 2;
  std::vector<std::size_t> prev(lb + 1, kInf);
  std::vector<std::size_t> curr(lb + 1, kInf);
  for (std::size_t j = 0; j <= std::min(lb, max_distance); ++j) prev[j] = j;

  for (std::size_t i = 1; i <= la; ++i) {
    const std::size_t lo = i > max_distance ? i - max_distance : 0;
    const std::size_t hi = std::min(lb, i + max_distance);
    std::fill(curr.begin(), curr.end(), kInf);
    std::size_t row_min = kInf;
    if (lo == 0) {
      curr[0] = i;
      row_min = i;
    }
    for (std::size_t j = std::max<std::size_t>(lo, 1); j <= hi; ++j) {
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      const std::size_t value =
          std::min({prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + cost});
      curr[j] = value;
      row_min = std::min(row_min, value);
    }
    if (row_min > max_distance) return cap;
    std::swap(prev, curr);
  }
  return std::min(prev[lb], cap);
}

}  // namespace tads
