#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "codetations/text.hpp"

namespace codetations {

/// Unit-cost edit distance (insert, delete, substitute) over scalar values.
inline std::size_t levenshtein(TextView a, TextView b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return a.size();
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0u : 1u)});
      diag = up;
    }
  }
  return row[b.size()];
}

/// Normalized similarity from an edit distance and the two lengths.
inline double similarity_from_distance(std::size_t distance, std::size_t len_a, std::size_t len_b) {
  const std::size_t longest = std::max(len_a, len_b);
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(distance) / static_cast<double>(longest);
}

/// 1 - levenshtein(a, b) / max(|a|, |b|); 1.0 when both are empty.
inline double similarity(TextView a, TextView b) {
  return similarity_from_distance(levenshtein(a, b), a.size(), b.size());
}

inline double similarity(std::string_view a_utf8, std::string_view b_utf8) {
  return similarity(TextView(decode_utf8(a_utf8)), TextView(decode_utf8(b_utf8)));
}

}  // namespace codetations
