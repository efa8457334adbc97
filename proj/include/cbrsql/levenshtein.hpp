// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <algorithm>
#include <cstddef>
#include <string_view>
#include <vector>

#include "cbrsql/util.hpp"

namespace cbrsql {

// Unit-cost edit distance (insert, delete, substitute), two-row DP.
// case_insensitive folds ASCII only; candidate values and question surface
// forms routinely differ in casing, so that is the re-ranking default.
inline std::size_t levenshtein(std::string_view a, std::string_view b,
                               bool case_insensitive = true) {
  if (a.size() > b.size()) std::swap(a, b);
  const std::size_t n = a.size(), m = b.size();
  if (n == 0) return m;
  std::vector<std::size_t> prev(n + 1), cur(n + 1);
  for (std::size_t i = 0; i <= n; ++i) prev[i] = i;
  for (std::size_t j = 1; j <= m; ++j) {
    cur[0] = j;
    const char bj = case_insensitive ? ascii_lower(b[j - 1]) : b[j - 1];
    for (std::size_t i = 1; i <= n; ++i) {
      const char ai = case_insensitive ? ascii_lower(a[i - 1]) : a[i - 1];
      const std::size_t sub = prev[i - 1] + (ai == bj ? 0 : 1);
      cur[i] = std::min({prev[i] + 1, cur[i - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

}  // namespace cbrsql
