#pragma once

// Brute-force BLEU oracle, independent of the library implementation: no
// hash maps, direct n-gram enumeration, precisions combined by pow() on a
// running product instead of summed logs. Same documented convention: the
// n-gram order is capped at the candidate length.

#include <cmath>
#include <string>
#include <vector>

namespace oracle {

inline bool same_gram(const std::vector<std::string>& a, std::size_t i,
                      const std::vector<std::string>& b, std::size_t j, std::size_t n) {
  for (std::size_t t = 0; t < n; ++t)
    if (a[i + t] != b[j + t]) return false;
  return true;
}

inline double bleu(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                   int max_n = 4, bool smoothing = false) {
  if (cand.empty()) return 0.0;
  const std::size_t effective = std::min<std::size_t>(max_n, cand.size());
  double product = 1.0;
  for (std::size_t n = 1; n <= effective; ++n) {
    const std::size_t total = cand.size() - n + 1;
    double clipped = 0;
    for (std::size_t i = 0; i + n <= cand.size(); ++i) {
      bool seen_before = false;
      for (std::size_t j = 0; j < i; ++j)
        if (same_gram(cand, j, cand, i, n)) seen_before = true;
      if (seen_before) continue;
      std::size_t cand_count = 0;
      for (std::size_t j = 0; j + n <= cand.size(); ++j)
        if (same_gram(cand, j, cand, i, n)) ++cand_count;
      std::size_t ref_count = 0;
      for (std::size_t j = 0; j + n <= ref.size(); ++j)
        if (same_gram(ref, j, cand, i, n)) ++ref_count;
      clipped += static_cast<double>(std::min(cand_count, ref_count));
    }
    if (clipped == 0) {
      if (!smoothing) return 0.0;
      product *= 1e-9 / static_cast<double>(total);
    } else {
      product *= clipped / static_cast<double>(total);
    }
  }
  double bp = 1.0;
  if (cand.size() < ref.size())
    bp = std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size()));
  return bp * std::pow(product, 1.0 / static_cast<double>(effective));
}

}  // namespace oracle
