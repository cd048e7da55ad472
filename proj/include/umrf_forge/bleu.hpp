#pragma once

// Sentence-level BLEU for scoring decoded UMRF text against ground truth.
// Single reference per candidate; default is the unsmoothed original
// definition (geometric mean of modified n-gram precisions times the
// brevity penalty). One repo convention on top of that: the n-gram order
// is capped at the candidate length, so identical short sequences score 1
// instead of degenerating to 0 for lack of 4-grams.

#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "umrf_forge/errors.hpp"

namespace umrf_forge {

struct TokenSequence {
  std::vector<std::string> tokens;

  bool empty() const { return tokens.empty(); }
  std::size_t size() const { return tokens.size(); }
};

// Whitespace split plus the JSON-structural characters { } [ ] : , " = ;
// as standalone tokens. Candidates here are mostly JSON text, where those
// characters carry real signal. No case folding.
inline TokenSequence tokenize(std::string_view text) {
  static constexpr std::string_view punct = "{}[]:,\"=;";
  TokenSequence seq;
  std::string current;
  auto flush = [&]() {
    if (!current.empty()) {
      seq.tokens.push_back(current);
      current.clear();
    }
  };
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      flush();
    } else if (punct.find(c) != std::string_view::npos) {
      flush();
      seq.tokens.push_back(std::string(1, c));
    } else {
      current.push_back(c);
    }
  }
  flush();
  return seq;
}

namespace detail {

// n-gram counts keyed by tokens joined with an unprintable separator.
inline std::map<std::string, int> ngram_counts(const std::vector<std::string>& tokens,
                                               std::size_t n) {
  std::map<std::string, int> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      if (j) key.push_back('\x1f');
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace detail

constexpr double kBleuSmoothingEpsilon = 1e-9;

inline double sentence_bleu(const TokenSequence& candidate, const TokenSequence& reference,
                            int max_n = 4, bool smoothing = false) {
  if (max_n < 1) throw Error(Errc::argument, "max_n must be >= 1");
  if (reference.empty()) throw Error(Errc::argument, "reference must not be empty");
  if (candidate.empty()) return 0.0;

  const std::size_t c_len = candidate.size();
  const std::size_t r_len = reference.size();
  const std::size_t effective_n = std::min<std::size_t>(static_cast<std::size_t>(max_n), c_len);

  double log_precision_sum = 0.0;
  for (std::size_t n = 1; n <= effective_n; ++n) {
    auto cand_counts = detail::ngram_counts(candidate.tokens, n);
    auto ref_counts = detail::ngram_counts(reference.tokens, n);
    long long total = 0;
    long long clipped = 0;
    for (const auto& [gram, count] : cand_counts) {
      total += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) clipped += std::min<long long>(count, it->second);
    }
    if (clipped == 0) {
      if (!smoothing) return 0.0;
      log_precision_sum += std::log(kBleuSmoothingEpsilon / static_cast<double>(total));
    } else {
      log_precision_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
    }
  }

  double brevity_penalty = 1.0;
  if (c_len < r_len)
    brevity_penalty = std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(c_len));
  double score = brevity_penalty *
                 std::exp(log_precision_sum / static_cast<double>(effective_n));
  if (score < 0.0) score = 0.0;
  if (score > 1.0) score = 1.0;
  return score;
}

inline double average_bleu(const std::vector<std::pair<std::string, std::string>>& pairs,
                           int max_n = 4, bool smoothing = false) {
  if (pairs.empty()) throw Error(Errc::argument, "average_bleu needs at least one pair");
  double sum = 0.0;
  for (const auto& [candidate, reference] : pairs)
    sum += sentence_bleu(tokenize(candidate), tokenize(reference), max_n, smoothing);
  return sum / static_cast<double>(pairs.size());
}

}  // namespace umrf_forge
