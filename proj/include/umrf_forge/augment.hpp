#pragma once

// EDA-style text perturbations (synonym replacement, random insertion,
// random swap, random deletion) and compositional policies, used to probe
// how fragile a prompt is. Marker substrings are atomic: an op may move or
// drop a whole marker but can never cut one open. All randomness flows
// through a caller-seeded mt19937_64, so every perturbation is replayable.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "umrf_forge/command.hpp"
#include "umrf_forge/detail/sha256.hpp"
#include "umrf_forge/errors.hpp"
#include "umrf_forge/io.hpp"
#include "umrf_forge/prompt.hpp"
#include "umrf_forge/search.hpp"

namespace umrf_forge {

enum class AugmentKind {
  synonym_replacement,
  random_insertion,
  random_swap,
  random_deletion,
};

inline const char* augment_kind_name(AugmentKind k) {
  switch (k) {
    case AugmentKind::synonym_replacement: return "synonym_replacement";
    case AugmentKind::random_insertion: return "random_insertion";
    case AugmentKind::random_swap: return "random_swap";
    case AugmentKind::random_deletion: return "random_deletion";
  }
  return "?";
}

constexpr std::array<AugmentKind, 4> kAllAugmentKinds = {
    AugmentKind::synonym_replacement, AugmentKind::random_insertion,
    AugmentKind::random_swap, AugmentKind::random_deletion};

struct AugmentationOp {
  AugmentKind kind;
  double magnitude = 0.0;  // in [0, 1]
};

struct AugmentationPolicy {
  std::vector<AugmentationOp> ops;
  std::uint64_t seed = 0;
};

// word<TAB>syn1,syn2,... — keys may be multi-word phrases, matched
// case-insensitively; synonyms are emitted verbatim.
class Lexicon {
 public:
  Lexicon() = default;

  static Lexicon load(const std::filesystem::path& path) {
    Lexicon lex;
    for (const auto& line : read_lines(path)) {
      if (line.empty() || line[0] == '#') continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw Error(Errc::config, "lexicon line without a tab: " + line);
      std::string key = lowercase(line.substr(0, tab));
      std::vector<std::string> syns;
      std::string rest = line.substr(tab + 1);
      std::size_t pos = 0;
      while (pos <= rest.size()) {
        auto comma = rest.find(',', pos);
        std::string syn = rest.substr(pos, comma == std::string::npos ? std::string::npos
                                                                      : comma - pos);
        if (!syn.empty()) syns.push_back(syn);
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      if (syns.empty()) throw Error(Errc::config, "lexicon entry with no synonyms: " + key);
      std::size_t words = 1 + std::count(key.begin(), key.end(), ' ');
      lex.max_key_words_ = std::max(lex.max_key_words_, words);
      lex.entries_[std::move(key)] = std::move(syns);
    }
    return lex;
  }

  void add(std::string key, std::vector<std::string> synonyms) {
    key = lowercase(key);
    std::size_t words = 1 + std::count(key.begin(), key.end(), ' ');
    max_key_words_ = std::max(max_key_words_, words);
    entries_[std::move(key)] = std::move(synonyms);
  }

  bool empty() const { return entries_.empty(); }
  std::size_t max_key_words() const { return max_key_words_; }

  const std::vector<std::string>* find(const std::string& key_lower) const {
    auto it = entries_.find(key_lower);
    return it == entries_.end() ? nullptr : &it->second;
  }

  static std::string lowercase(std::string s) {
    for (char& c : s)
      if (c >= 'A' && c <= 'Z') c += 'a' - 'A';
    return s;
  }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
  std::size_t max_key_words_ = 0;
};

// Fixed 30-word stopword list; stopwords are never replaced or used as
// insertion sources.
inline const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "the", "a",    "an",  "and",  "or",   "but",  "if",   "then", "of",   "at",
      "by",  "for",  "with", "to",  "in",   "on",   "is",   "are",  "was",  "were",
      "be",  "this", "that", "it",  "as",   "from", "into", "not",  "so",   "too"};
  return words;
}

namespace detail {

using Rng = std::mt19937_64;

// Hand-rolled draws: the mt19937_64 stream is pinned by the standard, so
// avoiding std::uniform_* keeps outputs identical across standard libraries.
inline std::size_t rand_index(Rng& rng, std::size_t n) { return rng() % n; }

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

template <typename T>
inline void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rand_index(rng, i)]);
}

struct Word {
  std::string text;
  bool is_marker = false;
};

// Marker-aware word split: each valid marker substring is one word, the
// rest splits on whitespace.
inline std::vector<Word> split_words(std::string_view text) {
  std::vector<Word> words;
  auto hits = find_markers(text);
  std::size_t cursor = 0;
  auto push_plain = [&](std::string_view span) {
    std::string current;
    for (char c : span) {
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        if (!current.empty()) {
          words.push_back({current, false});
          current.clear();
        }
      } else {
        current.push_back(c);
      }
    }
    if (!current.empty()) words.push_back({current, false});
  };
  for (const auto& hit : hits) {
    push_plain(text.substr(cursor, hit.begin - cursor));
    words.push_back({std::string(text.substr(hit.begin, hit.end - hit.begin)), true});
    cursor = hit.end;
  }
  push_plain(text.substr(cursor));
  return words;
}

inline std::string join_words(const std::vector<Word>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i].text;
  }
  return out;
}

inline std::size_t affected_count(double magnitude, std::size_t word_count) {
  auto n = static_cast<std::size_t>(std::lround(magnitude * static_cast<double>(word_count)));
  return std::max<std::size_t>(1, n);
}

// Longest lexicon phrase starting at position i; 0 when none.
inline std::size_t match_len_at(const std::vector<Word>& words, std::size_t i,
                                const Lexicon& lex) {
  std::size_t best = 0;
  std::string key;
  for (std::size_t len = 1; len <= lex.max_key_words() && i + len <= words.size(); ++len) {
    if (words[i + len - 1].is_marker) break;
    if (len > 1) key += ' ';
    key += Lexicon::lowercase(words[i + len - 1].text);
    if (lex.find(key)) best = len;
  }
  return best;
}

inline std::vector<Word> synonym_words(const std::string& synonym) {
  std::vector<Word> out;
  std::string current;
  for (char c : synonym) {
    if (c == ' ') {
      if (!current.empty()) {
        out.push_back({current, false});
        current.clear();
      }
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) out.push_back({current, false});
  return out;
}

}  // namespace detail

// Applies one perturbation. `n = max(1, round(magnitude * word_count))`
// words are affected for replacement/insertion/swap; deletion drops each
// word independently with probability `magnitude` but always keeps at
// least one. Same (text, op, seed) always yields the same output.
inline std::string apply_op(const std::string& text, const AugmentationOp& op,
                            detail::Rng& rng, const Lexicon& lexicon = {}) {
  if (op.magnitude < 0.0 || op.magnitude > 1.0)
    throw Error(Errc::argument, "magnitude must be in [0, 1]");
  std::vector<detail::Word> words = detail::split_words(text);
  if (words.empty()) return text;
  const std::size_t word_count = words.size();
  const auto& stops = stopwords();

  switch (op.kind) {
    case AugmentKind::synonym_replacement: {
      if (lexicon.empty())
        throw Error(Errc::config, "synonym_replacement needs a non-empty lexicon");
      std::size_t n = detail::affected_count(op.magnitude, word_count);
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < words.size(); ++i) {
        if (words[i].is_marker) continue;
        if (stops.count(Lexicon::lowercase(words[i].text))) continue;
        if (detail::match_len_at(words, i, lexicon) > 0) candidates.push_back(i);
      }
      detail::shuffle(candidates, rng);
      struct Replacement {
        std::size_t begin, len;
        std::string synonym;
      };
      std::vector<Replacement> chosen;
      std::vector<bool> taken(words.size(), false);
      for (std::size_t pos : candidates) {
        if (chosen.size() >= n) break;
        std::size_t len = detail::match_len_at(words, pos, lexicon);
        bool overlaps = false;
        for (std::size_t j = pos; j < pos + len; ++j) overlaps |= taken[j];
        if (overlaps) continue;
        std::string key;
        for (std::size_t j = 0; j < len; ++j) {
          if (j) key += ' ';
          key += Lexicon::lowercase(words[pos + j].text);
        }
        const auto* syns = lexicon.find(key);
        std::string syn = (*syns)[detail::rand_index(rng, syns->size())];
        for (std::size_t j = pos; j < pos + len; ++j) taken[j] = true;
        chosen.push_back({pos, len, std::move(syn)});
      }
      std::sort(chosen.begin(), chosen.end(),
                [](const Replacement& a, const Replacement& b) { return a.begin > b.begin; });
      for (const auto& r : chosen) {
        auto repl = detail::synonym_words(r.synonym);
        words.erase(words.begin() + static_cast<long>(r.begin),
                    words.begin() + static_cast<long>(r.begin + r.len));
        words.insert(words.begin() + static_cast<long>(r.begin), repl.begin(), repl.end());
      }
      return detail::join_words(words);
    }

    case AugmentKind::random_insertion: {
      if (lexicon.empty())
        throw Error(Errc::config, "random_insertion needs a non-empty lexicon");
      std::size_t n = detail::affected_count(op.magnitude, word_count);
      for (std::size_t t = 0; t < n; ++t) {
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < words.size(); ++i) {
          if (words[i].is_marker) continue;
          std::string lower = Lexicon::lowercase(words[i].text);
          if (stops.count(lower)) continue;
          if (lexicon.find(lower)) candidates.push_back(i);
        }
        if (candidates.empty()) break;
        std::size_t source = candidates[detail::rand_index(rng, candidates.size())];
        const auto* syns = lexicon.find(Lexicon::lowercase(words[source].text));
        std::string syn = (*syns)[detail::rand_index(rng, syns->size())];
        auto repl = detail::synonym_words(syn);
        std::size_t at = detail::rand_index(rng, words.size() + 1);
        words.insert(words.begin() + static_cast<long>(at), repl.begin(), repl.end());
      }
      return detail::join_words(words);
    }

    case AugmentKind::random_swap: {
      if (words.size() < 2) return text;
      std::size_t n = detail::affected_count(op.magnitude, word_count);
      for (std::size_t t = 0; t < n; ++t) {
        std::size_t i = detail::rand_index(rng, words.size());
        std::size_t j = i;
        for (int attempt = 0; attempt < 3 && j == i; ++attempt)
          j = detail::rand_index(rng, words.size());
        if (i != j) std::swap(words[i], words[j]);
      }
      return detail::join_words(words);
    }

    case AugmentKind::random_deletion: {
      if (words.size() == 1) return text;
      std::vector<detail::Word> kept;
      bool deleted = false;
      for (const auto& w : words) {
        if (detail::uniform01(rng) < op.magnitude) {
          deleted = true;
        } else {
          kept.push_back(w);
        }
      }
      if (!deleted) return text;  // includes the magnitude-0 case
      if (kept.empty()) kept.push_back(words[detail::rand_index(rng, words.size())]);
      return detail::join_words(kept);
    }
  }
  return text;
}

// Ops applied in order, each consuming the previous output, all drawing
// from one generator seeded by policy.seed.
inline std::string apply_policy(const std::string& text, const AugmentationPolicy& policy,
                                const Lexicon& lexicon = {}) {
  if (policy.ops.empty()) throw Error(Errc::argument, "policy has no ops");
  detail::Rng rng(policy.seed);
  std::string out = text;
  for (const auto& op : policy.ops) out = apply_op(out, op, rng, lexicon);
  return out;
}

struct FragilityRecord {
  AugmentationPolicy policy;  // seed holds the effective per-trial seed
  int trial = 0;
  std::string perturbed_prompt_digest;
  double average_bleu = 0.0;
};

// The default single-op grid: every op kind at magnitudes .05/.1/.2/.4.
inline std::vector<AugmentationPolicy> default_fragility_grid() {
  std::vector<AugmentationPolicy> grid;
  for (AugmentKind kind : kAllAugmentKinds)
    for (double magnitude : {0.05, 0.1, 0.2, 0.4})
      grid.push_back({{{kind, magnitude}}, 0});
  return grid;
}

// Ordered pairs of distinct op kinds at a shared magnitude.
inline std::vector<AugmentationPolicy> compositional_grid(
    const std::vector<double>& magnitudes = {0.05, 0.1, 0.2, 0.4}) {
  std::vector<AugmentationPolicy> grid;
  for (AugmentKind first : kAllAugmentKinds)
    for (AugmentKind second : kAllAugmentKinds) {
      if (first == second) continue;
      for (double magnitude : magnitudes)
        grid.push_back({{{first, magnitude}, {second, magnitude}}, 0});
    }
  return grid;
}

namespace detail {

// Perturb only the example text blocks (visual cue, language command,
// rationale). The query and every UMRF graph block stay untouched: the
// object of study is prompt noise, not input noise.
inline PromptSpec perturb_spec(const PromptSpec& base, const std::vector<AugmentationOp>& ops,
                               Rng& rng, const Lexicon& lexicon) {
  PromptSpec out = base;
  auto perturb_text = [&](const std::string& text) {
    std::string t = text;
    for (const auto& op : ops) t = apply_op(t, op, rng, lexicon);
    return t;
  };
  for (auto& [example, flag] : out.examples) {
    std::string visual = render_command(example.visual_cue);
    if (!visual.empty()) example.visual_cue = parse_fragment(perturb_text(visual));
    example.nl_command = perturb_text(example.nl_command);
    if (example.cot_rationale && !example.cot_rationale->empty())
      example.cot_rationale = perturb_text(*example.cot_rationale);
  }
  return out;
}

inline std::string spec_example_digest(const PromptSpec& spec) {
  std::string all;
  for (const auto& [example, flag] : spec.examples)
    all += render_example(example, flag, spec.include_cot);
  return sha256_hex(all);
}

}  // namespace detail

// For each policy and trial t, perturbs the base prompt's example blocks
// with seed base_seed + t and scores the perturbed prompt on the validation
// set. Compositional policies above magnitude 0.1 get a warning — past that
// the perturbation stops being a small perturbation — but still run.
inline std::vector<FragilityRecord> fragility_sweep(
    const PromptSpec& base, const std::vector<AugmentationPolicy>& grid, int trials,
    const std::vector<ValidationItem>& items, Provider& provider, const Lexicon& lexicon,
    std::uint64_t base_seed = 0) {
  if (trials < 1) throw Error(Errc::argument, "trials must be >= 1");
  bool warned = false;
  std::vector<FragilityRecord> records;
  records.reserve(grid.size() * static_cast<std::size_t>(trials));
  for (const auto& policy : grid) {
    if (!warned && policy.ops.size() >= 2) {
      for (const auto& op : policy.ops) {
        if (op.magnitude > 0.1) {
          std::cerr << "warning: compositional magnitude " << op.magnitude
                    << " exceeds the recommended cap of 0.1\n";
          warned = true;
          break;
        }
      }
    }
    for (int t = 0; t < trials; ++t) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(t);
      detail::Rng rng(seed);
      PromptSpec perturbed = detail::perturb_spec(base, policy.ops, rng, lexicon);
      FragilityRecord rec;
      rec.policy = {policy.ops, seed};
      rec.trial = t;
      rec.perturbed_prompt_digest = detail::spec_example_digest(perturbed);
      auto [item_records, average] = evaluate_prompt(perturbed, items, provider);
      rec.average_bleu = average;
      records.push_back(std::move(rec));
    }
  }
  return records;
}

// Frozen sweep CSV: kind,magnitude,trial,policy_digest,avg_bleu.
// Compositional policies join their op kinds (and magnitudes, when they
// differ) with '+'.
inline std::string fragility_csv(const std::vector<FragilityRecord>& records) {
  std::string out = "kind,magnitude,trial,policy_digest,avg_bleu\n";
  for (const auto& r : records) {
    std::string kind;
    for (std::size_t i = 0; i < r.policy.ops.size(); ++i) {
      if (i) kind += '+';
      kind += augment_kind_name(r.policy.ops[i].kind);
    }
    bool uniform = true;
    for (const auto& op : r.policy.ops) uniform &= op.magnitude == r.policy.ops[0].magnitude;
    std::string magnitude;
    if (uniform) {
      magnitude = format_double(r.policy.ops[0].magnitude);
    } else {
      for (std::size_t i = 0; i < r.policy.ops.size(); ++i) {
        if (i) magnitude += '+';
        magnitude += format_double(r.policy.ops[i].magnitude);
      }
    }
    out += csv_escape(kind);
    out += ',';
    out += csv_escape(magnitude);
    out += ',';
    out += std::to_string(r.trial);
    out += ',';
    out += r.perturbed_prompt_digest;
    out += ',';
    out += format_double(r.average_bleu);
    out += '\n';
  }
  return out;
}

}  // namespace umrf_forge
