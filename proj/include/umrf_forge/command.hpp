#pragma once

// The fused operator-command format: free natural language interleaved with
// spatial markers of the form [x=14; y=3.2; yaw=1.26]. The marker
// micro-grammar is documented in docs/command_grammar.md. Yaw is carried
// opaquely (no angle normalization).

#include <cmath>
#include <cstddef>
#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "umrf_forge/errors.hpp"
#include "umrf_forge/io.hpp"

namespace umrf_forge {

struct Marker {
  double x = 0;
  double y = 0;
  double yaw = 0;

  friend bool operator==(const Marker&, const Marker&) = default;
};

inline std::string render_marker(const Marker& m) {
  return "[x=" + format_double(m.x) + "; y=" + format_double(m.y) +
         "; yaw=" + format_double(m.yaw) + "]";
}

// One parsed segment: plain text, or a marker with its trailing referent
// text (everything up to the next marker).
struct CommandSegment {
  std::optional<Marker> marker;
  std::string text;

  friend bool operator==(const CommandSegment&, const CommandSegment&) = default;
};

struct MultimodalCommand {
  std::vector<CommandSegment> segments;
  std::string raw;  // original input, provenance only

  std::vector<Marker> markers() const {
    std::vector<Marker> out;
    for (const auto& s : segments)
      if (s.marker) out.push_back(*s.marker);
    return out;
  }

  std::string text_content() const {
    std::string out;
    for (const auto& s : segments) out += s.text;
    return out;
  }

  bool empty() const { return segments.empty(); }

  // raw is provenance, not identity
  friend bool operator==(const MultimodalCommand& a, const MultimodalCommand& b) {
    return a.segments == b.segments;
  }
};

namespace detail {

// REAL = [+-]? digits ('.' digits)? — no exponent form.
inline bool scan_real(std::string_view s, std::size_t& pos, double& out) {
  std::size_t start = pos;
  if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) ++pos;
  std::size_t digits_begin = pos;
  while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
  if (pos == digits_begin) {
    pos = start;
    return false;
  }
  if (pos < s.size() && s[pos] == '.') {
    std::size_t frac_begin = ++pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    if (pos == frac_begin) {
      pos = start;
      return false;
    }
  }
  auto res = std::from_chars(s.data() + start, s.data() + pos, out);
  return res.ec == std::errc();
}

// Attempts the full marker grammar at s[pos] (which must point at '[').
// Returns the marker and advances pos past ']' on success.
inline bool scan_marker(std::string_view s, std::size_t& pos, Marker& out) {
  std::size_t p = pos;
  auto literal = [&](std::string_view lit) {
    if (s.substr(p, lit.size()) != lit) return false;
    p += lit.size();
    return true;
  };
  auto field_sep = [&]() {  // ';' followed by at most one space
    if (p >= s.size() || s[p] != ';') return false;
    ++p;
    if (p < s.size() && s[p] == ' ') ++p;
    return true;
  };
  Marker m;
  if (!literal("[x=")) return false;
  if (!scan_real(s, p, m.x)) return false;
  if (!field_sep()) return false;
  if (!literal("y=")) return false;
  if (!scan_real(s, p, m.y)) return false;
  if (!field_sep()) return false;
  if (!literal("yaw=")) return false;
  if (!scan_real(s, p, m.yaw)) return false;
  if (p >= s.size() || s[p] != ']') return false;
  ++p;
  pos = p;
  out = m;
  return true;
}

struct MarkerHit {
  std::size_t begin;
  std::size_t end;
  Marker marker;
};

// Tolerant scan: every substring satisfying the full marker grammar, in
// order. Near-misses are left to the caller.
inline std::vector<MarkerHit> find_markers(std::string_view text) {
  std::vector<MarkerHit> hits;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text[pos] == '[') {
      std::size_t p = pos;
      Marker m;
      if (scan_marker(text, p, m)) {
        hits.push_back({pos, p, m});
        pos = p;
        continue;
      }
    }
    ++pos;
  }
  return hits;
}

inline MultimodalCommand parse_segments(std::string_view input) {
  MultimodalCommand cmd;
  cmd.raw = std::string(input);

  // Text runs attach to the preceding marker as its referent; a run before
  // the first marker becomes a plain Text segment.
  auto flush_text = [&cmd](std::string& pending) {
    if (pending.empty()) return;
    if (!cmd.segments.empty() && cmd.segments.back().marker)
      cmd.segments.back().text = std::move(pending);
    else
      cmd.segments.push_back({std::nullopt, std::move(pending)});
    pending.clear();
  };

  std::size_t pos = 0;
  std::string pending_text;
  while (pos < input.size()) {
    if (input[pos] == '[') {
      std::size_t p = pos;
      Marker m;
      if (scan_marker(input, p, m)) {
        flush_text(pending_text);
        cmd.segments.push_back({m, ""});
        pos = p;
        continue;
      }
      if (input.substr(pos, 3) == "[x=") {
        throw Error(Errc::syntax,
                    "malformed marker at offset " + std::to_string(pos) +
                        ": starts like [x=... but does not match the marker grammar")
            .with_offset(pos);
      }
    }
    pending_text.push_back(input[pos]);
    ++pos;
  }
  flush_text(pending_text);
  return cmd;
}

}  // namespace detail

// Parses a full operator command. A command must carry some instruction
// text; marker-only input is rejected. A substring opening with "[x=" that
// fails the grammar is a hard error, never silently demoted to text —
// dropping coordinates silently is how a robot ends up in the wrong room.
inline MultimodalCommand parse_command(std::string_view input) {
  MultimodalCommand cmd = detail::parse_segments(input);
  std::string text = cmd.text_content();
  bool has_text = text.find_first_not_of(" \t\r\n") != std::string::npos;
  if (!has_text)
    throw Error(Errc::schema, "command contains no instruction text");
  return cmd;
}

// Fragment variant for few-shot visual cues and perturbed example text:
// same grammar, but marker-only (or empty) content is allowed.
inline MultimodalCommand parse_fragment(std::string_view input) {
  return detail::parse_segments(input);
}

// Deterministic inverse of parsing: text spans verbatim, markers rendered
// canonically with minimal digits.
inline std::string render_command(const MultimodalCommand& cmd) {
  std::string out;
  for (const auto& s : cmd.segments) {
    if (s.marker) out += render_marker(*s.marker);
    out += s.text;
  }
  return out;
}

}  // namespace umrf_forge
