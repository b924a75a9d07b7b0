#pragma once

// CHAIR-style object hallucination metrics and the token-class analyses:
// which dependence class each object mention falls in, and how far each
// hallucinated mention sits from the nearest token of every class.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "visdep/dependence.hpp"
#include "visdep/errors.hpp"
#include "visdep/trace.hpp"

namespace visdep {

/// A generated response without its BOS token.
struct Response {
  std::vector<TokenId> tokens;
  std::vector<std::string> surfaces;

  static Response from_trace(const TokenTrace& t) { return {t.tokens, t.surfaces}; }
};

using ObjectSet = std::set<int>;

/// A contiguous span of response positions naming one object.
struct ObjectMention {
  int object = 0;
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive

  bool operator==(const ObjectMention&) const = default;
};

/// Maps response positions to objects. Token mode matches ids exactly; surface
/// mode matches the lowercased, whitespace-normalized concatenation of one or
/// more consecutive pieces against a lexicon, longest span first.
class ObjectLexicon {
 public:
  static ObjectLexicon by_token(std::map<TokenId, int> token_to_object) {
    ObjectLexicon lex;
    lex.tokens_ = std::move(token_to_object);
    return lex;
  }

  static ObjectLexicon by_surface(const std::map<std::string, int>& words, std::size_t max_pieces = 4) {
    ObjectLexicon lex;
    lex.surface_mode_ = true;
    lex.max_pieces_ = std::max<std::size_t>(1, max_pieces);
    for (const auto& [w, o] : words) lex.words_[normalize(w)] = o;
    return lex;
  }

  /// Lowercase, word-boundary markers to spaces, whitespace collapsed and trimmed.
  static std::string normalize(std::string_view s) {
    std::string tmp;
    for (std::size_t i = 0; i < s.size(); ++i) {
      // U+2581 (sentencepiece) and U+0120 (byte-level BPE) mark a leading space.
      if (s.compare(i, 3, "\xE2\x96\x81") == 0) {
        tmp.push_back(' ');
        i += 2;
      } else if (s.compare(i, 2, "\xC4\xA0") == 0) {
        tmp.push_back(' ');
        i += 1;
      } else {
        tmp.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
      }
    }
    std::string out;
    bool space = false;
    for (char c : tmp) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        space = !out.empty();
      } else {
        if (space) out.push_back(' ');
        space = false;
        out.push_back(c);
      }
    }
    return out;
  }

  std::vector<ObjectMention> mentions(const Response& r) const {
    std::vector<ObjectMention> out;
    if (!surface_mode_) {
      for (std::size_t i = 0; i < r.tokens.size(); ++i) {
        if (auto it = tokens_.find(r.tokens[i]); it != tokens_.end()) out.push_back({it->second, i, i + 1});
      }
      return out;
    }
    if (r.surfaces.size() != r.tokens.size()) throw DataError("response surfaces misaligned with tokens");
    // Word boundaries are only known when the tokenizer marks word starts.
    const bool marked = std::any_of(r.surfaces.begin(), r.surfaces.end(), [](const std::string& s) {
      return !s.empty() && (std::isspace(static_cast<unsigned char>(s[0])) || has_marker(s));
    });
    std::size_t i = 0;
    while (i < r.surfaces.size()) {
      bool hit = false;
      const std::size_t longest = std::min(max_pieces_, r.surfaces.size() - i);
      for (std::size_t len = longest; len >= 1; --len) {
        // A span must end at a word boundary: the next piece starts a new word.
        if (marked && i + len < r.surfaces.size() && !starts_word(r.surfaces[i + len])) continue;
        std::string joined;
        for (std::size_t k = i; k < i + len; ++k) joined += r.surfaces[k];
        if (auto it = words_.find(normalize(joined)); it != words_.end()) {
          out.push_back({it->second, i, i + len});
          i += len;
          hit = true;
          break;
        }
      }
      if (!hit) ++i;
    }
    return out;
  }

 private:
  static bool has_marker(const std::string& piece) {
    return piece.rfind("\xE2\x96\x81", 0) == 0 || piece.rfind("\xC4\xA0", 0) == 0;
  }

  static bool starts_word(const std::string& piece) {
    if (piece.empty()) return true;
    const auto c = static_cast<unsigned char>(piece[0]);
    return std::isspace(c) || std::ispunct(c) || has_marker(piece);
  }

  bool surface_mode_ = false;
  std::size_t max_pieces_ = 1;
  std::map<TokenId, int> tokens_;
  std::unordered_map<std::string, int> words_;
};

struct ResponseScore {
  std::vector<ObjectMention> mentions;  // every mention, in order
  ObjectSet mentioned;                  // distinct objects
  ObjectSet hallucinated;               // mentioned \ truth
  std::size_t hallucinated_mentions = 0;
};

inline ResponseScore score_response(const Response& r, const ObjectSet& truth, const ObjectLexicon& lex) {
  ResponseScore s;
  s.mentions = lex.mentions(r);
  for (const auto& m : s.mentions) {
    s.mentioned.insert(m.object);
    if (!truth.contains(m.object)) {
      s.hallucinated.insert(m.object);
      ++s.hallucinated_mentions;
    }
  }
  return s;
}

struct HallucinationReport {
  double chair_s = std::numeric_limits<double>::quiet_NaN();
  double chair_i = std::numeric_limits<double>::quiet_NaN();
  double recall = std::numeric_limits<double>::quiet_NaN();
  double mean_len = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_samples = 0;
  std::size_t n_mentions = 0;
  std::size_t n_hallucinated_mentions = 0;
  std::size_t n_truth = 0;
  std::size_t n_recalled = 0;
};

/// Rates over an empty set are NaN. A response with no object mentions adds
/// nothing to CHAIR_I; the corpus CHAIR_I is 0 when nothing is mentioned at all.
inline HallucinationReport evaluate(std::span<const Response> outputs, std::span<const ObjectSet> truths,
                                    const ObjectLexicon& lex) {
  if (outputs.size() != truths.size()) {
    throw UsageError("evaluate: " + std::to_string(outputs.size()) + " outputs for " +
                     std::to_string(truths.size()) + " truths");
  }
  HallucinationReport rep;
  rep.n_samples = outputs.size();
  if (outputs.empty()) return rep;
  std::size_t with_hall = 0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto s = score_response(outputs[i], truths[i], lex);
    with_hall += s.hallucinated.empty() ? 0 : 1;
    rep.n_mentions += s.mentions.size();
    rep.n_hallucinated_mentions += s.hallucinated_mentions;
    rep.n_truth += truths[i].size();
    for (int o : truths[i]) rep.n_recalled += s.mentioned.contains(o) ? 1 : 0;
    tokens += outputs[i].tokens.size();
  }
  const auto n = static_cast<double>(rep.n_samples);
  rep.chair_s = static_cast<double>(with_hall) / n;
  rep.chair_i = rep.n_mentions == 0
                    ? 0.0
                    : static_cast<double>(rep.n_hallucinated_mentions) / static_cast<double>(rep.n_mentions);
  rep.recall = rep.n_truth == 0 ? 0.0 : static_cast<double>(rep.n_recalled) / static_cast<double>(rep.n_truth);
  rep.mean_len = static_cast<double>(tokens) / n;
  return rep;
}

inline nlohmann::json to_json(const HallucinationReport& r) {
  const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"chair_s", num(r.chair_s)},
          {"chair_i", num(r.chair_i)},
          {"recall", num(r.recall)},
          {"mean_len", num(r.mean_len)},
          {"n_samples", r.n_samples},
          {"n_mentions", r.n_mentions},
          {"n_hallucinated_mentions", r.n_hallucinated_mentions},
          {"n_truth", r.n_truth},
          {"n_recalled", r.n_recalled}};
}

namespace detail {

inline void check_aligned(std::span<const DependenceProfile> profiles, std::span<const Response> outputs,
                          std::span<const ObjectSet> truths) {
  if (profiles.size() != outputs.size() || outputs.size() != truths.size()) {
    throw UsageError("profiles, outputs and truths must be parallel lists");
  }
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].size() != outputs[i].tokens.size()) {
      throw UsageError("profile '" + profiles[i].sample_id + "' does not align with its response");
    }
  }
}

}  // namespace detail

/// Class of a mention: the class of its largest-|d| token, earlier token on ties.
inline TokenClass mention_class(const DependenceProfile& p, const ObjectMention& m) {
  std::size_t best = m.begin;
  for (std::size_t k = m.begin + 1; k < m.end; ++k) {
    if (std::abs(p.d[k]) > std::abs(p.d[best])) best = k;
  }
  return p.classes[best];
}

struct ClassObjectCounts {
  std::array<std::size_t, 3> grounded{};
  std::array<std::size_t, 3> hallucinated{};

  std::size_t total_grounded() const { return grounded[0] + grounded[1] + grounded[2]; }
  std::size_t total_hallucinated() const { return hallucinated[0] + hallucinated[1] + hallucinated[2]; }
};

inline ClassObjectCounts class_object_counts(std::span<const DependenceProfile> profiles,
                                             std::span<const Response> outputs,
                                             std::span<const ObjectSet> truths, const ObjectLexicon& lex) {
  detail::check_aligned(profiles, outputs, truths);
  ClassObjectCounts c;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    for (const auto& m : lex.mentions(outputs[i])) {
      const auto k = class_index(mention_class(profiles[i], m));
      (truths[i].contains(m.object) ? c.grounded : c.hallucinated)[k] += 1;
    }
  }
  return c;
}

struct CoOccurrenceHistogram {
  int window = 3;
  // counts[class][b] for distance b in 0..window; beyond[class] for larger distances
  std::array<std::vector<std::size_t>, 3> counts;
  std::array<std::size_t, 3> beyond{};
  std::array<std::size_t, 3> absent{};  // responses with no token of the class
  std::size_t hallucinated_mentions = 0;

  std::size_t present(TokenClass c) const {
    const auto k = class_index(c);
    std::size_t n = beyond[k];
    for (auto v : counts[k]) n += v;
    return n;
  }

  /// Fraction of hallucinated mentions within `window` of the class; NaN if none present.
  double within_fraction(TokenClass c) const {
    const auto k = class_index(c);
    const auto n = present(c);
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    std::size_t in = 0;
    for (auto v : counts[k]) in += v;
    return static_cast<double>(in) / static_cast<double>(n);
  }
};

/// Distance from position u to a span: 0 inside it, otherwise the gap to its nearer end.
inline std::size_t span_distance(std::size_t u, const ObjectMention& m) {
  if (u >= m.begin && u < m.end) return 0;
  return u < m.begin ? m.begin - u : u - (m.end - 1);
}

inline CoOccurrenceHistogram co_occurrence(std::span<const DependenceProfile> profiles,
                                           std::span<const Response> outputs, std::span<const ObjectSet> truths,
                                           const ObjectLexicon& lex, int window = 3) {
  if (window < 0) throw UsageError("co_occurrence: window must be >= 0");
  detail::check_aligned(profiles, outputs, truths);
  CoOccurrenceHistogram h;
  h.window = window;
  for (auto& v : h.counts) v.assign(static_cast<std::size_t>(window) + 1, 0);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& p = profiles[i];
    for (const auto& m : lex.mentions(outputs[i])) {
      if (truths[i].contains(m.object)) continue;
      ++h.hallucinated_mentions;
      for (TokenClass c : kAllClasses) {
        const auto k = class_index(c);
        std::optional<std::size_t> best;
        // the mention's own tokens are not its context
        for (std::size_t u = 0; u < p.size(); ++u) {
          if (p.classes[u] != c || (u >= m.begin && u < m.end)) continue;
          const auto dist = span_distance(u, m);
          if (!best || dist < *best) best = dist;
        }
        if (!best) {
          ++h.absent[k];
        } else if (*best <= static_cast<std::size_t>(window)) {
          ++h.counts[k][*best];
        } else {
          ++h.beyond[k];
        }
      }
    }
  }
  return h;
}

}  // namespace visdep
