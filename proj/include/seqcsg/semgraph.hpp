#pragma once

// Sequential cross-modal semantic graph construction: triple selection,
// serialization into a triple sentence, assembly of the full encoder input
// (plain or tagged template), and the token-visibility matrix that gates
// encoder self-attention.

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqcsg/common.hpp"
#include "seqcsg/corpus.hpp"

namespace seqcsg {

// ---------------------------------------------------------------------------
// Tokens and sequences
// ---------------------------------------------------------------------------

enum class TokenRole {
  TripleEntity,
  TripleRelation,
  TripleSeparator,
  SubImage,
  Caption,
  Tweet,
  Special,
};

inline const char* role_name(TokenRole r) {
  switch (r) {
    case TokenRole::TripleEntity: return "entity";
    case TokenRole::TripleRelation: return "relation";
    case TokenRole::TripleSeparator: return "separator";
    case TokenRole::SubImage: return "subimage";
    case TokenRole::Caption: return "caption";
    case TokenRole::Tweet: return "tweet";
    case TokenRole::Special: return "special";
  }
  return "?";
}

// Frame / separator surfaces.
inline constexpr std::string_view kSeqOpen = "[s]";
inline constexpr std::string_view kSeqClose = "[/s]";
inline constexpr std::string_view kTripleSep = "[ts]";
inline constexpr std::string_view kImgToken = "[img]";
inline constexpr std::string_view kMaskToken = "[mask]";
inline constexpr std::string_view kTripleOpen = "[triple]";
inline constexpr std::string_view kTripleClose = "[/triple]";
inline constexpr std::string_view kCaptionOpen = "[caption]";
inline constexpr std::string_view kCaptionClose = "[/caption]";
inline constexpr std::string_view kTweetOpen = "[tweet]";
inline constexpr std::string_view kTweetClose = "[/tweet]";

struct SeqToken {
  std::string surface;
  TokenRole role = TokenRole::Special;
  int triple_id = -1;     // -1: not part of a serialized triple
  int entity_group = -1;  // -1: not an entity token (or group not assigned)
  std::string region_id;  // sub-image tokens only
  std::string entity_source;  // normalized source entity, used for grouping

  bool in_triple() const { return triple_id >= 0; }
};

struct SemanticSequence {
  std::vector<SeqToken> tokens;

  int size() const { return static_cast<int>(tokens.size()); }

  std::vector<std::string> surfaces() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.surface);
    return out;
  }

  // Encoder positions of sub-image tokens, in order.
  std::vector<int> subimage_positions() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (tokens[i].role == TokenRole::SubImage) out.push_back(i);
    return out;
  }
};

// Membership of the globally visible special-token set.
inline bool is_globally_visible(TokenRole r) {
  return r == TokenRole::Special || r == TokenRole::TripleSeparator;
}

// Tweet and caption tokens are visible to (and from) everything.
inline bool is_text_segment(TokenRole r) {
  return r == TokenRole::Tweet || r == TokenRole::Caption;
}

// ---------------------------------------------------------------------------
// Visibility matrix
// ---------------------------------------------------------------------------

// Binary n-by-n relatedness matrix; row-major, one byte per cell, which is
// also the portable dump format.
struct VisibilityMatrix {
  int n = 0;
  std::vector<std::uint8_t> cells;

  explicit VisibilityMatrix(int size = 0)
      : n(size), cells(static_cast<std::size_t>(size) * size, 0) {}

  std::uint8_t at(int i, int j) const {
    return cells[static_cast<std::size_t>(i) * n + j];
  }
  void set(int i, int j, std::uint8_t v) {
    cells[static_cast<std::size_t>(i) * n + j] = v;
  }

  static VisibilityMatrix all_ones(int size) {
    VisibilityMatrix m(size);
    std::fill(m.cells.begin(), m.cells.end(), std::uint8_t{1});
    return m;
  }

  bool is_binary() const {
    for (auto c : cells)
      if (c > 1) return false;
    return true;
  }
  bool is_symmetric() const {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (at(i, j) != at(j, i)) return false;
    return true;
  }
  bool has_unit_diagonal() const {
    for (int i = 0; i < n; ++i)
      if (at(i, i) != 1) return false;
    return true;
  }

  bool operator==(const VisibilityMatrix& o) const {
    return n == o.n && cells == o.cells;
  }

  // Human-readable grid, one row per line.
  std::string text_grid() const {
    std::string out;
    out.reserve(static_cast<std::size_t>(n) * (2 * n + 1));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (j) out += ' ';
        out += at(i, j) ? '1' : '0';
      }
      out += '\n';
    }
    return out;
  }

  const std::vector<std::uint8_t>& binary_blob() const { return cells; }
};

// ---------------------------------------------------------------------------
// Triple selection and serialization
// ---------------------------------------------------------------------------

struct SelectedTriples {
  std::vector<ObjectTriple> object_object;
  std::vector<ImageTriple> image_object;

  std::size_t total() const { return object_object.size() + image_object.size(); }
};

namespace detail {

template <typename T>
std::vector<T> top_k_by_score(const std::vector<T>& items, int k) {
  if (k < 0) throw ContractViolation("triple budget must be non-negative");
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Stable: ties keep input order.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return items[a].score > items[b].score;
  });
  std::size_t take = std::min<std::size_t>(order.size(), static_cast<std::size_t>(k));
  std::vector<T> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(items[order[i]]);
  return out;
}

}  // namespace detail

// Top-k object-object and top-k image-object triples by descending score,
// ties broken by input order.
inline SelectedTriples select_triples(const SceneGraphRecord& graph, int k_oo,
                                      int k_io) {
  SelectedTriples out;
  out.object_object = detail::top_k_by_score(graph.object_object, k_oo);
  out.image_object = detail::top_k_by_score(graph.image_object, k_io);
  return out;
}

namespace detail {

inline std::string normalize_entity(std::string_view s) {
  return str::lower_ascii(str::normalize_whitespace(s));
}

inline void emit_entity(std::vector<SeqToken>& out, const std::string& entity,
                        int triple_id) {
  const std::string norm = normalize_entity(entity);
  for (const auto& w : str::words(entity)) {
    SeqToken t;
    t.surface = w;
    t.role = TokenRole::TripleEntity;
    t.triple_id = triple_id;
    t.entity_source = norm;
    out.push_back(std::move(t));
  }
}

inline void emit_relation(std::vector<SeqToken>& out,
                          const std::string& predicate, int triple_id) {
  for (const auto& w : str::words(predicate)) {
    SeqToken t;
    t.surface = w;
    t.role = TokenRole::TripleRelation;
    t.triple_id = triple_id;
    out.push_back(std::move(t));
  }
}

inline void emit_comma(std::vector<SeqToken>& out, int triple_id) {
  SeqToken t;
  t.surface = ",";
  t.role = TokenRole::Special;  // format punctuation, globally visible
  t.triple_id = triple_id;
  out.push_back(std::move(t));
}

}  // namespace detail

// Renders selected triples as a triple sentence:
//   subject , predicate , object [ts] [img] , image of , object ...
// Object-object triples come first, then image-object triples; each
// image-object triple contributes exactly one sub-image token carrying its
// region id. Triples are joined by [ts], which carries no triple id.
inline std::vector<SeqToken> serialize_triples(const SelectedTriples& triples) {
  std::vector<SeqToken> out;
  int triple_id = 0;
  auto separator = [&] {
    if (triple_id > 0) {
      SeqToken t;
      t.surface = std::string(kTripleSep);
      t.role = TokenRole::Special;
      out.push_back(std::move(t));
    }
  };
  for (const auto& tr : triples.object_object) {
    separator();
    detail::emit_entity(out, tr.subject, triple_id);
    detail::emit_comma(out, triple_id);
    detail::emit_relation(out, tr.predicate, triple_id);
    detail::emit_comma(out, triple_id);
    detail::emit_entity(out, tr.object, triple_id);
    ++triple_id;
  }
  for (const auto& tr : triples.image_object) {
    separator();
    SeqToken img;
    img.surface = std::string(kImgToken);
    img.role = TokenRole::SubImage;
    img.triple_id = triple_id;
    img.region_id = tr.region_id;
    out.push_back(std::move(img));
    detail::emit_comma(out, triple_id);
    detail::emit_relation(out, "image of", triple_id);
    detail::emit_comma(out, triple_id);
    detail::emit_entity(out, tr.object, triple_id);
    ++triple_id;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

enum class InputTemplate { Plain, Tagged };

inline const char* template_name(InputTemplate t) {
  return t == InputTemplate::Plain ? "plain" : "tagged";
}

inline std::optional<InputTemplate> parse_template(std::string_view s) {
  if (s == "plain") return InputTemplate::Plain;
  if (s == "tagged") return InputTemplate::Tagged;
  return std::nullopt;
}

namespace detail {

inline SeqToken special(std::string_view surface) {
  SeqToken t;
  t.surface = std::string(surface);
  t.role = TokenRole::Special;
  return t;
}

inline void emit_text_segment(std::vector<SeqToken>& out,
                              const std::string& text, TokenRole role) {
  for (const auto& w : str::words(text)) {
    SeqToken t;
    t.surface = w;
    t.role = role;
    // Target markers inside the cleaned tweet are format tokens.
    if (w == kTargetOpen || w == kTargetClose) t.role = TokenRole::Special;
    out.push_back(std::move(t));
  }
}

}  // namespace detail

// Joins triple sentence, caption, and cleaned tweet into the encoder input.
//
//   plain:  [s] triples [/s] caption [/s] tweet [/s]
//   tagged: [s] [triple] triples [/triple] [caption] caption [/caption]
//           [tweet] tweet [/tweet] [/s]
//
// Entity group ids are assigned across all triple entity tokens: tokens share
// a group exactly when their source entities are equal after normalization.
inline SemanticSequence assemble_input(const std::vector<SeqToken>& triple_tokens,
                                       const std::string& caption,
                                       const std::string& cleaned_tweet,
                                       InputTemplate tmpl) {
  SemanticSequence seq;
  auto& out = seq.tokens;
  out.push_back(detail::special(kSeqOpen));
  if (tmpl == InputTemplate::Tagged) out.push_back(detail::special(kTripleOpen));
  out.insert(out.end(), triple_tokens.begin(), triple_tokens.end());
  if (tmpl == InputTemplate::Plain) {
    out.push_back(detail::special(kSeqClose));
    detail::emit_text_segment(out, caption, TokenRole::Caption);
    out.push_back(detail::special(kSeqClose));
    detail::emit_text_segment(out, cleaned_tweet, TokenRole::Tweet);
    out.push_back(detail::special(kSeqClose));
  } else {
    out.push_back(detail::special(kTripleClose));
    out.push_back(detail::special(kCaptionOpen));
    detail::emit_text_segment(out, caption, TokenRole::Caption);
    out.push_back(detail::special(kCaptionClose));
    out.push_back(detail::special(kTweetOpen));
    detail::emit_text_segment(out, cleaned_tweet, TokenRole::Tweet);
    out.push_back(detail::special(kTweetClose));
    out.push_back(detail::special(kSeqClose));
  }

  // Group ids in first-appearance order of the normalized entity string.
  std::unordered_map<std::string, int> group_of;
  for (auto& t : out) {
    if (t.role != TokenRole::TripleEntity || t.entity_source.empty()) continue;
    auto it = group_of.emplace(t.entity_source,
                               static_cast<int>(group_of.size())).first;
    t.entity_group = it->second;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Visibility rules
// ---------------------------------------------------------------------------

// Two sequence elements are mutually visible when any of these holds:
//   - they belong to the same serialized triple;
//   - either is a special/separator token;
//   - either is a tweet or caption token;
//   - both are entity tokens of the same (normalized) entity;
//   - they are the same element.
inline VisibilityMatrix build_visibility_matrix(const SemanticSequence& seq) {
  const int n = seq.size();
  VisibilityMatrix m(n);
  const auto& toks = seq.tokens;
  for (int i = 0; i < n; ++i) {
    const auto& a = toks[i];
    for (int j = i; j < n; ++j) {
      const auto& b = toks[j];
      bool visible = i == j;
      if (!visible && a.in_triple() && b.in_triple() &&
          a.triple_id == b.triple_id)
        visible = true;
      if (!visible &&
          (is_globally_visible(a.role) || is_globally_visible(b.role)))
        visible = true;
      if (!visible && (is_text_segment(a.role) || is_text_segment(b.role)))
        visible = true;
      if (!visible && a.role == TokenRole::TripleEntity &&
          b.role == TokenRole::TripleEntity && a.entity_group >= 0 &&
          a.entity_group == b.entity_group)
        visible = true;
      if (visible) {
        m.set(i, j, 1);
        m.set(j, i, 1);
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Truncation
// ---------------------------------------------------------------------------

// Shrinks an over-long sequence to at most n_max tokens: whole trailing
// triples go first (with their [ts] separator), then caption tail tokens.
// Tweet and frame tokens are never dropped; if they alone exceed n_max the
// sequence cannot be represented.
inline SemanticSequence truncate(const SemanticSequence& seq, int n_max) {
  if (n_max < 0) throw ContractViolation("n_max must be non-negative");
  if (seq.size() <= n_max) return seq;

  std::vector<SeqToken> toks = seq.tokens;

  auto drop_last_triple = [&]() -> bool {
    int last_triple = -1;
    for (const auto& t : toks) last_triple = std::max(last_triple, t.triple_id);
    if (last_triple < 0) return false;
    int first = -1, last = -1;
    for (int i = 0; i < static_cast<int>(toks.size()); ++i) {
      if (toks[i].triple_id == last_triple) {
        if (first < 0) first = i;
        last = i;
      }
    }
    // The [ts] immediately before the triple goes with it.
    if (first > 0 && toks[first - 1].surface == kTripleSep) --first;
    toks.erase(toks.begin() + first, toks.begin() + last + 1);
    return true;
  };

  while (static_cast<int>(toks.size()) > n_max && drop_last_triple()) {
  }
  while (static_cast<int>(toks.size()) > n_max) {
    int last_caption = -1;
    for (int i = 0; i < static_cast<int>(toks.size()); ++i)
      if (toks[i].role == TokenRole::Caption) last_caption = i;
    if (last_caption < 0) break;
    toks.erase(toks.begin() + last_caption);
  }
  if (static_cast<int>(toks.size()) > n_max)
    throw CapacityError("tweet and frame tokens alone exceed n_max=" +
                        std::to_string(n_max));
  SemanticSequence out;
  out.tokens = std::move(toks);
  return out;
}

}  // namespace seqcsg
