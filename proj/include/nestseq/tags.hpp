#pragma once

#include <compare>
#include <map>
#include <string>
#include <vector>

#include "nestseq/error.hpp"

namespace nestseq {

// In-sequence IOBES tags. The numeric order doubles as the deterministic
// tie-break order wherever one tag has to be picked among equals.
enum class Tag : int { B = 0, I = 1, E = 2, S = 3, O = 4 };

inline constexpr int kNumTags = 5;

// Pseudo-tags pinned to span edges. They index the transition table but never
// appear inside a tag sequence and carry no emission score.
inline constexpr int kStartState = kNumTags;    // valid as predecessor only
inline constexpr int kEndState = kNumTags + 1;  // valid as successor only
inline constexpr int kNumStates = kNumTags + 2;

using TagSeq = std::vector<Tag>;

char tag_letter(Tag tag);

// "[B,I,E]" style rendering for messages and tests.
std::string format_tags(const TagSeq& tags);

// Transition legality over the extended state space: {START,O,E,S} may be
// followed by {B,S,O,END}, {B,I} may be followed by {I,E}, nothing else.
// prev must not be END and next must not be START.
bool is_legal_transition(int prev, int next);
inline bool is_legal_transition(Tag prev, Tag next) {
  return is_legal_transition(static_cast<int>(prev), static_cast<int>(next));
}
bool legal_from_start(Tag next);
bool legal_to_end(Tag prev);

// True iff every adjacency is legal, including the implicit START before the
// first tag and END after the last. Empty sequences are not well formed.
bool is_well_formed(const TagSeq& tags);

// Half-open token span [begin, end).
struct Span {
  int begin = 0;
  int end = 0;

  int width() const { return end - begin; }
  bool contains(const Span& other) const {
    return begin <= other.begin && other.end <= end;
  }
  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

std::string to_string(const Span& span);

// A typed mention span, the unit of prediction and evaluation. Ordered by
// (type, begin, end), which is also the canonical output order.
struct Mention {
  int begin = 0;
  int end = 0;  // exclusive
  std::string type;

  Span span() const { return {begin, end}; }
  int width() const { return end - begin; }

  friend bool operator==(const Mention&, const Mention&) = default;
  friend std::strong_ordering operator<=>(const Mention& a, const Mention& b) {
    if (auto c = a.type <=> b.type; c != 0) return c;
    if (auto c = a.begin <=> b.begin; c != 0) return c;
    return a.end <=> b.end;
  }
};

std::string to_string(const Mention& mention);

// Maximal B..E runs and S singletons of the sequence, as mentions of the
// given type with indices shifted by span_offset. Throws WellFormednessError
// naming the first offending position when the sequence is malformed.
std::vector<Mention> mentions_from_tags(const TagSeq& tags, int span_offset,
                                        const std::string& entity_type);

// Inverse of mentions_from_tags over one span: every mention becomes a B..E
// run (S when single-token), everything else O. Mentions must lie inside the
// span and be pairwise disjoint; overlap is an error here even when one
// contains the other, because one sequence encodes one nesting level.
TagSeq tags_from_mentions(const std::vector<Mention>& mentions, Span span);

// One training target: the gold tags over one span.
struct GoldRecord {
  Span span;
  TagSeq tags;
};

// Gold tag sequences split by nesting level, per entity type. For each type,
// levels[0] holds a single record covering the whole sentence; levels[l]
// holds one record per multi-token mention at level l, in span order, with
// all-O tags when nothing is nested inside it.
struct LevelizedGold {
  int sentence_len = 0;
  std::map<std::string, std::vector<std::vector<GoldRecord>>> by_type;
};

// Nesting level of each mention, aligned with the input: one more than the
// level of the smallest same-type mention strictly containing it, 1 when
// none. Duplicates share a level; same-type crossing pairs are an error
// that names both spans.
std::vector<int> mention_levels(const std::vector<Mention>& mentions);

// Splits mentions into levels: a mention's level is one more than the level
// of the smallest same-type mention strictly containing it (level 1 when
// none). Duplicates collapse; same-type crossing mentions are an error that
// names both spans. Every type in `types` gets at least the level-1 record.
LevelizedGold levelize(const std::vector<Mention>& mentions, int sentence_len,
                       const std::vector<std::string>& types);

}  // namespace nestseq
