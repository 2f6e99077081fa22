#include "nestseq/tags.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <set>

namespace nestseq {

char tag_letter(Tag tag) {
  static constexpr std::array<char, kNumTags> kLetters = {'B', 'I', 'E', 'S',
                                                          'O'};
  return kLetters[static_cast<int>(tag)];
}

std::string format_tags(const TagSeq& tags) {
  std::string out = "[";
  for (size_t i = 0; i < tags.size(); ++i) {
    if (i > 0) out += ',';
    out += tag_letter(tags[i]);
  }
  out += ']';
  return out;
}

bool is_legal_transition(int prev, int next) {
  if (prev < 0 || prev >= kNumStates || prev == kEndState)
    throw BoundsError(fmt::format("invalid predecessor state {}", prev));
  if (next < 0 || next >= kNumStates || next == kStartState)
    throw BoundsError(fmt::format("invalid successor state {}", next));

  const bool prev_closes = prev == kStartState || prev == static_cast<int>(Tag::O) ||
                           prev == static_cast<int>(Tag::E) ||
                           prev == static_cast<int>(Tag::S);
  if (prev_closes) {
    return next == kEndState || next == static_cast<int>(Tag::B) ||
           next == static_cast<int>(Tag::S) || next == static_cast<int>(Tag::O);
  }
  // prev is B or I: a mention is open and must continue or close.
  return next == static_cast<int>(Tag::I) || next == static_cast<int>(Tag::E);
}

bool legal_from_start(Tag next) {
  return is_legal_transition(kStartState, static_cast<int>(next));
}

bool legal_to_end(Tag prev) {
  return is_legal_transition(static_cast<int>(prev), kEndState);
}

bool is_well_formed(const TagSeq& tags) {
  if (tags.empty()) return false;
  if (!legal_from_start(tags.front())) return false;
  for (size_t i = 1; i < tags.size(); ++i)
    if (!is_legal_transition(tags[i - 1], tags[i])) return false;
  return legal_to_end(tags.back());
}

std::string to_string(const Span& span) {
  return fmt::format("({},{})", span.begin, span.end);
}

std::string to_string(const Mention& mention) {
  return fmt::format("({},{},{})", mention.begin, mention.end, mention.type);
}

std::vector<Mention> mentions_from_tags(const TagSeq& tags, int span_offset,
                                        const std::string& entity_type) {
  if (tags.empty())
    throw WellFormednessError("empty tag sequence");
  if (!legal_from_start(tags.front()))
    throw WellFormednessError(
        fmt::format("malformed tag sequence {}: illegal first tag at position 0",
                    format_tags(tags)));
  for (size_t i = 1; i < tags.size(); ++i) {
    if (!is_legal_transition(tags[i - 1], tags[i]))
      throw WellFormednessError(
          fmt::format("malformed tag sequence {}: illegal transition at position {}",
                      format_tags(tags), i));
  }
  if (!legal_to_end(tags.back()))
    throw WellFormednessError(
        fmt::format("malformed tag sequence {}: dangling mention at position {}",
                    format_tags(tags), tags.size() - 1));

  std::vector<Mention> mentions;
  int open = -1;  // position where the current B..E run started
  for (size_t i = 0; i < tags.size(); ++i) {
    switch (tags[i]) {
      case Tag::B:
        open = static_cast<int>(i);
        break;
      case Tag::E:
        mentions.push_back({span_offset + open,
                            span_offset + static_cast<int>(i) + 1, entity_type});
        open = -1;
        break;
      case Tag::S:
        mentions.push_back({span_offset + static_cast<int>(i),
                            span_offset + static_cast<int>(i) + 1, entity_type});
        break;
      case Tag::I:
      case Tag::O:
        break;
    }
  }
  return mentions;
}

TagSeq tags_from_mentions(const std::vector<Mention>& mentions, Span span) {
  if (span.begin < 0 || span.width() <= 0)
    throw BoundsError(fmt::format("invalid span {}", to_string(span)));

  std::vector<Mention> sorted = mentions;
  std::sort(sorted.begin(), sorted.end(),
            [](const Mention& a, const Mention& b) {
              return std::pair(a.begin, a.end) < std::pair(b.begin, b.end);
            });
  for (size_t i = 0; i < sorted.size(); ++i) {
    const Mention& m = sorted[i];
    if (m.width() <= 0)
      throw BoundsError(fmt::format("mention {} is empty", to_string(m)));
    if (m.begin < span.begin || m.end > span.end)
      throw BoundsError(fmt::format("mention {} outside span {}", to_string(m),
                                    to_string(span)));
    if (i > 0 && sorted[i - 1].end > m.begin)
      throw CrossingEntityError(
          fmt::format("mentions {} and {} overlap within one level",
                      to_string(sorted[i - 1]), to_string(m)));
  }

  TagSeq tags(span.width(), Tag::O);
  for (const Mention& m : sorted) {
    const int b = m.begin - span.begin;
    const int e = m.end - span.begin;
    if (e - b == 1) {
      tags[b] = Tag::S;
    } else {
      tags[b] = Tag::B;
      for (int i = b + 1; i < e - 1; ++i) tags[i] = Tag::I;
      tags[e - 1] = Tag::E;
    }
  }
  return tags;
}

namespace {

// Smallest strictly containing same-type mention, or -1. Containment chains
// are total once crossing pairs are ruled out, so the minimum is unique.
int parent_index(const std::vector<Mention>& mentions, int child) {
  int best = -1;
  for (size_t i = 0; i < mentions.size(); ++i) {
    if (static_cast<int>(i) == child) continue;
    const Span outer = mentions[i].span();
    const Span inner = mentions[child].span();
    if (outer.contains(inner) && outer != inner) {
      if (best < 0 || mentions[best].span().contains(outer)) best = static_cast<int>(i);
    }
  }
  return best;
}

void check_no_crossing(const std::vector<Mention>& ms) {
  for (size_t i = 0; i < ms.size(); ++i) {
    for (size_t j = i + 1; j < ms.size(); ++j) {
      if (ms[i].type != ms[j].type) continue;
      const bool overlap = ms[i].begin < ms[j].end && ms[j].begin < ms[i].end;
      const bool nested = ms[i].span().contains(ms[j].span()) ||
                          ms[j].span().contains(ms[i].span());
      if (overlap && !nested)
        throw CrossingEntityError(
            fmt::format("crossing {} mentions {} and {}", ms[i].type,
                        to_string(ms[i]), to_string(ms[j])));
    }
  }
}

// Levels for one deduplicated same-type group, widest first so parents are
// always assigned before their children.
std::vector<int> group_levels(const std::vector<Mention>& ms) {
  std::vector<int> level(ms.size(), 0);
  std::vector<size_t> order(ms.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return ms[a].width() > ms[b].width();
  });
  for (size_t idx : order) {
    const int parent = parent_index(ms, static_cast<int>(idx));
    level[idx] = parent < 0 ? 1 : level[parent] + 1;
  }
  return level;
}

}  // namespace

std::vector<int> mention_levels(const std::vector<Mention>& mentions) {
  check_no_crossing(mentions);
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < mentions.size(); ++i)
    groups[mentions[i].type].push_back(i);

  std::vector<int> out(mentions.size(), 0);
  for (const auto& [type, indices] : groups) {
    // Collapse duplicates so they share one level.
    std::vector<Mention> unique;
    std::vector<size_t> slot(indices.size());
    for (size_t j = 0; j < indices.size(); ++j) {
      const Mention& m = mentions[indices[j]];
      auto it = std::find(unique.begin(), unique.end(), m);
      if (it == unique.end()) {
        unique.push_back(m);
        it = unique.end() - 1;
      }
      slot[j] = static_cast<size_t>(it - unique.begin());
    }
    const std::vector<int> level = group_levels(unique);
    for (size_t j = 0; j < indices.size(); ++j)
      out[indices[j]] = level[slot[j]];
  }
  return out;
}

LevelizedGold levelize(const std::vector<Mention>& mentions, int sentence_len,
                       const std::vector<std::string>& types) {
  if (sentence_len <= 0)
    throw BoundsError(fmt::format("sentence length {} must be positive", sentence_len));

  LevelizedGold gold;
  gold.sentence_len = sentence_len;

  std::map<std::string, std::set<Mention>> per_type;
  for (const std::string& type : types) per_type[type];
  for (const Mention& m : mentions) {
    if (m.begin < 0 || m.end > sentence_len || m.width() <= 0)
      throw BoundsError(fmt::format("mention {} outside sentence of length {}",
                                    to_string(m), sentence_len));
    if (!per_type.count(m.type))
      throw ConfigError(fmt::format("mention {} has a type outside the type set",
                                    to_string(m)));
    per_type[m.type].insert(m);  // set semantics: duplicates collapse
  }

  for (auto& [type, mention_set] : per_type) {
    std::vector<Mention> ms(mention_set.begin(), mention_set.end());
    check_no_crossing(ms);
    const std::vector<int> level = group_levels(ms);
    const int deepest =
        level.empty() ? 0 : *std::max_element(level.begin(), level.end());

    std::vector<std::vector<GoldRecord>> levels;

    // Level 1 always exists and covers the whole sentence.
    std::vector<Mention> top;
    for (size_t i = 0; i < ms.size(); ++i)
      if (level[i] == 1) top.push_back(ms[i]);
    levels.push_back({GoldRecord{{0, sentence_len},
                                 tags_from_mentions(top, {0, sentence_len})}});

    // Level l+1 gets one record per multi-token mention at level l.
    for (int l = 1; l <= deepest; ++l) {
      std::vector<GoldRecord> records;
      std::vector<size_t> hosts;
      for (size_t i = 0; i < ms.size(); ++i)
        if (level[i] == l && ms[i].width() > 1) hosts.push_back(i);
      std::sort(hosts.begin(), hosts.end(), [&](size_t a, size_t b) {
        return ms[a].span() < ms[b].span();
      });
      for (size_t host : hosts) {
        std::vector<Mention> children;
        for (size_t i = 0; i < ms.size(); ++i)
          if (level[i] == l + 1 &&
              parent_index(ms, static_cast<int>(i)) == static_cast<int>(host))
            children.push_back(ms[i]);
        records.push_back(
            {ms[host].span(), tags_from_mentions(children, ms[host].span())});
      }
      if (!records.empty()) levels.push_back(std::move(records));
    }

    gold.by_type[type] = std::move(levels);
  }

  return gold;
}

}  // namespace nestseq
