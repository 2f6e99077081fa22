#include "nestseq/decode.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>

namespace nestseq {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

DecodedPath viterbi_best(const LatticeScores& scores, Span span) {
  check_span(scores, span);
  const int w = span.width();
  const auto& A = transition_matrix();
  const auto& P = scores.emissions();

  Eigen::MatrixXd chart(kNumTags, w);
  Eigen::Matrix<int, kNumTags, Eigen::Dynamic> back(kNumTags, w);

  for (int c = 0; c < kNumTags; ++c)
    chart(c, 0) = A(kStartState, c) + P(c, span.begin);
  back.col(0).setConstant(kStartState);

  for (int t = 1; t < w; ++t) {
    for (int c = 0; c < kNumTags; ++c) {
      // Strict > keeps the first maximum: the smallest predecessor tag.
      double best = kNegInf;
      int arg = 0;
      for (int p = 0; p < kNumTags; ++p) {
        const double cand = chart(p, t - 1) + A(p, c);
        if (cand > best) {
          best = cand;
          arg = p;
        }
      }
      chart(c, t) = best + P(c, span.begin + t);
      back(c, t) = arg;
    }
  }

  double best = kNegInf;
  int last = 0;
  for (int c = 0; c < kNumTags; ++c) {
    const double cand = chart(c, w - 1) + A(c, kEndState);
    if (cand > best) {
      best = cand;
      last = c;
    }
  }

  DecodedPath path;
  path.score = best;
  path.tags.resize(w);
  int cur = last;
  for (int t = w - 1; t >= 0; --t) {
    path.tags[t] = static_cast<Tag>(cur);
    cur = back(cur, t);
  }
  return path;
}

namespace {

// Legal-move lists read off the transition matrix once. Legal moves score
// exactly 0 there, so iterating only the listed neighbours and dropping the
// A terms is an identity rewrite that skips the -inf arithmetic of dense
// loops. Lists are in ascending tag order, which keeps the documented
// smallest-tag tie-breaking of first-maximum scans.
struct TransitionTable {
  std::array<std::array<int, kNumTags>, kNumStates> succ{};
  std::array<int, kNumStates> succ_count{};
  std::array<std::array<int, kNumTags>, kNumTags> pred{};  // tag rows only
  std::array<int, kNumTags> pred_count{};
};

const TransitionTable& transition_table() {
  static const TransitionTable table = [] {
    TransitionTable t{};
    const auto& A = transition_matrix();
    for (int p = 0; p < kNumStates; ++p)
      for (int c = 0; c < kNumTags; ++c)
        if (A(p, c) == 0.0) {
          t.succ[p][t.succ_count[p]++] = c;
          if (p < kNumTags) t.pred[c][t.pred_count[c]++] = p;
        }
    return t;
  }();
  return table;
}

// Scratch tables for the runner-up search. The nested decoder calls it once
// per extracted span, and the spans are short, so per-call allocations would
// dominate; reusing one workspace across a sentence keeps the search
// allocation-free in the steady state.
struct SecondBestWorkspace {
  Eigen::MatrixXd fwd;  // best prefix score ending at (tag, t)
  Eigen::MatrixXd h;    // best completion score from (tag, t) to END
  Eigen::Matrix<int, kNumTags, Eigen::Dynamic> back;  // fwd argmax predecessor
  TagSeq parent_tags;
};

// Best well-formed path over the span whose tags differ from best. Exact by
// a deviation argument: any such path agrees with best up to some position t
// where it sits in a tag c != best[t], and the highest score achievable
// through cell (c, t) is fwd(c, t) + h(c, t). Maximizing that sum over all
// deviation cells therefore yields the runner-up score, and following the
// forward backpointers into the cell plus the completion table out of it
// reconstructs a path achieving it. Ties pick the earliest deviation
// position, then the smallest tag.
DecodedPath second_best_impl(const LatticeScores& scores, Span span,
                             const TagSeq& best, SecondBestWorkspace& ws) {
  const int w = span.width();
  const auto& A = transition_matrix();
  const auto& P = scores.emissions();
  const TransitionTable& moves = transition_table();

  if (ws.h.cols() < w) {
    ws.h.resize(kNumTags, w);
    ws.fwd.resize(kNumTags, w);
    ws.back.resize(kNumTags, w);
  }
  auto& h = ws.h;
  auto& fwd = ws.fwd;
  auto& back = ws.back;

  // Completion scores: best path from (c, t) to END, emissions beyond t only.
  for (int c = 0; c < kNumTags; ++c) h(c, w - 1) = A(c, kEndState);
  for (int t = w - 2; t >= 0; --t) {
    for (int c = 0; c < kNumTags; ++c) {
      double m = kNegInf;
      for (int k = 0; k < moves.succ_count[c]; ++k) {
        const int n = moves.succ[c][k];
        m = std::max(m, P(n, span.begin + t + 1) + h(n, t + 1));
      }
      h(c, t) = m;
    }
  }

  // Prefix scores with argmax backpointers, smallest predecessor on ties.
  for (int c = 0; c < kNumTags; ++c) {
    fwd(c, 0) = A(kStartState, c) + P(c, span.begin);
    back(c, 0) = kStartState;
  }
  for (int t = 1; t < w; ++t) {
    for (int c = 0; c < kNumTags; ++c) {
      double m = kNegInf;
      int arg = 0;
      for (int k = 0; k < moves.pred_count[c]; ++k) {
        const int p = moves.pred[c][k];
        if (fwd(p, t - 1) > m) {
          m = fwd(p, t - 1);
          arg = p;
        }
      }
      fwd(c, t) = m + P(c, span.begin + t);
      back(c, t) = arg;
    }
  }

  int dev_t = -1;
  int dev_c = -1;
  double runner_up = kNegInf;
  for (int t = 0; t < w; ++t) {
    for (int c = 0; c < kNumTags; ++c) {
      if (static_cast<Tag>(c) == best[t]) continue;
      const double f = fwd(c, t) + h(c, t);
      if (f > runner_up) {
        runner_up = f;
        dev_t = t;
        dev_c = c;
      }
    }
  }
  // Unreachable for this tag set: O/S always give two legal paths per span.
  if (runner_up == kNegInf)
    throw ConfigError(fmt::format("span {} admits no runner-up path",
                                  to_string(span)));

  TagSeq tags(w);
  tags[dev_t] = static_cast<Tag>(dev_c);
  for (int t = dev_t, cur = dev_c; t > 0; --t) {
    cur = back(cur, t);
    tags[t - 1] = static_cast<Tag>(cur);
  }
  for (int t = dev_t + 1, cur = dev_c; t < w; ++t) {
    double m = kNegInf;
    int arg = 0;
    for (int k = 0; k < moves.succ_count[cur]; ++k) {
      const int n = moves.succ[cur][k];
      const double cand = P(n, span.begin + t) + h(n, t);
      if (cand > m) {
        m = cand;
        arg = n;
      }
    }
    cur = arg;
    tags[t] = static_cast<Tag>(cur);
  }
  return {std::move(tags), runner_up};
}

}  // namespace

DecodedPath viterbi_second_best(const LatticeScores& scores, Span span,
                                const DecodedPath& best) {
  check_span(scores, span);
  if (static_cast<int>(best.tags.size()) != span.width())
    throw ShapeError(fmt::format("best path has {} tags for span {}",
                                 best.tags.size(), to_string(span)));
  SecondBestWorkspace ws;
  return second_best_impl(scores, span, best.tags, ws);
}

namespace {

void detect_nested(const LatticeScores& scores, const Mention& host, int level,
                   int max_depth, std::set<Mention>& found, DecodeStats* stats,
                   SecondBestWorkspace& ws) {
  if (level > max_depth) return;
  const Span span = host.span();

  // The best path inside an extracted mention's span is the mention's own
  // B..E tagging (any better path would splice into the parent path and beat
  // it, with legality forcing a contradiction at the span edges). So only
  // the runner-up needs searching here. Hosts are always multi-token.
  ws.parent_tags.assign(span.width(), Tag::I);
  ws.parent_tags.front() = Tag::B;
  ws.parent_tags.back() = Tag::E;

  const DecodedPath second = second_best_impl(scores, span, ws.parent_tags, ws);
  if (stats != nullptr) {
    ++stats->decoded_spans;
    stats->decoded_tokens += span.width();
    stats->deepest_level = std::max(stats->deepest_level, level);
  }
  if (!std::isfinite(second.score)) return;

  for (const Mention& m :
       mentions_from_tags(second.tags, span.begin, scores.entity_type())) {
    if (!found.insert(m).second) continue;
    // A full-span mention could only come from the parent tagging itself,
    // which is excluded; guard anyway so nothing can ever recurse in place.
    if (m.width() > 1 && m.span() != span)
      detect_nested(scores, m, level + 1, max_depth, found, stats, ws);
  }
}

}  // namespace

std::vector<Mention> nested_decode(std::span<const LatticeScores> scores,
                                   int sentence_len, int max_depth,
                                   DecodeStats* stats) {
  if (max_depth < 1)
    throw ConfigError(fmt::format("max depth {} must be >= 1", max_depth));
  for (const LatticeScores& s : scores)
    if (s.length() != sentence_len)
      throw ShapeError(fmt::format(
          "lattice for type {} has length {}, sentence has {} tokens",
          s.entity_type(), s.length(), sentence_len));

  std::set<Mention> found;
  SecondBestWorkspace ws;
  for (const LatticeScores& s : scores) {
    const Span whole{0, sentence_len};
    const DecodedPath best = viterbi_best(s, whole);
    if (stats != nullptr) {
      ++stats->decoded_spans;
      stats->decoded_tokens += sentence_len;
      stats->deepest_level = std::max(stats->deepest_level, 1);
    }
    for (const Mention& m :
         mentions_from_tags(best.tags, 0, s.entity_type())) {
      found.insert(m);
      if (m.width() > 1) detect_nested(s, m, 2, max_depth, found, stats, ws);
    }
  }
  return {found.begin(), found.end()};
}

}  // namespace nestseq
