#include "nestseq/lattice.hpp"

#include <fmt/format.h>

#include <limits>

namespace nestseq {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

const Eigen::Matrix<double, kNumStates, kNumStates>& transition_matrix() {
  static const Eigen::Matrix<double, kNumStates, kNumStates> table = [] {
    Eigen::Matrix<double, kNumStates, kNumStates> t;
    t.setConstant(kNegInf);
    for (int prev = 0; prev < kNumStates; ++prev) {
      if (prev == kEndState) continue;
      for (int next = 0; next < kNumStates; ++next) {
        if (next == kStartState) continue;
        if (is_legal_transition(prev, next)) t(prev, next) = 0.0;
      }
    }
    return t;
  }();
  return table;
}

LatticeScores::LatticeScores(std::string entity_type, EmissionMatrix emissions)
    : entity_type_(std::move(entity_type)), emissions_(std::move(emissions)) {
  if (emissions_.cols() == 0)
    throw ShapeError("emission matrix has no columns");
  if (!emissions_.allFinite())
    throw ShapeError(fmt::format("non-finite emission score for type {}",
                                 entity_type_));
}

double phi(const LatticeScores& scores, int prev, Tag cur, int i) {
  if (prev < 0 || prev >= kNumStates || prev == kEndState)
    throw BoundsError(fmt::format("invalid predecessor state {}", prev));
  if (i < 0 || i >= scores.length())
    throw BoundsError(fmt::format("token index {} outside [0,{})", i,
                                  scores.length()));
  return scores.emission(cur, i) +
         scores.transition(prev, static_cast<int>(cur));
}

void check_span(const LatticeScores& scores, Span span) {
  if (span.begin < 0 || span.end > scores.length() || span.width() <= 0)
    throw BoundsError(fmt::format("span {} invalid for sentence of length {}",
                                  to_string(span), scores.length()));
}

double path_score(const LatticeScores& scores, Span span, const TagSeq& tags) {
  check_span(scores, span);
  if (static_cast<int>(tags.size()) != span.width())
    throw ShapeError(fmt::format("{} tags for span {} of width {}", tags.size(),
                                 to_string(span), span.width()));

  double total = phi(scores, kStartState, tags.front(), span.begin);
  for (int i = 1; i < span.width(); ++i)
    total += phi(scores, static_cast<int>(tags[i - 1]), tags[i], span.begin + i);
  total += scores.transition(static_cast<int>(tags.back()), kEndState);
  return total;
}

}  // namespace nestseq
