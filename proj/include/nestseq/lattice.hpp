#pragma once

#include <Eigen/Core>
#include <string>

#include "nestseq/tags.hpp"

namespace nestseq {

// Emission scores for one sentence: one column per token, one row per tag.
using EmissionMatrix = Eigen::Matrix<double, kNumTags, Eigen::Dynamic>;

// Fixed transition table over the extended state space: 0 for legal pairs,
// -inf for illegal ones. Never learned, shared by every entity type; this is
// what confines probability mass to well-formed IOBES paths.
const Eigen::Matrix<double, kNumStates, kNumStates>& transition_matrix();

// Scores of one entity type over one sentence: learned emissions plus the
// fixed transitions. Immutable after construction; decoding and training
// reuse one instance across every nesting level.
class LatticeScores {
 public:
  // Emissions must be finite everywhere; 5 rows, one column per token.
  LatticeScores(std::string entity_type, EmissionMatrix emissions);

  const std::string& entity_type() const { return entity_type_; }
  int length() const { return static_cast<int>(emissions_.cols()); }
  const EmissionMatrix& emissions() const { return emissions_; }

  double emission(Tag tag, int i) const {
    return emissions_(static_cast<int>(tag), i);
  }
  double transition(int prev, int next) const {
    return transition_matrix()(prev, next);
  }

 private:
  std::string entity_type_;
  EmissionMatrix emissions_;
};

// Single-step score: emission of cur at token i plus the transition from
// prev. prev ranges over tags and START. Bounds-checked.
double phi(const LatticeScores& scores, int prev, Tag cur, int i);
inline double phi(const LatticeScores& scores, Tag prev, Tag cur, int i) {
  return phi(scores, static_cast<int>(prev), cur, i);
}

// Throws BoundsError unless 0 <= begin < end <= length.
void check_span(const LatticeScores& scores, Span span);

// Total score of a tag sequence over a span, including the implicit START
// entry and the final transition into END. -inf iff the sequence is not well
// formed; ShapeError when the length does not match the span width.
double path_score(const LatticeScores& scores, Span span, const TagSeq& tags);

}  // namespace nestseq
