#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "nestseq/decode.hpp"
#include "nestseq/lattice.hpp"
#include "nestseq/tags.hpp"

namespace nestseq {

// Which path is removed from the normalizer of each nested-level term.
enum class ExcludedPath {
  kGoldParent,  // the parent mention's own B..E tagging (the exact objective)
  kModelBest,   // whatever the current model ranks first inside the span
};

struct ObjectiveConfig {
  ExcludedPath excluded_path = ExcludedPath::kGoldParent;
  // When false, spans of multi-token mentions with nothing nested inside
  // them contribute no term (their all-O records are skipped).
  bool include_empty_nested_spans = true;
  // When false, only the level-1 terms remain: the standard flat-CRF
  // objective, kept for the ablation.
  bool nested_terms = true;
};

struct LossTerm {
  std::string entity_type;
  int level = 0;  // 1-based
  Span span;
  double log_prob = 0.0;  // always <= 0
};

struct LossBreakdown {
  double total = 0.0;  // negated log-likelihood, >= 0
  std::map<std::string, double> log_prob_per_type;
  std::vector<LossTerm> terms;
};

// log sum exp over every well-formed path of the span, with START/END
// boundary terms. Never overflows or underflows for finite emissions.
double log_partition(const LatticeScores& scores, Span span);

// log sum exp over every well-formed path except best.tags. Computed by a
// second accumulator that carries "paths sharing the excluded prefix, minus
// the prefix itself" alongside the ordinary forward pass; never by
// exponentiating and subtracting, which cancels catastrophically once the
// best path dominates. Expects best.tags well formed over the span.
double log_partition_except_best(const LatticeScores& scores, Span span,
                                 const DecodedPath& best);

// Negated log-likelihood of the levelized gold: per type, a standard CRF
// term over the sentence plus one runner-up term per nested record, whose
// normalizer excludes the enclosing mention's own tagging.
LossBreakdown sentence_loss(std::span<const LatticeScores> scores,
                            const LevelizedGold& gold,
                            const ObjectiveConfig& config = {});

// Exact d(total)/d(emissions) per type, by reverse accumulation over the
// partition recurrences. Breakdown available through `loss` when wanted.
std::vector<EmissionMatrix> sentence_loss_grad(
    std::span<const LatticeScores> scores, const LevelizedGold& gold,
    const ObjectiveConfig& config = {}, LossBreakdown* loss = nullptr);

}  // namespace nestseq
