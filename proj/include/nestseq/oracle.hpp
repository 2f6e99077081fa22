#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nestseq/lattice.hpp"
#include "nestseq/objective.hpp"
#include "nestseq/tags.hpp"

namespace nestseq::oracle {

// Brute-force references for the decode and objective modules. Everything
// here scores paths by direct enumeration or textbook recursions written
// independently of the implementations under test; the only shared code is
// the tagging legality predicate. Widths are capped, so this is usable in
// tests and in the field via the check command, never on real workloads.

inline constexpr int kMaxWidth = 10;

struct ScoredPath {
  TagSeq tags;
  double score;
};

// Every 5^width tag sequence over the span, scored with START/END boundary
// terms (-inf when illegal), sorted by descending score. Ties keep the
// enumeration order, which is lexicographic in tag index.
std::vector<ScoredPath> enumerate_paths(const LatticeScores& scores, Span span);

// log sum exp of all legal path scores over the span.
double log_partition(const LatticeScores& scores, Span span);

// Same, excluding every path whose tags equal `excluded` (at most one).
double log_partition_except(const LatticeScores& scores, Span span,
                            const TagSeq& excluded);

// Highest-scoring legal path; rank 2 is the runner-up.
ScoredPath best_path(const LatticeScores& scores, Span span);
ScoredPath second_best_path(const LatticeScores& scores, Span span);

// Reference nested decoder built on enumerate_paths, with its own mention
// extractor (a plain run scanner, no shared extraction code).
std::vector<Mention> nested_decode(std::span<const LatticeScores> scores,
                                   int sentence_len, int max_depth);

// Tag marginals of the span CRF via textbook forward-backward, exp-domain
// with per-position rescaling. Row t, column i = p(tag t at token i).
EmissionMatrix marginals(const LatticeScores& scores, Span span);

// Central finite differences of sentence_loss wrt every emission entry.
std::vector<EmissionMatrix> loss_grad_fd(std::span<const LatticeScores> scores,
                                         const LevelizedGold& gold,
                                         const ObjectiveConfig& config = {},
                                         double step = 1e-5);

// Randomized agreement check between the oracle and the implementations,
// runnable in the field through the CLI. Draws random lattices and random
// nested gold, compares ranked decoding, partition values and gradients.
struct CheckOptions {
  int cases = 1000;
  std::uint64_t seed = 12345;
  // Self-test hook: make the oracle scorer treat one illegal transition as
  // legal, so a healthy implementation must disagree and the check must fail.
  bool corrupt_transition = false;
};

struct CheckReport {
  int cases = 0;
  int failures = 0;
  double max_dp_error = 0.0;    // worst |impl - oracle| over scores and partitions
  double max_grad_error = 0.0;  // worst gradient deviation vs finite differences
  std::string worst_case;       // description of the worst offender
};

CheckReport run_check(const CheckOptions& options);

}  // namespace nestseq::oracle
