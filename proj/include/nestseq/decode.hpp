#pragma once

#include <limits>
#include <span>
#include <vector>

#include "nestseq/lattice.hpp"
#include "nestseq/tags.hpp"

namespace nestseq {

struct DecodedPath {
  TagSeq tags;
  double score = 0.0;
};

inline constexpr int kUnlimitedDepth = std::numeric_limits<int>::max();

// Span-length counters backing the work-bound checks: every span a dynamic
// program runs over adds its width to decoded_tokens exactly once.
struct DecodeStats {
  long long decoded_spans = 0;
  long long decoded_tokens = 0;
  int deepest_level = 0;
};

// Highest-scoring well-formed path over the span. Ties resolve to the
// smallest tag index at every choice point, deterministically.
DecodedPath viterbi_best(const LatticeScores& scores, Span span);

// Highest-scoring well-formed path whose tags differ from best.tags. Exact:
// every candidate deviates from best at some position, so maximizing
// forward-Viterbi plus backward-completion scores over the deviation cells
// (position, tag != best tag there) finds the runner-up in one linear scan.
// Throws ConfigError when the span admits only one legal path, which cannot
// happen for width >= 1 here (O and S always compete) but guards degenerate
// call sites.
DecodedPath viterbi_second_best(const LatticeScores& scores, Span span,
                                const DecodedPath& best);

// Outside-to-inside nested decoding. Per type: Viterbi over the sentence,
// then recursively a runner-up search inside every extracted multi-token
// mention, reusing the one emission matrix throughout. Levels beyond
// max_depth are not decoded. Mentions come back deduplicated and sorted by
// (type, begin, end).
std::vector<Mention> nested_decode(std::span<const LatticeScores> scores,
                                   int sentence_len,
                                   int max_depth = kUnlimitedDepth,
                                   DecodeStats* stats = nullptr);

}  // namespace nestseq
