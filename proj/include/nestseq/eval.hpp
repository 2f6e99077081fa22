#pragma once

#include <string>
#include <vector>

#include "nestseq/corpus.hpp"
#include "nestseq/tags.hpp"

namespace nestseq {

// One ratio with its counts kept around; value is 0 when total is 0.
struct RatioScore {
  long long matched = 0;
  long long total = 0;
  double value = 0.0;
};

struct EvalReport {
  long long gold_mentions = 0;
  long long predicted_mentions = 0;
  long long matched = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Index 0 = level 1. Recall buckets mentions by gold nesting level,
  // precision by the predictions' own nesting level.
  std::vector<RatioScore> recall_by_level;
  std::vector<RatioScore> precision_by_level;
};

// Micro-averaged exact-match scores: a prediction counts iff (begin, end,
// type) all agree with a gold mention of the same document. Inputs align by
// index and must have equal size.
EvalReport evaluate(const std::vector<Document>& gold,
                    const std::vector<std::vector<Mention>>& predicted);

std::string to_text(const EvalReport& report);
std::string to_json_string(const EvalReport& report);

}  // namespace nestseq
