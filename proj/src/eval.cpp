#include "nestseq/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <set>

namespace nestseq {

namespace {

void bump(std::vector<RatioScore>& buckets, int level, bool hit) {
  if (static_cast<int>(buckets.size()) < level) buckets.resize(level);
  ++buckets[level - 1].total;
  if (hit) ++buckets[level - 1].matched;
}

void finish(std::vector<RatioScore>& buckets) {
  for (RatioScore& b : buckets)
    b.value = b.total == 0 ? 0.0
                           : static_cast<double>(b.matched) /
                                 static_cast<double>(b.total);
}

}  // namespace

EvalReport evaluate(const std::vector<Document>& gold,
                    const std::vector<std::vector<Mention>>& predicted) {
  if (gold.size() != predicted.size())
    throw ShapeError(fmt::format("{} gold documents vs {} predictions",
                                 gold.size(), predicted.size()));

  EvalReport report;
  for (size_t d = 0; d < gold.size(); ++d) {
    const std::set<Mention> gold_set(gold[d].mentions.begin(),
                                     gold[d].mentions.end());
    const std::set<Mention> pred_set(predicted[d].begin(), predicted[d].end());
    report.gold_mentions += static_cast<long long>(gold_set.size());
    report.predicted_mentions += static_cast<long long>(pred_set.size());
    for (const Mention& m : pred_set)
      if (gold_set.count(m)) ++report.matched;

    const std::vector<Mention> gold_ms(gold_set.begin(), gold_set.end());
    const std::vector<int> gold_levels = mention_levels(gold_ms);
    for (size_t i = 0; i < gold_ms.size(); ++i)
      bump(report.recall_by_level, gold_levels[i],
           pred_set.count(gold_ms[i]) > 0);

    const std::vector<Mention> pred_ms(pred_set.begin(), pred_set.end());
    const std::vector<int> pred_levels = mention_levels(pred_ms);
    for (size_t i = 0; i < pred_ms.size(); ++i)
      bump(report.precision_by_level, pred_levels[i],
           gold_set.count(pred_ms[i]) > 0);
  }

  report.precision =
      report.predicted_mentions == 0
          ? 0.0
          : static_cast<double>(report.matched) /
                static_cast<double>(report.predicted_mentions);
  report.recall = report.gold_mentions == 0
                      ? 0.0
                      : static_cast<double>(report.matched) /
                            static_cast<double>(report.gold_mentions);
  report.f1 = report.precision + report.recall == 0.0
                  ? 0.0
                  : 2.0 * report.precision * report.recall /
                        (report.precision + report.recall);
  finish(report.recall_by_level);
  finish(report.precision_by_level);
  return report;
}

std::string to_text(const EvalReport& report) {
  std::string out;
  out += fmt::format("mentions   gold {}  predicted {}  matched {}\n",
                     report.gold_mentions, report.predicted_mentions,
                     report.matched);
  out += fmt::format("precision  {:.4f}\nrecall     {:.4f}\nf1         {:.4f}\n",
                     report.precision, report.recall, report.f1);
  const size_t levels = std::max(report.recall_by_level.size(),
                                 report.precision_by_level.size());
  if (levels > 0) {
    out += fmt::format("{:<6} {:>18} {:>18}\n", "level", "recall", "precision");
    for (size_t l = 0; l < levels; ++l) {
      const RatioScore r = l < report.recall_by_level.size()
                               ? report.recall_by_level[l]
                               : RatioScore{};
      const RatioScore p = l < report.precision_by_level.size()
                               ? report.precision_by_level[l]
                               : RatioScore{};
      out += fmt::format("{:<6} {:>8.4f} {:>4}/{:<4} {:>8.4f} {:>4}/{:<4}\n",
                         l + 1, r.value, r.matched, r.total, p.value,
                         p.matched, p.total);
    }
  }
  return out;
}

std::string to_json_string(const EvalReport& report) {
  using json = nlohmann::ordered_json;
  const auto ratio = [](const RatioScore& r) {
    return json{{"matched", r.matched}, {"total", r.total}, {"value", r.value}};
  };
  json obj{{"gold", report.gold_mentions},
           {"predicted", report.predicted_mentions},
           {"matched", report.matched},
           {"precision", report.precision},
           {"recall", report.recall},
           {"f1", report.f1}};
  obj["levels"] = json::array();
  const size_t levels = std::max(report.recall_by_level.size(),
                                 report.precision_by_level.size());
  for (size_t l = 0; l < levels; ++l) {
    json entry{{"level", l + 1}};
    entry["recall"] = ratio(l < report.recall_by_level.size()
                                ? report.recall_by_level[l]
                                : RatioScore{});
    entry["precision"] = ratio(l < report.precision_by_level.size()
                                   ? report.precision_by_level[l]
                                   : RatioScore{});
    obj["levels"].push_back(entry);
  }
  return obj.dump(2);
}

}  // namespace nestseq
