#include "nestseq/oracle.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "nestseq/decode.hpp"
#include "nestseq/log.hpp"

namespace nestseq::oracle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Transition pair the self-test corruption treats as legal.
constexpr int kCorruptPrev = static_cast<int>(Tag::O);
constexpr int kCorruptNext = static_cast<int>(Tag::I);

bool legal(int prev, int next, bool corrupt) {
  if (corrupt && prev == kCorruptPrev && next == kCorruptNext) return true;
  return is_legal_transition(prev, next);
}

// Direct sum over the span, nothing shared with lattice::path_score.
double score_path(const LatticeScores& scores, Span span, const TagSeq& tags,
                  bool corrupt) {
  if (!legal(kStartState, static_cast<int>(tags.front()), corrupt))
    return kNegInf;
  double total = scores.emission(tags.front(), span.begin);
  for (size_t i = 1; i < tags.size(); ++i) {
    if (!legal(static_cast<int>(tags[i - 1]), static_cast<int>(tags[i]),
               corrupt))
      return kNegInf;
    total += scores.emission(tags[i], span.begin + static_cast<int>(i));
  }
  if (!legal(static_cast<int>(tags.back()), kEndState, corrupt)) return kNegInf;
  return total;
}

std::vector<ScoredPath> enumerate_impl(const LatticeScores& scores, Span span,
                                       bool corrupt) {
  check_span(scores, span);
  const int width = span.width();
  if (width > kMaxWidth)
    throw ConfigError(fmt::format(
        "oracle enumeration capped at width {}, got {}", kMaxWidth, width));

  std::vector<ScoredPath> paths;
  paths.reserve(static_cast<size_t>(std::pow(kNumTags, width)));
  TagSeq tags(width, Tag::B);
  std::vector<int> digits(width, 0);
  for (;;) {
    for (int i = 0; i < width; ++i) tags[i] = static_cast<Tag>(digits[i]);
    paths.push_back({tags, score_path(scores, span, tags, corrupt)});
    int pos = width - 1;
    while (pos >= 0 && ++digits[pos] == kNumTags) digits[pos--] = 0;
    if (pos < 0) break;
  }
  // Ties keep the lexicographic enumeration order.
  std::stable_sort(paths.begin(), paths.end(),
                   [](const ScoredPath& a, const ScoredPath& b) {
                     return a.score > b.score;
                   });
  return paths;
}

double lse_finite(const std::vector<double>& values) {
  double mx = kNegInf;
  for (double v : values) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return kNegInf;
  double sum = 0.0;
  for (double v : values)
    if (std::isfinite(v)) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

// Plain left-to-right run scanner, written apart from mentions_from_tags.
std::vector<Mention> scan_mentions(const TagSeq& tags, int offset,
                                   const std::string& type) {
  std::vector<Mention> out;
  size_t i = 0;
  while (i < tags.size()) {
    if (tags[i] == Tag::S) {
      out.push_back({offset + static_cast<int>(i),
                     offset + static_cast<int>(i) + 1, type});
      ++i;
    } else if (tags[i] == Tag::B) {
      size_t j = i + 1;
      while (j < tags.size() && tags[j] == Tag::I) ++j;
      out.push_back({offset + static_cast<int>(i),
                     offset + static_cast<int>(j) + 1, type});
      i = j + 1;
    } else {
      ++i;
    }
  }
  return out;
}

void recurse(const LatticeScores& scores, Span span, const TagSeq& parent_tags,
             int level, int max_depth, std::set<Mention>& found) {
  if (level > max_depth) return;
  const auto ranked = enumerate_impl(scores, span, false);
  // First path differing from the parent tagging = the runner-up search.
  const ScoredPath* second = nullptr;
  for (const auto& p : ranked) {
    if (p.tags != parent_tags) {
      second = &p;
      break;
    }
  }
  if (second == nullptr || !std::isfinite(second->score)) return;
  for (const Mention& m :
       scan_mentions(second->tags, span.begin, scores.entity_type())) {
    if (!found.insert(m).second) continue;
    if (m.width() > 1 && m.span() != span)
      recurse(scores, m.span(), tags_from_mentions({m}, m.span()), level + 1,
              max_depth, found);
  }
}

}  // namespace

std::vector<ScoredPath> enumerate_paths(const LatticeScores& scores,
                                        Span span) {
  return enumerate_impl(scores, span, false);
}

double log_partition(const LatticeScores& scores, Span span) {
  std::vector<double> values;
  for (const auto& p : enumerate_paths(scores, span)) values.push_back(p.score);
  return lse_finite(values);
}

double log_partition_except(const LatticeScores& scores, Span span,
                            const TagSeq& excluded) {
  std::vector<double> values;
  for (const auto& p : enumerate_paths(scores, span))
    if (p.tags != excluded) values.push_back(p.score);
  return lse_finite(values);
}

ScoredPath best_path(const LatticeScores& scores, Span span) {
  return enumerate_paths(scores, span).front();
}

ScoredPath second_best_path(const LatticeScores& scores, Span span) {
  return enumerate_paths(scores, span)[1];
}

std::vector<Mention> nested_decode(std::span<const LatticeScores> scores,
                                   int sentence_len, int max_depth) {
  std::set<Mention> found;
  for (const LatticeScores& s : scores) {
    if (max_depth < 1) break;
    const Span whole{0, sentence_len};
    const auto ranked = enumerate_impl(s, whole, false);
    const ScoredPath& best = ranked.front();
    for (const Mention& m : scan_mentions(best.tags, 0, s.entity_type())) {
      found.insert(m);
      if (m.width() > 1)
        recurse(s, m.span(), tags_from_mentions({m}, m.span()), 2, max_depth,
                found);
    }
  }
  return {found.begin(), found.end()};
}

EmissionMatrix marginals(const LatticeScores& scores, Span span) {
  check_span(scores, span);
  const int w = span.width();
  const auto& A = transition_matrix();

  // Exp-domain forward-backward with per-position rescaling. Fine for the
  // moderate emission magnitudes the oracle contract allows.
  Eigen::MatrixXd fwd(kNumTags, w), bwd(kNumTags, w);
  for (int c = 0; c < kNumTags; ++c)
    fwd(c, 0) = std::isfinite(A(kStartState, c))
                    ? std::exp(scores.emissions()(c, span.begin))
                    : 0.0;
  fwd.col(0) /= fwd.col(0).sum();
  for (int t = 1; t < w; ++t) {
    for (int c = 0; c < kNumTags; ++c) {
      double acc = 0.0;
      for (int p = 0; p < kNumTags; ++p)
        if (std::isfinite(A(p, c))) acc += fwd(p, t - 1);
      fwd(c, t) = acc * std::exp(scores.emissions()(c, span.begin + t));
    }
    fwd.col(t) /= fwd.col(t).sum();
  }

  for (int c = 0; c < kNumTags; ++c)
    bwd(c, w - 1) = std::isfinite(A(c, kEndState)) ? 1.0 : 0.0;
  for (int t = w - 2; t >= 0; --t) {
    for (int c = 0; c < kNumTags; ++c) {
      double acc = 0.0;
      for (int n = 0; n < kNumTags; ++n)
        if (std::isfinite(A(c, n)))
          acc += std::exp(scores.emissions()(n, span.begin + t + 1)) *
                 bwd(n, t + 1);
      bwd(c, t) = acc;
    }
    bwd.col(t) /= bwd.col(t).maxCoeff();
  }

  EmissionMatrix out(kNumTags, w);
  for (int t = 0; t < w; ++t) {
    Eigen::Matrix<double, kNumTags, 1> col =
        fwd.col(t).cwiseProduct(bwd.col(t));
    out.col(t) = col / col.sum();
  }
  return out;
}

std::vector<EmissionMatrix> loss_grad_fd(std::span<const LatticeScores> scores,
                                         const LevelizedGold& gold,
                                         const ObjectiveConfig& config,
                                         double step) {
  std::vector<EmissionMatrix> grads;
  for (size_t k = 0; k < scores.size(); ++k) {
    const int n = scores[k].length();
    EmissionMatrix g(kNumTags, n);
    for (int c = 0; c < kNumTags; ++c) {
      for (int i = 0; i < n; ++i) {
        double plus, minus;
        for (double sign : {1.0, -1.0}) {
          std::vector<LatticeScores> bumped;
          bumped.reserve(scores.size());
          for (size_t j = 0; j < scores.size(); ++j) {
            EmissionMatrix em = scores[j].emissions();
            if (j == k) em(c, i) += sign * step;
            bumped.emplace_back(scores[j].entity_type(), std::move(em));
          }
          (sign > 0 ? plus : minus) = sentence_loss(bumped, gold, config).total;
        }
        g(c, i) = (plus - minus) / (2.0 * step);
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

namespace {

// Random laminar same-type mention family for the check harness.
std::vector<Mention> random_gold(std::mt19937_64& rng, int n,
                                 const std::vector<std::string>& types) {
  std::vector<Mention> out;
  std::uniform_int_distribution<int> coin(0, 1);
  for (const std::string& type : types) {
    if (n >= 2 && coin(rng)) {
      std::uniform_int_distribution<int> start_d(0, n - 2);
      const int s = start_d(rng);
      std::uniform_int_distribution<int> end_d(s + 2, n);
      const int e = std::min(end_d(rng), n);
      out.push_back({s, e, type});
      // Maybe nest one inside, and one more inside that.
      Span host{s, e};
      for (int depth = 0; depth < 2 && host.width() >= 2 && coin(rng); ++depth) {
        std::uniform_int_distribution<int> is_d(host.begin, host.end - 1);
        const int is = is_d(rng);
        std::uniform_int_distribution<int> ie_d(is + 1, host.end);
        int ie = ie_d(rng);
        if (is == host.begin && ie == host.end) {
          if (ie - is <= 1) break;
          --ie;
        }
        out.push_back({is, ie, type});
        host = {is, ie};
      }
    }
    if (n >= 1 && coin(rng)) {
      std::uniform_int_distribution<int> pos(0, n - 1);
      const int p = pos(rng);
      out.push_back({p, p + 1, type});
    }
  }
  return out;
}

struct Tracker {
  CheckReport report;

  // NaN counts as a failure and sticks as the running maximum.
  void dp(double err, const std::string& what, double tol) {
    if (!(err <= report.max_dp_error)) report.max_dp_error = err;
    if (!(err <= tol)) {
      ++report.failures;
      report.worst_case = what;
    }
  }
  void grad(double err, const std::string& what, double tol) {
    if (!(err <= report.max_grad_error)) report.max_grad_error = err;
    if (!(err <= tol)) {
      ++report.failures;
      report.worst_case = what;
    }
  }
  void structural(bool ok, const std::string& what) {
    if (!ok) {
      ++report.failures;
      report.worst_case = what;
    }
  }
};

}  // namespace

CheckReport run_check(const CheckOptions& options) {
  constexpr double kDpTol = 1e-9;
  constexpr double kGradTol = 1e-6;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> emit(-5.0, 5.0);
  std::uniform_int_distribution<int> len(1, 7);

  Tracker t;
  t.report.cases = options.cases;
  const std::vector<std::string> types = {"x", "y"};

  for (int case_id = 0; case_id < options.cases; ++case_id) {
    const int n = len(rng);
    std::vector<LatticeScores> scores;
    for (const std::string& type : types) {
      EmissionMatrix em(kNumTags, n);
      for (int c = 0; c < kNumTags; ++c)
        for (int i = 0; i < n; ++i) em(c, i) = emit(rng);
      scores.emplace_back(type, std::move(em));
    }
    const LatticeScores& lat = scores[0];
    const Span whole{0, n};
    const auto tag = [&](const std::string& what) {
      return fmt::format("case {} (n={}): {}", case_id, n, what);
    };

    const auto ranked = enumerate_impl(lat, whole, options.corrupt_transition);
    const DecodedPath best = viterbi_best(lat, whole);
    t.structural(best.tags == ranked[0].tags, tag("best path tags"));
    t.dp(std::abs(best.score - ranked[0].score), tag("best path score"), kDpTol);

    if (ranked.size() > 1 && std::isfinite(ranked[1].score)) {
      const DecodedPath second = viterbi_second_best(lat, whole, best);
      t.structural(second.tags == ranked[1].tags, tag("second-best tags"));
      t.dp(std::abs(second.score - ranked[1].score), tag("second-best score"),
           kDpTol);
    }

    std::vector<double> all, rest;
    for (const auto& p : ranked) {
      all.push_back(p.score);
      if (p.tags != best.tags) rest.push_back(p.score);
    }
    t.dp(std::abs(nestseq::log_partition(lat, whole) - lse_finite(all)),
         tag("log partition"), kDpTol);
    t.dp(std::abs(nestseq::log_partition_except_best(lat, whole, best) -
                  lse_finite(rest)),
         tag("log partition except best"), kDpTol);

    if (!options.corrupt_transition) {
      const auto impl_mentions = nestseq::nested_decode(scores, n);
      const auto ref_mentions = oracle::nested_decode(scores, n, kUnlimitedDepth);
      t.structural(impl_mentions == ref_mentions, tag("nested decode"));
    }

    if (case_id % 10 == 0) {
      const auto gold = levelize(random_gold(rng, n, types), n, types);
      const auto analytic = sentence_loss_grad(scores, gold);
      const auto fd = loss_grad_fd(scores, gold);
      for (size_t k = 0; k < scores.size(); ++k)
        t.grad((analytic[k] - fd[k]).cwiseAbs().maxCoeff(),
               tag(fmt::format("gradient, type {}", types[k])), kGradTol);
    }
  }

  log_info(fmt::format(
      "check: {} cases, {} failures, max dp error {:.3e}, max grad error {:.3e}",
      t.report.cases, t.report.failures, t.report.max_dp_error,
      t.report.max_grad_error));
  if (!t.report.worst_case.empty())
    log_info("check: worst offender: " + t.report.worst_case);
  return t.report;
}

}  // namespace nestseq::oracle
