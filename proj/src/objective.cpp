#include "nestseq/objective.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace nestseq {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Max-shifted log sum exp over a handful of terms; -inf in, -inf out.
double lse(const double* values, int count) {
  double mx = kNegInf;
  for (int i = 0; i < count; ++i) mx = std::max(mx, values[i]);
  if (!std::isfinite(mx)) return kNegInf;
  double sum = 0.0;
  for (int i = 0; i < count; ++i)
    if (std::isfinite(values[i])) sum += std::exp(values[i] - mx);
  return mx + std::log(sum);
}

// Forward recursion over one span. alpha(c,t) is the log sum of all legal
// prefixes ending in tag c at offset t, emission at t included.
struct ForwardTape {
  Span span;
  Eigen::MatrixXd alpha;
  Eigen::Matrix<double, kNumTags, 1> finals;
  double logz = kNegInf;
};

ForwardTape forward(const LatticeScores& scores, Span span) {
  check_span(scores, span);
  const int w = span.width();
  const auto& A = transition_matrix();
  const auto& P = scores.emissions();

  ForwardTape tape;
  tape.span = span;
  tape.alpha.resize(kNumTags, w);
  for (int c = 0; c < kNumTags; ++c)
    tape.alpha(c, 0) = A(kStartState, c) + P(c, span.begin);
  double terms[kNumTags];
  for (int t = 1; t < w; ++t) {
    for (int c = 0; c < kNumTags; ++c) {
      for (int p = 0; p < kNumTags; ++p)
        terms[p] = tape.alpha(p, t - 1) + A(p, c);
      tape.alpha(c, t) = lse(terms, kNumTags) + P(c, span.begin + t);
    }
  }
  for (int c = 0; c < kNumTags; ++c)
    tape.finals(c) = tape.alpha(c, w - 1) + A(c, kEndState);
  tape.logz = lse(tape.finals.data(), kNumTags);
  return tape;
}

// Accumulates upstream * d(logz)/d(emissions) into grad. Every softmax
// weight is guarded: nodes with -inf forward value carry zero adjoint, and
// exp is never fed the indeterminate -inf minus -inf.
void backward(const ForwardTape& tape, const LatticeScores& scores,
              double upstream, EmissionMatrix& grad) {
  if (!std::isfinite(tape.logz)) return;
  const int w = tape.span.width();
  const int s = tape.span.begin;
  const auto& A = transition_matrix();
  const auto& P = scores.emissions();

  Eigen::MatrixXd dalpha = Eigen::MatrixXd::Zero(kNumTags, w);
  for (int c = 0; c < kNumTags; ++c)
    if (std::isfinite(tape.finals(c)))
      dalpha(c, w - 1) = std::exp(tape.finals(c) - tape.logz);

  for (int t = w - 1; t >= 1; --t) {
    for (int c = 0; c < kNumTags; ++c) {
      const double da = dalpha(c, t);
      if (da == 0.0) continue;
      grad(c, s + t) += upstream * da;
      const double inner = tape.alpha(c, t) - P(c, s + t);
      if (!std::isfinite(inner)) continue;
      for (int p = 0; p < kNumTags; ++p) {
        const double term = tape.alpha(p, t - 1) + A(p, c);
        if (std::isfinite(term))
          dalpha(p, t - 1) += da * std::exp(term - inner);
      }
    }
  }
  for (int c = 0; c < kNumTags; ++c)
    grad(c, s) += upstream * dalpha(c, 0);
}

// Forward recursion with one path's mass removed. beta(t) is the log sum
// over legal prefixes that end at excluded[t] at offset t but are not the
// excluded prefix itself; splitting each step by predecessor keeps the
// bookkeeping exact and never exponentiates a difference of near-equal
// sums, which is what makes this safe where log(exp(logz) - exp(best))
// cancels catastrophically.
struct ExceptTape {
  Span span;
  TagSeq excluded;
  Eigen::MatrixXd alpha;
  Eigen::VectorXd beta;
  Eigen::Matrix<double, kNumTags, 1> finals;
  double result = kNegInf;
};

ExceptTape forward_except(const LatticeScores& scores, Span span,
                          const TagSeq& excluded) {
  check_span(scores, span);
  const int w = span.width();
  if (static_cast<int>(excluded.size()) != w)
    throw ShapeError(fmt::format("excluded path has {} tags for span {}",
                                 excluded.size(), to_string(span)));
  if (!is_well_formed(excluded))
    throw WellFormednessError(
        fmt::format("excluded path {} is not well formed",
                    format_tags(excluded)));
  const auto& A = transition_matrix();
  const auto& P = scores.emissions();

  ExceptTape tape;
  tape.span = span;
  tape.excluded = excluded;
  tape.alpha.resize(kNumTags, w);
  tape.beta.resize(w);

  for (int c = 0; c < kNumTags; ++c)
    tape.alpha(c, 0) = A(kStartState, c) + P(c, span.begin);
  tape.beta(0) = kNegInf;  // nothing ends the excluded prefix without being it

  double terms[kNumTags + 1];
  for (int t = 1; t < w; ++t) {
    for (int c = 0; c < kNumTags; ++c) {
      for (int p = 0; p < kNumTags; ++p)
        terms[p] = tape.alpha(p, t - 1) + A(p, c);
      tape.alpha(c, t) = lse(terms, kNumTags) + P(c, span.begin + t);
    }
    const int qt = static_cast<int>(excluded[t]);
    const int qp = static_cast<int>(excluded[t - 1]);
    int count = 0;
    for (int p = 0; p < kNumTags; ++p) {
      if (p == qp) continue;
      terms[count++] = tape.alpha(p, t - 1) + A(p, qt);
    }
    terms[count++] = tape.beta(t - 1) + A(qp, qt);
    tape.beta(t) = lse(terms, count) + P(qt, span.begin + t);
  }

  const int qlast = static_cast<int>(excluded[w - 1]);
  for (int c = 0; c < kNumTags; ++c) {
    const double head = c == qlast ? tape.beta(w - 1) : tape.alpha(c, w - 1);
    tape.finals(c) = head + A(c, kEndState);
  }
  tape.result = lse(tape.finals.data(), kNumTags);
  return tape;
}

void backward_except(const ExceptTape& tape, const LatticeScores& scores,
                     double upstream, EmissionMatrix& grad) {
  if (!std::isfinite(tape.result)) return;
  const int w = tape.span.width();
  const int s = tape.span.begin;
  const auto& A = transition_matrix();
  const auto& P = scores.emissions();
  const TagSeq& q = tape.excluded;

  Eigen::MatrixXd dalpha = Eigen::MatrixXd::Zero(kNumTags, w);
  Eigen::VectorXd dbeta = Eigen::VectorXd::Zero(w);
  const int qlast = static_cast<int>(q[w - 1]);
  for (int c = 0; c < kNumTags; ++c) {
    if (!std::isfinite(tape.finals(c))) continue;
    const double weight = std::exp(tape.finals(c) - tape.result);
    if (c == qlast)
      dbeta(w - 1) += weight;
    else
      dalpha(c, w - 1) += weight;
  }

  for (int t = w - 1; t >= 1; --t) {
    const int qt = static_cast<int>(q[t]);
    const int qp = static_cast<int>(q[t - 1]);

    const double db = dbeta(t);
    if (db != 0.0) {
      grad(qt, s + t) += upstream * db;
      const double inner = tape.beta(t) - P(qt, s + t);
      if (std::isfinite(inner)) {
        for (int p = 0; p < kNumTags; ++p) {
          if (p == qp) continue;
          const double term = tape.alpha(p, t - 1) + A(p, qt);
          if (std::isfinite(term))
            dalpha(p, t - 1) += db * std::exp(term - inner);
        }
        const double bterm = tape.beta(t - 1) + A(qp, qt);
        if (std::isfinite(bterm)) dbeta(t - 1) += db * std::exp(bterm - inner);
      }
    }

    for (int c = 0; c < kNumTags; ++c) {
      const double da = dalpha(c, t);
      if (da == 0.0) continue;
      grad(c, s + t) += upstream * da;
      const double inner = tape.alpha(c, t) - P(c, s + t);
      if (!std::isfinite(inner)) continue;
      for (int p = 0; p < kNumTags; ++p) {
        const double term = tape.alpha(p, t - 1) + A(p, c);
        if (std::isfinite(term))
          dalpha(p, t - 1) += da * std::exp(term - inner);
      }
    }
  }
  for (int c = 0; c < kNumTags; ++c)
    grad(c, s) += upstream * dalpha(c, 0);
  // dbeta(0) drops: beta(0) is the constant empty sum.
}

// B..E (or S) tagging of the whole span: the enclosing mention's own path.
TagSeq span_tagging(Span span) {
  Mention whole{span.begin, span.end, ""};
  return tags_from_mentions({whole}, span);
}

struct TermSink {
  const ObjectiveConfig& config;
  std::span<const LatticeScores> scores;
  LossBreakdown breakdown;
  std::vector<EmissionMatrix>* grads = nullptr;

  void term(size_t k, int level, const GoldRecord& rec) {
    const LatticeScores& lat = scores[k];
    const double psi = path_score(lat, rec.span, rec.tags);
    // Exactly -inf means an illegal transition somewhere in the gold tags.
    // +inf or NaN can only come from overflowing emissions; let those
    // propagate into the total so training reports divergence instead.
    if (psi == -std::numeric_limits<double>::infinity())
      throw WellFormednessError(
          fmt::format("gold tags {} over span {} are not a legal path",
                      format_tags(rec.tags), to_string(rec.span)));

    double log_prob;
    if (level == 1) {
      const ForwardTape tape = forward(lat, rec.span);
      log_prob = psi - tape.logz;
      if (grads != nullptr) backward(tape, lat, 1.0, (*grads)[k]);
    } else {
      TagSeq excluded;
      if (config.excluded_path == ExcludedPath::kGoldParent) {
        excluded = span_tagging(rec.span);
      } else {
        excluded = viterbi_best(lat, rec.span).tags;
        // Degenerate for this variant only: the model already ranks the
        // gold tags first, so there is nothing to push past. Skip.
        if (excluded == rec.tags) return;
      }
      const ExceptTape tape = forward_except(lat, rec.span, excluded);
      log_prob = psi - tape.result;
      if (grads != nullptr) backward_except(tape, lat, 1.0, (*grads)[k]);
    }

    if (grads != nullptr)
      for (size_t i = 0; i < rec.tags.size(); ++i)
        (*grads)[k](static_cast<int>(rec.tags[i]), rec.span.begin + i) -= 1.0;

    breakdown.terms.push_back(
        {lat.entity_type(), level, rec.span, log_prob});
    breakdown.log_prob_per_type[lat.entity_type()] += log_prob;
    breakdown.total -= log_prob;
  }
};

LossBreakdown loss_impl(std::span<const LatticeScores> scores,
                        const LevelizedGold& gold,
                        const ObjectiveConfig& config,
                        std::vector<EmissionMatrix>* grads) {
  for (const LatticeScores& lat : scores) {
    if (lat.length() != gold.sentence_len)
      throw ShapeError(fmt::format(
          "lattice for type {} has length {}, gold has {} tokens",
          lat.entity_type(), lat.length(), gold.sentence_len));
    if (!gold.by_type.count(lat.entity_type()))
      throw ShapeError(fmt::format("gold carries no levels for type {}",
                                   lat.entity_type()));
  }
  if (grads != nullptr) {
    grads->clear();
    for (const LatticeScores& lat : scores)
      grads->emplace_back(EmissionMatrix::Zero(kNumTags, lat.length()));
  }

  TermSink sink{config, scores, {}, grads};
  for (size_t k = 0; k < scores.size(); ++k) {
    const auto& levels = gold.by_type.at(scores[k].entity_type());
    sink.term(k, 1, levels[0][0]);
    if (!config.nested_terms) continue;
    for (size_t l = 1; l < levels.size(); ++l) {
      for (const GoldRecord& rec : levels[l]) {
        const bool empty = std::all_of(rec.tags.begin(), rec.tags.end(),
                                       [](Tag t) { return t == Tag::O; });
        if (empty && !config.include_empty_nested_spans) continue;
        sink.term(k, static_cast<int>(l) + 1, rec);
      }
    }
  }
  return std::move(sink.breakdown);
}

}  // namespace

double log_partition(const LatticeScores& scores, Span span) {
  return forward(scores, span).logz;
}

double log_partition_except_best(const LatticeScores& scores, Span span,
                                 const DecodedPath& best) {
  return forward_except(scores, span, best.tags).result;
}

LossBreakdown sentence_loss(std::span<const LatticeScores> scores,
                            const LevelizedGold& gold,
                            const ObjectiveConfig& config) {
  return loss_impl(scores, gold, config, nullptr);
}

std::vector<EmissionMatrix> sentence_loss_grad(
    std::span<const LatticeScores> scores, const LevelizedGold& gold,
    const ObjectiveConfig& config, LossBreakdown* loss) {
  std::vector<EmissionMatrix> grads;
  LossBreakdown breakdown = loss_impl(scores, gold, config, &grads);
  if (loss != nullptr) *loss = std::move(breakdown);
  return grads;
}

}  // namespace nestseq
