#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "nestseq/error.hpp"
#include "nestseq/lattice.hpp"
#include "support.hpp"

using namespace nestseq;
using testsupport::emissions;
using testsupport::random_emissions;
using testsupport::random_well_formed;
using testsupport::tags;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("transition matrix holds 0 for legal pairs and -inf elsewhere") {
  const auto& a = transition_matrix();
  int zeros = 0;
  for (int p = 0; p < kNumStates; ++p) {
    for (int q = 0; q < kNumStates; ++q) {
      if (p == kEndState || q == kStartState) {
        CHECK(a(p, q) == -kInf);
        continue;
      }
      if (is_legal_transition(p, q)) {
        CHECK(a(p, q) == 0.0);
        ++zeros;
      } else {
        CHECK(a(p, q) == -kInf);
      }
    }
  }
  CHECK(zeros == 20);
}

TEST_CASE("boundary transitions mirror the O-tag transitions") {
  // This equivalence is what makes a parent's surviving path inside a child
  // span identical to the child's own best path.
  const auto& a = transition_matrix();
  for (int c = 0; c < kNumTags; ++c) {
    CHECK(a(kStartState, c) == a(static_cast<int>(Tag::O), c));
    CHECK(a(c, kEndState) == a(c, static_cast<int>(Tag::O)));
  }
}

TEST_CASE("phi adds the transition guard to the emission") {
  EmissionMatrix p = EmissionMatrix::Zero(kNumTags, 3);
  p(static_cast<int>(Tag::B), 0) = 1.5;
  p(static_cast<int>(Tag::I), 0) = 9.9;
  p(static_cast<int>(Tag::I), 2) = 0.3;
  const LatticeScores scores("k", p);

  CHECK(phi(scores, kStartState, Tag::B, 0) == 1.5);
  CHECK(phi(scores, kStartState, Tag::I, 0) == -kInf);
  CHECK(phi(scores, Tag::B, Tag::I, 2) == 0.3);
  CHECK_THROWS_AS(phi(scores, kStartState, Tag::B, 3), BoundsError);
  CHECK_THROWS_AS(phi(scores, kStartState, Tag::B, -1), BoundsError);
}

TEST_CASE("path_score sums emissions over legal paths only") {
  CHECK(path_score(LatticeScores("k", EmissionMatrix::Zero(kNumTags, 1)),
                   {0, 1}, tags("S")) == 0.0);

  EmissionMatrix p = EmissionMatrix::Zero(kNumTags, 2);
  p(static_cast<int>(Tag::B), 0) = 1.0;
  p(static_cast<int>(Tag::E), 1) = 2.0;
  const LatticeScores scores("k", p);
  CHECK(path_score(scores, {0, 2}, tags("BE")) == 3.0);
  CHECK(path_score(scores, {0, 2}, tags("EB")) == -kInf);  // START->E illegal
  CHECK(path_score(scores, {0, 2}, tags("BI")) == -kInf);  // I->END illegal
  CHECK_THROWS_AS(path_score(scores, {0, 2}, tags("S")), ShapeError);
  CHECK_THROWS_AS(path_score(scores, {0, 3}, tags("OOO")), BoundsError);
}

TEST_CASE("path_score is finite exactly on well-formed sequences") {
  std::mt19937_64 rng(11);
  const int n = 3;
  const LatticeScores scores("k", random_emissions(rng, n));
  TagSeq seq(n, Tag::B);
  for (int code = 0; code < 125; ++code) {
    int rest = code;
    for (int i = 0; i < n; ++i) {
      seq[i] = Tag(rest % kNumTags);
      rest /= kNumTags;
    }
    CHECK(std::isfinite(path_score(scores, {0, n}, seq)) ==
          is_well_formed(seq));
  }
}

TEST_CASE("path_score shifts by a constant added to one column") {
  std::mt19937_64 rng(12);
  for (int iter = 0; iter < 50; ++iter) {
    const int n = 2 + static_cast<int>(rng() % 5);
    EmissionMatrix p = random_emissions(rng, n);
    const TagSeq seq = random_well_formed(rng, n);
    const int col = static_cast<int>(rng() % n);
    const double shift = 2.5;

    const double before = path_score(LatticeScores("k", p), {0, n}, seq);
    p.col(col).array() += shift;
    const double after = path_score(LatticeScores("k", p), {0, n}, seq);
    CHECK(after == doctest::Approx(before + shift).epsilon(1e-12));
  }
}

TEST_CASE("LatticeScores rejects empty and non-finite emissions") {
  CHECK_THROWS_AS(LatticeScores("k", EmissionMatrix(kNumTags, 0)), ShapeError);
  EmissionMatrix bad = EmissionMatrix::Zero(kNumTags, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(LatticeScores("k", bad), ShapeError);
  bad(0, 1) = kInf;
  CHECK_THROWS_AS(LatticeScores("k", bad), ShapeError);
}
