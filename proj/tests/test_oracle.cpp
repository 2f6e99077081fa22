#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "nestseq/error.hpp"
#include "nestseq/oracle.hpp"
#include "support.hpp"

using namespace nestseq;
using testsupport::emissions;
using testsupport::random_emissions;
using testsupport::tags;

TEST_CASE("enumeration realizes the legality table on tiny spans") {
  const LatticeScores zeros("k", EmissionMatrix::Zero(kNumTags, 2));

  const auto one = oracle::enumerate_paths(zeros, {0, 1});
  CHECK(one.size() == 5);
  CHECK(std::count_if(one.begin(), one.end(), [](const auto& p) {
          return std::isfinite(p.score);
        }) == 2);

  const auto two = oracle::enumerate_paths(zeros, {0, 2});
  CHECK(two.size() == 25);
  std::set<std::string> finite;
  for (const auto& p : two) {
    if (!std::isfinite(p.score)) continue;
    std::string s;
    for (Tag t : p.tags) s += tag_letter(t);
    finite.insert(s);
  }
  CHECK(finite == std::set<std::string>{"OO", "OS", "SO", "SS", "BE"});

  // Sorted by descending score, illegal paths last.
  CHECK(std::isfinite(two.front().score));
  CHECK_FALSE(std::isfinite(two.back().score));

  CHECK_THROWS_AS(
      oracle::enumerate_paths(
          LatticeScores("k", EmissionMatrix::Zero(kNumTags, 11)), {0, 11}),
      ConfigError);
}

TEST_CASE("oracle partitions on zero emissions equal hand counts") {
  const LatticeScores zeros("k", EmissionMatrix::Zero(kNumTags, 2));
  CHECK(oracle::log_partition(zeros, {0, 1}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(oracle::log_partition(zeros, {0, 2}) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK(oracle::log_partition_except(zeros, {0, 2}, tags("OO")) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("oracle ranks a dominated single-token lattice correctly") {
  EmissionMatrix p = EmissionMatrix::Zero(kNumTags, 1);
  p(static_cast<int>(Tag::O), 0) = 5.0;
  p(static_cast<int>(Tag::S), 0) = 3.0;
  const LatticeScores scores("k", p);

  CHECK(oracle::best_path(scores, {0, 1}).tags == tags("O"));
  CHECK(oracle::best_path(scores, {0, 1}).score == 5.0);
  CHECK(oracle::second_best_path(scores, {0, 1}).tags == tags("S"));
  CHECK(oracle::second_best_path(scores, {0, 1}).score == 3.0);
  CHECK(oracle::log_partition_except(scores, {0, 1}, tags("O")) ==
        doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("forward-backward marginals agree with enumeration weights") {
  std::mt19937_64 rng(21);
  for (int iter = 0; iter < 30; ++iter) {
    const int n = 1 + static_cast<int>(rng() % 5);
    const LatticeScores scores("k", random_emissions(rng, n, -3.0, 3.0));

    const double logz = oracle::log_partition(scores, {0, n});
    EmissionMatrix expected = EmissionMatrix::Zero(kNumTags, n);
    for (const auto& path : oracle::enumerate_paths(scores, {0, n})) {
      if (!std::isfinite(path.score)) continue;
      const double w = std::exp(path.score - logz);
      for (int i = 0; i < n; ++i)
        expected(static_cast<int>(path.tags[i]), i) += w;
    }

    const EmissionMatrix fb = oracle::marginals(scores, {0, n});
    CHECK((fb - expected).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((fb.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("randomized cross-check passes clean and fails when corrupted") {
  oracle::CheckOptions options;
  options.cases = 60;
  options.seed = 99;
  const auto clean = oracle::run_check(options);
  CHECK(clean.cases == 60);
  CHECK(clean.failures == 0);
  CHECK(clean.max_dp_error < 1e-9);
  CHECK(clean.max_grad_error < 1e-6);

  // Negative control: the same run with one illegal transition treated as
  // legal inside the oracle scorer must disagree with a healthy build.
  options.corrupt_transition = true;
  const auto corrupted = oracle::run_check(options);
  CHECK(corrupted.failures > 0);
  CHECK_FALSE(corrupted.worst_case.empty());
}
