#pragma once

// Shared fixtures and generators for the test binaries. The constructed
// emission matrices make specific paths win by clear margins; every frozen
// expectation about them is re-derived from the oracle in the tests that
// use them.

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "nestseq/lattice.hpp"
#include "nestseq/tags.hpp"

namespace testsupport {

using nestseq::EmissionMatrix;
using nestseq::LatticeScores;
using nestseq::Mention;
using nestseq::Span;
using nestseq::Tag;
using nestseq::TagSeq;

// "OBIES" -> tag sequence, for compact frozen expectations.
inline TagSeq tags(const std::string& letters) {
  TagSeq out;
  out.reserve(letters.size());
  for (char ch : letters) {
    switch (ch) {
      case 'B': out.push_back(Tag::B); break;
      case 'I': out.push_back(Tag::I); break;
      case 'E': out.push_back(Tag::E); break;
      case 'S': out.push_back(Tag::S); break;
      case 'O': out.push_back(Tag::O); break;
      default: throw std::invalid_argument("bad tag letter");
    }
  }
  return out;
}

// Rows in tag order B, I, E, S, O.
inline EmissionMatrix emissions(const std::vector<std::vector<double>>& rows) {
  if (rows.size() != nestseq::kNumTags)
    throw std::invalid_argument("need 5 emission rows");
  EmissionMatrix p(nestseq::kNumTags, rows[0].size());
  for (int c = 0; c < nestseq::kNumTags; ++c) {
    if (rows[c].size() != rows[0].size())
      throw std::invalid_argument("ragged emission rows");
    for (size_t i = 0; i < rows[c].size(); ++i) p(c, i) = rows[c][i];
  }
  return p;
}

// Six-token lattice realizing three levels of same-type nesting: the
// sentence-level best path [O,B,I,I,E,O] extracts (1,5); the runner-up
// inside (1,5) is [O,O,B,E], extracting (3,5); the runner-up inside (3,5)
// is [S,O], extracting the single token (3,4), where recursion stops.
inline LatticeScores nested_example() {
  return LatticeScores("protein", emissions({
                                      {0, 2, 0, 1.4, 0, 0},      // B
                                      {0, 0, 2, 2, 0, 0},        // I
                                      {0, 0, 0, 0, 2, 0},        // E
                                      {0, 0, 0, 0.9, 0, 0},      // S
                                      {2, 1.2, 1.2, 0, 0.8, 2},  // O
                                  }));
}

// Same structure shifted to start at token 0, matching mentions
// {(0,4),(2,4),(2,3)}: levels [B,I,I,E,O,O] / [O,O,B,E] / [S,O].
inline LatticeScores shifted_example() {
  return LatticeScores("P", emissions({
                                {2, 0, 1.4, 0, 0, 0},      // B
                                {0, 2, 2, 0, 0, 0},        // I
                                {0, 0, 0, 2, 0, 0},        // E
                                {0, 0, 0.9, 0, 0, 0},      // S
                                {1.2, 1.2, 0, 0.8, 2, 2},  // O
                            }));
}

// Adversarial worst case for the decoder: the best sentence path extracts
// (0, n-1), and inside every span (0, m) the runner-up extracts (0, m-1),
// one token narrower, down to a single token. Spans of width n, n-1, ..., 2
// all get decoded, so the total decoded span length is n(n+1)/2 - 1, right
// at the quadratic bound. Margins between ranks are >= 1 everywhere.
inline LatticeScores narrowing_chain(int n) {
  if (n < 3) throw std::invalid_argument("chain needs n >= 3");
  EmissionMatrix p = EmissionMatrix::Zero(nestseq::kNumTags, n);
  p(static_cast<int>(Tag::B), 0) = 4.0;
  p(static_cast<int>(Tag::S), 0) = 3.0;
  for (int i = 1; i <= n - 3; ++i) p(static_cast<int>(Tag::I), i) = 2.0;
  for (int i = 1; i <= n - 2; ++i) p(static_cast<int>(Tag::E), i) = 2.0;
  for (int i = 0; i < n - 1; ++i) p(static_cast<int>(Tag::O), i) = 1.0;
  p(static_cast<int>(Tag::O), n - 1) = 4.0;
  return LatticeScores("x", std::move(p));
}

inline EmissionMatrix random_emissions(std::mt19937_64& rng, int n,
                                       double lo = -5.0, double hi = 5.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  EmissionMatrix p(nestseq::kNumTags, n);
  for (int c = 0; c < nestseq::kNumTags; ++c)
    for (int i = 0; i < n; ++i) p(c, i) = dist(rng);
  return p;
}

// Random well-formed tag sequence: a walk over legal transitions whose last
// step is restricted to tags that may precede END.
inline TagSeq random_well_formed(std::mt19937_64& rng, int n) {
  TagSeq seq;
  int prev = nestseq::kStartState;
  for (int i = 0; i < n; ++i) {
    std::vector<Tag> options;
    for (int c = 0; c < nestseq::kNumTags; ++c) {
      if (!nestseq::is_legal_transition(prev, c)) continue;
      if (i == n - 1 && !nestseq::legal_to_end(Tag(c))) continue;
      options.push_back(Tag(c));
    }
    Tag pick = options[rng() % options.size()];
    seq.push_back(pick);
    prev = static_cast<int>(pick);
  }
  return seq;
}

// Random laminar mention set: per type up to two disjoint top-level spans,
// each possibly hosting one strictly narrower child, down to max_depth.
inline std::vector<Mention> random_laminar_mentions(
    std::mt19937_64& rng, int n, const std::vector<std::string>& types,
    int max_depth = 3) {
  std::vector<Mention> out;
  auto nest = [&](auto&& self, Span host, const std::string& type,
                  int depth) -> void {
    if (depth >= max_depth || host.end - host.begin < 2) return;
    if (rng() % 10 >= 7) return;
    const int width = 1 + static_cast<int>(rng() % (host.end - host.begin - 1));
    const int begin =
        host.begin + static_cast<int>(rng() % (host.end - host.begin - width + 1));
    out.push_back({begin, begin + width, type});
    self(self, {begin, begin + width}, type, depth + 1);
  };
  for (const auto& type : types) {
    const int wanted = static_cast<int>(rng() % 3);
    std::vector<Span> taken;
    for (int attempt = 0; attempt < wanted; ++attempt) {
      const int begin = static_cast<int>(rng() % n);
      const int width = 1 + static_cast<int>(rng() % (n - begin));
      const Span span{begin, begin + width};
      bool clear = true;
      for (const Span& s : taken)
        if (span.begin < s.end && s.begin < span.end) clear = false;
      if (!clear) continue;
      taken.push_back(span);
      out.push_back({span.begin, span.end, type});
      nest(nest, span, type, 1);
    }
  }
  return out;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("nestseq-test-{:08x}{:08x}", rd(), rd());
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

// Runs `fn`, returns the message of the expected exception or "" when
// nothing was thrown. Lets tests assert on message fragments portably.
template <class E, class Fn>
inline std::string message_of(Fn&& fn) {
  try {
    std::forward<Fn>(fn)();
  } catch (const E& e) {
    return e.what();
  }
  return {};
}

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

inline std::string shell_quote(const std::string& s) {
  std::string quoted = "'";
  for (char c : s) {
    if (c == '\'')
      quoted += "'\\''";
    else
      quoted += c;
  }
  return quoted + "'";
}

inline CommandResult run_command(const std::string& command) {
  CommandResult result;
  FILE* pipe = popen((command + " 2>&1").c_str(), "r");
  if (pipe == nullptr) throw std::runtime_error("popen failed");
  char buffer[4096];
  size_t got = 0;
  while ((got = fread(buffer, 1, sizeof buffer, pipe)) > 0)
    result.output.append(buffer, got);
  const int status = pclose(pipe);
  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  return result;
}

}  // namespace testsupport
