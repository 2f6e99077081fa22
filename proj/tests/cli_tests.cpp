// End-to-end tests of the command-line binary. The path of the binary under
// test arrives as the first program argument; everything after it is handed
// to the test framework. These tests exercise plumbing: argument validation,
// exit codes, file round-trips and output formats. Numerical behavior is
// covered by the unit tests.

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nestseq/corpus.hpp"
#include "nestseq/model.hpp"
#include "support.hpp"

namespace {

std::string g_cli;  // quoted path of the binary under test

using testsupport::CommandResult;
using testsupport::run_command;
using testsupport::shell_quote;
using testsupport::TempDir;

CommandResult cli(const std::string& args) {
  return run_command(g_cli + " " + args);
}

std::string q(const std::string& path) { return shell_quote(path); }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Small corpus written straight through the library, so corpus-generation
// bugs cannot hide CLI bugs and vice versa.
void write_tiny_corpus(const std::string& path, std::uint64_t seed,
                       int sentences = 24) {
  nestseq::SyntheticConfig config;
  config.n_sentences = sentences;
  config.vocab = 30;
  config.types = {"alpha"};
  config.max_depth = 2;
  config.nesting_rate = 0.3;
  config.seed = seed;
  nestseq::write_corpus(nestseq::generate_synthetic(config), path);
}

void write_zero_model(const std::string& path) {
  nestseq::FeatureConfig features;
  features.hash_bits = 12;
  nestseq::save_model(nestseq::init_params({"alpha"}, features), path);
}

}  // namespace

TEST_CASE("cli: no subcommand fails with a usage error") {
  const CommandResult r = cli("");
  CHECK(r.exit_code == 1);
}

TEST_CASE("cli: --help exits zero and names every subcommand") {
  const CommandResult r = cli("--help");
  CHECK(r.exit_code == 0);
  for (const char* name :
       {"train", "tag", "eval", "bench", "check", "gen-synth"})
    CHECK(r.output.find(name) != std::string::npos);
}

TEST_CASE("cli: unknown flags fail") {
  CHECK(cli("--frobnicate").exit_code == 1);
  CHECK(cli("tag --model a --input b --output c --no-such-flag").exit_code == 1);
}

TEST_CASE("cli: gen-synth is deterministic per seed and readable") {
  TempDir dir;
  const std::string a = dir.file("a.jsonl");
  const std::string b = dir.file("b.jsonl");
  const std::string c = dir.file("c.jsonl");

  const CommandResult first =
      cli("gen-synth --out " + q(a) + " --sentences 40 --seed 9");
  REQUIRE(first.exit_code == 0);
  CHECK(first.output.find("wrote") != std::string::npos);
  REQUIRE(cli("gen-synth --out " + q(b) + " --sentences 40 --seed 9").exit_code ==
          0);
  REQUIRE(cli("gen-synth --out " + q(c) + " --sentences 40 --seed 10").exit_code ==
          0);

  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a) != slurp(c));

  const auto docs = nestseq::read_corpus(a);  // validates every line
  CHECK(docs.size() == 40);
}

TEST_CASE("cli: gen-synth with nesting rate zero reports a flat corpus") {
  TempDir dir;
  const std::string path = dir.file("flat.jsonl");
  const CommandResult r = cli("gen-synth --out " + q(path) +
                              " --sentences 20 --nesting-rate 0 --seed 1");
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("labels/token 1.0000") != std::string::npos);
  CHECK(nestseq::corpus_stats(nestseq::read_corpus(path)).max_depth <= 1);
}

TEST_CASE("cli: gen-synth rejects bad configurations") {
  TempDir dir;
  const std::string path = dir.file("x.jsonl");
  CHECK(cli("gen-synth --out " + q(path) + " --nesting-rate 2").exit_code == 1);
  CHECK(cli("gen-synth --out " + q(path) + " --vocab 0").exit_code == 1);
  CHECK(cli("gen-synth --out " + q(path) + " --max-depth 0").exit_code == 1);
}

TEST_CASE("cli: train writes a loadable model and a training log") {
  TempDir dir;
  const std::string train = dir.file("train.jsonl");
  const std::string dev = dir.file("dev.jsonl");
  const std::string model = dir.file("model.bin");
  write_tiny_corpus(train, 3);
  write_tiny_corpus(dev, 4, 8);

  const CommandResult r =
      cli("train --train " + q(train) + " --dev " + q(dev) + " --out " +
          q(model) + " --epochs 2 --batch 8");
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("best dev f1") != std::string::npos);

  const nestseq::ModelParams params = nestseq::load_model(model);
  CHECK(params.types.count("alpha") == 1);

  const nlohmann::json log =
      nlohmann::json::parse(slurp(model + ".train-log.json"));
  CHECK(log.at("epochs").size() == 2);
  CHECK(log.at("epochs").at(0).at("epoch").get<int>() == 1);
  CHECK(log.at("epochs").at(0).at("train_loss").get<double>() > 0.0);
  CHECK(log.contains("best_epoch"));
  CHECK(log.contains("best_dev_f1"));
}

TEST_CASE("cli: train --epochs 0 writes the initial parameters") {
  TempDir dir;
  const std::string corpus = dir.file("corpus.jsonl");
  const std::string model = dir.file("model.bin");
  write_tiny_corpus(corpus, 5, 6);

  const CommandResult r = cli("train --train " + q(corpus) + " --dev " +
                              q(corpus) + " --out " + q(model) + " --epochs 0");
  REQUIRE(r.exit_code == 0);

  const nestseq::ModelParams params = nestseq::load_model(model);
  for (const auto& [type, tp] : params.types) {
    CHECK(tp.weights.isZero(0.0));
    CHECK(tp.bias.isZero(0.0));
  }
}

TEST_CASE("cli: train on a missing or malformed corpus fails cleanly") {
  TempDir dir;
  const std::string good = dir.file("good.jsonl");
  const std::string bad = dir.file("bad.jsonl");
  const std::string model = dir.file("model.bin");
  write_tiny_corpus(good, 6, 6);
  std::ofstream(bad) << "{not json\n";

  CHECK(cli("train --train " + q(dir.file("absent.jsonl")) + " --dev " +
            q(good) + " --out " + q(model))
            .exit_code == 1);
  const CommandResult r = cli("train --train " + q(bad) + " --dev " + q(good) +
                              " --out " + q(model));
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("line 1") != std::string::npos);
  CHECK(cli("train --train " + q(good) + " --dev " + q(good) + " --out " +
            q(model) + " --lr -1")
            .exit_code == 1);
  CHECK(cli("train --train " + q(good) + " --dev " + q(good) + " --out " +
            q(model) + " --epochs -1")
            .exit_code == 1);
}

TEST_CASE("cli: tag produces a valid prediction corpus") {
  TempDir dir;
  const std::string corpus = dir.file("corpus.jsonl");
  const std::string model = dir.file("model.bin");
  const std::string full = dir.file("full.jsonl");
  const std::string flat = dir.file("flat.jsonl");
  write_tiny_corpus(corpus, 7, 10);
  write_zero_model(model);

  const CommandResult r = cli("tag --model " + q(model) + " --input " +
                              q(corpus) + " --output " + q(full));
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("tagged 10 sentences") != std::string::npos);
  REQUIRE(cli("tag --model " + q(model) + " --input " + q(corpus) +
              " --output " + q(flat) + " --max-depth 1")
              .exit_code == 0);

  // Both outputs must be valid corpora over the same sentences, and the
  // depth-1 mentions are the first pass of the unlimited decode, so they
  // form a subset of it.
  const auto full_docs = nestseq::read_corpus(full);
  const auto flat_docs = nestseq::read_corpus(flat);
  const auto gold_docs = nestseq::read_corpus(corpus);
  REQUIRE(full_docs.size() == gold_docs.size());
  REQUIRE(flat_docs.size() == gold_docs.size());
  for (size_t d = 0; d < full_docs.size(); ++d) {
    CHECK(full_docs[d].tokens == gold_docs[d].tokens);
    const std::set<nestseq::Mention> deep(full_docs[d].mentions.begin(),
                                          full_docs[d].mentions.end());
    for (const nestseq::Mention& m : flat_docs[d].mentions)
      CHECK(deep.count(m) == 1);
  }
}

TEST_CASE("cli: tag with several workers matches the single-thread output") {
  TempDir dir;
  const std::string corpus = dir.file("corpus.jsonl");
  const std::string model = dir.file("model.bin");
  const std::string one = dir.file("one.jsonl");
  const std::string four = dir.file("four.jsonl");
  write_tiny_corpus(corpus, 8, 12);
  write_zero_model(model);

  REQUIRE(cli("tag --model " + q(model) + " --input " + q(corpus) +
              " --output " + q(one) + " --workers 1")
              .exit_code == 0);
  REQUIRE(cli("tag --model " + q(model) + " --input " + q(corpus) +
              " --output " + q(four) + " --workers 4")
              .exit_code == 0);
  CHECK(slurp(one) == slurp(four));
}

TEST_CASE("cli: tag rejects bad inputs") {
  TempDir dir;
  const std::string corpus = dir.file("corpus.jsonl");
  const std::string model = dir.file("model.bin");
  const std::string out = dir.file("out.jsonl");
  write_tiny_corpus(corpus, 9, 4);
  write_zero_model(model);

  std::ofstream(dir.file("corrupt.bin"), std::ios::binary) << "not a model";
  CHECK(cli("tag --model " + q(dir.file("corrupt.bin")) + " --input " +
            q(corpus) + " --output " + q(out))
            .exit_code == 1);
  CHECK(cli("tag --model " + q(dir.file("absent.bin")) + " --input " +
            q(corpus) + " --output " + q(out))
            .exit_code == 1);
  CHECK(cli("tag --model " + q(model) + " --input " + q(corpus) +
            " --output " + q(out) + " --max-depth -2")
            .exit_code == 1);
  CHECK(cli("tag --model " + q(model) + " --input " + q(corpus) +
            " --output " + q(out) + " --workers 0")
            .exit_code == 1);
}

TEST_CASE("cli: eval of a corpus against itself scores a perfect f1") {
  TempDir dir;
  const std::string corpus = dir.file("corpus.jsonl");
  write_tiny_corpus(corpus, 11, 10);

  const CommandResult text =
      cli("eval --gold " + q(corpus) + " --pred " + q(corpus));
  REQUIRE(text.exit_code == 0);
  CHECK(text.output.find("f1") != std::string::npos);
  CHECK(text.output.find("1.000") != std::string::npos);

  const CommandResult json =
      cli("eval --gold " + q(corpus) + " --pred " + q(corpus) + " --json");
  REQUIRE(json.exit_code == 0);
  const nlohmann::json parsed = nlohmann::json::parse(json.output);
  CHECK(parsed.at("f1").get<double>() == 1.0);
  CHECK(parsed.at("gold").get<long long>() ==
        parsed.at("matched").get<long long>());
}

TEST_CASE("cli: eval rejects mismatched corpora") {
  TempDir dir;
  const std::string gold = dir.file("gold.jsonl");
  const std::string fewer = dir.file("fewer.jsonl");
  const std::string other = dir.file("other.jsonl");
  write_tiny_corpus(gold, 12, 6);
  write_tiny_corpus(fewer, 12, 5);
  write_tiny_corpus(other, 13, 6);  // same shape, different sentences

  CHECK(cli("eval --gold " + q(gold) + " --pred " + q(fewer)).exit_code == 1);
  const CommandResult r = cli("eval --gold " + q(gold) + " --pred " + q(other));
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("token mismatch") != std::string::npos);
}

TEST_CASE("cli: bench prints one throughput row per depth") {
  TempDir dir;
  const std::string corpus = dir.file("corpus.jsonl");
  const std::string model = dir.file("model.bin");
  write_tiny_corpus(corpus, 14, 8);
  write_zero_model(model);

  const CommandResult r = cli("bench --model " + q(model) + " --input " +
                              q(corpus) + " --max-depth 1,inf --repetitions 3");
  REQUIRE(r.exit_code == 0);

  std::stringstream lines(r.output);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line.find("tokens/sec") != std::string::npos);
  int rows = 0;
  for (const std::string& label : {"1", "inf"}) {
    REQUIRE(std::getline(lines, line));
    CHECK(line.find(label) == 0);
    std::stringstream fields(line);
    std::string depth;
    double rate = 0.0;
    fields >> depth >> rate;
    CHECK(rate > 0.0);
    ++rows;
  }
  CHECK(rows == 2);
}

TEST_CASE("cli: bench rejects bad depth lists and repetition counts") {
  TempDir dir;
  const std::string corpus = dir.file("corpus.jsonl");
  const std::string model = dir.file("model.bin");
  write_tiny_corpus(corpus, 15, 4);
  write_zero_model(model);

  const std::string base =
      "bench --model " + q(model) + " --input " + q(corpus);
  CHECK(cli(base + " --max-depth 0").exit_code == 1);
  CHECK(cli(base + " --max-depth nonsense").exit_code == 1);
  CHECK(cli(base + " --repetitions 2").exit_code == 1);
}

TEST_CASE("cli: check agrees with the references and fails when corrupted") {
  const CommandResult clean = cli("check --cases 5 --seed 7");
  REQUIRE(clean.exit_code == 0);
  CHECK(clean.output.find("cases 5") != std::string::npos);
  CHECK(clean.output.find("failures 0") != std::string::npos);

  const CommandResult corrupted =
      cli("check --cases 5 --seed 7 --self-test-corrupt");
  CHECK(corrupted.exit_code == 2);
  CHECK(corrupted.output.find("failures 0") == std::string::npos);
  CHECK(corrupted.output.find("worst offender") != std::string::npos);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: cli_tests <nestseq-binary> [doctest args]\n");
    return 2;
  }
  g_cli = shell_quote(argv[1]);

  std::vector<const char*> args;
  args.push_back(argv[0]);
  for (int i = 2; i < argc; ++i) args.push_back(argv[i]);
  doctest::Context context(static_cast<int>(args.size()),
                           const_cast<char**>(args.data()));
  return context.run();
}
