#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>
#include <vector>

#include "nestseq/corpus.hpp"
#include "nestseq/decode.hpp"
#include "nestseq/eval.hpp"
#include "nestseq/log.hpp"
#include "nestseq/model.hpp"
#include "nestseq/oracle.hpp"

namespace {

using namespace nestseq;

struct TrainArgs {
  std::string train_path, dev_path, out_path;
  TrainConfig config;
};

void cmd_train(const TrainArgs& args) {
  const auto train_docs = read_corpus(args.train_path);
  const auto dev_docs = read_corpus(args.dev_path);
  const TrainResult result = train(train_docs, dev_docs, args.config);
  save_model(result.params, args.out_path);

  nlohmann::ordered_json log;
  log["epochs"] = nlohmann::ordered_json::array();
  for (const EpochLog& e : result.log)
    log["epochs"].push_back({{"epoch", e.epoch},
                             {"train_loss", e.train_loss},
                             {"dev_f1", e.dev_f1}});
  log["best_epoch"] = result.best_epoch;
  log["best_dev_f1"] = result.best_dev_f1;
  const std::string log_path = args.out_path + ".train-log.json";
  std::ofstream out(log_path);
  out << log.dump(2) << "\n";
  if (!out) throw FormatError(fmt::format("write to {} failed", log_path));

  std::cout << fmt::format(
      "trained on {} sentences, best dev f1 {:.4f} at epoch {}, model {}\n",
      train_docs.size(), result.best_dev_f1, result.best_epoch, args.out_path);
}

struct TagArgs {
  std::string model_path, input_path, output_path;
  int max_depth = 0;  // 0 = unlimited
  int workers = 1;
};

void cmd_tag(const TagArgs& args) {
  if (args.max_depth < 0) throw ConfigError("max depth must be >= 0");
  if (args.workers < 1) throw ConfigError("workers must be >= 1");
  const int depth = args.max_depth == 0 ? kUnlimitedDepth : args.max_depth;

  const ModelParams params = load_model(args.model_path);
  std::vector<Document> docs = read_corpus(args.input_path);

  std::vector<std::vector<Mention>> predictions(docs.size());
  const auto worker = [&](size_t begin, size_t end) {
    for (size_t d = begin; d < end; ++d) {
      const auto scores = score_sentence(params, docs[d].tokens);
      predictions[d] = nested_decode(
          scores, static_cast<int>(docs[d].tokens.size()), depth);
    }
  };
  if (args.workers == 1 || docs.size() < 2) {
    worker(0, docs.size());
  } else {
    const size_t n_threads =
        std::min<size_t>(args.workers, std::max<size_t>(docs.size(), 1));
    std::vector<std::thread> threads;
    const size_t chunk = (docs.size() + n_threads - 1) / n_threads;
    for (size_t t = 0; t < n_threads; ++t) {
      const size_t begin = t * chunk;
      const size_t end = std::min(docs.size(), begin + chunk);
      if (begin < end) threads.emplace_back(worker, begin, end);
    }
    for (std::thread& t : threads) t.join();
  }

  for (size_t d = 0; d < docs.size(); ++d)
    docs[d].mentions = std::move(predictions[d]);
  write_corpus(docs, args.output_path);
  std::cout << fmt::format("tagged {} sentences into {}\n", docs.size(),
                           args.output_path);
}

struct EvalArgs {
  std::string gold_path, pred_path;
  bool json = false;
};

void cmd_eval(const EvalArgs& args) {
  const auto gold = read_corpus(args.gold_path);
  const auto pred = read_corpus(args.pred_path);
  if (gold.size() != pred.size())
    throw ShapeError(fmt::format("{} gold documents but {} predictions",
                                 gold.size(), pred.size()));
  std::vector<std::vector<Mention>> predictions;
  predictions.reserve(pred.size());
  for (size_t d = 0; d < pred.size(); ++d) {
    if (gold[d].tokens != pred[d].tokens)
      throw ShapeError(fmt::format("document {}: token mismatch", d));
    predictions.push_back(pred[d].mentions);
  }
  const EvalReport report = evaluate(gold, predictions);
  if (args.json)
    std::cout << to_json_string(report) << "\n";
  else
    std::cout << to_text(report);
}

struct BenchArgs {
  std::string model_path, input_path;
  std::string depths = "1,2,inf";
  int repetitions = 5;
};

int parse_depth(const std::string& token) {
  if (token == "inf" || token == "unlimited") return kUnlimitedDepth;
  try {
    const int depth = std::stoi(token);
    if (depth >= 1) return depth;
  } catch (const std::exception&) {
  }
  throw ConfigError(fmt::format("bad depth \"{}\" (want a positive integer or inf)",
                                token));
}

void cmd_bench(const BenchArgs& args) {
  if (args.repetitions < 3)
    throw ConfigError("need at least 3 repetitions for a median");
  const ModelParams params = load_model(args.model_path);
  const auto docs = read_corpus(args.input_path);
  if (docs.empty()) throw ConfigError("benchmark corpus is empty");

  std::vector<int> depths;
  std::string token;
  std::stringstream list(args.depths);
  while (std::getline(list, token, ',')) depths.push_back(parse_depth(token));
  if (depths.empty()) throw ConfigError("empty depth list");

  // Score once up front; the timed region is decoding only, which is the
  // part the depth cap changes.
  long long total_tokens = 0;
  std::vector<std::vector<LatticeScores>> lattices;
  lattices.reserve(docs.size());
  for (const Document& doc : docs) {
    total_tokens += static_cast<long long>(doc.tokens.size());
    lattices.push_back(score_sentence(params, doc.tokens));
  }

  std::cout << fmt::format("{:<16} {:>14}\n", "maximal depth", "tokens/sec");
  for (const int depth : depths) {
    const auto one_pass = [&] {
      for (size_t d = 0; d < docs.size(); ++d)
        nested_decode(lattices[d], static_cast<int>(docs[d].tokens.size()),
                      depth);
    };
    // The warm-up pass also sizes the timed regions: a small corpus decodes
    // in microseconds, well under timer and scheduler noise, so each
    // repetition loops the corpus until it runs for a measurable stretch.
    const auto warm_start = std::chrono::steady_clock::now();
    one_pass();
    const std::chrono::duration<double> warm =
        std::chrono::steady_clock::now() - warm_start;
    constexpr double kMinRepSeconds = 0.05;
    const long long passes = std::llround(std::clamp(
        std::ceil(kMinRepSeconds / std::max(warm.count(), 1e-9)), 1.0, 1e6));

    std::vector<double> rates;
    for (int rep = 0; rep < args.repetitions; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      for (long long pass = 0; pass < passes; ++pass) one_pass();
      const std::chrono::duration<double> elapsed =
          std::chrono::steady_clock::now() - start;
      rates.push_back(static_cast<double>(passes) *
                      static_cast<double>(total_tokens) /
                      std::max(elapsed.count(), 1e-12));
    }
    std::sort(rates.begin(), rates.end());
    const double median = rates[rates.size() / 2];
    const std::string label =
        depth == kUnlimitedDepth ? "inf" : std::to_string(depth);
    std::cout << fmt::format("{:<16} {:>14.0f}\n", label, median);
  }
}

struct CheckArgs {
  oracle::CheckOptions options;
};

int cmd_check(const CheckArgs& args) {
  const oracle::CheckReport report = oracle::run_check(args.options);
  std::cout << fmt::format(
      "cases {}  failures {}  max dp error {:.3e}  max grad error {:.3e}\n",
      report.cases, report.failures, report.max_dp_error,
      report.max_grad_error);
  if (report.failures > 0) {
    std::cout << fmt::format("worst offender: {}\n", report.worst_case);
    return 2;
  }
  return 0;
}

struct GenArgs {
  std::string out_path;
  SyntheticConfig config;
  std::string types = "alpha,beta";
};

void cmd_gen_synth(GenArgs args) {
  args.config.types.clear();
  std::string token;
  std::stringstream list(args.types);
  while (std::getline(list, token, ',')) args.config.types.push_back(token);

  const auto docs = generate_synthetic(args.config);
  write_corpus(docs, args.out_path);
  const CorpusStats stats = corpus_stats(docs);
  std::cout << fmt::format(
      "wrote {}: {} sentences, {} tokens, {} mentions, depth {}, "
      "labels/token {:.4f}\n",
      args.out_path, stats.sentences, stats.tokens, stats.mentions,
      stats.max_depth, stats.labels_per_token);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nested span extraction by second-best path decoding"};
  app.require_subcommand(1);
  int exit_code = 0;

  auto* train_cmd = app.add_subcommand("train", "fit a model");
  auto train_args = std::make_shared<TrainArgs>();
  train_cmd->add_option("--train", train_args->train_path, "training corpus (jsonl)")
      ->required();
  train_cmd->add_option("--dev", train_args->dev_path, "development corpus (jsonl)")
      ->required();
  train_cmd->add_option("--out", train_args->out_path, "model file to write")
      ->required();
  train_cmd->add_option("--epochs", train_args->config.epochs, "max epochs");
  train_cmd->add_option("--lr", train_args->config.learning_rate, "learning rate");
  train_cmd->add_option("--clip", train_args->config.clip, "gradient norm ceiling");
  train_cmd->add_option("--batch", train_args->config.batch_size, "batch size");
  train_cmd->add_option("--seed", train_args->config.seed, "shuffle seed");
  train_cmd->add_option("--patience", train_args->config.patience,
                        "epochs without dev improvement before stopping");
  train_cmd->callback([train_args] { cmd_train(*train_args); });

  auto* tag_cmd = app.add_subcommand("tag", "decode a corpus");
  auto tag_args = std::make_shared<TagArgs>();
  tag_cmd->add_option("--model", tag_args->model_path, "model file")->required();
  tag_cmd->add_option("--input", tag_args->input_path, "corpus to tag (jsonl)")
      ->required();
  tag_cmd->add_option("--output", tag_args->output_path, "predictions file")
      ->required();
  tag_cmd->add_option("--max-depth", tag_args->max_depth,
                      "deepest level to decode (0 = unlimited)");
  tag_cmd->add_option("--workers", tag_args->workers, "decoding threads");
  tag_cmd->callback([tag_args] { cmd_tag(*tag_args); });

  auto* eval_cmd = app.add_subcommand("eval", "score predictions");
  auto eval_args = std::make_shared<EvalArgs>();
  eval_cmd->add_option("--gold", eval_args->gold_path, "gold corpus")->required();
  eval_cmd->add_option("--pred", eval_args->pred_path, "predictions")->required();
  eval_cmd->add_flag("--json", eval_args->json, "emit JSON instead of text");
  eval_cmd->callback([eval_args] { cmd_eval(*eval_args); });

  auto* bench_cmd = app.add_subcommand("bench", "measure decoding throughput");
  auto bench_args = std::make_shared<BenchArgs>();
  bench_cmd->add_option("--model", bench_args->model_path, "model file")
      ->required();
  bench_cmd->add_option("--input", bench_args->input_path, "corpus")->required();
  bench_cmd->add_option("--max-depth", bench_args->depths,
                        "comma list of depth caps, e.g. 1,2,inf");
  bench_cmd->add_option("--repetitions", bench_args->repetitions,
                        "timed repetitions after one warm-up");
  bench_cmd->callback([bench_args] { cmd_bench(*bench_args); });

  auto* check_cmd = app.add_subcommand(
      "check", "compare decoder and objective against brute-force references");
  auto check_args = std::make_shared<CheckArgs>();
  check_cmd->add_option("--cases", check_args->options.cases, "random cases");
  check_cmd->add_option("--seed", check_args->options.seed, "rng seed");
  check_cmd
      ->add_flag("--self-test-corrupt", check_args->options.corrupt_transition,
                 "flip one transition in the reference scorer; the check "
                 "must then fail (negative control)")
      ->group("");  // hidden
  check_cmd->callback(
      [check_args, &exit_code] { exit_code = cmd_check(*check_args); });

  auto* gen_cmd = app.add_subcommand("gen-synth", "write a synthetic corpus");
  auto gen_args = std::make_shared<GenArgs>();
  gen_cmd->add_option("--out", gen_args->out_path, "corpus file to write")
      ->required();
  gen_cmd->add_option("--sentences", gen_args->config.n_sentences, "sentence count");
  gen_cmd->add_option("--seed", gen_args->config.seed, "rng seed");
  gen_cmd->add_option("--types", gen_args->types, "comma list of type names");
  gen_cmd->add_option("--max-depth", gen_args->config.max_depth,
                      "deepest nesting to generate");
  gen_cmd->add_option("--nesting-rate", gen_args->config.nesting_rate,
                      "chance a mention hosts a nested one");
  gen_cmd->add_option("--vocab", gen_args->config.vocab, "filler vocabulary size");
  gen_cmd->callback([gen_args] { cmd_gen_synth(*gen_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}
