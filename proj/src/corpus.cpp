#include "nestseq/corpus.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "nestseq/log.hpp"

namespace nestseq {

namespace {

using json = nlohmann::ordered_json;

std::string where(int line_no) {
  return line_no > 0 ? fmt::format("line {}", line_no) : "document";
}

Document validate_impl(Document doc, int line_no, long long* duplicates) {
  if (doc.tokens.empty())
    throw FormatError(fmt::format("{}: tokens must be non-empty", where(line_no)));
  for (size_t i = 0; i < doc.tokens.size(); ++i) {
    const std::string& tok = doc.tokens[i];
    if (tok.find('\t') != std::string::npos ||
        tok.find('\n') != std::string::npos)
      throw FormatError(fmt::format("{}: token {} contains tab or newline",
                                    where(line_no), i));
  }

  const int n = static_cast<int>(doc.tokens.size());
  for (const Mention& m : doc.mentions) {
    if (m.type.empty())
      throw FormatError(fmt::format("{}: mention {} has an empty type",
                                    where(line_no), to_string(m)));
    if (m.begin < 0 || m.end > n || m.width() <= 0)
      throw FormatError(
          fmt::format("{}: mention {} outside sentence of {} tokens",
                      where(line_no), to_string(m), n));
  }

  std::sort(doc.mentions.begin(), doc.mentions.end());
  const auto last = std::unique(doc.mentions.begin(), doc.mentions.end());
  const long long removed = doc.mentions.end() - last;
  doc.mentions.erase(last, doc.mentions.end());
  if (duplicates != nullptr) *duplicates += removed;

  try {
    mention_levels(doc.mentions);  // runs the per-type crossing check
  } catch (const CrossingEntityError& e) {
    throw CrossingEntityError(fmt::format("{}: {}", where(line_no), e.what()));
  }
  return doc;
}

Document parse_line(const std::string& line, int line_no,
                    long long* duplicates) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(fmt::format("line {}: not valid JSON: {}", line_no,
                                  e.what()));
  }
  if (!obj.is_object())
    throw FormatError(fmt::format("line {}: expected an object", line_no));
  for (const auto& [key, value] : obj.items()) {
    if (key != "tokens" && key != "mentions" && key != "id")
      throw FormatError(fmt::format("line {}: unknown field \"{}\"", line_no,
                                    key));
  }
  if (!obj.contains("tokens") || !obj["tokens"].is_array())
    throw FormatError(
        fmt::format("line {}: field \"tokens\" missing or not an array",
                    line_no));
  if (!obj.contains("mentions") || !obj["mentions"].is_array())
    throw FormatError(
        fmt::format("line {}: field \"mentions\" missing or not an array",
                    line_no));

  Document doc;
  for (const auto& tok : obj["tokens"]) {
    if (!tok.is_string())
      throw FormatError(
          fmt::format("line {}: field \"tokens\" holds a non-string", line_no));
    doc.tokens.push_back(tok.get<std::string>());
  }
  for (const auto& men : obj["mentions"]) {
    if (!men.is_array() || men.size() != 3 || !men[0].is_number_integer() ||
        !men[1].is_number_integer() || !men[2].is_string())
      throw FormatError(fmt::format(
          "line {}: field \"mentions\" entries must be [begin, end, type]",
          line_no));
    doc.mentions.push_back(
        {men[0].get<int>(), men[1].get<int>(), men[2].get<std::string>()});
  }
  if (obj.contains("id")) {
    if (!obj["id"].is_string())
      throw FormatError(
          fmt::format("line {}: field \"id\" must be a string", line_no));
    doc.id = obj["id"].get<std::string>();
  }
  return validate_impl(std::move(doc), line_no, duplicates);
}

}  // namespace

Document validate_document(Document doc, int line_no) {
  long long duplicates = 0;
  Document out = validate_impl(std::move(doc), line_no, &duplicates);
  if (duplicates > 0)
    log_warn(fmt::format("{}: removed {} duplicate mention(s)", where(line_no),
                         duplicates));
  return out;
}

std::vector<Document> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(fmt::format("cannot open {}", path));

  std::vector<Document> docs;
  std::string line;
  int line_no = 0;
  long long duplicates = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    docs.push_back(parse_line(line, line_no, &duplicates));
  }
  if (duplicates > 0)
    log_warn(fmt::format("{}: removed {} duplicate mention(s)", path,
                         duplicates));
  return docs;
}

void write_corpus(const std::vector<Document>& docs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError(fmt::format("cannot open {} for writing", path));
  for (const Document& doc : docs) {
    json obj;
    obj["tokens"] = doc.tokens;
    obj["mentions"] = json::array();
    for (const Mention& m : doc.mentions)
      obj["mentions"].push_back(json::array({m.begin, m.end, m.type}));
    if (!doc.id.empty()) obj["id"] = doc.id;
    out << obj.dump() << "\n";
  }
  if (!out) throw FormatError(fmt::format("write to {} failed", path));
}

std::vector<std::string> collect_types(const std::vector<Document>& docs) {
  std::set<std::string> types;
  for (const Document& doc : docs)
    for (const Mention& m : doc.mentions) types.insert(m.type);
  return {types.begin(), types.end()};
}

CorpusStats corpus_stats(const std::vector<Document>& docs) {
  CorpusStats stats;
  stats.sentences = static_cast<long long>(docs.size());
  long long nested_width = 0;
  for (const Document& doc : docs) {
    stats.tokens += static_cast<long long>(doc.tokens.size());
    stats.mentions += static_cast<long long>(doc.mentions.size());
    const std::vector<int> levels = mention_levels(doc.mentions);
    for (size_t i = 0; i < levels.size(); ++i) {
      const int level = levels[i];
      stats.max_depth = std::max(stats.max_depth, level);
      if (static_cast<int>(stats.mentions_per_level.size()) < level)
        stats.mentions_per_level.resize(level, 0);
      ++stats.mentions_per_level[level - 1];
      if (level >= 2) nested_width += doc.mentions[i].width();
    }
  }
  const size_t num_types = collect_types(docs).size();
  if (num_types > 0 && stats.tokens > 0)
    stats.labels_per_token =
        1.0 + static_cast<double>(nested_width) /
                  (static_cast<double>(num_types) *
                   static_cast<double>(stats.tokens));
  return stats;
}

namespace {

class Generator {
 public:
  explicit Generator(const SyntheticConfig& config)
      : config_(config), rng_(config.seed) {}

  Document sentence(int index) {
    tokens_.clear();
    mentions_.clear();
    const int structures = uniform(1, 3);
    fillers(uniform(0, 2));
    for (int s = 0; s < structures; ++s) {
      if (s > 0) fillers(uniform(1, 3));
      const std::string& type =
          config_.types[uniform(0, static_cast<int>(config_.types.size()) - 1)];
      if (chance(0.3)) {
        single(type, 1);
      } else {
        mention(type, 1);
      }
    }
    fillers(uniform(0, 2));

    Document doc;
    doc.tokens = tokens_;
    doc.mentions = mentions_;
    doc.id = fmt::format("synth-{:05d}", index);
    return validate_document(std::move(doc), 0);
  }

 private:
  int uniform(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng_);
  }
  bool chance(double p) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p;
  }
  void fillers(int count) {
    for (int i = 0; i < count; ++i)
      tokens_.push_back(fmt::format("w{}", uniform(0, config_.vocab - 1)));
  }

  void single(const std::string& type, int level) {
    const int start = static_cast<int>(tokens_.size());
    tokens_.push_back(fmt::format("{}.u{}", type, level));
    mentions_.push_back({start, start + 1, type});
  }

  // Trigger-delimited mention: open, interior, close. The interior holds a
  // short filler run, one nested single-token mention, or a start-aligned
  // nested chain; fillers are capped so every token stays within two
  // positions of a trigger (the feature window).
  //
  // Multi-token nested mentions always share the enclosing opener. A nested
  // span with both boundaries strictly inside its parent is not jointly
  // learnable by a single emission matrix: the runner-up search must rank
  // the child's tagging above "child extended to the parent's end" while
  // the sentence pass must rank the parent above "parent shrunk to the
  // child's end", and those are the same position-wise comparison with
  // opposite signs. When the child starts at the parent's start, the
  // extended tagging is the parent's own path, which the runner-up search
  // excludes, so both preferences can hold at once.
  void mention(const std::string& type, int level) {
    const int start = static_cast<int>(tokens_.size());
    tokens_.push_back(fmt::format("{}.b{}", type, level));
    const bool nested = level < config_.max_depth && chance(config_.nesting_rate);
    if (!nested) {
      fillers(uniform(1, 3));
    } else if (chance(0.4)) {
      if (chance(0.5)) fillers(1);
      single(type, level + 1);
      if (chance(0.5)) fillers(1);
    } else {
      chain(type, level + 1, start);
      if (chance(0.5)) fillers(1);
    }
    tokens_.push_back(fmt::format("{}.e{}", type, level));
    mentions_.push_back({start, static_cast<int>(tokens_.size()), type});
  }

  // Start-aligned nested chain: the mention at `level` begins at the shared
  // opener already emitted at `start` and closes with its own trigger;
  // deeper mentions nest the same way, innermost closing first.
  void chain(const std::string& type, int level, int start) {
    if (level < config_.max_depth && chance(config_.nesting_rate)) {
      chain(type, level + 1, start);
      if (chance(0.5)) fillers(1);
    } else {
      fillers(uniform(1, 2));
    }
    tokens_.push_back(fmt::format("{}.c{}", type, level));
    mentions_.push_back({start, static_cast<int>(tokens_.size()), type});
  }

  const SyntheticConfig& config_;
  std::mt19937_64 rng_;
  std::vector<std::string> tokens_;
  std::vector<Mention> mentions_;
};

}  // namespace

std::vector<Document> generate_synthetic(const SyntheticConfig& config) {
  if (config.n_sentences < 0)
    throw ConfigError("n_sentences must be >= 0");
  if (config.vocab < 1) throw ConfigError("vocab must be >= 1");
  if (config.types.empty()) throw ConfigError("types must be non-empty");
  for (const std::string& type : config.types)
    if (type.empty() || type.find('.') != std::string::npos)
      throw ConfigError(fmt::format("unusable type name \"{}\"", type));
  if (config.nesting_rate < 0.0 || config.nesting_rate > 1.0)
    throw ConfigError(fmt::format("nesting rate {} outside [0,1]",
                                  config.nesting_rate));
  if (config.max_depth < 1)
    throw ConfigError(fmt::format("max depth {} must be >= 1", config.max_depth));
  // The deepest start-aligned chain occupies up to 2*depth + 2 tokens; past
  // the generator's structure budget it cannot be produced, so reject
  // instead of silently flattening.
  constexpr int kStructureBudget = 11;
  if (2 * config.max_depth + 2 > kStructureBudget)
    throw ConfigError(fmt::format(
        "max depth {} cannot fit a structure of at most {} tokens",
        config.max_depth, kStructureBudget));

  Generator gen(config);
  std::vector<Document> docs;
  docs.reserve(config.n_sentences);
  for (int i = 0; i < config.n_sentences; ++i) docs.push_back(gen.sentence(i));
  return docs;
}

}  // namespace nestseq
