#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nestseq/tags.hpp"

namespace nestseq {

// One sentence with its gold (or predicted) mentions. Validated documents
// have in-bounds, deduplicated, per-type non-crossing mentions in canonical
// (type, begin, end) order.
struct Document {
  std::vector<std::string> tokens;
  std::vector<Mention> mentions;
  std::string id;  // empty when absent

  friend bool operator==(const Document&, const Document&) = default;
};

// Canonicalizes and checks one document: bounds, token whitespace, duplicate
// collapse (logged), per-type crossing detection. line_no >= 1 names the
// source line in errors; pass 0 for documents built in memory.
Document validate_document(Document doc, int line_no);

// JSON-lines corpus: one object per line with "tokens", "mentions" and an
// optional "id". Mentions are [begin, end, type] triples over half-open
// token indices. Errors name the line and field.
std::vector<Document> read_corpus(const std::string& path);
void write_corpus(const std::vector<Document>& docs, const std::string& path);

// Sorted union of mention types present in the corpus.
std::vector<std::string> collect_types(const std::vector<Document>& docs);

struct CorpusStats {
  long long sentences = 0;
  long long tokens = 0;
  long long mentions = 0;
  int max_depth = 0;
  std::vector<long long> mentions_per_level;  // index 0 = level 1
  // Average number of IOBES tags per word and entity type: 1 from the
  // level-1 pass plus the share of words carrying deeper non-O tags.
  double labels_per_token = 1.0;
};

CorpusStats corpus_stats(const std::vector<Document>& docs);

struct SyntheticConfig {
  int n_sentences = 200;
  // Filler vocabulary size. Kept small so filler windows seen at decode
  // time mostly recur in a 200-sentence training set; identity features on
  // rare fillers otherwise dominate and generalization suffers.
  int vocab = 30;
  std::vector<std::string> types = {"alpha", "beta"};
  int max_depth = 3;
  // Chance that a mention hosts one nested a level deeper. The default
  // lands labels_per_token near 1.05 on the default config.
  double nesting_rate = 0.25;
  std::uint64_t seed = 0;
};

// Deterministic synthetic corpus. Mentions are delimited by type- and
// level-specific trigger tokens with filler widths capped so that every
// in-mention token sees a trigger within two positions; a +/-2 lexical
// window model can therefore fit the corpus essentially perfectly.
std::vector<Document> generate_synthetic(const SyntheticConfig& config);

}  // namespace nestseq
