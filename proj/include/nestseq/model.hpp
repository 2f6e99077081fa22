#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nestseq/corpus.hpp"
#include "nestseq/lattice.hpp"
#include "nestseq/objective.hpp"

namespace nestseq {

// One hashed feature with its value (1.0 for the indicator templates).
struct Feature {
  std::uint32_t id = 0;
  double value = 0.0;

  friend bool operator==(const Feature&, const Feature&) = default;
};

using FeatureVector = std::vector<Feature>;

struct FeatureConfig {
  int hash_bits = 20;  // hashed feature space of 2^hash_bits

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

// Stamped into model files; bump when the extractor templates change.
inline constexpr std::uint32_t kTemplateVersion = 1;

// Lexical window features per token: word identity, lowercase, prefixes and
// suffixes of length 1..3 and a word-shape class, for the token and its
// neighbors at offsets -2..2, with a padding symbol past the edges.
std::vector<FeatureVector> featurize(const std::vector<std::string>& tokens,
                                     const FeatureConfig& config = {});

struct TypeParams {
  // 5 x hash space; a feature's five tag weights sit in one column.
  Eigen::Matrix<double, kNumTags, Eigen::Dynamic> weights;
  Eigen::Matrix<double, kNumTags, 1> bias;
};

struct ModelParams {
  FeatureConfig features;
  std::map<std::string, TypeParams> types;

  int hash_space() const { return 1 << features.hash_bits; }
};

// Zero-initialized parameters for the given types (deduplicated, sorted).
ModelParams init_params(const std::vector<std::string>& types,
                        const FeatureConfig& config = {});

// P(t, i) = sum_f w[t, f.id] * f.value + b[t]: linear in the feature values.
EmissionMatrix emissions(const ModelParams& params, const std::string& type,
                         const std::vector<FeatureVector>& features);

// Lattices for every type of the model over one sentence, in type order.
std::vector<LatticeScores> score_sentence(const ModelParams& params,
                                          const std::vector<std::string>& tokens);

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 1e-3;
  double clip = 5.0;  // global gradient-norm ceiling
  int batch_size = 32;
  std::uint64_t seed = 0;
  int patience = 10;  // epochs without dev improvement before stopping
  FeatureConfig features;
  ObjectiveConfig objective;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_f1 = 0.0;
};

struct TrainResult {
  ModelParams params;  // best dev-F1 parameters (earliest on ties)
  std::vector<EpochLog> log;
  int best_epoch = 0;  // 0 when nothing beat the initial parameters
  double best_dev_f1 = 0.0;
};

// Mini-batch training of the per-type emission parameters with lazy Adam
// updates on the touched feature columns, global norm clipping and dev-F1
// early stopping. Deterministic for a fixed seed. Throws TrainingError when
// the loss turns non-finite.
TrainResult train(const std::vector<Document>& train_docs,
                  const std::vector<Document>& dev_docs,
                  const TrainConfig& config = {});

// Binary model container (magic "NSEQ", schema version 1, little-endian
// doubles; layout documented in the README). Byte-stable for equal params.
void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

}  // namespace nestseq
