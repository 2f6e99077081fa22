#include "nestseq/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <unordered_map>

#include "nestseq/decode.hpp"
#include "nestseq/eval.hpp"
#include "nestseq/log.hpp"

namespace nestseq {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string shape_of(const std::string& token) {
  std::string shape;
  shape.reserve(token.size());
  for (unsigned char c : token) {
    if (std::isupper(c))
      shape += 'A';
    else if (std::islower(c))
      shape += 'a';
    else if (std::isdigit(c))
      shape += '0';
    else
      shape += '-';
  }
  return shape;
}

std::string lower_of(const std::string& token) {
  std::string lower = token;
  for (char& c : lower)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return lower;
}

constexpr const char* kPad = "<pad>";

}  // namespace

std::vector<FeatureVector> featurize(const std::vector<std::string>& tokens,
                                     const FeatureConfig& config) {
  if (tokens.empty()) throw ShapeError("cannot featurize an empty sentence");
  if (config.hash_bits < 1 || config.hash_bits > 30)
    throw ConfigError(fmt::format("hash bits {} outside [1,30]",
                                  config.hash_bits));
  const std::uint64_t mask = (1ull << config.hash_bits) - 1;
  const int n = static_cast<int>(tokens.size());

  std::vector<FeatureVector> out(n);
  for (int i = 0; i < n; ++i) {
    FeatureVector& fv = out[i];
    fv.reserve(55);
    const auto add = [&](const std::string& name) {
      fv.push_back({static_cast<std::uint32_t>(fnv1a(name) & mask), 1.0});
    };
    for (int offset = -2; offset <= 2; ++offset) {
      const int j = i + offset;
      const std::string& tok =
          j < 0 || j >= n ? std::string(kPad) : tokens[j];
      const std::string lower = lower_of(tok);
      add(fmt::format("w[{}]={}", offset, tok));
      add(fmt::format("lw[{}]={}", offset, lower));
      for (size_t k = 1; k <= 3; ++k) {
        add(fmt::format("p{}[{}]={}", k, offset,
                        lower.substr(0, std::min(k, lower.size()))));
        add(fmt::format("s{}[{}]={}", k, offset,
                        lower.substr(lower.size() - std::min(k, lower.size()))));
      }
      add(fmt::format("sh[{}]={}", offset, shape_of(tok)));
    }
  }
  return out;
}

ModelParams init_params(const std::vector<std::string>& types,
                        const FeatureConfig& config) {
  if (types.empty()) throw ConfigError("no entity types to initialize");
  if (config.hash_bits < 1 || config.hash_bits > 30)
    throw ConfigError(fmt::format("hash bits {} outside [1,30]",
                                  config.hash_bits));
  ModelParams params;
  params.features = config;
  for (const std::string& type : types) {
    if (type.empty()) throw ConfigError("empty entity type name");
    TypeParams tp;
    tp.weights.setZero(kNumTags, params.hash_space());
    tp.bias.setZero();
    params.types.emplace(type, std::move(tp));
  }
  return params;
}

EmissionMatrix emissions(const ModelParams& params, const std::string& type,
                         const std::vector<FeatureVector>& features) {
  const auto it = params.types.find(type);
  if (it == params.types.end())
    throw ConfigError(fmt::format("model has no type {}", type));
  const TypeParams& tp = it->second;
  const int space = params.hash_space();

  EmissionMatrix P(kNumTags, static_cast<int>(features.size()));
  for (size_t i = 0; i < features.size(); ++i) {
    P.col(i) = tp.bias;
    for (const Feature& f : features[i]) {
      if (f.id >= static_cast<std::uint32_t>(space))
        throw BoundsError(fmt::format("feature id {} outside hash space {}",
                                      f.id, space));
      P.col(i) += f.value * tp.weights.col(f.id);
    }
  }
  return P;
}

std::vector<LatticeScores> score_sentence(const ModelParams& params,
                                          const std::vector<std::string>& tokens) {
  const auto features = featurize(tokens, params.features);
  std::vector<LatticeScores> scores;
  scores.reserve(params.types.size());
  for (const auto& [type, tp] : params.types)
    scores.emplace_back(type, emissions(params, type, features));
  return scores;
}

namespace {

using Vec5 = Eigen::Matrix<double, kNumTags, 1>;

// Gradient of one mini-batch, sparse over touched feature columns.
struct SparseGrad {
  std::unordered_map<std::uint32_t, Vec5> weight_cols;
  Vec5 bias = Vec5::Zero();
};

struct AdamState {
  Eigen::Matrix<double, kNumTags, Eigen::Dynamic> m_w, v_w;
  Vec5 m_b = Vec5::Zero(), v_b = Vec5::Zero();
};

struct PreparedDoc {
  std::vector<FeatureVector> features;
  LevelizedGold gold;
};

double dev_micro_f1(const ModelParams& params,
                    const std::vector<Document>& dev_docs,
                    const std::vector<std::vector<FeatureVector>>& dev_features) {
  std::vector<std::vector<Mention>> predictions;
  predictions.reserve(dev_docs.size());
  for (size_t d = 0; d < dev_docs.size(); ++d) {
    std::vector<LatticeScores> scores;
    for (const auto& [type, tp] : params.types)
      scores.emplace_back(type, emissions(params, type, dev_features[d]));
    predictions.push_back(
        nested_decode(scores, static_cast<int>(dev_docs[d].tokens.size())));
  }
  return evaluate(dev_docs, predictions).f1;
}

}  // namespace

TrainResult train(const std::vector<Document>& train_docs,
                  const std::vector<Document>& dev_docs,
                  const TrainConfig& config) {
  if (config.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (config.batch_size < 1) throw ConfigError("batch size must be >= 1");
  // Zero is a legal degenerate rate: the optimizer runs but nothing moves.
  if (config.learning_rate < 0.0) throw ConfigError("learning rate must be >= 0");
  if (config.clip <= 0.0) throw ConfigError("clip must be > 0");
  if (config.patience < 1) throw ConfigError("patience must be >= 1");
  if (train_docs.empty()) throw ConfigError("training corpus is empty");

  const std::vector<std::string> types = collect_types(train_docs);
  if (types.empty())
    throw ConfigError("training corpus has no mentions, nothing to learn");

  TrainResult result;
  result.params = init_params(types, config.features);
  ModelParams& params = result.params;

  std::vector<PreparedDoc> prepared;
  prepared.reserve(train_docs.size());
  for (const Document& doc : train_docs)
    prepared.push_back({featurize(doc.tokens, config.features),
                        levelize(doc.mentions,
                                 static_cast<int>(doc.tokens.size()), types)});

  std::vector<std::vector<FeatureVector>> dev_features;
  dev_features.reserve(dev_docs.size());
  for (const Document& doc : dev_docs)
    dev_features.push_back(featurize(doc.tokens, config.features));

  std::map<std::string, AdamState> adam;
  for (const std::string& type : types) {
    AdamState state;
    state.m_w.setZero(kNumTags, params.hash_space());
    state.v_w.setZero(kNumTags, params.hash_space());
    adam.emplace(type, std::move(state));
  }

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  long long step = 0;
  ModelParams best_params = params;
  double best_f1 = -1.0;
  int best_epoch = 0;
  int stale_epochs = 0;

  std::mt19937_64 rng(config.seed);
  std::vector<size_t> order(prepared.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;

    for (size_t batch_start = 0; batch_start < order.size();
         batch_start += config.batch_size) {
      const size_t batch_end =
          std::min(order.size(), batch_start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(batch_end - batch_start);

      std::map<std::string, SparseGrad> grads;
      for (const std::string& type : types) grads[type];

      for (size_t b = batch_start; b < batch_end; ++b) {
        const PreparedDoc& doc = prepared[order[b]];
        std::vector<LatticeScores> scores;
        for (const std::string& type : types) {
          EmissionMatrix P = emissions(params, type, doc.features);
          // Parameters large enough to overflow the scores have diverged;
          // report that rather than tripping the lattice's finiteness check.
          if (!P.allFinite())
            throw TrainingError(
                fmt::format("loss diverged at epoch {}", epoch));
          scores.emplace_back(type, std::move(P));
        }

        LossBreakdown breakdown;
        const std::vector<EmissionMatrix> dP =
            sentence_loss_grad(scores, doc.gold, config.objective, &breakdown);
        if (!std::isfinite(breakdown.total))
          throw TrainingError(
              fmt::format("loss diverged at epoch {}", epoch));
        epoch_loss += breakdown.total;

        for (size_t k = 0; k < types.size(); ++k) {
          SparseGrad& g = grads[types[k]];
          for (size_t i = 0; i < doc.features.size(); ++i) {
            const Vec5 col = dP[k].col(i);
            g.bias += col;
            for (const Feature& f : doc.features[i]) {
              auto it = g.weight_cols.try_emplace(f.id, Vec5::Zero()).first;
              it->second += f.value * col;
            }
          }
        }
      }

      // Mean over the batch, then one global norm across every type.
      double sq_norm = 0.0;
      for (auto& [type, g] : grads) {
        g.bias *= inv_batch;
        sq_norm += g.bias.squaredNorm();
        for (auto& [id, col] : g.weight_cols) {
          col *= inv_batch;
          sq_norm += col.squaredNorm();
        }
      }
      const double norm = std::sqrt(sq_norm);
      const double rescale = norm > config.clip ? config.clip / norm : 1.0;

      ++step;
      const double bias_fix1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bias_fix2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (const std::string& type : types) {
        SparseGrad& g = grads[type];
        AdamState& state = adam[type];
        TypeParams& tp = params.types[type];

        // Touched columns in sorted order keep the arithmetic sequence
        // identical from run to run.
        std::vector<std::uint32_t> ids;
        ids.reserve(g.weight_cols.size());
        for (const auto& [id, col] : g.weight_cols) ids.push_back(id);
        std::sort(ids.begin(), ids.end());

        for (std::uint32_t id : ids) {
          const Vec5 grad_col = g.weight_cols[id] * rescale;
          state.m_w.col(id) = kBeta1 * state.m_w.col(id) + (1 - kBeta1) * grad_col;
          state.v_w.col(id) =
              kBeta2 * state.v_w.col(id) + (1 - kBeta2) * grad_col.cwiseAbs2();
          const Vec5 m_hat = state.m_w.col(id) / bias_fix1;
          const Vec5 v_hat = state.v_w.col(id) / bias_fix2;
          tp.weights.col(id) -=
              config.learning_rate *
              (m_hat.array() / (v_hat.array().sqrt() + kEps)).matrix();
        }
        const Vec5 grad_b = g.bias * rescale;
        state.m_b = kBeta1 * state.m_b + (1 - kBeta1) * grad_b;
        state.v_b = kBeta2 * state.v_b + (1 - kBeta2) * grad_b.cwiseAbs2();
        tp.bias -= config.learning_rate *
                   ((state.m_b / bias_fix1).array() /
                    ((state.v_b / bias_fix2).array().sqrt() + kEps))
                       .matrix();
      }
    }

    const double mean_loss = epoch_loss / static_cast<double>(prepared.size());
    const double dev_f1 =
        dev_docs.empty() ? 0.0 : dev_micro_f1(params, dev_docs, dev_features);
    result.log.push_back({epoch, mean_loss, dev_f1});
    log_info(fmt::format("epoch {:3d}  train loss {:.6f}  dev f1 {:.4f}",
                         epoch, mean_loss, dev_f1));

    if (dev_docs.empty()) {
      // Nothing to select on: keep the latest parameters.
      best_params = params;
      best_epoch = epoch;
      continue;
    }
    if (dev_f1 > best_f1) {
      best_f1 = dev_f1;
      best_epoch = epoch;
      best_params = params;
      stale_epochs = 0;
    } else if (++stale_epochs >= config.patience) {
      log_info(fmt::format("no dev improvement for {} epochs, stopping",
                           config.patience));
      break;
    }
  }

  if (config.epochs > 0) result.params = std::move(best_params);
  result.best_epoch = best_epoch;
  result.best_dev_f1 = std::max(best_f1, 0.0);
  return result;
}

namespace {

constexpr char kMagic[4] = {'N', 'S', 'E', 'Q'};
constexpr std::uint32_t kModelVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  size_t offset = 0;

  void need(size_t count, const char* what) {
    if (offset + count > buf.size())
      throw FormatError(fmt::format("truncated model file: {} at offset {}",
                                    what, offset));
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[offset + i]))
           << (8 * i);
    offset += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[offset + i]))
              << (8 * i);
    offset += 8;
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
  }
  std::string str(size_t count, const char* what) {
    need(count, what);
    std::string s = buf.substr(offset, count);
    offset += count;
    return s;
  }
};

}  // namespace

void save_model(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(fmt::format("cannot open {} for writing", path));

  std::string header;
  header.append(kMagic, 4);
  put_u32(header, kModelVersion);
  put_u32(header, static_cast<std::uint32_t>(params.features.hash_bits));
  put_u32(header, kTemplateVersion);
  put_u32(header, static_cast<std::uint32_t>(params.types.size()));
  for (const auto& [type, tp] : params.types) {
    put_u32(header, static_cast<std::uint32_t>(type.size()));
    header += type;
  }
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  std::string block;
  for (const auto& [type, tp] : params.types) {
    block.clear();
    block.reserve(8 * (kNumTags + tp.weights.size()));
    for (int c = 0; c < kNumTags; ++c) put_f64(block, tp.bias(c));
    // Column-major: five tag weights per feature, features in id order.
    const double* data = tp.weights.data();
    for (Eigen::Index i = 0; i < tp.weights.size(); ++i) put_f64(block, data[i]);
    out.write(block.data(), static_cast<std::streamsize>(block.size()));
  }
  if (!out) throw FormatError(fmt::format("write to {} failed", path));
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(fmt::format("cannot open {}", path));
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  Reader r{buf};
  const std::string magic = r.str(4, "magic");
  if (magic != std::string(kMagic, 4))
    throw FormatError("not a model file (bad magic at offset 0)");
  const std::uint32_t version = r.u32("version");
  if (version != kModelVersion)
    throw VersionError(fmt::format("model schema version {} not supported",
                                   version));
  const std::uint32_t hash_bits = r.u32("hash bits");
  if (hash_bits < 1 || hash_bits > 30)
    throw FormatError(fmt::format("hash bits {} outside [1,30]", hash_bits));
  const std::uint32_t template_version = r.u32("template version");
  if (template_version != kTemplateVersion)
    throw VersionError(fmt::format("feature template version {} not supported",
                                   template_version));
  const std::uint32_t num_types = r.u32("type count");

  std::vector<std::string> names;
  for (std::uint32_t i = 0; i < num_types; ++i) {
    const std::uint32_t len = r.u32("type name length");
    names.push_back(r.str(len, "type name"));
  }

  ModelParams params = init_params(
      names, FeatureConfig{static_cast<int>(hash_bits)});
  if (params.types.size() != names.size())
    throw FormatError("duplicate type names in model file");

  for (const std::string& name : names) {
    TypeParams& tp = params.types[name];
    for (int c = 0; c < kNumTags; ++c) tp.bias(c) = r.f64("bias");
    double* data = tp.weights.data();
    const size_t bytes = 8 * static_cast<size_t>(tp.weights.size());
    r.need(bytes, "weights");
    for (Eigen::Index i = 0; i < tp.weights.size(); ++i)
      data[i] = r.f64("weights");
  }
  if (r.offset != buf.size())
    throw FormatError(fmt::format("trailing bytes after offset {}", r.offset));
  return params;
}

}  // namespace nestseq
