#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "absa/archive.hpp"
#include "absa/corpus.hpp"
#include "absa/embeddings.hpp"
#include "absa/params.hpp"
#include "absa/tape.hpp"

namespace absa {

enum class Architecture { e2e_cnn, e2e_lstm, pipe_cnn, pipe_lstm };

std::string_view architecture_name(Architecture a);
std::optional<Architecture> parse_architecture(std::string_view name);
inline bool is_pipeline(Architecture a) { return a == Architecture::pipe_cnn || a == Architecture::pipe_lstm; }
inline bool uses_lstm(Architecture a) { return a == Architecture::e2e_lstm || a == Architecture::pipe_lstm; }

struct ModelConfig {
  Architecture arch = Architecture::e2e_cnn;
  std::vector<std::size_t> filter_widths{3, 4, 5};
  std::size_t filters_per_width = 300;
  // LSTM hidden units per direction.
  std::size_t hidden = 200;
  std::size_t aspect_embed_dim = 15;
  double dropout = 0.5;
  // Weights start uniform in [-init_scale, init_scale]; biases at zero.
  double init_scale = 0.05;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Trainable token lookup. In-vocabulary tokens read their own row; unseen
// tokens average their n-gram bucket rows, each bucket receiving an equal
// share of the gradient. Without subword buckets, unseen tokens map to a
// constant fallback vector. The pad token is the zero vector.
class EmbeddingLayer {
 public:
  EmbeddingLayer() = default;
  // Copies the table into trainable parameters. Buckets of unseen tokens in
  // `training_tokens` get rows even when the table stores them as zero.
  EmbeddingLayer(const EmbeddingTable& table, const std::vector<std::vector<std::string>>& training_tokens,
                 ParameterStore& store);

  std::size_t dim() const noexcept { return dim_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }

  // Embeds tokens into a (max(n, min_length)) x dim value, right-padding with
  // zero rows.
  Var embed(Tape& tape, const ParameterStore& store, std::span<const std::string> tokens,
            std::size_t min_length = 1) const;
  std::vector<double> lookup(const ParameterStore& store, std::string_view token) const;

  // Current parameters as a standalone table.
  EmbeddingTable to_table(const ParameterStore& store) const;

  void save(Archive& archive) const;
  static EmbeddingLayer load(const Archive& archive, const ParameterStore& store);

 private:
  struct Source {
    enum class Kind { pad, word, buckets, constant } kind = Kind::pad;
    std::size_t row = 0;
    std::vector<std::size_t> bucket_rows;  // rows into the bucket parameter
    std::size_t gram_count = 0;            // denominator, including zero buckets
    std::vector<double> constant;
  };
  Source resolve(std::string_view token) const;

  std::size_t dim_ = 0;
  Vocabulary vocab_;
  SubwordConfig subwords_{0, 3, 6};
  std::unordered_map<std::uint32_t, std::size_t> bucket_rows_;
  std::vector<std::uint32_t> bucket_ids_;
  ParamId words_ = 0;
  ParamId buckets_ = 0;
};

class CnnEncoder {
 public:
  CnnEncoder() = default;
  CnnEncoder(const ModelConfig& cfg, std::size_t input_dim, ParameterStore& store, Rng& rng);
  static CnnEncoder bind(const ModelConfig& cfg, const ParameterStore& store);

  std::size_t output_dim() const noexcept { return widths_.size() * filters_; }
  std::size_t min_length() const noexcept;
  // ReLU convolutions, max-over-time pooling, then dropout on the pooled
  // features.
  Var encode(Tape& tape, const ParameterStore& store, Var embedded, Mode mode, Rng& rng) const;

 private:
  std::vector<std::size_t> widths_;
  std::size_t filters_ = 0;
  double dropout_ = 0.0;
  std::vector<ParamId> kernels_;
  std::vector<ParamId> biases_;
};

// Gate layout along the 4H axis: input, forget, candidate, output.
class LstmEncoder {
 public:
  LstmEncoder() = default;
  LstmEncoder(const ModelConfig& cfg, std::size_t input_dim, ParameterStore& store, Rng& rng);
  static LstmEncoder bind(const ModelConfig& cfg, const ParameterStore& store);

  std::size_t output_dim() const noexcept { return 2 * hidden_; }
  // Dropout on the embeddings, forward and backward passes, concatenation of
  // the two final hidden states, dropout on the result.
  Var encode(Tape& tape, const ParameterStore& store, Var embedded, Mode mode, Rng& rng) const;

  struct Direction {
    ParamId input_weights = 0;   // input_dim x 4H
    ParamId hidden_weights = 0;  // H x 4H
    ParamId bias = 0;            // 4H
  };
  const Direction& forward_direction() const noexcept { return fwd_; }
  const Direction& backward_direction() const noexcept { return bwd_; }

 private:
  Var run(Tape& tape, const ParameterStore& store, Var inputs, const Direction& dir, bool reverse) const;

  std::size_t hidden_ = 0;
  double dropout_ = 0.0;
  Direction fwd_;
  Direction bwd_;
};

struct AspectPrediction {
  std::size_t aspect = 0;
  Polarity polarity = Polarity::positive;
  // Softmax probability of the winning class.
  double confidence = 0.0;
};

struct PredictionSet {
  std::vector<AspectPrediction> items;  // ascending aspect order

  LabelMap labels() const;
  LabelVector label_vector(const AspectCatalog& catalog) const;
};

// Per-aspect softmax(W_a v + b_a). heads is (4|A|) x D, stacked aspect-major;
// bias has 4|A| entries. Returns |A| x 4.
Tensor aspect_scores(std::span<const double> v, const Tensor& heads, const Tensor& bias);
// Per-aspect argmax with ties broken toward the lowest class index.
LabelVector decode(const Tensor& scores);
// Sum over aspects of the cross entropy against the gold class.
double joint_loss(const Tensor& scores, const LabelVector& gold);

struct DetectorConfig {
  std::size_t epochs = 200;
  double lr = 0.5;
  double l2 = 1e-4;
  std::uint64_t seed = 42;
};

// Stand-in aspect detector: one logistic classifier per aspect over the mean
// of the document's token embeddings, with a per-aspect probability
// threshold tuned for F1 on development data. It never predicts polarity.
class AspectDetector {
 public:
  AspectDetector() = default;

  bool trained() const noexcept { return trained_; }
  std::size_t aspect_count() const noexcept { return bias_.size(); }

  void train(const std::vector<Document>& train, const std::vector<Document>& dev, const EmbeddingTable& table,
             std::size_t aspect_count, const DetectorConfig& cfg);

  std::vector<double> features(std::span<const std::string> tokens) const;
  std::vector<double> scores(std::span<const std::string> tokens) const;
  std::vector<std::size_t> detect(std::span<const std::string> tokens) const;

  std::span<const double> thresholds() const noexcept { return thresholds_; }
  void set_thresholds(std::vector<double> thresholds);

  void save(Archive& archive, const std::string& key) const;
  static AspectDetector load(const Archive& archive, const std::string& key);

 private:
  EmbeddingTable table_;
  Tensor weights_;  // |A| x dim
  std::vector<double> bias_;
  std::vector<double> thresholds_;
  bool trained_ = false;
};

void save_detector(const AspectDetector& detector, const AspectCatalog& catalog, const std::filesystem::path& path);
AspectDetector load_detector(const std::filesystem::path& path, const AspectCatalog& catalog);

// One training instance: the whole label vector for end-to-end models, one
// (aspect, polarity) pair for pipeline models.
struct TrainingExample {
  const std::vector<std::string>* tokens = nullptr;
  LabelVector joint;
  std::size_t aspect = 0;
  Polarity polarity = Polarity::positive;
};

class Model {
 public:
  Model() = default;
  Model(ModelConfig cfg, AspectCatalog catalog, const EmbeddingTable& table,
        const std::vector<std::vector<std::string>>& training_tokens, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  const AspectCatalog& catalog() const noexcept { return catalog_; }
  ParameterStore& params() noexcept { return store_; }
  const ParameterStore& params() const noexcept { return store_; }
  const EmbeddingLayer& embedding() const noexcept { return embedding_; }
  std::size_t feature_dim() const noexcept;

  AspectDetector& detector() noexcept { return detector_; }
  const AspectDetector& detector() const noexcept { return detector_; }

  // Document representation v.
  Var encode(Tape& tape, std::span<const std::string> tokens, Mode mode, Rng& rng) const;
  // End-to-end: |A| x 4 class distributions.
  Var aspect_scores(Tape& tape, std::span<const std::string> tokens, Mode mode, Rng& rng) const;
  Var joint_loss(Tape& tape, std::span<const std::string> tokens, const LabelVector& gold, Mode mode,
                 Rng& rng) const;
  // Pipeline: 1 x 3 distribution over {positive, negative, neutral}.
  Var polarity_scores(Tape& tape, std::span<const std::string> tokens, std::size_t aspect, Mode mode,
                      Rng& rng) const;
  Var pipeline_loss(Tape& tape, std::span<const std::string> tokens, std::size_t aspect, Polarity gold, Mode mode,
                    Rng& rng) const;

  Var example_loss(Tape& tape, const TrainingExample& ex, Mode mode, Rng& rng) const;
  // Runs backward from `loss` into fresh gradients. The tape must have been
  // recorded against this model's parameters.
  Gradients backward(Tape& tape, Var loss) const;
  // Same, accumulating into an existing sink.
  void backward(Tape& tape, Var loss, Gradients& sink) const;

  AspectPrediction pipeline_classify(std::span<const std::string> tokens, std::size_t aspect) const;
  // Inference-mode prediction. Pipeline models classify the detected aspects.
  PredictionSet predict(std::span<const std::string> tokens) const;

  void save(const std::filesystem::path& path) const;
  void save(std::ostream& out) const;
  // Refuses to load when `expected` is given and its hash differs from the
  // stored catalog.
  static Model load(const std::filesystem::path& path, const AspectCatalog* expected = nullptr);
  static Model load(std::istream& in, const AspectCatalog* expected = nullptr);

 private:
  static Model from_archive(const Archive& archive, const AspectCatalog* expected);

  ModelConfig cfg_;
  AspectCatalog catalog_;
  ParameterStore store_;
  EmbeddingLayer embedding_;
  CnnEncoder cnn_;
  LstmEncoder lstm_;
  ParamId heads_ = 0;
  ParamId head_bias_ = 0;
  ParamId aspect_embedding_ = 0;
  AspectDetector detector_;
};

}  // namespace absa
