#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "absa/corpus.hpp"
#include "absa/models.hpp"

namespace absa {

enum class Task { aspect_sentiment, aspect_only };

std::string_view task_name(Task t);  // "aspect+sentiment" / "aspect-only"
std::optional<Task> parse_task(std::string_view name);

struct HyperConfig {
  Architecture arch = Architecture::e2e_cnn;
  double lr = 0.03;
  std::size_t batch_size = 5;
  std::size_t epochs = 200;
  std::size_t patience = 10;
  std::uint64_t seed = 42;
  // Unset means: on for LSTM models, off for CNN models.
  std::optional<bool> clip;
  double clip_norm = 5.0;
  double dropout = 0.5;
  std::string embedding_source;

  bool clipping() const { return clip.value_or(uses_lstm(arch)); }
  // CNN: lr 0.03, batch 5. LSTM: lr 0.01, batch 10.
  static HyperConfig defaults_for(Architecture arch);
  void validate() const;
  nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
  Task task = Task::aspect_sentiment;
  std::string split;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  nlohmann::json to_json() const;
};

// Predicted and gold labels of one document.
struct ScoredDocument {
  std::string id;
  LabelMap labels;
};

// Micro P/R/F1 over (doc, aspect, polarity) triples or (doc, aspect) pairs.
// Both sides must carry the same set of document ids.
EvalReport micro_f1(const std::vector<ScoredDocument>& predicted, const std::vector<ScoredDocument>& gold, Task task);

// The most frequent (aspect, polarity) pair of the training data, predicted
// for every document. Ties go to the smaller (aspect, class) pair.
struct MajorityBaseline {
  std::size_t aspect = 0;
  Polarity polarity = Polarity::positive;

  static MajorityBaseline fit(const std::vector<Document>& train);
  LabelMap predict() const { return {{aspect, polarity}}; }
};

// Aspect proposals for pipeline models; overrides the model's own detector.
using AspectSource = std::function<std::vector<std::size_t>(const Document&)>;

LabelMap predict_labels(const Model& model, const Document& doc, const AspectSource& aspects = {});
std::vector<ScoredDocument> predict_split(const Model& model, const std::vector<Document>& docs,
                                          const AspectSource& aspects = {});
std::vector<ScoredDocument> gold_split(const std::vector<Document>& docs);
EvalReport evaluate(const Model& model, const std::vector<Document>& docs, Task task, std::string split_label,
                    const AspectSource& aspects = {});

struct PublishedScore {
  std::string system;     // e.g. "e2e-cnn", "majority"
  std::string embedding;  // "word2vec", "glove", "fasttext" or "" for baselines
  Task task;
  std::string split;  // "dev", "test-syn", "test-dia"
  double f1;
};

// Published GermEval 2017 reference scores for the twelve architecture x
// embedding cells and the majority baseline.
const std::vector<PublishedScore>& published_reference_scores();
std::optional<double> published_reference(std::string_view system, std::string_view embedding, Task task,
                                          std::string_view split);

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean example loss over the epoch
  double dev_f1 = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0: initial parameters kept
  double best_dev_f1 = 0.0;

  // epoch,loss,dev_f1 with a trailing best marker column.
  void write_csv(std::ostream& out) const;
  // epoch,seconds.
  void write_timing_csv(std::ostream& out) const;
};

// Examples for one epoch: the label vector per document for end-to-end
// models, one entry per gold (aspect, polarity) pair for pipeline models.
std::vector<TrainingExample> make_examples(const Model& model, const std::vector<Document>& docs);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch SGD with early stopping on dev aspect+sentiment F1; the best
// epoch's parameters are restored before returning. An empty dev split is
// replaced by the training split. Pipeline models score dev with the model's
// detector when trained, gold aspects otherwise.
TrainHistory train_model(Model& model, const std::vector<Document>& train, const std::vector<Document>& dev,
                         const HyperConfig& hyper, const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------
// Random search

struct SearchSpace {
  std::vector<double> learning_rates{0.001, 0.003, 0.01, 0.03, 0.1};
  std::vector<std::size_t> batch_sizes{5, 10, 20};

  std::size_t size() const { return learning_rates.size() * batch_sizes.size(); }
};

struct Trial {
  std::size_t index = 0;
  double lr = 0.0;
  std::size_t batch_size = 0;
  double dev_f1 = 0.0;
  std::size_t best_epoch = 0;

  nlohmann::json to_json() const;
};

struct SearchResult {
  HyperConfig best;
  double best_dev_f1 = 0.0;
  std::vector<Trial> trials;
  bool clamped = false;
};

// Trains `run` on configurations drawn without replacement from the space
// (order seeded by base.seed). The first trial with the highest dev F1 wins.
// Each trial is appended to `log` as one JSON line.
using TrialRunner = std::function<TrainHistory(const HyperConfig&)>;
SearchResult random_search(const SearchSpace& space, std::size_t trials, const HyperConfig& base,
                           const TrialRunner& run, std::ostream* log = nullptr, std::ostream* warnings = nullptr);

// ---------------------------------------------------------------------------
// Synthetic trigger-token data

struct SyntheticConfig {
  std::size_t aspects = 6;
  std::size_t train_docs = 32;
  std::size_t dev_docs = 32;
  std::size_t test_docs = 64;
  std::size_t max_labels = 2;
  std::size_t filler_vocab = 40;
  std::size_t min_filler = 3;
  std::size_t max_filler = 8;
  std::size_t dim = 16;
  std::uint64_t seed = 7;
};

// Every (aspect, polarity) pair owns one trigger token "t<a><p>"; documents
// mix the triggers of their labels with random filler words.
struct SyntheticData {
  AspectCatalog catalog;
  std::vector<Document> train;
  std::vector<Document> dev;
  std::vector<Document> test;
  EmbeddingTable embeddings;
};

std::string trigger_token(std::size_t aspect, Polarity polarity);
SyntheticData make_synthetic(const SyntheticConfig& cfg);

// Keeps each gold aspect of a document only when a seeded hash of (doc id,
// aspect) falls below `recall`, so recall is capped near that value.
AspectSource capped_recall_oracle(double recall, std::uint64_t seed = 0);

}  // namespace absa
