#include "absa/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "absa/errors.hpp"

namespace absa {

std::string_view architecture_name(Architecture a) {
  switch (a) {
    case Architecture::e2e_cnn:
      return "e2e-cnn";
    case Architecture::e2e_lstm:
      return "e2e-lstm";
    case Architecture::pipe_cnn:
      return "pipe-cnn";
    case Architecture::pipe_lstm:
      return "pipe-lstm";
  }
  return "unknown";
}

std::optional<Architecture> parse_architecture(std::string_view name) {
  for (auto a : {Architecture::e2e_cnn, Architecture::e2e_lstm, Architecture::pipe_cnn, Architecture::pipe_lstm})
    if (architecture_name(a) == name) return a;
  return std::nullopt;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"architecture", architecture_name(arch)},
          {"filter_widths", filter_widths},
          {"filters_per_width", filters_per_width},
          {"hidden", hidden},
          {"aspect_embed_dim", aspect_embed_dim},
          {"dropout", dropout},
          {"init_scale", init_scale}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  const auto arch = parse_architecture(j.at("architecture").get<std::string>());
  if (!arch) throw ConfigError("unknown architecture '" + j.at("architecture").get<std::string>() + "'");
  c.arch = *arch;
  c.filter_widths = j.at("filter_widths").get<std::vector<std::size_t>>();
  c.filters_per_width = j.at("filters_per_width").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.aspect_embed_dim = j.at("aspect_embed_dim").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.init_scale = j.at("init_scale").get<double>();
  return c;
}

// ---------------------------------------------------------------------------
// Embedding layer

EmbeddingLayer::EmbeddingLayer(const EmbeddingTable& table,
                               const std::vector<std::vector<std::string>>& training_tokens, ParameterStore& store)
    : dim_(table.dim()), subwords_(table.subwords()) {
  Tensor words({table.word_count(), dim_});
  for (std::size_t i = 0; i < table.word_count(); ++i) {
    vocab_.add(table.vocabulary().token(i));
    const auto src = table.word(i);
    std::copy(src.begin(), src.end(), words.row(i).begin());
  }

  std::vector<std::uint32_t> ids;
  if (table.has_subwords()) {
    ids = table.stored_buckets();
    std::vector<std::uint32_t> extra;
    for (const auto& doc : training_tokens) {
      for (const auto& tok : doc) {
        if (vocab_.contains(tok)) continue;
        for (const auto& g : extract_ngrams(tok, subwords_.n_min, subwords_.n_max)) extra.push_back(table.bucket_of(g));
      }
    }
    ids.insert(ids.end(), extra.begin(), extra.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  }
  Tensor buckets({ids.size(), dim_});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    bucket_rows_.emplace(ids[i], i);
    const auto src = table.bucket(ids[i]);
    if (!src.empty()) std::copy(src.begin(), src.end(), buckets.row(i).begin());
  }
  bucket_ids_ = std::move(ids);
  words_ = store.add("embedding.words", std::move(words), true);
  buckets_ = store.add("embedding.buckets", std::move(buckets), true);
}

EmbeddingLayer::Source EmbeddingLayer::resolve(std::string_view token) const {
  Source s;
  const std::size_t idx = vocab_.index(token);
  if (idx < vocab_.size()) {
    s.kind = Source::Kind::word;
    s.row = idx;
    return s;
  }
  if (subwords_.bucket_count == 0 || token.empty()) {
    s.kind = Source::Kind::constant;
    s.constant = fallback_vector(token, dim_);
    return s;
  }
  s.kind = Source::Kind::buckets;
  const auto grams = extract_ngrams(token, subwords_.n_min, subwords_.n_max);
  s.gram_count = grams.size();
  for (const auto& g : grams) {
    const auto b = static_cast<std::uint32_t>(fnv1a32(g) % subwords_.bucket_count);
    auto it = bucket_rows_.find(b);
    if (it != bucket_rows_.end()) s.bucket_rows.push_back(it->second);
  }
  return s;
}

Var EmbeddingLayer::embed(Tape& tape, const ParameterStore& store, std::span<const std::string> tokens,
                          std::size_t min_length) const {
  tape.bind(store);
  const std::size_t len = std::max(tokens.size(), min_length);
  Tensor out({len, dim_});
  std::vector<Source> sources;
  sources.reserve(tokens.size());
  const Tensor& words = store.value(words_);
  const Tensor& buckets = store.value(buckets_);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    Source s = resolve(tokens[t]);
    auto dst = out.row(t);
    switch (s.kind) {
      case Source::Kind::word: {
        const auto src = words.row(s.row);
        std::copy(src.begin(), src.end(), dst.begin());
        break;
      }
      case Source::Kind::buckets: {
        for (std::size_t r : s.bucket_rows) {
          const auto src = buckets.row(r);
          for (std::size_t d = 0; d < dim_; ++d) dst[d] += src[d];
        }
        const double inv = 1.0 / static_cast<double>(s.gram_count);
        for (auto& v : dst) v *= inv;
        break;
      }
      case Source::Kind::constant:
        std::copy(s.constant.begin(), s.constant.end(), dst.begin());
        break;
      case Source::Kind::pad:
        break;
    }
    sources.push_back(std::move(s));
  }
  const ParamId words_id = words_, buckets_id = buckets_;
  return tape.record("embed", {}, std::move(out),
                     [sources = std::move(sources), words_id, buckets_id](Tape& t, std::size_t self, Gradients& sink) {
                       const Tensor& g = t.grad(self);
                       for (std::size_t i = 0; i < sources.size(); ++i) {
                         const auto& s = sources[i];
                         if (s.kind == Source::Kind::word) {
                           sink.add_row(words_id, s.row, g.row(i));
                         } else if (s.kind == Source::Kind::buckets) {
                           const double share = 1.0 / static_cast<double>(s.gram_count);
                           for (std::size_t r : s.bucket_rows) sink.add_row(buckets_id, r, g.row(i), share);
                         }
                       }
                     });
}

std::vector<double> EmbeddingLayer::lookup(const ParameterStore& store, std::string_view token) const {
  Tape tape(false);
  const std::string tok(token);
  const Var v = embed(tape, store, std::span<const std::string>(&tok, 1));
  const auto row = tape.value(v).row(0);
  return {row.begin(), row.end()};
}

EmbeddingTable EmbeddingLayer::to_table(const ParameterStore& store) const {
  EmbeddingTable table(dim_);
  const Tensor& words = store.value(words_);
  for (std::size_t i = 0; i < vocab_.size(); ++i) table.add_word(vocab_.token(i), words.row(i));
  table.set_subwords(subwords_);
  const Tensor& buckets = store.value(buckets_);
  for (std::size_t i = 0; i < bucket_ids_.size(); ++i) table.set_bucket(bucket_ids_[i], buckets.row(i));
  return table;
}

void EmbeddingLayer::save(Archive& archive) const {
  archive.meta["embedding"] = {
      {"dim", dim_},
      {"vocabulary", vocab_.tokens()},
      {"subwords",
       {{"bucket_count", subwords_.bucket_count}, {"n_min", subwords_.n_min}, {"n_max", subwords_.n_max}}},
      {"bucket_ids", bucket_ids_}};
}

EmbeddingLayer EmbeddingLayer::load(const Archive& archive, const ParameterStore& store) {
  const auto& m = archive.meta.at("embedding");
  EmbeddingLayer layer;
  layer.dim_ = m.at("dim").get<std::size_t>();
  for (const auto& tok : m.at("vocabulary").get<std::vector<std::string>>()) layer.vocab_.add(tok);
  layer.subwords_.bucket_count = m.at("subwords").at("bucket_count").get<std::size_t>();
  layer.subwords_.n_min = m.at("subwords").at("n_min").get<std::size_t>();
  layer.subwords_.n_max = m.at("subwords").at("n_max").get<std::size_t>();
  layer.bucket_ids_ = m.at("bucket_ids").get<std::vector<std::uint32_t>>();
  for (std::size_t i = 0; i < layer.bucket_ids_.size(); ++i) layer.bucket_rows_.emplace(layer.bucket_ids_[i], i);
  const auto words = store.find("embedding.words");
  const auto buckets = store.find("embedding.buckets");
  if (!words || !buckets) throw ConfigError("model file lacks embedding parameters");
  layer.words_ = *words;
  layer.buckets_ = *buckets;
  if (store.value(layer.words_).rows() != layer.vocab_.size() ||
      store.value(layer.buckets_).rows() != layer.bucket_ids_.size()) {
    throw ConfigError("embedding parameters disagree with the stored vocabulary");
  }
  return layer;
}

// ---------------------------------------------------------------------------
// Encoders

namespace {

ParamId require(const ParameterStore& store, const std::string& name) {
  const auto id = store.find(name);
  if (!id) throw ConfigError("model file lacks parameter '" + name + "'");
  return *id;
}

}  // namespace

CnnEncoder::CnnEncoder(const ModelConfig& cfg, std::size_t input_dim, ParameterStore& store, Rng& rng)
    : widths_(cfg.filter_widths), filters_(cfg.filters_per_width), dropout_(cfg.dropout) {
  if (widths_.empty() || filters_ == 0) throw ConfigError("CNN needs at least one filter width and one filter");
  for (std::size_t w : widths_) {
    if (w == 0) throw ConfigError("filter width must be positive");
    const std::string suffix = std::to_string(w);
    kernels_.push_back(
        store.add("cnn.kernel." + suffix, Tensor::uniform({w * input_dim, filters_}, -cfg.init_scale, cfg.init_scale, rng)));
    biases_.push_back(store.add("cnn.bias." + suffix, Tensor({filters_})));
  }
}

CnnEncoder CnnEncoder::bind(const ModelConfig& cfg, const ParameterStore& store) {
  CnnEncoder e;
  e.widths_ = cfg.filter_widths;
  e.filters_ = cfg.filters_per_width;
  e.dropout_ = cfg.dropout;
  for (std::size_t w : e.widths_) {
    e.kernels_.push_back(require(store, "cnn.kernel." + std::to_string(w)));
    e.biases_.push_back(require(store, "cnn.bias." + std::to_string(w)));
  }
  return e;
}

std::size_t CnnEncoder::min_length() const noexcept {
  return widths_.empty() ? 1 : *std::max_element(widths_.begin(), widths_.end());
}

Var CnnEncoder::encode(Tape& tape, const ParameterStore& store, Var embedded, Mode mode, Rng& rng) const {
  std::vector<Var> pooled;
  pooled.reserve(widths_.size());
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    const Var windows = ag::unfold(tape, embedded, widths_[i]);
    const Var conv = ag::matmul(tape, windows, tape.param(store, kernels_[i]));
    const Var act = ag::relu(tape, ag::add_row_bias(tape, conv, tape.param(store, biases_[i])));
    pooled.push_back(ag::max_rows(tape, act));
  }
  const Var v = pooled.size() == 1 ? pooled.front() : ag::concat_cols(tape, pooled);
  return ag::dropout(tape, v, dropout_, mode, rng);
}

LstmEncoder::LstmEncoder(const ModelConfig& cfg, std::size_t input_dim, ParameterStore& store, Rng& rng)
    : hidden_(cfg.hidden), dropout_(cfg.dropout) {
  if (hidden_ == 0) throw ConfigError("LSTM hidden size must be positive");
  const double s = cfg.init_scale;
  auto make = [&](const std::string& prefix) {
    Direction d;
    d.input_weights = store.add(prefix + ".input_weights", Tensor::uniform({input_dim, 4 * hidden_}, -s, s, rng));
    d.hidden_weights = store.add(prefix + ".hidden_weights", Tensor::uniform({hidden_, 4 * hidden_}, -s, s, rng));
    d.bias = store.add(prefix + ".bias", Tensor({4 * hidden_}));
    return d;
  };
  fwd_ = make("lstm.forward");
  bwd_ = make("lstm.backward");
}

LstmEncoder LstmEncoder::bind(const ModelConfig& cfg, const ParameterStore& store) {
  LstmEncoder e;
  e.hidden_ = cfg.hidden;
  e.dropout_ = cfg.dropout;
  auto find = [&](const std::string& prefix) {
    Direction d;
    d.input_weights = require(store, prefix + ".input_weights");
    d.hidden_weights = require(store, prefix + ".hidden_weights");
    d.bias = require(store, prefix + ".bias");
    return d;
  };
  e.fwd_ = find("lstm.forward");
  e.bwd_ = find("lstm.backward");
  return e;
}

Var LstmEncoder::run(Tape& tape, const ParameterStore& store, Var inputs, const Direction& dir, bool reverse) const {
  const std::size_t H = hidden_;
  const std::size_t steps = tape.value(inputs).rows();
  const Var projected =
      ag::add_row_bias(tape, ag::matmul(tape, inputs, tape.param(store, dir.input_weights)), tape.param(store, dir.bias));
  const Var recurrent = tape.param(store, dir.hidden_weights);
  Var h = tape.constant(Tensor({1, H}));
  Var c = tape.constant(Tensor({1, H}));
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    const Var z = ag::add(tape, ag::row(tape, projected, t), ag::matmul(tape, h, recurrent));
    const Var in_gate = ag::sigmoid(tape, ag::slice_cols(tape, z, 0, H));
    const Var forget_gate = ag::sigmoid(tape, ag::slice_cols(tape, z, H, H));
    const Var candidate = ag::tanh(tape, ag::slice_cols(tape, z, 2 * H, H));
    const Var out_gate = ag::sigmoid(tape, ag::slice_cols(tape, z, 3 * H, H));
    c = ag::add(tape, ag::mul(tape, forget_gate, c), ag::mul(tape, in_gate, candidate));
    h = ag::mul(tape, out_gate, ag::tanh(tape, c));
  }
  return h;
}

Var LstmEncoder::encode(Tape& tape, const ParameterStore& store, Var embedded, Mode mode, Rng& rng) const {
  const Var x = ag::dropout(tape, embedded, dropout_, mode, rng);
  const Var forward = run(tape, store, x, fwd_, false);
  const Var backward = run(tape, store, x, bwd_, true);
  return ag::dropout(tape, ag::concat_cols(tape, {forward, backward}), dropout_, mode, rng);
}

// ---------------------------------------------------------------------------
// Scoring, decoding, loss

LabelMap PredictionSet::labels() const {
  LabelMap m;
  for (const auto& p : items) m.emplace(p.aspect, p.polarity);
  return m;
}

LabelVector PredictionSet::label_vector(const AspectCatalog& catalog) const {
  return to_label_vector(labels(), catalog);
}

Tensor aspect_scores(std::span<const double> v, const Tensor& heads, const Tensor& bias) {
  if (heads.cols() != v.size()) {
    throw DimensionError("aspect_scores: feature length " + std::to_string(v.size()) + " vs heads " +
                         shape_string(heads.shape()));
  }
  if (heads.rows() % kJointClasses != 0 || bias.size() != heads.rows()) {
    throw DimensionError("aspect_scores: heads " + shape_string(heads.shape()) + " with bias " +
                         shape_string(bias.shape()));
  }
  const std::size_t aspects = heads.rows() / kJointClasses;
  Tensor out({aspects, kJointClasses});
  for (std::size_t r = 0; r < heads.rows(); ++r) {
    double s = bias[r];
    const auto w = heads.row(r);
    for (std::size_t i = 0; i < v.size(); ++i) s += w[i] * v[i];
    out[r] = s;
  }
  for (std::size_t a = 0; a < aspects; ++a) ops::softmax_inplace(out.row(a));
  return out;
}

LabelVector decode(const Tensor& scores) {
  LabelVector z;
  z.classes.resize(scores.rows());
  for (std::size_t a = 0; a < scores.rows(); ++a) {
    const auto row = scores.row(a);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    z.classes[a] = static_cast<std::uint8_t>(best);
  }
  return z;
}

double joint_loss(const Tensor& scores, const LabelVector& gold) {
  if (gold.classes.size() != scores.rows()) throw DimensionError("joint_loss: label vector length mismatch");
  double loss = 0.0;
  for (std::size_t a = 0; a < scores.rows(); ++a) loss += ops::cross_entropy(gold.classes[a], scores.row(a));
  return loss;
}

// ---------------------------------------------------------------------------
// Stand-in detector

std::vector<double> AspectDetector::features(std::span<const std::string> tokens) const {
  std::vector<double> x(table_.dim(), 0.0);
  if (tokens.empty()) return x;
  for (const auto& t : tokens) {
    const auto v = table_.lookup(t);
    for (std::size_t d = 0; d < x.size(); ++d) x[d] += v[d];
  }
  for (auto& v : x) v /= static_cast<double>(tokens.size());
  return x;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Probability threshold maximising F1 on (score, is_gold) pairs. Predictions
// fire when score > threshold. Among equally good thresholds the largest wins.
double tune_threshold(std::vector<std::pair<double, bool>> items) {
  std::size_t positives = 0;
  for (const auto& [s, g] : items) positives += g ? 1 : 0;
  if (items.empty() || positives == 0) return 0.5;
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  // Candidate k: predict the top-k items, threshold just below item k-1.
  double best_f1 = 0.0;
  double best_threshold = 0.5;
  std::size_t tp = 0;
  for (std::size_t k = 1; k <= items.size(); ++k) {
    tp += items[k - 1].second ? 1 : 0;
    if (k < items.size() && items[k].first == items[k - 1].first) continue;
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(k + positives);
    const double threshold = k < items.size() ? 0.5 * (items[k - 1].first + items[k].first)
                                              : std::nextafter(items[k - 1].first, -1.0);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_threshold = threshold;
    }
  }
  return best_threshold;
}

}  // namespace

void AspectDetector::train(const std::vector<Document>& train, const std::vector<Document>& dev,
                           const EmbeddingTable& table, std::size_t aspect_count, const DetectorConfig& cfg) {
  if (train.empty()) throw ConfigError("detector training needs documents");
  table_ = table;
  const std::size_t dim = table.dim();
  weights_ = Tensor({aspect_count, dim});
  bias_.assign(aspect_count, 0.0);
  thresholds_.assign(aspect_count, 0.5);

  std::vector<std::vector<double>> xs;
  std::vector<std::vector<bool>> ys;
  for (const auto& d : train) {
    xs.push_back(features(d.tokens));
    std::vector<bool> y(aspect_count, false);
    for (const auto& [a, p] : d.label_pairs)
      if (a < aspect_count) y[a] = true;
    ys.push_back(std::move(y));
  }
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t i : order) {
      const auto& x = xs[i];
      for (std::size_t a = 0; a < aspect_count; ++a) {
        auto w = weights_.row(a);
        double z = bias_[a];
        for (std::size_t d = 0; d < dim; ++d) z += w[d] * x[d];
        const double err = sigmoid(z) - (ys[i][a] ? 1.0 : 0.0);
        for (std::size_t d = 0; d < dim; ++d) w[d] -= cfg.lr * (err * x[d] + cfg.l2 * w[d]);
        bias_[a] -= cfg.lr * err;
      }
    }
  }
  trained_ = true;

  const auto& tuning = dev.empty() ? train : dev;
  std::vector<std::vector<std::pair<double, bool>>> per_aspect(aspect_count);
  for (const auto& d : tuning) {
    const auto s = scores(d.tokens);
    const auto gold = d.labels();
    for (std::size_t a = 0; a < aspect_count; ++a) per_aspect[a].emplace_back(s[a], gold.count(a) > 0);
  }
  for (std::size_t a = 0; a < aspect_count; ++a) thresholds_[a] = tune_threshold(std::move(per_aspect[a]));
}

std::vector<double> AspectDetector::scores(std::span<const std::string> tokens) const {
  if (!trained_) throw ConfigError("aspect detector is not trained");
  const auto x = features(tokens);
  std::vector<double> out(bias_.size());
  for (std::size_t a = 0; a < out.size(); ++a) {
    double z = bias_[a];
    const auto w = weights_.row(a);
    for (std::size_t d = 0; d < x.size(); ++d) z += w[d] * x[d];
    out[a] = sigmoid(z);
  }
  return out;
}

std::vector<std::size_t> AspectDetector::detect(std::span<const std::string> tokens) const {
  const auto s = scores(tokens);
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < s.size(); ++a)
    if (s[a] > thresholds_[a]) out.push_back(a);
  return out;
}

void AspectDetector::set_thresholds(std::vector<double> thresholds) {
  if (thresholds.size() != bias_.size()) throw DimensionError("one threshold per aspect required");
  thresholds_ = std::move(thresholds);
}

void AspectDetector::save(Archive& archive, const std::string& key) const {
  if (!trained_) throw ConfigError("aspect detector is not trained");
  put_table(archive, key + ".table", table_);
  archive.meta[key] = {{"thresholds", thresholds_}};
  archive.put(key + ".weights", weights_);
  archive.put(key + ".bias", Tensor::vector(bias_));
}

AspectDetector AspectDetector::load(const Archive& archive, const std::string& key) {
  AspectDetector d;
  d.table_ = get_table(archive, key + ".table");
  d.weights_ = archive.get(key + ".weights");
  const Tensor& b = archive.get(key + ".bias");
  d.bias_.assign(b.data().begin(), b.data().end());
  d.thresholds_ = archive.meta.at(key).at("thresholds").get<std::vector<double>>();
  if (d.thresholds_.size() != d.bias_.size() || d.weights_.rows() != d.bias_.size()) {
    throw ConfigError("detector tensors disagree in aspect count");
  }
  d.trained_ = true;
  return d;
}

void save_detector(const AspectDetector& detector, const AspectCatalog& catalog, const std::filesystem::path& path) {
  Archive archive;
  archive.meta["kind"] = "detector";
  archive.meta["catalog"] = catalog.names();
  archive.meta["catalog_hash"] = catalog.hash();
  detector.save(archive, "detector");
  write_archive(archive, path);
}

AspectDetector load_detector(const std::filesystem::path& path, const AspectCatalog& catalog) {
  const Archive archive = read_archive(path);
  if (archive.meta.value("kind", "") != "detector") throw ConfigError(path.string() + " is not a detector file");
  if (archive.meta.at("catalog_hash").get<std::string>() != catalog.hash()) {
    throw ConfigError("detector was trained for a different aspect catalog");
  }
  return AspectDetector::load(archive, "detector");
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig cfg, AspectCatalog catalog, const EmbeddingTable& table,
             const std::vector<std::vector<std::string>>& training_tokens, std::uint64_t seed)
    : cfg_(std::move(cfg)), catalog_(std::move(catalog)) {
  if (cfg_.dropout < 0.0 || cfg_.dropout >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  Rng rng(seed);
  embedding_ = EmbeddingLayer(table, training_tokens, store_);
  const std::size_t in = embedding_.dim();
  if (uses_lstm(cfg_.arch)) {
    lstm_ = LstmEncoder(cfg_, in, store_, rng);
  } else {
    cnn_ = CnnEncoder(cfg_, in, store_, rng);
  }
  const double s = cfg_.init_scale;
  const std::size_t D = uses_lstm(cfg_.arch) ? lstm_.output_dim() : cnn_.output_dim();
  if (is_pipeline(cfg_.arch)) {
    aspect_embedding_ =
        store_.add("pipeline.aspect_embedding", Tensor::uniform({catalog_.size(), cfg_.aspect_embed_dim}, -s, s, rng));
    heads_ = store_.add("pipeline.head.weights",
                        Tensor::uniform({kPolarityClasses, D + cfg_.aspect_embed_dim}, -s, s, rng));
    head_bias_ = store_.add("pipeline.head.bias", Tensor({kPolarityClasses}));
  } else {
    heads_ = store_.add("heads.weights", Tensor::uniform({kJointClasses * catalog_.size(), D}, -s, s, rng));
    head_bias_ = store_.add("heads.bias", Tensor({kJointClasses * catalog_.size()}));
  }
}

std::size_t Model::feature_dim() const noexcept {
  return uses_lstm(cfg_.arch) ? lstm_.output_dim() : cnn_.output_dim();
}

Var Model::encode(Tape& tape, std::span<const std::string> tokens, Mode mode, Rng& rng) const {
  if (uses_lstm(cfg_.arch)) {
    const Var e = embedding_.embed(tape, store_, tokens, 1);
    return lstm_.encode(tape, store_, e, mode, rng);
  }
  const Var e = embedding_.embed(tape, store_, tokens, cnn_.min_length());
  return cnn_.encode(tape, store_, e, mode, rng);
}

Var Model::aspect_scores(Tape& tape, std::span<const std::string> tokens, Mode mode, Rng& rng) const {
  if (is_pipeline(cfg_.arch)) throw ConfigError("aspect_scores needs an end-to-end model");
  const Var v = encode(tape, tokens, mode, rng);
  const Var logits = ag::add_row_bias(tape, ag::matmul_nt(tape, v, tape.param(store_, heads_)),
                                      tape.param(store_, head_bias_));
  return ag::softmax_rows(tape, ag::reshape(tape, logits, catalog_.size(), kJointClasses));
}

Var Model::joint_loss(Tape& tape, std::span<const std::string> tokens, const LabelVector& gold, Mode mode,
                      Rng& rng) const {
  if (gold.classes.size() != catalog_.size()) throw DimensionError("gold label vector length differs from catalog");
  const Var probs = aspect_scores(tape, tokens, mode, rng);
  std::vector<std::size_t> classes(gold.classes.begin(), gold.classes.end());
  return ag::cross_entropy_rows(tape, probs, classes);
}

Var Model::polarity_scores(Tape& tape, std::span<const std::string> tokens, std::size_t aspect, Mode mode,
                           Rng& rng) const {
  if (!is_pipeline(cfg_.arch)) throw ConfigError("polarity_scores needs a pipeline model");
  if (aspect >= catalog_.size()) throw ConfigError("aspect index " + std::to_string(aspect) + " not in catalog");
  const Var v = encode(tape, tokens, mode, rng);
  const Var a = ag::row(tape, tape.param(store_, aspect_embedding_), aspect);
  const Var features = ag::concat_cols(tape, {v, a});
  const Var logits = ag::add_row_bias(tape, ag::matmul_nt(tape, features, tape.param(store_, heads_)),
                                      tape.param(store_, head_bias_));
  return ag::softmax_rows(tape, logits);
}

Var Model::pipeline_loss(Tape& tape, std::span<const std::string> tokens, std::size_t aspect, Polarity gold,
                         Mode mode, Rng& rng) const {
  const Var probs = polarity_scores(tape, tokens, aspect, mode, rng);
  return ag::cross_entropy_rows(tape, probs, {polarity_index(gold)});
}

Var Model::example_loss(Tape& tape, const TrainingExample& ex, Mode mode, Rng& rng) const {
  if (ex.tokens == nullptr) throw ConfigError("training example without tokens");
  if (is_pipeline(cfg_.arch)) return pipeline_loss(tape, *ex.tokens, ex.aspect, ex.polarity, mode, rng);
  return joint_loss(tape, *ex.tokens, ex.joint, mode, rng);
}

Gradients Model::backward(Tape& tape, Var loss) const {
  Gradients grads(store_);
  backward(tape, loss, grads);
  return grads;
}

void Model::backward(Tape& tape, Var loss, Gradients& sink) const {
  if (tape.store() != &store_) throw ConfigError("tape was not recorded against this model");
  if (sink.count() != store_.count()) throw ConfigError("gradient sink does not match this model");
  tape.backward(loss, sink);
}

AspectPrediction Model::pipeline_classify(std::span<const std::string> tokens, std::size_t aspect) const {
  Tape tape(false);
  Rng unused(0);
  const Var probs = polarity_scores(tape, tokens, aspect, Mode::infer, unused);
  const auto row = tape.value(probs).row(0);
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;
  return {aspect, polarity_from_index(best), row[best]};
}

PredictionSet Model::predict(std::span<const std::string> tokens) const {
  PredictionSet out;
  if (is_pipeline(cfg_.arch)) {
    for (std::size_t a : detector_.detect(tokens)) out.items.push_back(pipeline_classify(tokens, a));
    return out;
  }
  Tape tape(false);
  Rng unused(0);
  const Var probs = aspect_scores(tape, tokens, Mode::infer, unused);
  const Tensor& p = tape.value(probs);
  const LabelVector z = decode(p);
  for (std::size_t a = 0; a < z.classes.size(); ++a) {
    if (z.classes[a] == 0) continue;
    out.items.push_back({a, static_cast<Polarity>(z.classes[a]), p.at(a, z.classes[a])});
  }
  return out;
}

void Model::save(std::ostream& out) const {
  Archive archive;
  archive.meta["kind"] = "model";
  archive.meta["config"] = cfg_.to_json();
  archive.meta["catalog"] = catalog_.names();
  archive.meta["catalog_hash"] = catalog_.hash();
  archive.meta["joint_classes"] = {"N/A", "positive", "negative", "neutral"};
  archive.meta["pipeline_classes"] = {"positive", "negative", "neutral"};
  nlohmann::json params = nlohmann::json::array();
  for (ParamId id = 0; id < store_.count(); ++id) {
    params.push_back({{"name", store_.name(id)}, {"row_sparse", store_.row_sparse(id)}});
    archive.put("param." + store_.name(id), store_.value(id));
  }
  archive.meta["params"] = params;
  embedding_.save(archive);
  if (is_pipeline(cfg_.arch) && detector_.trained()) detector_.save(archive, "detector");
  write_archive(archive, out);
}

void Model::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write model file " + path.string());
  save(out);
  if (!out) throw ConfigError("failed writing model file " + path.string());
}

Model Model::from_archive(const Archive& archive, const AspectCatalog* expected) {
  if (archive.meta.value("kind", "") != "model") throw ConfigError("not a model file");
  Model m;
  m.catalog_ = AspectCatalog(archive.meta.at("catalog").get<std::vector<std::string>>());
  const auto stored_hash = archive.meta.at("catalog_hash").get<std::string>();
  if (stored_hash != m.catalog_.hash()) throw ConfigError("model file catalog hash is inconsistent");
  if (expected != nullptr && expected->hash() != stored_hash) {
    throw ConfigError("model was trained for a different aspect catalog (hash " + stored_hash + ", expected " +
                      expected->hash() + ")");
  }
  m.cfg_ = ModelConfig::from_json(archive.meta.at("config"));
  for (const auto& p : archive.meta.at("params")) {
    const auto name = p.at("name").get<std::string>();
    m.store_.add(name, archive.get("param." + name), p.at("row_sparse").get<bool>());
  }
  m.embedding_ = EmbeddingLayer::load(archive, m.store_);
  if (uses_lstm(m.cfg_.arch)) {
    m.lstm_ = LstmEncoder::bind(m.cfg_, m.store_);
  } else {
    m.cnn_ = CnnEncoder::bind(m.cfg_, m.store_);
  }
  if (is_pipeline(m.cfg_.arch)) {
    m.aspect_embedding_ = require(m.store_, "pipeline.aspect_embedding");
    m.heads_ = require(m.store_, "pipeline.head.weights");
    m.head_bias_ = require(m.store_, "pipeline.head.bias");
    if (archive.meta.contains("detector")) m.detector_ = AspectDetector::load(archive, "detector");
  } else {
    m.heads_ = require(m.store_, "heads.weights");
    m.head_bias_ = require(m.store_, "heads.bias");
  }
  return m;
}

Model Model::load(std::istream& in, const AspectCatalog* expected) { return from_archive(read_archive(in), expected); }

Model Model::load(const std::filesystem::path& path, const AspectCatalog* expected) {
  return from_archive(read_archive(path), expected);
}

}  // namespace absa
