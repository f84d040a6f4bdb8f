#include "absa/train_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "absa/errors.hpp"

namespace absa {

std::string_view task_name(Task t) { return t == Task::aspect_only ? "aspect-only" : "aspect+sentiment"; }

std::optional<Task> parse_task(std::string_view name) {
  if (name == "aspect+sentiment" || name == "aspect-sentiment") return Task::aspect_sentiment;
  if (name == "aspect-only") return Task::aspect_only;
  return std::nullopt;
}

HyperConfig HyperConfig::defaults_for(Architecture arch) {
  HyperConfig h;
  h.arch = arch;
  if (uses_lstm(arch)) {
    h.lr = 0.01;
    h.batch_size = 10;
  } else {
    h.lr = 0.03;
    h.batch_size = 5;
  }
  return h;
}

void HyperConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (clipping() && !(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
}

nlohmann::json HyperConfig::to_json() const {
  return {{"architecture", architecture_name(arch)},
          {"lr", lr},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"patience", patience},
          {"seed", seed},
          {"clip", clipping()},
          {"clip_norm", clip_norm},
          {"dropout", dropout},
          {"embedding_source", embedding_source}};
}

// ---------------------------------------------------------------------------
// Evaluation

nlohmann::json EvalReport::to_json() const {
  return {{"task", task_name(task)}, {"split", split}, {"tp", tp},   {"fp", fp},
          {"fn", fn},                {"precision", precision},        {"recall", recall}, {"f1", f1}};
}

namespace {

using Item = std::tuple<std::string, std::size_t, int>;

std::set<Item> items_of(const std::vector<ScoredDocument>& docs, Task task, std::set<std::string>& ids,
                        const char* side) {
  std::set<Item> out;
  for (const auto& d : docs) {
    if (!ids.insert(d.id).second) throw ConfigError(std::string("duplicate document id '") + d.id + "' in " + side);
    for (const auto& [a, p] : d.labels) out.emplace(d.id, a, task == Task::aspect_only ? 0 : static_cast<int>(p));
  }
  return out;
}

std::string list_ids(const std::vector<std::string>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size() && i < 20; ++i) s += (i ? ", " : "") + ids[i];
  if (ids.size() > 20) s += ", ... (" + std::to_string(ids.size()) + " total)";
  return s;
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

EvalReport micro_f1(const std::vector<ScoredDocument>& predicted, const std::vector<ScoredDocument>& gold, Task task) {
  std::set<std::string> pred_ids, gold_ids;
  const auto pred_items = items_of(predicted, task, pred_ids, "predictions");
  const auto gold_items = items_of(gold, task, gold_ids, "gold");
  if (pred_ids != gold_ids) {
    std::vector<std::string> no_pred, no_gold;
    std::set_difference(gold_ids.begin(), gold_ids.end(), pred_ids.begin(), pred_ids.end(), std::back_inserter(no_pred));
    std::set_difference(pred_ids.begin(), pred_ids.end(), gold_ids.begin(), gold_ids.end(), std::back_inserter(no_gold));
    std::string msg = "prediction and gold document ids differ;";
    if (!no_pred.empty()) msg += " missing predictions for: " + list_ids(no_pred) + ";";
    if (!no_gold.empty()) msg += " missing gold for: " + list_ids(no_gold) + ";";
    throw ConfigError(msg);
  }
  EvalReport r;
  r.task = task;
  for (const auto& it : pred_items) {
    if (gold_items.count(it)) {
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = gold_items.size() - r.tp;
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

MajorityBaseline MajorityBaseline::fit(const std::vector<Document>& train) {
  if (train.empty()) throw ConfigError("majority baseline needs training documents");
  std::map<std::pair<std::size_t, int>, std::size_t> counts;
  for (const auto& d : train)
    for (const auto& [a, p] : d.labels()) ++counts[{a, static_cast<int>(p)}];
  if (counts.empty()) throw ConfigError("majority baseline needs at least one labelled document");
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it)
    if (it->second > best->second) best = it;
  return {best->first.first, static_cast<Polarity>(best->first.second)};
}

namespace {

// Document keys for scoring: ids, made unique by position when repeated.
std::vector<std::string> doc_keys(const std::vector<Document>& docs) {
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& d : docs) ++seen[d.id];
  std::vector<std::string> keys;
  keys.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i)
    keys.push_back(seen[docs[i].id] > 1 ? docs[i].id + "#" + std::to_string(i) : docs[i].id);
  return keys;
}

std::vector<std::size_t> gold_aspects(const Document& d) {
  std::vector<std::size_t> out;
  for (const auto& [a, p] : d.labels()) out.push_back(a);
  return out;
}

}  // namespace

LabelMap predict_labels(const Model& model, const Document& doc, const AspectSource& aspects) {
  if (!is_pipeline(model.config().arch) || !aspects) return model.predict(doc.tokens).labels();
  auto proposed = aspects(doc);
  std::sort(proposed.begin(), proposed.end());
  proposed.erase(std::unique(proposed.begin(), proposed.end()), proposed.end());
  LabelMap out;
  for (std::size_t a : proposed) out.emplace(a, model.pipeline_classify(doc.tokens, a).polarity);
  return out;
}

std::vector<ScoredDocument> predict_split(const Model& model, const std::vector<Document>& docs,
                                          const AspectSource& aspects) {
  const auto keys = doc_keys(docs);
  std::vector<ScoredDocument> out;
  out.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) out.push_back({keys[i], predict_labels(model, docs[i], aspects)});
  return out;
}

std::vector<ScoredDocument> gold_split(const std::vector<Document>& docs) {
  const auto keys = doc_keys(docs);
  std::vector<ScoredDocument> out;
  out.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) out.push_back({keys[i], docs[i].labels()});
  return out;
}

EvalReport evaluate(const Model& model, const std::vector<Document>& docs, Task task, std::string split_label,
                    const AspectSource& aspects) {
  EvalReport r = micro_f1(predict_split(model, docs, aspects), gold_split(docs), task);
  r.split = std::move(split_label);
  return r;
}

const std::vector<PublishedScore>& published_reference_scores() {
  static const std::vector<PublishedScore> scores = [] {
    std::vector<PublishedScore> s;
    const char* splits[] = {"dev", "test-syn", "test-dia"};
    auto add = [&](const char* sys, const char* emb, Task task, double dev, double syn, double dia) {
      const double v[] = {dev, syn, dia};
      for (int i = 0; i < 3; ++i)
        if (v[i] >= 0.0) s.push_back({sys, emb, task, splits[i], v[i]});
    };
    const Task as = Task::aspect_sentiment, ao = Task::aspect_only;
    add("pipe-lstm", "word2vec", as, .350, .297, .342);
    add("e2e-lstm", "word2vec", as, .378, .315, .383);
    add("pipe-cnn", "word2vec", as, .350, .298, .343);
    add("e2e-cnn", "word2vec", as, .400, .319, .388);
    add("pipe-lstm", "glove", as, .350, .297, .342);
    add("e2e-lstm", "glove", as, .378, .315, .384);
    add("pipe-cnn", "glove", as, .350, .298, .342);
    add("e2e-cnn", "glove", as, .415, .315, .390);
    add("pipe-lstm", "fasttext", as, .350, .297, .342);
    add("e2e-lstm", "fasttext", as, .378, .315, .384);
    add("pipe-cnn", "fasttext", as, .342, .295, .342);
    add("e2e-cnn", "fasttext", as, .511, .423, .465);
    add("majority", "", as, -1.0, .315, .384);
    add("e2e-lstm", "word2vec", ao, .517, .442, .455);
    add("e2e-cnn", "word2vec", ao, .521, .436, .470);
    add("e2e-lstm", "glove", ao, .517, .442, .456);
    add("e2e-cnn", "glove", ao, .537, .457, .480);
    add("e2e-lstm", "fasttext", ao, .517, .442, .456);
    add("e2e-cnn", "fasttext", ao, .623, .523, .557);
    add("majority", "", ao, -1.0, .442, .456);
    return s;
  }();
  return scores;
}

std::optional<double> published_reference(std::string_view system, std::string_view embedding, Task task,
                                          std::string_view split) {
  for (const auto& s : published_reference_scores())
    if (s.system == system && s.embedding == embedding && s.task == task && s.split == split) return s.f1;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Training

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,loss,dev_f1,best\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_real(e.loss) << ',' << format_real(e.dev_f1) << ','
        << (e.epoch == best_epoch ? 1 : 0) << '\n';
  }
}

void TrainHistory::write_timing_csv(std::ostream& out) const {
  out << "epoch,seconds\n";
  for (const auto& e : epochs) out << e.epoch << ',' << format_real(e.seconds) << '\n';
}

std::vector<TrainingExample> make_examples(const Model& model, const std::vector<Document>& docs) {
  std::vector<TrainingExample> out;
  const bool pipeline = is_pipeline(model.config().arch);
  for (const auto& d : docs) {
    if (d.has_conflict()) throw ConfigError("training document '" + d.id + "' has conflicting polarities");
    const LabelMap labels = d.labels();
    if (pipeline) {
      for (const auto& [a, p] : labels) {
        TrainingExample ex;
        ex.tokens = &d.tokens;
        ex.aspect = a;
        ex.polarity = p;
        out.push_back(std::move(ex));
      }
    } else {
      TrainingExample ex;
      ex.tokens = &d.tokens;
      ex.joint = to_label_vector(labels, model.catalog());
      out.push_back(std::move(ex));
    }
  }
  return out;
}

namespace {

double dev_score(const Model& model, const std::vector<Document>& dev) {
  AspectSource aspects;
  if (is_pipeline(model.config().arch) && !model.detector().trained()) aspects = gold_aspects;
  return evaluate(model, dev, Task::aspect_sentiment, "dev", aspects).f1;
}

}  // namespace

TrainHistory train_model(Model& model, const std::vector<Document>& train, const std::vector<Document>& dev,
                         const HyperConfig& hyper, const EpochCallback& on_epoch) {
  hyper.validate();
  if (hyper.arch != model.config().arch) throw ConfigError("hyperparameters name a different architecture");
  TrainHistory history;
  if (hyper.epochs == 0) return history;

  const auto& dev_docs = dev.empty() ? train : dev;
  auto examples = make_examples(model, train);
  if (examples.empty()) throw ConfigError("no training examples");

  Rng order_rng(hyper.seed);
  Rng dropout_rng(hyper.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  ParameterStore& store = model.params();
  std::vector<Tensor> best_params = store.snapshot();
  double best_f1 = -1.0;

  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    order_rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += hyper.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + hyper.batch_size);
      Gradients grads(store);
      double batch_loss = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        Tape tape;
        const Var loss = model.example_loss(tape, examples[order[k]], Mode::train, dropout_rng);
        batch_loss += tape.value(loss)[0];
        model.backward(tape, loss, grads);
      }
      if (!std::isfinite(batch_loss) || !grads.all_finite()) {
        throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index + 1));
      }
      grads.scale(1.0 / static_cast<double>(end - begin));
      if (hyper.clipping()) grads.clip(hyper.clip_norm);
      sgd_step(store, grads, hyper.lr);
      epoch_loss += batch_loss;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = epoch_loss / static_cast<double>(examples.size());
    rec.dev_f1 = dev_score(model, dev_docs);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);
    if (rec.dev_f1 > best_f1) {
      best_f1 = rec.dev_f1;
      history.best_epoch = epoch;
      history.best_dev_f1 = rec.dev_f1;
      best_params = store.snapshot();
    }
    if (on_epoch) on_epoch(rec);
    if (epoch - history.best_epoch >= hyper.patience) break;
  }
  store.restore(best_params);
  return history;
}

// ---------------------------------------------------------------------------
// Random search

nlohmann::json Trial::to_json() const {
  return {{"trial", index}, {"lr", lr}, {"batch_size", batch_size}, {"dev_f1", dev_f1}, {"best_epoch", best_epoch}};
}

SearchResult random_search(const SearchSpace& space, std::size_t trials, const HyperConfig& base,
                           const TrialRunner& run, std::ostream* log, std::ostream* warnings) {
  if (trials == 0) throw ConfigError("random search needs at least one trial");
  if (space.size() == 0) throw ConfigError("random search space is empty");
  SearchResult result;
  if (trials > space.size()) {
    if (warnings) {
      *warnings << "warning: " << trials << " trials requested but the search space has " << space.size()
                << " cells; running " << space.size() << "\n";
    }
    trials = space.size();
    result.clamped = true;
  }
  std::vector<std::size_t> cells(space.size());
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
  Rng rng(base.seed);
  rng.shuffle(cells.begin(), cells.end());

  double best = -1.0;
  for (std::size_t t = 0; t < trials; ++t) {
    HyperConfig cfg = base;
    cfg.lr = space.learning_rates[cells[t] / space.batch_sizes.size()];
    cfg.batch_size = space.batch_sizes[cells[t] % space.batch_sizes.size()];
    const TrainHistory h = run(cfg);
    Trial trial{t, cfg.lr, cfg.batch_size, h.best_dev_f1, h.best_epoch};
    if (log) *log << trial.to_json().dump() << '\n';
    result.trials.push_back(trial);
    if (trial.dev_f1 > best) {
      best = trial.dev_f1;
      result.best = cfg;
      result.best_dev_f1 = trial.dev_f1;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic data

std::string trigger_token(std::size_t aspect, Polarity polarity) {
  return "t" + std::to_string(aspect) + std::string(1, "pnu"[polarity_index(polarity)]);
}

namespace {

Document synthetic_document(const std::string& id, std::vector<std::pair<std::size_t, Polarity>> labels,
                            const SyntheticConfig& cfg, Rng& rng) {
  std::vector<std::string> tokens;
  const std::size_t filler = cfg.min_filler + rng.below(cfg.max_filler - cfg.min_filler + 1);
  for (std::size_t i = 0; i < filler; ++i) tokens.push_back("w" + std::to_string(rng.below(cfg.filler_vocab)));
  for (const auto& [a, p] : labels) {
    const std::size_t pos = rng.below(tokens.size() + 1);
    tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), trigger_token(a, p));
  }
  Document d;
  d.id = id;
  for (std::size_t i = 0; i < tokens.size(); ++i) d.text += (i ? " " : "") + tokens[i];
  d.tokens = tokenize(d.text);
  std::sort(labels.begin(), labels.end());
  d.label_pairs = std::move(labels);
  return d;
}

std::vector<Document> synthetic_split(const std::string& prefix, std::size_t count, Split split,
                                      const SyntheticConfig& cfg, Rng& rng) {
  const std::size_t pairs = cfg.aspects * kPolarityClasses;
  std::vector<Document> docs;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::pair<std::size_t, Polarity>> labels;
    std::set<std::size_t> used;
    if (i < pairs) {
      labels.emplace_back(i / kPolarityClasses, polarity_from_index(i % kPolarityClasses));
      used.insert(i / kPolarityClasses);
    }
    const std::size_t want = 1 + rng.below(cfg.max_labels);
    while (labels.size() < want && used.size() < cfg.aspects) {
      const std::size_t a = rng.below(cfg.aspects);
      if (!used.insert(a).second) continue;
      labels.emplace_back(a, polarity_from_index(rng.below(kPolarityClasses)));
    }
    Document d = synthetic_document(prefix + std::to_string(i), std::move(labels), cfg, rng);
    d.split = split;
    docs.push_back(std::move(d));
  }
  return docs;
}

}  // namespace

SyntheticData make_synthetic(const SyntheticConfig& cfg) {
  if (cfg.aspects == 0 || cfg.max_labels == 0 || cfg.filler_vocab == 0 || cfg.min_filler > cfg.max_filler) {
    throw ConfigError("invalid synthetic data configuration");
  }
  SyntheticData data;
  std::vector<std::string> names;
  for (std::size_t a = 0; a < cfg.aspects; ++a) names.push_back("aspect" + std::to_string(a));
  data.catalog = AspectCatalog(names);

  Rng rng(cfg.seed);
  data.embeddings = EmbeddingTable(cfg.dim);
  std::vector<double> row(cfg.dim);
  // Triggers of one aspect share a direction; fillers stay near the origin.
  std::vector<double> direction(cfg.dim);
  for (std::size_t a = 0; a < cfg.aspects; ++a) {
    for (auto& v : direction) v = rng.uniform(-0.5, 0.5);
    for (std::size_t p = 0; p < kPolarityClasses; ++p) {
      for (std::size_t d = 0; d < cfg.dim; ++d) row[d] = direction[d] + rng.uniform(-0.25, 0.25);
      data.embeddings.add_word(trigger_token(a, polarity_from_index(p)), row);
    }
  }
  for (std::size_t w = 0; w < cfg.filler_vocab; ++w) {
    for (auto& v : row) v = rng.uniform(-0.1, 0.1);
    data.embeddings.add_word("w" + std::to_string(w), row);
  }

  data.train = synthetic_split("train", cfg.train_docs, Split::train, cfg, rng);
  data.dev = synthetic_split("dev", cfg.dev_docs, Split::dev, cfg, rng);
  data.test = synthetic_split("test", cfg.test_docs, Split::test_syn, cfg, rng);
  return data;
}

AspectSource capped_recall_oracle(double recall, std::uint64_t seed) {
  return [recall, seed](const Document& d) {
    std::vector<std::size_t> out;
    for (const auto& [a, p] : d.labels()) {
      const std::string key = std::to_string(seed) + ":" + d.id + ":" + std::to_string(a);
      const double u = static_cast<double>(fnv1a64(key) >> 11) * 0x1.0p-53;
      if (u < recall) out.push_back(a);
    }
    return out;
  };
}

}  // namespace absa
