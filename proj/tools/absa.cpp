#include <CLI11.hpp>
#define CPPHTTPLIB_LISTEN_BACKLOG 256
#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "absa/corpus.hpp"
#include "absa/embeddings.hpp"
#include "absa/errors.hpp"
#include "absa/models.hpp"
#include "absa/train_eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace absa;

namespace {

// Expands "--config FILE" into the key=value options it holds, placed before
// the remaining arguments so that explicit flags override file values.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> out;
  std::vector<std::string> from_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
      continue;
    }
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(n, "expected key=value in " + path);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r\"");
        const auto e = s.find_last_not_of(" \t\r\"");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      const std::string key = "--" + trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (value == "false") continue;
      from_file.push_back(key);
      if (value != "true") from_file.push_back(value);
    }
  }
  // The subcommand name must stay first.
  if (!out.empty() && out.front().rfind("-", 0) != 0) {
    out.insert(out.begin() + 1, from_file.begin(), from_file.end());
  } else {
    out.insert(out.begin(), from_file.begin(), from_file.end());
  }
  return out;
}

std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    try {
      out.push_back(std::stoul(part));
    } catch (const std::exception&) {
      throw ConfigError("--filter-widths: '" + part + "' is not a width");
    }
  }
  if (out.empty()) throw ConfigError("--filter-widths needs at least one width");
  return out;
}

AspectCatalog catalog_from(const std::string& path) {
  return path.empty() ? AspectCatalog::germeval() : AspectCatalog::load(path);
}

std::vector<Document> read_split(const fs::path& dir, Split split, const AspectCatalog& catalog, bool required) {
  const fs::path path = dir / (std::string(split_name(split)) + ".tsv");
  if (!fs::exists(path)) {
    if (required) throw ConfigError("missing " + path.string());
    return {};
  }
  auto docs = parse_dataset(path, catalog, split);
  if (split != Split::train) {
    for (const auto& d : docs)
      if (d.has_conflict())
        std::cerr << "warning: " << split_name(split) << " document '" << d.id
                  << "' has conflicting polarities; keeping the first-listed\n";
  }
  return docs;
}

json prediction_json(const PredictionSet& p, const AspectCatalog& catalog) {
  json items = json::array();
  for (const auto& it : p.items)
    items.push_back(
        {{"aspect", catalog.name(it.aspect)}, {"polarity", polarity_name(it.polarity)}, {"confidence", it.confidence}});
  return items;
}

json record_for(const Model& model, std::size_t id, const std::string& text) {
  if (!is_valid_utf8(text)) return {{"id", id}, {"error", "invalid UTF-8"}};
  try {
    const auto tokens = tokenize(text);
    return {{"id", id}, {"predictions", prediction_json(model.predict(tokens), model.catalog())}};
  } catch (const std::exception& e) {
    return {{"id", id}, {"error", e.what()}};
  }
}

// Writes every option with its effective value, reusable as --config.
void echo_config(const CLI::App& sub, const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& resolved) {
  std::ofstream out(dir / "config.txt");
  std::stringstream all(sub.config_to_str(true, false));
  std::string line;
  while (std::getline(all, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.substr(eq + 1) == "\"\"") continue;
    const std::string key = line.substr(0, eq);
    if (std::any_of(resolved.begin(), resolved.end(), [&](const auto& kv) { return kv.first == key; })) continue;
    out << line << '\n';
  }
  for (const auto& [k, v] : resolved) out << k << '=' << v << '\n';
}

// ---------------------------------------------------------------------------

struct ModelFlags {
  std::string arch = "e2e-cnn";
  std::string widths = "3,4,5";
  std::size_t filters = 300;
  std::size_t hidden = 200;
  std::size_t aspect_dim = 15;
  double init_scale = 0.05;
};

struct TrainFlags {
  std::string data_dir;
  std::string embeddings;
  std::size_t embedding_dim = 0;
  std::string catalog;
  std::string out_dir;
  std::string detector;
  bool train_detector = false;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::size_t epochs = 200;
  std::size_t patience = 10;
  double dropout = 0.5;
  std::string clip = "auto";
  double clip_norm = 5.0;
  std::uint64_t seed = 42;
  ModelFlags model;
};

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--data-dir", f.data_dir, "Directory with train.tsv, dev.tsv, test-syn.tsv, test-dia.tsv")
      ->required()
      ->check(CLI::ExistingDirectory);
  sub->add_option("--embeddings", f.embeddings, "Embedding file")->required()->check(CLI::ExistingFile);
  sub->add_option("--embedding-dim", f.embedding_dim, "Expected embedding dimension (0 accepts any)");
  sub->add_option("--catalog", f.catalog, "Aspect catalog file (default: GermEval categories)");
  sub->add_option("--out-dir", f.out_dir, "Output directory")->required();
  sub->add_option("--arch", f.model.arch, "e2e-cnn | e2e-lstm | pipe-cnn | pipe-lstm")
      ->check(CLI::IsMember({"e2e-cnn", "e2e-lstm", "pipe-cnn", "pipe-lstm"}));
  sub->add_option("--detector", f.detector, "Trained detector file for pipeline models")->check(CLI::ExistingFile);
  sub->add_flag("--train-detector", f.train_detector, "Train the stand-in detector for pipeline models");
  sub->add_option("--lr", f.lr, "Learning rate");
  sub->add_option("--batch-size", f.batch, "Mini-batch size");
  sub->add_option("--epochs", f.epochs, "Epoch cap")->capture_default_str();
  sub->add_option("--patience", f.patience, "Early-stopping patience")->capture_default_str();
  sub->add_option("--dropout", f.dropout, "Dropout rate")->capture_default_str();
  sub->add_option("--clip", f.clip, "Gradient clipping: auto | on | off")
      ->check(CLI::IsMember({"auto", "on", "off"}))
      ->capture_default_str();
  sub->add_option("--clip-norm", f.clip_norm, "Clipping norm")->capture_default_str();
  sub->add_option("--seed", f.seed, "Random seed")->capture_default_str();
  sub->add_option("--filter-widths", f.model.widths, "CNN filter widths")->capture_default_str();
  sub->add_option("--filters", f.model.filters, "CNN filters per width")->capture_default_str();
  sub->add_option("--hidden", f.model.hidden, "LSTM hidden units per direction")->capture_default_str();
  sub->add_option("--aspect-embed-dim", f.model.aspect_dim, "Pipeline aspect embedding size")->capture_default_str();
  sub->add_option("--init-scale", f.model.init_scale, "Uniform init half-width")->capture_default_str();
}

ModelConfig model_config(const TrainFlags& f) {
  ModelConfig c;
  c.arch = *parse_architecture(f.model.arch);
  c.filter_widths = parse_widths(f.model.widths);
  c.filters_per_width = f.model.filters;
  c.hidden = f.model.hidden;
  c.aspect_embed_dim = f.model.aspect_dim;
  c.dropout = f.dropout;
  c.init_scale = f.model.init_scale;
  return c;
}

HyperConfig hyper_config(const TrainFlags& f) {
  HyperConfig h = HyperConfig::defaults_for(*parse_architecture(f.model.arch));
  if (f.lr) h.lr = *f.lr;
  if (f.batch) h.batch_size = *f.batch;
  h.epochs = f.epochs;
  h.patience = f.patience;
  h.seed = f.seed;
  h.dropout = f.dropout;
  if (f.clip != "auto") h.clip = f.clip == "on";
  h.clip_norm = f.clip_norm;
  h.embedding_source = fs::path(f.embeddings).filename().string();
  h.validate();
  return h;
}

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::vector<std::pair<std::string, std::string>> resolved_options(const HyperConfig& h) {
  return {{"arch", std::string(architecture_name(h.arch))},
          {"lr", shortest(h.lr)},
          {"batch-size", std::to_string(h.batch_size)},
          {"clip", h.clipping() ? "on" : "off"}};
}

struct Experiment {
  AspectCatalog catalog;
  EmbeddingTable table;
  std::vector<Document> train;
  std::vector<Document> dev;
  ConflictReport conflicts;
  std::vector<std::vector<std::string>> train_tokens;
};

Experiment load_experiment(const TrainFlags& f) {
  Experiment e;
  e.catalog = catalog_from(f.catalog);
  e.table = load_embeddings(f.embeddings, f.embedding_dim);
  auto [train, report] = filter_conflicts(read_split(f.data_dir, Split::train, e.catalog, true), e.catalog.size());
  e.train = std::move(train);
  e.conflicts = report;
  e.dev = read_split(f.data_dir, Split::dev, e.catalog, false);
  for (const auto& d : e.train) e.train_tokens.push_back(d.tokens);
  return e;
}

void attach_detector(Model& model, const TrainFlags& f, const Experiment& e, const fs::path& out_dir) {
  if (!is_pipeline(model.config().arch)) return;
  if (!f.detector.empty()) {
    model.detector() = load_detector(f.detector, e.catalog);
  } else if (f.train_detector) {
    DetectorConfig dc;
    dc.seed = f.seed;
    model.detector().train(e.train, e.dev, e.table, e.catalog.size(), dc);
    save_detector(model.detector(), e.catalog, out_dir / "detector.bin");
  } else {
    throw ConfigError("pipeline architectures need --detector FILE or --train-detector");
  }
}

int cmd_train(const CLI::App& sub, const TrainFlags& f) {
  const fs::path out_dir = f.out_dir;
  fs::create_directories(out_dir);
  const HyperConfig hyper = hyper_config(f);
  echo_config(sub, out_dir, resolved_options(hyper));
  Experiment e = load_experiment(f);
  {
    std::ofstream out(out_dir / "conflicts.json");
    out << e.conflicts.to_json(e.catalog).dump(2) << '\n';
  }
  Model model(model_config(f), e.catalog, e.table, e.train_tokens, f.seed);
  attach_detector(model, f, e, out_dir);
  const auto history = train_model(model, e.train, e.dev, hyper, [](const EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << " loss " << r.loss << " dev_f1 " << r.dev_f1 << '\n';
  });
  model.save(out_dir / "model.bin");
  {
    std::ofstream out(out_dir / "history.csv");
    history.write_csv(out);
  }
  {
    std::ofstream out(out_dir / "timing.csv");
    history.write_timing_csv(out);
  }
  const auto& dev = e.dev.empty() ? e.train : e.dev;
  json result = {{"architecture", f.model.arch},
                 {"seed", f.seed},
                 {"hyper", hyper.to_json()},
                 {"best_epoch", history.best_epoch},
                 {"dev", evaluate(model, dev, Task::aspect_sentiment, e.dev.empty() ? "train" : "dev").to_json()}};
  std::ofstream(out_dir / "dev_report.json") << result.dump(2) << '\n';
  std::cout << result.dump(2) << '\n';
  return 0;
}

int cmd_tune(const CLI::App& sub, const TrainFlags& f, std::size_t trials) {
  const fs::path out_dir = f.out_dir;
  fs::create_directories(out_dir);
  const HyperConfig base = hyper_config(f);
  echo_config(sub, out_dir, resolved_options(base));
  Experiment e = load_experiment(f);
  const ModelConfig mc = model_config(f);
  AspectDetector detector;
  bool have_detector = false;
  auto runner = [&](const HyperConfig& h) {
    Model model(mc, e.catalog, e.table, e.train_tokens, h.seed);
    if (is_pipeline(mc.arch)) {
      if (!have_detector) {
        attach_detector(model, f, e, out_dir);
        detector = model.detector();
        have_detector = true;
      } else {
        model.detector() = detector;
      }
    }
    std::cerr << "trial lr=" << h.lr << " batch_size=" << h.batch_size << '\n';
    return train_model(model, e.train, e.dev, h);
  };
  std::ofstream log(out_dir / "trials.jsonl");
  const auto result = random_search(SearchSpace{}, trials, base, runner, &log, &std::cerr);
  json best = result.best.to_json();
  best["dev_f1"] = result.best_dev_f1;
  best["trials"] = result.trials.size();
  std::ofstream(out_dir / "best_config.json") << best.dump(2) << '\n';
  std::cout << best.dump(2) << '\n';
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_dir, const std::string& dataset,
             const std::string& split_arg, const std::string& task_arg, const std::string& catalog_path,
             const std::string& reference, bool majority) {
  std::optional<AspectCatalog> expected;
  if (!catalog_path.empty()) expected = AspectCatalog::load(catalog_path);
  const Model model = Model::load(fs::path(model_path), expected ? &*expected : nullptr);
  const auto split = parse_split(split_arg);
  if (!split) throw ConfigError("unknown split '" + split_arg + "' (train, dev, test-syn, test-dia)");
  std::vector<Task> tasks;
  if (task_arg == "both") {
    tasks = {Task::aspect_sentiment, Task::aspect_only};
  } else {
    const auto t = parse_task(task_arg);
    if (!t) throw ConfigError("unknown task '" + task_arg + "'");
    tasks = {*t};
  }
  std::vector<Document> docs;
  if (!dataset.empty()) {
    docs = parse_dataset(fs::path(dataset), model.catalog(), *split);
  } else if (!data_dir.empty()) {
    docs = read_split(data_dir, *split, model.catalog(), true);
  } else {
    throw ConfigError("eval needs --data-dir or --dataset");
  }
  const std::string arch(architecture_name(model.config().arch));
  json reports = json::array();
  for (Task t : tasks) {
    json r = evaluate(model, docs, t, split_arg).to_json();
    if (!reference.empty()) {
      if (const auto ref = published_reference(arch, reference, t, split_arg)) {
        r["published_f1"] = *ref;
        r["delta"] = r["f1"].get<double>() - *ref;
      } else {
        r["published_f1"] = nullptr;
      }
    }
    reports.push_back(r);
  }
  json out = {{"model", model_path},
              {"architecture", arch},
              {"catalog_hash", model.catalog().hash()},
              {"documents", docs.size()},
              {"reports", reports}};
  if (majority) {
    if (data_dir.empty()) throw ConfigError("--majority needs --data-dir with train.tsv");
    auto [train, report] =
        filter_conflicts(read_split(data_dir, Split::train, model.catalog(), true), model.catalog().size());
    const auto baseline = MajorityBaseline::fit(train);
    std::vector<ScoredDocument> pred = gold_split(docs);
    for (auto& p : pred) p.labels = baseline.predict();
    json base = json::array();
    for (Task t : tasks) {
      auto r = micro_f1(pred, gold_split(docs), t);
      r.split = split_arg;
      json j = r.to_json();
      if (const auto ref = published_reference("majority", "", t, split_arg)) {
        j["published_f1"] = *ref;
        j["delta"] = r.f1 - *ref;
      }
      base.push_back(j);
    }
    out["majority"] = {{"aspect", model.catalog().name(baseline.aspect)},
                       {"polarity", polarity_name(baseline.polarity)},
                       {"reports", base}};
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_predict(const std::string& model_path) {
  const Model model = Model::load(fs::path(model_path));
  std::string line;
  std::size_t id = 0;
  while (std::getline(std::cin, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::cout << record_for(model, id++, line).dump() << '\n';
  }
  std::cout.flush();
  return 0;
}

int cmd_serve(const std::string& model_path, const std::string& host, int port, std::size_t max_body) {
  const Model model = Model::load(fs::path(model_path));
  httplib::Server server;
  server.set_payload_max_length(max_body);
  const json health = {{"status", "ok"},
                       {"architecture", architecture_name(model.config().arch)},
                       {"catalog_hash", model.catalog().hash()},
                       {"aspects", model.catalog().size()}};
  server.Get("/health", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(health.dump(), "application/json");
  });
  server.Post("/predict", [&](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("documents") || !body["documents"].is_array()) {
      res.status = 400;
      res.set_content(json{{"error", "expected a JSON object with a \"documents\" array"}}.dump(), "application/json");
      return;
    }
    json records = json::array();
    std::size_t id = 0;
    for (const auto& d : body["documents"]) {
      if (!d.is_string()) {
        records.push_back({{"id", id++}, {"error", "document is not a string"}});
        continue;
      }
      records.push_back(record_for(model, id++, d.get<std::string>()));
    }
    res.set_content(json{{"predictions", records}}.dump(), "application/json");
  });
  int bound = port;
  if (port == 0) {
    bound = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  std::cout << "listening on " << host << ":" << bound << std::endl;
  return server.listen_after_bind() ? 0 : 1;
}

int cmd_embed_train(const std::string& corpus, const std::string& out, const SkipgramConfig& cfg) {
  const auto stream = CorpusStream::from_file(corpus);
  if (stream.documents().empty()) throw ConfigError("corpus " + corpus + " is empty");
  const auto table = train_subword_skipgram(stream, cfg);
  save_embeddings(table, out);
  std::cerr << "wrote " << table.word_count() << " words, " << table.stored_buckets().size() << " buckets to "
            << out << '\n';
  return 0;
}

int cmd_make_synthetic(const std::string& out_dir, const SyntheticConfig& cfg) {
  const auto data = make_synthetic(cfg);
  fs::create_directories(out_dir);
  const fs::path dir = out_dir;
  auto write = [&](const std::vector<Document>& docs, const std::string& name) {
    std::ofstream out(dir / name);
    write_dataset(docs, data.catalog, out);
  };
  write(data.train, "train.tsv");
  write(data.dev, "dev.tsv");
  write(data.test, "test-syn.tsv");
  write(data.test, "test-dia.tsv");
  std::ofstream cat(dir / "catalog.txt");
  for (const auto& n : data.catalog.names()) cat << n << '\n';
  save_embeddings(data.embeddings, dir / "embeddings.txt");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aspect-based sentiment analysis toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_help_all_flag("--help-all");
  app.add_option("--config", "key=value configuration file; flags override its values");

  // embed-train
  auto* embed = app.add_subcommand("embed-train", "Train subword skip-gram embeddings on a plain-text corpus");
  std::string corpus, embed_out;
  SkipgramConfig sg;
  embed->add_option("--corpus", corpus, "UTF-8 corpus, one document per line")->required()->check(CLI::ExistingFile);
  embed->add_option("--out", embed_out, "Output embedding file")->required();
  embed->add_option("--dim", sg.dim)->capture_default_str();
  embed->add_option("--window", sg.window)->capture_default_str();
  embed->add_option("--negatives", sg.negatives)->capture_default_str();
  embed->add_option("--epochs", sg.epochs)->capture_default_str();
  embed->add_option("--lr", sg.lr)->capture_default_str();
  embed->add_option("--min-count", sg.min_count)->capture_default_str();
  embed->add_option("--buckets", sg.subwords.bucket_count)->capture_default_str();
  embed->add_option("--ngram-min", sg.subwords.n_min)->capture_default_str();
  embed->add_option("--ngram-max", sg.subwords.n_max)->capture_default_str();
  embed->add_option("--seed", sg.seed)->capture_default_str();

  // train / tune
  auto* train = app.add_subcommand("train", "Train one architecture and keep the best dev epoch");
  TrainFlags train_flags;
  add_train_flags(train, train_flags);
  auto* tune = app.add_subcommand("tune", "Random search over learning rate and batch size");
  TrainFlags tune_flags;
  std::size_t trials = 15;
  add_train_flags(tune, tune_flags);
  tune->add_option("--trials", trials, "Trial budget")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "Score a model on a split");
  std::string eval_model, eval_dir, eval_dataset, eval_split = "dev", eval_task = "aspect+sentiment", eval_catalog,
                                                  eval_reference;
  bool eval_majority = false;
  eval->add_option("--model", eval_model)->required()->check(CLI::ExistingFile);
  eval->add_option("--data-dir", eval_dir)->check(CLI::ExistingDirectory);
  eval->add_option("--dataset", eval_dataset, "Single TSV file instead of --data-dir")->check(CLI::ExistingFile);
  eval->add_option("--split", eval_split, "train | dev | test-syn | test-dia")->capture_default_str();
  eval->add_option("--task", eval_task, "aspect+sentiment | aspect-only | both")->capture_default_str();
  eval->add_option("--catalog", eval_catalog, "Refuse models trained for a different catalog");
  eval->add_option("--reference", eval_reference,
                   "Embedding name (word2vec, glove, fasttext) for deltas against published scores");
  eval->add_flag("--majority", eval_majority, "Also score the majority-class baseline fitted on train.tsv");

  // predict / serve
  auto* predict = app.add_subcommand("predict", "Predict one document per stdin line as JSON lines");
  std::string predict_model;
  predict->add_option("--model", predict_model)->required()->check(CLI::ExistingFile);
  auto* serve = app.add_subcommand("serve", "HTTP prediction endpoint");
  std::string serve_model, host = "127.0.0.1";
  int port = 8080;
  std::size_t max_body = 1 << 20;
  serve->add_option("--model", serve_model)->required()->check(CLI::ExistingFile);
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port, "0 picks a free port")->capture_default_str();
  serve->add_option("--max-body", max_body, "Request body limit in bytes")->capture_default_str();

  // make-synthetic
  auto* synth = app.add_subcommand("make-synthetic", "Write the trigger-token dataset and matching embeddings");
  std::string synth_out;
  SyntheticConfig sc;
  synth->add_option("--out-dir", synth_out)->required();
  synth->add_option("--aspects", sc.aspects)->capture_default_str();
  synth->add_option("--train-docs", sc.train_docs)->capture_default_str();
  synth->add_option("--dev-docs", sc.dev_docs)->capture_default_str();
  synth->add_option("--test-docs", sc.test_docs)->capture_default_str();
  synth->add_option("--dim", sc.dim)->capture_default_str();
  synth->add_option("--seed", sc.seed)->capture_default_str();

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*embed) return cmd_embed_train(corpus, embed_out, sg);
    if (*train) return cmd_train(*train, train_flags);
    if (*tune) return cmd_tune(*tune, tune_flags, trials);
    if (*eval)
      return cmd_eval(eval_model, eval_dir, eval_dataset, eval_split, eval_task, eval_catalog, eval_reference,
                      eval_majority);
    if (*predict) return cmd_predict(predict_model);
    if (*serve) return cmd_serve(serve_model, host, port, max_body);
    if (*synth) return cmd_make_synthetic(synth_out, sc);
  } catch (const NumericError& e) {
    std::cerr << "error: training diverged: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
