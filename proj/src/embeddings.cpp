#include "absa/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "absa/errors.hpp"

namespace absa {

namespace {

struct Char {
  char32_t cp;
  std::string_view bytes;
  bool valid;
};

// Splits text into code points. Invalid bytes become single-byte characters
// with valid == false so that no input is ever rejected.
std::vector<Char> decode(std::string_view s) {
  std::vector<Char> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0 && b0 >= 0xC2) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0 && b0 <= 0xF4) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (b & 0x3F);
      }
    }
    if (ok) {
      // Reject overlong encodings, surrogates and out-of-range values.
      if ((len == 3 && cp < 0x800) || (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)) ||
          (cp >= 0xD800 && cp <= 0xDFFF)) {
        ok = false;
      }
    }
    if (!ok) {
      out.push_back({b0, s.substr(i, 1), false});
      ++i;
    } else {
      out.push_back({cp, s.substr(i, len), true});
      i += len;
    }
  }
  return out;
}

void encode(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

char32_t to_lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 0x20;
  if (c < 0x80) return c;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
  if (c >= 0x100 && c <= 0x137) return (c % 2 == 0) ? c + 1 : c;
  if (c >= 0x139 && c <= 0x148) return (c % 2 == 1) ? c + 1 : c;
  if (c >= 0x14A && c <= 0x177) return (c % 2 == 0) ? c + 1 : c;
  if (c == 0x178) return 0xFF;
  if (c >= 0x179 && c <= 0x17E) return (c % 2 == 1) ? c + 1 : c;
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 0x20;
  if (c >= 0x410 && c <= 0x42F) return c + 0x20;
  if (c >= 0x400 && c <= 0x40F) return c + 0x50;
  if (c == 0x1E9E) return 0xDF;
  return c;
}

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f' || c == 0xA0 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x202F || c == 0x205F || c == 0x3000;
}

bool is_punct(char32_t c) {
  if (c < 0x80) return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
                       (c >= 0x7B && c <= 0x7E);
  switch (c) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
      return true;
    default:
      break;
  }
  return (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) || (c >= 0x3001 && c <= 0x3003);
}

bool is_word_char(char32_t c) { return c == U'_' || (!is_space(c) && !is_punct(c)); }

bool starts_url(std::string_view lowered) {
  return lowered.starts_with("http://") || lowered.starts_with("https://") || lowered.starts_with("www.");
}

void tokenize_chunk(const std::vector<Char>& chars, std::vector<std::string>& out) {
  std::string lowered;
  for (const auto& ch : chars) {
    if (ch.valid) {
      encode(to_lower(ch.cp), lowered);
    } else {
      lowered += ch.bytes;
    }
  }
  if (starts_url(lowered)) {
    out.push_back(std::move(lowered));
    return;
  }
  std::size_t begin = 0, end = chars.size();
  auto mention_at = [&](std::size_t i) {
    return chars[i].cp == U'@' && i + 1 < end && is_word_char(chars[i + 1].cp);
  };
  std::vector<std::string> trailing;
  while (begin < end && is_punct(chars[begin].cp) && !mention_at(begin)) {
    out.emplace_back(chars[begin].bytes);
    ++begin;
  }
  while (end > begin && is_punct(chars[end - 1].cp)) {
    trailing.emplace_back(chars[end - 1].bytes);
    --end;
  }
  if (begin < end) {
    std::string core;
    for (std::size_t i = begin; i < end; ++i) {
      if (chars[i].valid) {
        encode(to_lower(chars[i].cp), core);
      } else {
        core += chars[i].bytes;
      }
    }
    out.push_back(std::move(core));
  }
  out.insert(out.end(), trailing.rbegin(), trailing.rend());
}

}  // namespace

bool is_valid_utf8(std::string_view text) {
  const auto chars = decode(text);
  return std::all_of(chars.begin(), chars.end(), [](const Char& c) { return c.valid; });
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  const auto chars = decode(text);
  std::vector<Char> chunk;
  for (const auto& ch : chars) {
    if (ch.valid && is_space(ch.cp)) {
      if (!chunk.empty()) tokenize_chunk(chunk, out);
      chunk.clear();
    } else {
      chunk.push_back(ch);
    }
  }
  if (!chunk.empty()) tokenize_chunk(chunk, out);
  return out;
}

std::vector<std::string> extract_ngrams(std::string_view word, std::size_t n_min, std::size_t n_max) {
  if (n_min == 0 || n_min > n_max) throw ConfigError("extract_ngrams: need 0 < n_min <= n_max");
  std::string bracketed = "<";
  bracketed += word;
  bracketed += ">";
  const auto chars = decode(bracketed);
  const std::size_t len = chars.size();
  std::vector<std::string> out;
  for (std::size_t n = n_min; n <= n_max && n <= len; ++n) {
    for (std::size_t i = 0; i + n <= len; ++i) {
      std::string gram;
      for (std::size_t k = i; k < i + n; ++k) gram += chars[k].bytes;
      out.push_back(std::move(gram));
    }
  }
  if (len < n_min || len > n_max) out.push_back(bracketed);
  return out;
}

std::uint32_t fnv1a32(std::string_view bytes) {
  std::uint32_t h = 2166136261u;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 16777619u;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::size_t Vocabulary::add(const std::string& token, std::uint64_t count) {
  auto it = index_.find(token);
  if (it != index_.end()) {
    counts_[it->second] += count;
    return it->second;
  }
  const std::size_t idx = tokens_.size();
  index_.emplace(token, idx);
  tokens_.push_back(token);
  counts_.push_back(count);
  return idx;
}

bool Vocabulary::contains(std::string_view token) const { return index_.find(token) != index_.end(); }

std::size_t Vocabulary::index(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? tokens_.size() : it->second;
}

void EmbeddingTable::add_word(const std::string& token, std::span<const double> vector) {
  if (vector.size() != dim_) throw DimensionError("add_word: vector length differs from table dimension");
  if (vocab_.contains(token)) throw ConfigError("duplicate token '" + token + "'");
  vocab_.add(token);
  words_.insert(words_.end(), vector.begin(), vector.end());
}

void EmbeddingTable::set_subwords(SubwordConfig cfg) {
  if (cfg.bucket_count > 0 && (cfg.n_min == 0 || cfg.n_min > cfg.n_max)) {
    throw ConfigError("subword n-gram range must satisfy 0 < n_min <= n_max");
  }
  if (cfg.bucket_count > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("bucket count too large");
  subwords_ = cfg;
  bucket_rows_.clear();
  bucket_data_.clear();
}

void EmbeddingTable::set_bucket(std::uint32_t bucket, std::span<const double> vector) {
  if (!has_subwords()) throw ConfigError("set_bucket on a table without subword buckets");
  if (bucket >= subwords_.bucket_count) throw DimensionError("bucket id outside bucket count");
  if (vector.size() != dim_) throw DimensionError("set_bucket: vector length differs from table dimension");
  auto [it, inserted] = bucket_rows_.try_emplace(bucket, bucket_data_.size() / std::max<std::size_t>(dim_, 1));
  if (inserted) {
    bucket_data_.insert(bucket_data_.end(), vector.begin(), vector.end());
  } else {
    std::copy(vector.begin(), vector.end(), bucket_data_.begin() + static_cast<std::ptrdiff_t>(it->second * dim_));
  }
}

std::vector<std::uint32_t> EmbeddingTable::stored_buckets() const {
  std::vector<std::uint32_t> ids;
  ids.reserve(bucket_rows_.size());
  for (const auto& [id, row] : bucket_rows_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::span<const double> EmbeddingTable::bucket(std::uint32_t bucket) const {
  auto it = bucket_rows_.find(bucket);
  if (it == bucket_rows_.end()) return {};
  return {bucket_data_.data() + it->second * dim_, dim_};
}

std::uint32_t EmbeddingTable::bucket_of(std::string_view ngram) const {
  if (!has_subwords()) throw ConfigError("bucket_of on a table without subword buckets");
  return static_cast<std::uint32_t>(fnv1a32(ngram) % subwords_.bucket_count);
}

std::vector<double> EmbeddingTable::lookup(std::string_view token) const {
  const std::size_t idx = vocab_.index(token);
  if (idx < vocab_.size()) {
    const auto row = word(idx);
    return {row.begin(), row.end()};
  }
  return compose_oov(token);
}

std::vector<double> EmbeddingTable::compose_oov(std::string_view word) const {
  if (!has_subwords() || word.empty()) return fallback_vector(word, dim_);
  const auto grams = extract_ngrams(word, subwords_.n_min, subwords_.n_max);
  std::vector<double> out(dim_, 0.0);
  for (const auto& g : grams) {
    const auto row = bucket(bucket_of(g));
    for (std::size_t i = 0; i < row.size(); ++i) out[i] += row[i];
  }
  const double inv = 1.0 / static_cast<double>(grams.size());
  for (auto& v : out) v *= inv;
  return out;
}

std::vector<double> fallback_vector(std::string_view word, std::size_t dim) {
  Rng rng(fnv1a64(word));
  std::vector<double> out(dim);
  for (auto& v : out) v = rng.uniform(-0.01, 0.01);
  return out;
}

std::string format_real(double v) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_real(std::string_view field, std::size_t line_no) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError(line_no, "non-numeric or non-finite value '" + std::string(field) + "'");
  }
  return v;
}

std::size_t parse_count(std::string_view field, std::size_t line_no, const char* what) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError(line_no, std::string("malformed ") + what + " '" + std::string(field) + "'");
  }
  return v;
}

std::vector<double> parse_vector(const std::vector<std::string_view>& fields, std::size_t dim, std::size_t line_no) {
  if (fields.size() != dim + 1) {
    throw ParseError(line_no, "expected " + std::to_string(dim) + " values, found " +
                                  std::to_string(fields.size() == 0 ? 0 : fields.size() - 1));
  }
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < dim; ++i) v[i] = parse_real(fields[i + 1], line_no);
  return v;
}

}  // namespace

EmbeddingTable read_embeddings(std::istream& in, std::size_t expected_dim) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(1, "missing header line");
  const auto header = split_fields(line);
  if (header.size() != 2) throw ParseError(1, "header must be 'vocab_size dim'");
  const std::size_t vocab_size = parse_count(header[0], 1, "vocabulary size");
  const std::size_t dim = parse_count(header[1], 1, "dimension");
  if (dim == 0) throw ParseError(1, "dimension must be positive");
  if (expected_dim != 0 && dim != expected_dim) {
    throw ConfigError("embedding dimension " + std::to_string(dim) + " differs from configured dimension " +
                      std::to_string(expected_dim));
  }

  EmbeddingTable table(dim);
  for (std::size_t w = 0; w < vocab_size; ++w) {
    ++line_no;
    if (!std::getline(in, line)) {
      throw ParseError(line_no, "expected " + std::to_string(vocab_size) + " word rows, found " + std::to_string(w));
    }
    const auto fields = split_fields(line);
    if (fields.empty()) throw ParseError(line_no, "empty word row");
    const auto vec = parse_vector(fields, dim, line_no);
    const std::string token(fields[0]);
    if (table.vocabulary().contains(token)) throw ParseError(line_no, "duplicate token '" + token + "'");
    table.add_word(token, vec);
  }

  bool have_config = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    const std::string_view key = fields[0];
    if (key == "ngram:config") {
      if (have_config) throw ParseError(line_no, "repeated ngram:config line");
      if (fields.size() != 4) throw ParseError(line_no, "ngram:config needs bucket count, n_min, n_max");
      SubwordConfig cfg;
      cfg.bucket_count = parse_count(fields[1], line_no, "bucket count");
      cfg.n_min = parse_count(fields[2], line_no, "n_min");
      cfg.n_max = parse_count(fields[3], line_no, "n_max");
      if (cfg.bucket_count == 0 || cfg.n_min == 0 || cfg.n_min > cfg.n_max) {
        throw ParseError(line_no, "invalid ngram:config values");
      }
      table.set_subwords(cfg);
      have_config = true;
    } else if (key.starts_with("ngram:")) {
      if (!have_config) throw ParseError(line_no, "ngram row before ngram:config");
      const std::size_t bucket = parse_count(key.substr(6), line_no, "bucket id");
      if (bucket >= table.subwords().bucket_count) throw ParseError(line_no, "bucket id outside bucket count");
      const auto vec = parse_vector(fields, dim, line_no);
      table.set_bucket(static_cast<std::uint32_t>(bucket), vec);
    } else {
      throw ParseError(line_no, "unexpected line after " + std::to_string(vocab_size) + " word rows");
    }
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t expected_dim) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embedding file " + path.string());
  return read_embeddings(in, expected_dim);
}

void write_embeddings(const EmbeddingTable& table, std::ostream& out) {
  const std::size_t dim = table.dim();
  out << table.word_count() << ' ' << dim << '\n';
  auto write_row = [&](std::span<const double> row) {
    for (double v : row) out << ' ' << format_real(v);
    out << '\n';
  };
  for (std::size_t i = 0; i < table.word_count(); ++i) {
    out << table.vocabulary().token(i);
    write_row(table.word(i));
  }
  if (table.has_subwords()) {
    const auto& cfg = table.subwords();
    out << "ngram:config " << cfg.bucket_count << ' ' << cfg.n_min << ' ' << cfg.n_max << '\n';
    for (std::uint32_t b : table.stored_buckets()) {
      out << "ngram:" << b;
      write_row(table.bucket(b));
    }
  }
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write embedding file " + path.string());
  write_embeddings(table, out);
  if (!out) throw ConfigError("failed writing embedding file " + path.string());
}

CorpusStream::CorpusStream(std::vector<std::string> lines) {
  docs_.reserve(lines.size());
  for (const auto& line : lines) {
    auto toks = tokenize(line);
    tokens_ += toks.size();
    docs_.push_back(std::move(toks));
  }
}

CorpusStream CorpusStream::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  return CorpusStream(std::move(lines));
}

std::vector<std::pair<std::size_t, std::size_t>> skipgram_pairs(std::size_t length, std::size_t window) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t c = 0; c < length; ++c) {
    const std::size_t lo = c >= window ? c - window : 0;
    const std::size_t hi = std::min(length - 1, c + window);
    for (std::size_t j = lo; j <= hi; ++j)
      if (j != c) out.emplace_back(c, j);
  }
  return out;
}

NegativeSampler::NegativeSampler(std::span<const std::uint64_t> counts, double power) {
  if (counts.empty()) throw ConfigError("negative sampler needs a nonempty vocabulary");
  cumulative_.reserve(counts.size());
  double total = 0.0;
  for (auto c : counts) {
    total += std::pow(static_cast<double>(c), power);
    cumulative_.push_back(total);
  }
  for (auto& v : cumulative_) v /= total;
  cumulative_.back() = 1.0;
}

std::size_t NegativeSampler::draw(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
}

double NegativeSampler::probability(std::size_t index) const {
  return index == 0 ? cumulative_[0] : cumulative_.at(index) - cumulative_[index - 1];
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

namespace {

double log_sigmoid_grad(double score, double label) {
  // d/dscore of -log sigma(+-score), returned as (label - sigma(score)).
  const double s = 1.0 / (1.0 + std::exp(-score));
  return label - s;
}

}  // namespace

EmbeddingTable train_subword_skipgram(const CorpusStream& corpus, const SkipgramConfig& cfg) {
  if (cfg.dim == 0 || cfg.window == 0 || cfg.lr <= 0.0) throw ConfigError("skip-gram needs dim, window and lr > 0");
  const bool subwords = cfg.subwords.bucket_count > 0;
  if (subwords && (cfg.subwords.n_min == 0 || cfg.subwords.n_min > cfg.subwords.n_max)) {
    throw ConfigError("subword n-gram range must satisfy 0 < n_min <= n_max");
  }

  std::map<std::string, std::uint64_t> counts;
  for (const auto& doc : corpus.documents())
    for (const auto& tok : doc) ++counts[tok];
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (const auto& [tok, n] : counts)
    if (n >= cfg.min_count) kept.emplace_back(tok, n);
  if (kept.empty()) throw ConfigError("corpus is empty after min-count filtering");
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary vocab;
  std::vector<std::uint64_t> freq;
  for (const auto& [tok, n] : kept) {
    vocab.add(tok, n);
    freq.push_back(n);
  }
  const std::size_t V = vocab.size(), D = cfg.dim;

  // Input rows: words first, then every bucket used by a vocabulary word.
  std::map<std::uint32_t, std::size_t> bucket_row;
  std::vector<std::vector<std::size_t>> components(V);
  for (std::size_t w = 0; w < V; ++w) {
    components[w].push_back(w);
    if (!subwords) continue;
    for (const auto& g : extract_ngrams(vocab.token(w), cfg.subwords.n_min, cfg.subwords.n_max)) {
      const auto b = static_cast<std::uint32_t>(fnv1a32(g) % cfg.subwords.bucket_count);
      bucket_row.try_emplace(b, 0);
      components[w].push_back(b);  // bucket id, resolved to a row index below
    }
  }
  {
    std::size_t next = V;
    for (auto& [b, row] : bucket_row) row = next++;
    for (std::size_t w = 0; w < V; ++w)
      for (std::size_t k = 1; k < components[w].size(); ++k)
        components[w][k] = bucket_row.at(static_cast<std::uint32_t>(components[w][k]));
  }
  const std::size_t input_rows = V + bucket_row.size();

  Rng rng(cfg.seed);
  const double bound = 1.0 / static_cast<double>(D);
  std::vector<double> input(input_rows * D);
  for (auto& v : input) v = rng.uniform(-bound, bound);
  std::vector<double> output(V * D, 0.0);

  std::vector<std::vector<std::size_t>> docs;
  std::size_t pairs_per_epoch = 0;
  for (const auto& doc : corpus.documents()) {
    std::vector<std::size_t> ids;
    for (const auto& tok : doc) {
      const std::size_t i = vocab.index(tok);
      if (i < V) ids.push_back(i);
    }
    pairs_per_epoch += skipgram_pairs(ids.size(), cfg.window).size();
    docs.push_back(std::move(ids));
  }
  const double total_pairs = static_cast<double>(std::max<std::size_t>(1, pairs_per_epoch * cfg.epochs));

  const NegativeSampler sampler(freq);
  std::vector<double> hidden(D), grad(D);
  std::size_t processed = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& ids : docs) {
      for (const auto& [c, j] : skipgram_pairs(ids.size(), cfg.window)) {
        const double lr = cfg.lr * std::max(0.0, 1.0 - static_cast<double>(processed) / total_pairs);
        ++processed;
        const auto& comp = components[ids[c]];
        std::fill(hidden.begin(), hidden.end(), 0.0);
        for (std::size_t r : comp)
          for (std::size_t d = 0; d < D; ++d) hidden[d] += input[r * D + d];
        const double inv = 1.0 / static_cast<double>(comp.size());
        for (auto& v : hidden) v *= inv;
        std::fill(grad.begin(), grad.end(), 0.0);

        auto update = [&](std::size_t target, double label) {
          double* out = output.data() + target * D;
          double score = 0.0;
          for (std::size_t d = 0; d < D; ++d) score += hidden[d] * out[d];
          const double alpha = lr * log_sigmoid_grad(score, label);
          for (std::size_t d = 0; d < D; ++d) {
            grad[d] += alpha * out[d];
            out[d] += alpha * hidden[d];
          }
        };
        const std::size_t target = ids[j];
        update(target, 1.0);
        for (std::size_t k = 0; k < cfg.negatives; ++k) {
          std::size_t neg = sampler.draw(rng);
          if (neg == target) continue;
          update(neg, 0.0);
        }
        for (std::size_t r : comp)
          for (std::size_t d = 0; d < D; ++d) input[r * D + d] += grad[d] * inv;
      }
    }
  }

  EmbeddingTable table(D);
  std::vector<double> row(D);
  for (std::size_t w = 0; w < V; ++w) {
    std::fill(row.begin(), row.end(), 0.0);
    const auto& comp = components[w];
    for (std::size_t r : comp)
      for (std::size_t d = 0; d < D; ++d) row[d] += input[r * D + d];
    for (auto& v : row) v /= static_cast<double>(comp.size());
    table.add_word(vocab.token(w), row);
  }
  if (subwords) {
    table.set_subwords(cfg.subwords);
    for (const auto& [b, r] : bucket_row) table.set_bucket(b, std::span<const double>(input.data() + r * D, D));
  }
  return table;
}

}  // namespace absa
